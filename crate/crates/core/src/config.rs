//! TOML run configuration and hyperparameter grids.
//!
//! ```toml
//! setting = "80-3-cut"          # 80-20-cut | 80-3-cut | 3-los
//! ks = [5, 10]
//! exclude_seen = false
//!
//! [paths]
//! raw_log = "data/ratings.csv"
//! dataset = "out/dataset.txt"
//! checkpoint = "out/model.ckpt"
//! report = "out/train_report.csv"
//! metrics = "out/metrics.csv"
//!
//! [format]                      # raw log layout
//! delimiter = ","
//! user_col = 0
//! item_col = 1
//! rating_col = 2
//! timestamp_col = 3
//!
//! [preprocess]
//! min_user_interactions = 10
//! min_item_interactions = 5
//! positive_threshold = 4.0
//!
//! [hyper]                       # any HyperParams field
//! d = 600
//! n_h = 4
//! n_l = 2
//! n_p = 3
//!
//! [grid]                        # optional; cross-product over the lists
//! d = [100, 200]
//! n_h = [3, 4]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{LogFormat, PreprocessOptions, SplitSetting};
use crate::error::{Error, Result};
use crate::model::{Ablation, HyperParams, Pooling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub raw_log: Option<PathBuf>,
    pub dataset: PathBuf,
    pub split: PathBuf,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
    pub metrics: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            raw_log: None,
            dataset: "dataset.txt".into(),
            split: "split.txt".into(),
            checkpoint: "model.ckpt".into(),
            report: "train_report.csv".into(),
            metrics: "metrics.csv".into(),
        }
    }
}

/// Optional value lists; absent fields keep the base hyperparameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub d: Option<Vec<usize>>,
    pub n_h: Option<Vec<usize>>,
    pub n_l: Option<Vec<usize>>,
    pub n_p: Option<Vec<usize>>,
    pub p: Option<Vec<usize>>,
    pub pooling: Option<Vec<Pooling>>,
    pub ablation: Option<Vec<Ablation>>,
    pub lambda: Option<Vec<f64>>,
    pub learning_rate: Option<Vec<f64>>,
}

fn expand<T: Clone>(
    acc: Vec<HyperParams>,
    values: &Option<Vec<T>>,
    set: impl Fn(&mut HyperParams, T),
) -> Vec<HyperParams> {
    match values {
        None => acc,
        Some(vals) => {
            let set = &set;
            acc.into_iter()
                .flat_map(|h| {
                    vals.iter().map(move |v| {
                        let mut h = h.clone();
                        set(&mut h, v.clone());
                        h
                    })
                })
                .collect()
        }
    }
}

impl Grid {
    pub fn check(&self) -> Result<()> {
        let lens = [
            self.d.as_ref().map(Vec::len),
            self.n_h.as_ref().map(Vec::len),
            self.n_l.as_ref().map(Vec::len),
            self.n_p.as_ref().map(Vec::len),
            self.p.as_ref().map(Vec::len),
            self.pooling.as_ref().map(Vec::len),
            self.ablation.as_ref().map(Vec::len),
            self.lambda.as_ref().map(Vec::len),
            self.learning_rate.as_ref().map(Vec::len),
        ];
        if lens.contains(&Some(0)) {
            return Err(Error::Config("grid lists must be non-empty".into()));
        }
        Ok(())
    }

    /// Cross-product in field declaration order (later fields vary fastest).
    pub fn combinations(&self, base: &HyperParams) -> Vec<HyperParams> {
        let mut acc = vec![base.clone()];
        acc = expand(acc, &self.d, |h, v| h.d = v);
        acc = expand(acc, &self.n_h, |h, v| h.n_h = v);
        acc = expand(acc, &self.n_l, |h, v| h.n_l = v);
        acc = expand(acc, &self.n_p, |h, v| h.n_p = v);
        acc = expand(acc, &self.p, |h, v| h.p = v);
        acc = expand(acc, &self.pooling, |h, v| h.pooling = v);
        acc = expand(acc, &self.ablation, |h, v| h.ablation = v);
        acc = expand(acc, &self.lambda, |h, v| h.lambda = v);
        acc = expand(acc, &self.learning_rate, |h, v| h.learning_rate = v);
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub setting: SplitSetting,
    pub ks: Vec<usize>,
    pub exclude_seen: bool,
    pub paths: Paths,
    pub format: LogFormat,
    pub preprocess: PreprocessOptions,
    pub hyper: HyperParams,
    pub grid: Option<Grid>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            setting: SplitSetting::Cut80_3,
            ks: vec![5, 10],
            exclude_seen: false,
            paths: Paths::default(),
            format: LogFormat::default(),
            preprocess: PreprocessOptions::default(),
            hyper: HyperParams::default(),
            grid: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn check(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config(
                "ks must be a non-empty list of positive cutoffs".into(),
            ));
        }
        if let Some(grid) = &self.grid {
            grid.check()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
setting = "3-los"
ks = [5, 10, 20]

[paths]
dataset = "out/ds.txt"

[hyper]
d = 600
n_h = 4
n_l = 2
n_p = 3

[grid]
d = [100, 200]
n_h = [3, 4]
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.setting, SplitSetting::Los3);
        assert_eq!(cfg.hyper.d, 600);
        assert_eq!(cfg.hyper.learning_rate, 1e-3);
        assert_eq!(cfg.paths.dataset, PathBuf::from("out/ds.txt"));
        let combos = cfg.grid.as_ref().unwrap().combinations(&cfg.hyper);
        let dims: Vec<(usize, usize)> = combos.iter().map(|h| (h.d, h.n_h)).collect();
        assert_eq!(dims, vec![(100, 3), (100, 4), (200, 3), (200, 4)]);
        assert!(combos.iter().all(|h| h.n_l == 2));
    }

    #[test]
    fn empty_grid_list_rejected() {
        assert!(RunConfig::from_toml("[grid]\nd = []\n").is_err());
        assert!(RunConfig::from_toml("ks = []\n").is_err());
        assert!(RunConfig::from_toml("[grid]\nbogus = [1]\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig {
            grid: Some(Grid {
                pooling: Some(vec![Pooling::Mean, Pooling::Max]),
                ..Grid::default()
            }),
            ..RunConfig::default()
        };
        cfg.hyper.ablation = Ablation::DropO;
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
