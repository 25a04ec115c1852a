//! Interaction-log ingestion, preprocessing, chronological splits and
//! sliding-window training instances.
//!
//! Raw logs are line-oriented delimited text. Preprocessing keeps only
//! positive events (rating at or above a threshold), then alternately drops
//! infrequent users and items until both frequency thresholds hold at once.
//! Internal ids are dense; the pad id used for short context windows is
//! `num_items`, one past the last real item.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type UserId = usize;
pub type ItemId = usize;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty dataset: no user survives filtering")]
    EmptyDataset,
    #[error("invalid dataset file: {0}")]
    InvalidDatasetFile(String),
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("unknown split setting `{0}` (expected 80-20-cut, 80-3-cut or 3-los)")]
    UnknownSetting(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: u64,
}

/// Column positions and delimiter of a raw interaction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogFormat {
    pub delimiter: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: usize,
    pub skip_header: bool,
}

impl Default for LogFormat {
    fn default() -> Self {
        Self {
            delimiter: ",".to_string(),
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: 3,
            skip_header: false,
        }
    }
}

/// Parses one record per non-blank line, in file order.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: &LogFormat,
) -> Result<Vec<InteractionRecord>, DataError> {
    if format.delimiter.is_empty() {
        return Err(DataError::Parse {
            line: 0,
            message: "empty delimiter".into(),
        });
    }
    let needed = 1 + format
        .user_col
        .max(format.item_col)
        .max(format.rating_col)
        .max(format.timestamp_col);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if format.skip_header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(format.delimiter.as_str())
            .map(str::trim)
            .collect();
        let err = |message: String| DataError::Parse {
            line: line_no,
            message,
        };
        if fields.len() < needed {
            return Err(err(format!(
                "expected at least {needed} fields, found {}",
                fields.len()
            )));
        }
        let user = fields[format.user_col];
        let item = fields[format.item_col];
        if user.is_empty() || item.is_empty() {
            return Err(err("empty user or item key".into()));
        }
        let rating: f64 = fields[format.rating_col]
            .parse()
            .map_err(|_| err(format!("invalid rating `{}`", fields[format.rating_col])))?;
        if !rating.is_finite() {
            return Err(err(format!(
                "non-finite rating `{}`",
                fields[format.rating_col]
            )));
        }
        let timestamp: u64 = fields[format.timestamp_col].parse().map_err(|_| {
            err(format!(
                "invalid timestamp `{}`",
                fields[format.timestamp_col]
            ))
        })?;
        records.push(InteractionRecord {
            user: user.to_string(),
            item: item.to_string(),
            rating,
            timestamp,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessOptions {
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub positive_threshold: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            min_user_interactions: 10,
            min_item_interactions: 5,
            positive_threshold: 4.0,
        }
    }
}

/// Per-user chronological sequences over dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_items: usize,
    sequences: Vec<Vec<ItemId>>,
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    user_index: HashMap<String, UserId>,
    item_index: HashMap<String, ItemId>,
}

// Numeric keys sort numerically, anything else lexicographically. This makes
// re-ingesting a serialized dataset (whose keys are decimal ids) an identity.
fn sorted_keys<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut keys: Vec<String> = keys.map(str::to_string).collect();
    keys.sort();
    keys.dedup();
    let numeric: Option<Vec<u64>> = keys.iter().map(|k| k.parse::<u64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(u64, String)> = nums.into_iter().zip(keys).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        pairs.into_iter().map(|(_, k)| k).collect()
    } else {
        keys
    }
}

/// Binarizes, filters to the frequency fixpoint, remaps ids and orders each
/// user's events by timestamp (ties by file order).
pub fn preprocess(
    records: &[InteractionRecord],
    opts: &PreprocessOptions,
) -> Result<Dataset, DataError> {
    let mut alive: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.rating >= opts.positive_threshold)
        .map(|(i, _)| i)
        .collect();

    loop {
        let before = alive.len();
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        for &i in &alive {
            *user_counts.entry(records[i].user.as_str()).or_default() += 1;
        }
        alive.retain(|&i| user_counts[records[i].user.as_str()] >= opts.min_user_interactions);

        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for &i in &alive {
            *item_counts.entry(records[i].item.as_str()).or_default() += 1;
        }
        alive.retain(|&i| item_counts[records[i].item.as_str()] >= opts.min_item_interactions);

        if alive.len() == before {
            break;
        }
    }
    if alive.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    let user_keys = sorted_keys(alive.iter().map(|&i| records[i].user.as_str()));
    let item_keys = sorted_keys(alive.iter().map(|&i| records[i].item.as_str()));
    let user_index: HashMap<String, UserId> = user_keys
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    let item_index: HashMap<String, ItemId> = item_keys
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();

    let mut events: Vec<Vec<(u64, usize, ItemId)>> = vec![Vec::new(); user_keys.len()];
    for &i in &alive {
        let r = &records[i];
        events[user_index[&r.user]].push((r.timestamp, i, item_index[&r.item]));
    }
    let sequences = events
        .into_iter()
        .map(|mut evs| {
            evs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            evs.into_iter().map(|(_, _, item)| item).collect()
        })
        .collect();

    Ok(Dataset {
        num_items: item_keys.len(),
        sequences,
        user_keys,
        item_keys,
        user_index,
        item_index,
    })
}

impl Dataset {
    /// Builds a dataset directly from internal-id sequences; keys are the
    /// decimal ids.
    pub fn from_sequences(
        num_items: usize,
        sequences: Vec<Vec<ItemId>>,
    ) -> Result<Self, DataError> {
        if let Some(bad) = sequences.iter().flatten().find(|&&i| i >= num_items) {
            return Err(DataError::InvalidDatasetFile(format!(
                "item id {bad} out of range for {num_items} items"
            )));
        }
        let user_keys: Vec<String> = (0..sequences.len()).map(|i| i.to_string()).collect();
        let item_keys: Vec<String> = (0..num_items).map(|i| i.to_string()).collect();
        Ok(Self {
            num_items,
            user_index: user_keys
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, k)| (k, i))
                .collect(),
            item_index: item_keys
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, k)| (k, i))
                .collect(),
            sequences,
            user_keys,
            item_keys,
        })
    }

    pub fn num_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Reserved id for left-padding short context windows.
    pub fn pad_id(&self) -> ItemId {
        self.num_items
    }

    pub fn sequence(&self, user: UserId) -> &[ItemId] {
        &self.sequences[user]
    }

    pub fn sequences(&self) -> &[Vec<ItemId>] {
        &self.sequences
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        let cells = self.num_users() as f64 * self.num_items as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.num_interactions() as f64 / cells
        }
    }

    pub fn user_id(&self, key: &str) -> Option<UserId> {
        self.user_index.get(key).copied()
    }

    pub fn item_id(&self, key: &str) -> Option<ItemId> {
        self.item_index.get(key).copied()
    }

    pub fn user_key(&self, user: UserId) -> &str {
        &self.user_keys[user]
    }

    pub fn item_key(&self, item: ItemId) -> &str {
        &self.item_keys[item]
    }

    /// Re-serializes the dataset as raw records: original keys, top rating,
    /// timestamp equal to the position in the user's sequence.
    pub fn to_records(&self) -> Vec<InteractionRecord> {
        self.sequences
            .iter()
            .enumerate()
            .flat_map(|(u, seq)| {
                seq.iter()
                    .enumerate()
                    .map(move |(pos, &item)| InteractionRecord {
                        user: self.user_keys[u].clone(),
                        item: self.item_keys[item].clone(),
                        rating: 5.0,
                        timestamp: pos as u64,
                    })
            })
            .collect()
    }

    /// Writes `m n`, then `user item item ...` per user.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.num_users(), self.num_items)?;
        for (u, seq) in self.sequences.iter().enumerate() {
            write!(out, "{u}")?;
            for item in seq {
                write!(out, " {item}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, DataError> {
        let bad = |msg: String| DataError::InvalidDatasetFile(msg);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad header `{header}`"))))
            .collect::<Result<_, _>>()?;
        let [m, n] = dims[..] else {
            return Err(bad(format!("header must be `m n`, got `{header}`")));
        };
        let mut sequences = Vec::with_capacity(m);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace().map(|t| {
                t.parse::<usize>()
                    .map_err(|_| bad(format!("line {}: bad id `{t}`", idx + 2)))
            });
            let user = tokens.next().unwrap()?;
            if user != sequences.len() {
                return Err(bad(format!(
                    "line {}: expected user {}, found {user}",
                    idx + 2,
                    sequences.len()
                )));
            }
            sequences.push(tokens.collect::<Result<Vec<_>, _>>()?);
        }
        if sequences.len() != m {
            return Err(bad(format!(
                "header declares {m} users, found {}",
                sequences.len()
            )));
        }
        Self::from_sequences(n, sequences)
    }

    /// Writes `internal_id<TAB>external_key` lines for users or items.
    pub fn write_id_map<W: Write>(&self, items: bool, mut out: W) -> std::io::Result<()> {
        let keys = if items {
            &self.item_keys
        } else {
            &self.user_keys
        };
        for (id, key) in keys.iter().enumerate() {
            writeln!(out, "{id}\t{key}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitSetting {
    #[serde(rename = "80-20-cut")]
    Cut80_20,
    #[serde(rename = "80-3-cut")]
    Cut80_3,
    #[serde(rename = "3-los")]
    Los3,
}

impl FromStr for SplitSetting {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "80-20-cut" => Ok(Self::Cut80_20),
            "80-3-cut" => Ok(Self::Cut80_3),
            "3-los" => Ok(Self::Los3),
            _ => Err(DataError::UnknownSetting(s.to_string())),
        }
    }
}

impl fmt::Display for SplitSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cut80_20 => "80-20-cut",
            Self::Cut80_3 => "80-3-cut",
            Self::Los3 => "3-los",
        })
    }
}

/// Index boundaries into one user's sequence: train is `0..train_end`,
/// validation `train_end..valid_end`, test `valid_end..test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitBounds {
    pub train_end: usize,
    pub valid_end: usize,
    pub test_end: usize,
}

impl SplitBounds {
    pub fn for_length(len: usize, setting: SplitSetting) -> Self {
        let train_end = len * 7 / 10;
        let valid_end = len * 8 / 10;
        match setting {
            SplitSetting::Cut80_20 => Self {
                train_end,
                valid_end,
                test_end: len,
            },
            SplitSetting::Cut80_3 => Self {
                train_end,
                valid_end,
                test_end: (valid_end + 3).min(len),
            },
            SplitSetting::Los3 => Self::leave_last(len, 3, 3),
        }
    }

    /// The last `n_test` items for testing, the `n_valid` before them for
    /// validation, everything earlier for training.
    pub fn leave_last(len: usize, n_valid: usize, n_test: usize) -> Self {
        let valid_end = len.saturating_sub(n_test);
        Self {
            train_end: valid_end.saturating_sub(n_valid),
            valid_end,
            test_end: len,
        }
    }

    pub fn is_valid_for(&self, len: usize) -> bool {
        self.train_end <= self.valid_end && self.valid_end <= self.test_end && self.test_end <= len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub setting: Option<SplitSetting>,
    pub bounds: Vec<SplitBounds>,
}

/// Applies one of the three chronological protocols to every user.
pub fn split(dataset: &Dataset, setting: SplitSetting) -> SplitPlan {
    SplitPlan {
        setting: Some(setting),
        bounds: dataset
            .sequences()
            .iter()
            .map(|s| SplitBounds::for_length(s.len(), setting))
            .collect(),
    }
}

impl SplitPlan {
    /// Leave-last split with custom validation/test sizes (no named setting).
    pub fn leave_last(dataset: &Dataset, n_valid: usize, n_test: usize) -> Self {
        SplitPlan {
            setting: None,
            bounds: dataset
                .sequences()
                .iter()
                .map(|s| SplitBounds::leave_last(s.len(), n_valid, n_test))
                .collect(),
        }
    }

    pub fn check(&self, dataset: &Dataset) -> Result<(), DataError> {
        if self.bounds.len() != dataset.num_users() {
            return Err(DataError::InvalidPlan(format!(
                "plan covers {} users, dataset has {}",
                self.bounds.len(),
                dataset.num_users()
            )));
        }
        for (u, b) in self.bounds.iter().enumerate() {
            if !b.is_valid_for(dataset.sequence(u).len()) {
                return Err(DataError::InvalidPlan(format!("user {u}: bounds {b:?}")));
            }
        }
        Ok(())
    }

    /// `user train_end valid_end test_end` per line, after a `# setting` line.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self.setting {
            Some(s) => writeln!(out, "# setting {s}")?,
            None => writeln!(out, "# setting custom")?,
        }
        for (u, b) in self.bounds.iter().enumerate() {
            writeln!(out, "{u} {} {} {}", b.train_end, b.valid_end, b.test_end)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub user: UserId,
    /// Exactly `n_h` ids; the first `pad_count` are the pad id.
    pub context: Vec<ItemId>,
    pub targets: Vec<ItemId>,
    pub pad_count: usize,
}

impl TrainingInstance {
    pub fn history(&self) -> &[ItemId] {
        &self.context[self.pad_count..]
    }
}

/// Slides an `n_h + n_p` window one position at a time over each user's
/// training range (plus validation when `include_validation`). Windows that
/// start before the sequence are left-padded; every window keeps at least
/// one real context item. Output is ordered by user, then window start.
pub fn make_instances(
    dataset: &Dataset,
    plan: &SplitPlan,
    n_h: usize,
    n_p: usize,
    include_validation: bool,
) -> Vec<TrainingInstance> {
    assert!(n_h >= 1 && n_p >= 1, "n_h and n_p must be positive");
    let pad = dataset.pad_id();
    let mut out = Vec::new();
    for (user, (seq, b)) in dataset.sequences().iter().zip(&plan.bounds).enumerate() {
        let end = if include_validation {
            b.valid_end
        } else {
            b.train_end
        };
        let range = &seq[..end.min(seq.len())];
        if range.len() < n_p + 1 {
            continue;
        }
        for t in 1..=range.len() - n_p {
            let start = t.saturating_sub(n_h);
            let pad_count = n_h - (t - start);
            let mut context = Vec::with_capacity(n_h);
            context.resize(pad_count, pad);
            context.extend_from_slice(&range[start..t]);
            out.push(TrainingInstance {
                user,
                context,
                targets: range[t..t + n_p].to_vec(),
                pad_count,
            });
        }
    }
    out
}

/// Left-padded `n_h` context for scoring the items that follow `history`.
pub fn context_window(history: &[ItemId], n_h: usize, pad: ItemId) -> (Vec<ItemId>, usize) {
    let take = history.len().min(n_h);
    let pad_count = n_h - take;
    let mut ctx = vec![pad; pad_count];
    ctx.extend_from_slice(&history[history.len() - take..]);
    (ctx, pad_count)
}
