//! Full-catalogue ranking, Recall@k / NDCG@k and per-user latency.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{context_window, Dataset, ItemId, SplitPlan, UserId};
use crate::model::{self, HyperParams, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k={k} infeasible: only {available} admissible items")]
    InfeasibleK { k: usize, available: usize },
    #[error("no evaluable users")]
    NoUsers,
    #[error("no cutoffs requested")]
    NoCutoffs,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// The `k` best admissible items, highest score first, ties by lower id.
pub fn top_k(
    scores: &[f64],
    k: usize,
    exclude: &HashSet<ItemId>,
) -> Result<Vec<ItemId>, EvalError> {
    let mut candidates: Vec<ItemId> = if exclude.is_empty() {
        (0..scores.len()).collect()
    } else {
        (0..scores.len()).filter(|j| !exclude.contains(j)).collect()
    };
    if k > candidates.len() {
        return Err(EvalError::InfeasibleK {
            k,
            available: candidates.len(),
        });
    }
    let cmp = |a: &ItemId, b: &ItemId| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    Ok(candidates)
}

/// Fraction of `truth` found in `recommended`. Returns `None` for an empty
/// ground-truth set.
pub fn recall_at_k(recommended: &[ItemId], truth: &HashSet<ItemId>) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hits = recommended.iter().filter(|j| truth.contains(j)).count();
    Some(hits as f64 / truth.len() as f64)
}

/// Binary-gain NDCG over the list `recommended` (its length is k).
pub fn ndcg_at_k(recommended: &[ItemId], truth: &HashSet<ItemId>) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let dcg: f64 = recommended
        .iter()
        .enumerate()
        .filter(|(_, j)| truth.contains(j))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..recommended.len().min(truth.len()))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Some(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    /// Rank validation items given the training history.
    Validation,
    /// Rank test items given training plus validation history.
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub target: EvalTarget,
    pub exclude_seen: bool,
    pub measure_latency: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![5, 10],
            target: EvalTarget::Test,
            exclude_seen: false,
            measure_latency: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// One entry per requested cutoff, ascending k.
    pub metrics: Vec<CutoffMetrics>,
    pub per_user_latency_mean: Option<f64>,
    pub num_users_evaluated: usize,
    pub exclude_seen: bool,
}

impl EvalResult {
    pub fn at(&self, k: usize) -> Option<&CutoffMetrics> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub fn recall(&self, k: usize) -> f64 {
        self.at(k).map_or(f64::NAN, |m| m.recall)
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        self.at(k).map_or(f64::NAN, |m| m.ndcg)
    }

    /// `metric,k,value` lines, recall rows first.
    pub fn write_machine<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for m in &self.metrics {
            writeln!(out, "recall,{},{:.6}", m.k, m.recall)?;
        }
        for m in &self.metrics {
            writeln!(out, "ndcg,{},{:.6}", m.k, m.ndcg)?;
        }
        if let Some(lat) = self.per_user_latency_mean {
            writeln!(out, "latency_s,0,{}", format_latency(lat))?;
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "users evaluated: {}  (exclude_seen: {})",
            self.num_users_evaluated, self.exclude_seen
        );
        let _ = writeln!(s, "{:>6}  {:>10}  {:>10}", "k", "Recall@k", "NDCG@k");
        for m in &self.metrics {
            let _ = writeln!(s, "{:>6}  {:>10.4}  {:>10.4}", m.k, m.recall, m.ndcg);
        }
        if let Some(lat) = self.per_user_latency_mean {
            let _ = writeln!(s, "per-user latency: {} s", format_latency(lat));
        }
        s
    }
}

/// Two significant digits in scientific notation, e.g. `3.4e-4`.
pub fn format_latency(seconds: f64) -> String {
    format!("{seconds:.1e}")
}

struct UserEval {
    recall: Vec<f64>,
    ndcg: Vec<f64>,
    seconds: f64,
}

/// Shared driver: `scorer(user, context, pad_count)` yields one score per
/// real item. Metrics are user means over users with a non-empty target
/// range and non-empty history.
pub fn evaluate_with<F>(
    dataset: &Dataset,
    plan: &SplitPlan,
    n_h: usize,
    opts: &EvalOptions,
    scorer: F,
) -> Result<EvalResult, EvalError>
where
    F: Fn(UserId, &[ItemId], usize) -> Result<Vec<f64>, ModelError> + Sync,
{
    plan.check(dataset)?;
    if opts.ks.is_empty() {
        return Err(EvalError::NoCutoffs);
    }
    let mut ks = opts.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let k_max = *ks.last().unwrap();
    let pad = dataset.pad_id();

    let eval_user = |user: UserId| -> Result<Option<UserEval>, EvalError> {
        let seq = dataset.sequence(user);
        let b = plan.bounds[user];
        let (hist_end, end) = match opts.target {
            EvalTarget::Validation => (b.train_end, b.valid_end),
            EvalTarget::Test => (b.valid_end, b.test_end),
        };
        if hist_end == 0 || end <= hist_end {
            return Ok(None);
        }
        let history = &seq[..hist_end];
        let truth: HashSet<ItemId> = seq[hist_end..end].iter().copied().collect();
        let exclude: HashSet<ItemId> = if opts.exclude_seen {
            history.iter().copied().collect()
        } else {
            HashSet::new()
        };
        let (context, pad_count) = context_window(history, n_h, pad);
        let k = k_max.min(dataset.num_items() - exclude.len());
        let start = Instant::now();
        let scores = scorer(user, &context, pad_count)?;
        let ranked = top_k(&scores, k, &exclude)?;
        let seconds = start.elapsed().as_secs_f64();
        let (recall, ndcg) = ks
            .iter()
            .map(|&k| {
                let head = &ranked[..k.min(ranked.len())];
                (
                    recall_at_k(head, &truth).unwrap(),
                    ndcg_at_k_cut(head, &truth, k),
                )
            })
            .unzip();
        Ok(Some(UserEval {
            recall,
            ndcg,
            seconds,
        }))
    };

    let users = 0..dataset.num_users();
    let per_user: Vec<Option<UserEval>> = if opts.measure_latency {
        users.map(eval_user).collect::<Result<_, _>>()?
    } else {
        users
            .into_par_iter()
            .map(eval_user)
            .collect::<Result<_, _>>()?
    };

    let evaluated: Vec<&UserEval> = per_user.iter().flatten().collect();
    if evaluated.is_empty() {
        return Err(EvalError::NoUsers);
    }
    let count = evaluated.len() as f64;
    let metrics = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| CutoffMetrics {
            k,
            recall: evaluated.iter().map(|e| e.recall[i]).sum::<f64>() / count,
            ndcg: evaluated.iter().map(|e| e.ndcg[i]).sum::<f64>() / count,
        })
        .collect();
    let latency = opts
        .measure_latency
        .then(|| evaluated.iter().map(|e| e.seconds).sum::<f64>() / count);
    Ok(EvalResult {
        metrics,
        per_user_latency_mean: latency,
        num_users_evaluated: evaluated.len(),
        exclude_seen: opts.exclude_seen,
    })
}

// The ideal DCG uses the requested k even when fewer items were rankable.
fn ndcg_at_k_cut(head: &[ItemId], truth: &HashSet<ItemId>, k: usize) -> f64 {
    let dcg: f64 = head
        .iter()
        .enumerate()
        .filter(|(_, j)| truth.contains(j))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(truth.len()))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    dcg / ideal
}

/// Ranks every real item with the model and averages metrics over users.
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    plan: &SplitPlan,
    hyper: &HyperParams,
    opts: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    if params.num_items() != dataset.num_items() {
        return Err(ModelError::ShapeMismatch {
            what: "item count",
            expected: dataset.num_items(),
            found: params.num_items(),
        }
        .into());
    }
    if params.num_users() != dataset.num_users() {
        return Err(ModelError::ShapeMismatch {
            what: "user count",
            expected: dataset.num_users(),
            found: params.num_users(),
        }
        .into());
    }
    evaluate_with(dataset, plan, hyper.n_h, opts, |user, ctx, pad_count| {
        model::score_all(user, ctx, pad_count, params, hyper)
    })
}

/// Mean single-threaded wall-clock of `score_all` + `top_k` per user on a
/// randomly initialized model with `num_items` candidates. Each of `reps`
/// passes visits every user once; the fastest pass is reported, which
/// filters scheduler noise while keeping caches warm.
pub fn latency_profile(
    num_items: usize,
    hyper: &HyperParams,
    num_users: usize,
    k: usize,
    reps: usize,
) -> Result<f64, EvalError> {
    use rand::{Rng, SeedableRng};
    let params = ModelParams::init(num_users, num_items, hyper.d, hyper.seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed);
    let contexts: Vec<Vec<ItemId>> = (0..num_users)
        .map(|_| {
            (0..hyper.n_h)
                .map(|_| rng.gen_range(0..num_items))
                .collect()
        })
        .collect();
    let none = HashSet::new();
    let k = k.min(num_items);
    let mut best = f64::INFINITY;
    let mut sink = 0usize;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        for (user, ctx) in contexts.iter().enumerate() {
            let scores = model::score_all(user, ctx, 0, &params, hyper)?;
            sink ^= top_k(&scores, k, &none)?[0];
        }
        best = best.min(start.elapsed().as_secs_f64() / num_users as f64);
    }
    std::hint::black_box(sink);
    Ok(best)
}
