//! Embedding tables and the forward pass: pooled high/low-order
//! associations, recursive Hadamard synergies, latent cross and scoring.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ItemId, UserId};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("empty pool: no real item in the last {0} context slots")]
    EmptyPool(usize),
    #[error("{what} mismatch: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("id out of range: {0}")]
    OutOfRange(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    /// Drop the low-order association term.
    DropO,
    /// Drop the user general-preference term.
    DropU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    /// Plain gradient descent.
    Sgd,
}

macro_rules! name_enum {
    ($ty:ident { $($var:ident => $name:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.to_ascii_lowercase().replace('-', "_").as_str() {
                    $($name => Ok($ty::$var),)+
                    other => Err(ModelError::InvalidHyperParams(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$var => $name,)+ })
            }
        }
    };
}

name_enum!(Pooling { Mean => "mean", Max => "max" });
name_enum!(Ablation { None => "none", DropO => "drop_o", DropU => "drop_u" });
name_enum!(Optimizer { Adam => "adam", Sgd => "sgd" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub d: usize,
    pub n_h: usize,
    pub n_l: usize,
    pub n_p: usize,
    /// Synergy order; 1 disables synergies (plain HAM).
    pub p: usize,
    pub pooling: Pooling,
    pub ablation: Ablation,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validate_every: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            d: 64,
            n_h: 5,
            n_l: 2,
            n_p: 3,
            p: 1,
            pooling: Pooling::Mean,
            ablation: Ablation::None,
            lambda: 1e-3,
            learning_rate: 1e-3,
            batch_size: 512,
            max_epochs: 100,
            validate_every: 20,
            seed: 42,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidHyperParams(m));
        if self.d == 0 {
            return fail("d must be at least 1".into());
        }
        if self.n_l == 0 || self.n_l > self.n_h {
            return fail(format!(
                "need 1 <= n_l <= n_h, got n_l={} n_h={}",
                self.n_l, self.n_h
            ));
        }
        if self.p == 0 || self.p > self.n_h {
            return fail(format!(
                "need 1 <= p <= n_h, got p={} n_h={}",
                self.p, self.n_h
            ));
        }
        if self.n_p == 0 {
            return fail("n_p must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 || self.validate_every == 0 {
            return fail("batch_size and validate_every must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
        {
            return fail("Adam constants out of range".into());
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// U (users), V (source items, plus a zero pad row at index `num_items`),
/// W (candidate items).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub user: Matrix,
    pub source: Matrix,
    pub target: Matrix,
}

impl ModelParams {
    /// Uniform on [-1/sqrt(d), 1/sqrt(d)], then the pad row is zeroed.
    pub fn init(num_users: usize, num_items: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let mut fill = |rows: usize| {
            let data = (0..rows * d)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            Matrix::from_vec(rows, d, data)
        };
        let user = fill(num_users);
        let mut source = fill(num_items + 1);
        let target = fill(num_items);
        source.row_mut(num_items).fill(0.0);
        Self {
            user,
            source,
            target,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user.rows()
    }

    pub fn num_items(&self) -> usize {
        self.target.rows()
    }

    pub fn dim(&self) -> usize {
        self.user.cols()
    }

    pub fn pad_id(&self) -> ItemId {
        self.num_items()
    }

    pub fn is_finite(&self) -> bool {
        [&self.user, &self.source, &self.target]
            .iter()
            .all(|m| m.as_slice().iter().all(|x| x.is_finite()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pooled embedding and, for max pooling, the window position that won each
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub value: Vec<f64>,
    pub argmax: Option<Vec<usize>>,
}

/// Pools the V rows of the real items among the last `take_last` slots of a
/// left-padded window. Max-pooling ties go to the earliest position.
pub fn pool(
    context: &[ItemId],
    pad_count: usize,
    params: &ModelParams,
    mode: Pooling,
    take_last: usize,
) -> Result<Pooled, ModelError> {
    let take_last = take_last.min(context.len());
    let first = (context.len() - take_last).max(pad_count.min(context.len()));
    let items = &context[first..];
    if items.is_empty() {
        return Err(ModelError::EmptyPool(take_last));
    }
    let d = params.dim();
    Ok(match mode {
        Pooling::Mean => {
            let mut acc = vec![0.0; d];
            for &j in items {
                for (a, v) in acc.iter_mut().zip(params.source.row(j)) {
                    *a += v;
                }
            }
            let k = items.len() as f64;
            acc.iter_mut().for_each(|a| *a /= k);
            Pooled {
                value: acc,
                argmax: None,
            }
        }
        Pooling::Max => {
            let mut best = params.source.row(items[0]).to_vec();
            let mut arg = vec![first; d];
            for (pos, &j) in items.iter().enumerate().skip(1) {
                for (t, &v) in params.source.row(j).iter().enumerate() {
                    if v > best[t] {
                        best[t] = v;
                        arg[t] = first + pos;
                    }
                }
            }
            Pooled {
                value: best,
                argmax: Some(arg),
            }
        }
    })
}

pub fn synergy_pair(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "synergy operands must share dimension");
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Aggregated synergies c^(2)..c^(p) with the per-item intermediates kept
/// for backprop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Synergies {
    /// `orders[k - 2]` is c^(k).
    pub orders: Vec<Vec<f64>>,
    /// `per_item[k - 1][j]` is c_j^(k) for window position j, k = 1..=p.
    pub per_item: Vec<Vec<Vec<f64>>>,
    /// `others[j]` is the sum of V rows at every other window position.
    pub others: Vec<Vec<f64>>,
}

impl Synergies {
    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }
}

/// Recursive order-p synergies over the real items of the high-order window:
/// c_j^(1) = v_j, c_j^(k) = sum over other positions i of c_j^(k-1) * v_i,
/// c^(k) = mean over j of c_j^(k). Fewer than two items yields no orders.
pub fn synergy_orders(items: &[ItemId], params: &ModelParams, p: usize) -> Synergies {
    if p < 2 || items.len() < 2 {
        return Synergies::default();
    }
    let d = params.dim();
    let others: Vec<Vec<f64>> = (0..items.len())
        .map(|j| {
            let mut acc = vec![0.0; d];
            for (i, &item) in items.iter().enumerate() {
                if i != j {
                    for (a, v) in acc.iter_mut().zip(params.source.row(item)) {
                        *a += v;
                    }
                }
            }
            acc
        })
        .collect();
    let mut per_item = Vec::with_capacity(p);
    per_item.push(
        items
            .iter()
            .map(|&j| params.source.row(j).to_vec())
            .collect::<Vec<_>>(),
    );
    let mut orders = Vec::with_capacity(p - 1);
    let count = items.len() as f64;
    for _ in 2..=p {
        let prev: &Vec<Vec<f64>> = per_item.last().unwrap();
        let next: Vec<Vec<f64>> = prev
            .iter()
            .zip(&others)
            .map(|(c, r)| synergy_pair(c, r))
            .collect();
        let mut mean = vec![0.0; d];
        for c in &next {
            for (m, x) in mean.iter_mut().zip(c) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        orders.push(mean);
        per_item.push(next);
    }
    Synergies {
        orders,
        per_item,
        others,
    }
}

/// s = h + sum_k c^(k) * h.
pub fn latent_cross(h: &[f64], orders: &[Vec<f64>]) -> Vec<f64> {
    let mut s = h.to_vec();
    for c in orders {
        for ((s, c), h) in s.iter_mut().zip(c).zip(h) {
            *s += c * h;
        }
    }
    s
}

/// The vector dotted with every candidate embedding: u + assoc + o, minus
/// whichever term the ablation removes.
pub fn query_vector(user: &[f64], assoc: &[f64], low: &[f64], ablation: Ablation) -> Vec<f64> {
    let mut q = assoc.to_vec();
    if ablation != Ablation::DropU {
        q.iter_mut().zip(user).for_each(|(q, u)| *q += u);
    }
    if ablation != Ablation::DropO {
        q.iter_mut().zip(low).for_each(|(q, o)| *q += o);
    }
    q
}

/// r = u.w + assoc.w + o.w for one candidate.
pub fn score(
    user: UserId,
    assoc: &[f64],
    low: &[f64],
    candidate: ItemId,
    params: &ModelParams,
    ablation: Ablation,
) -> f64 {
    let q = query_vector(params.user.row(user), assoc, low, ablation);
    dot(&q, params.target.row(candidate))
}

/// Everything the forward pass computes for one (user, window).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub user: UserId,
    /// Start position (in the window) of the items pooled into `high`.
    pub high_start: usize,
    pub window_len: usize,
    pub high: Pooled,
    pub low: Pooled,
    /// Start position (in the window) of the items pooled into `low`.
    pub low_start: usize,
    pub synergies: Synergies,
    /// h, or s when synergies are active.
    pub assoc: Vec<f64>,
    pub query: Vec<f64>,
}

pub fn forward(
    user: UserId,
    context: &[ItemId],
    pad_count: usize,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<ForwardState, ModelError> {
    if user >= params.num_users() {
        return Err(ModelError::OutOfRange(format!("user {user}")));
    }
    if let Some(&bad) = context[pad_count.min(context.len())..]
        .iter()
        .find(|&&j| j >= params.num_items())
    {
        return Err(ModelError::OutOfRange(format!("context item {bad}")));
    }
    let high = pool(context, pad_count, params, hyper.pooling, hyper.n_h)?;
    let low = pool(context, pad_count, params, hyper.pooling, hyper.n_l)?;
    let low_start = (context.len() - hyper.n_l.min(context.len())).max(pad_count);
    let h_start = (context.len() - hyper.n_h.min(context.len())).max(pad_count);
    let synergies = synergy_orders(&context[h_start..], params, hyper.p);
    let assoc = if synergies.is_empty() {
        high.value.clone()
    } else {
        latent_cross(&high.value, &synergies.orders)
    };
    let query = query_vector(params.user.row(user), &assoc, &low.value, hyper.ablation);
    Ok(ForwardState {
        user,
        high_start: h_start,
        window_len: context.len(),
        high,
        low,
        low_start,
        synergies,
        assoc,
        query,
    })
}

/// Scores every real item; the pad id has no candidate row and is never
/// returned.
pub fn score_all(
    user: UserId,
    context: &[ItemId],
    pad_count: usize,
    params: &ModelParams,
    hyper: &HyperParams,
) -> Result<Vec<f64>, ModelError> {
    let state = forward(user, context, pad_count, params, hyper)?;
    let mut out = vec![0.0; params.num_items()];
    score_into(&state.query, params, &mut out);
    Ok(out)
}

/// Dots `query` against every candidate row.
pub fn score_into(query: &[f64], params: &ModelParams, out: &mut [f64]) {
    let d = params.dim();
    for (o, w) in out.iter_mut().zip(params.target.as_slice().chunks_exact(d)) {
        *o = dot(query, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_with_rows(v: &[&[f64]], w: &[&[f64]], u: &[&[f64]]) -> ModelParams {
        let d = v[0].len();
        let mut source: Vec<f64> = v.iter().flat_map(|r| r.iter().copied()).collect();
        source.extend(std::iter::repeat_n(0.0, d));
        ModelParams {
            user: Matrix::from_vec(
                u.len(),
                d,
                u.iter().flat_map(|r| r.iter().copied()).collect(),
            ),
            source: Matrix::from_vec(v.len() + 1, d, source),
            target: Matrix::from_vec(
                w.len(),
                d,
                w.iter().flat_map(|r| r.iter().copied()).collect(),
            ),
        }
    }

    #[test]
    fn pool_examples() {
        let p = params_with_rows(
            &[&[1.0, 2.0], &[3.0, 4.0]],
            &[&[0.0, 0.0], &[0.0, 0.0]],
            &[&[0.0, 0.0]],
        );
        assert_eq!(
            pool(&[0, 1], 0, &p, Pooling::Mean, 2).unwrap().value,
            vec![2.0, 3.0]
        );
        let p = params_with_rows(
            &[&[1.0, 4.0], &[3.0, 2.0]],
            &[&[0.0, 0.0], &[0.0, 0.0]],
            &[&[0.0, 0.0]],
        );
        let m = pool(&[0, 1], 0, &p, Pooling::Max, 2).unwrap();
        assert_eq!(m.value, vec![3.0, 4.0]);
        assert_eq!(m.argmax, Some(vec![1, 0]));
        let p = params_with_rows(&[&[5.0, -1.0]], &[&[0.0, 0.0]], &[&[0.0, 0.0]]);
        assert_eq!(
            pool(&[1, 0], 1, &p, Pooling::Mean, 2).unwrap().value,
            vec![5.0, -1.0]
        );
    }

    #[test]
    fn pool_all_pad_is_error() {
        let p = params_with_rows(&[&[5.0, -1.0]], &[&[0.0, 0.0]], &[&[0.0, 0.0]]);
        assert!(matches!(
            pool(&[1, 1], 2, &p, Pooling::Mean, 2),
            Err(ModelError::EmptyPool(2))
        ));
    }

    #[test]
    fn pool_take_last_window() {
        let p = params_with_rows(
            &[&[1.0], &[3.0], &[8.0]],
            &[&[0.0], &[0.0], &[0.0]],
            &[&[0.0]],
        );
        assert_eq!(
            pool(&[0, 1, 2], 0, &p, Pooling::Mean, 2).unwrap().value,
            vec![5.5]
        );
        let m = pool(&[0, 1, 2], 0, &p, Pooling::Max, 1).unwrap();
        assert_eq!((m.value, m.argmax), (vec![8.0], Some(vec![2])));
    }

    #[test]
    fn max_ties_go_to_earliest_position() {
        let p = params_with_rows(&[&[2.0], &[2.0]], &[&[0.0], &[0.0]], &[&[0.0]]);
        assert_eq!(
            pool(&[1, 0], 0, &p, Pooling::Max, 2).unwrap().argmax,
            Some(vec![0])
        );
    }

    #[test]
    fn synergy_pair_examples() {
        assert_eq!(synergy_pair(&[1.0, 2.0], &[3.0, 4.0]), vec![3.0, 8.0]);
        assert_eq!(
            synergy_pair(&[1.5, -2.0, 7.0], &[1.0; 3]),
            vec![1.5, -2.0, 7.0]
        );
        assert_eq!(synergy_pair(&[0.0, 5.0], &[7.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn synergy_orders_hand_expansion() {
        let p = params_with_rows(
            &[&[1.0, 2.0], &[3.0, 4.0]],
            &[&[0.0, 0.0], &[0.0, 0.0]],
            &[&[0.0, 0.0]],
        );
        assert_eq!(synergy_orders(&[0, 1], &p, 2).orders, vec![vec![3.0, 8.0]]);
        let s = synergy_orders(&[0, 1], &p, 3);
        assert_eq!(s.orders[1], vec![6.0, 24.0]);
        assert_eq!(s.per_item[2], vec![vec![9.0, 32.0], vec![3.0, 16.0]]);
        assert!(synergy_orders(&[0, 1], &p, 1).is_empty());
        assert!(synergy_orders(&[0], &p, 3).is_empty());
    }

    #[test]
    fn latent_cross_examples() {
        assert_eq!(latent_cross(&[1.0, 1.0], &[]), vec![1.0, 1.0]);
        assert_eq!(latent_cross(&[1.0, 1.0], &[vec![2.0, 3.0]]), vec![3.0, 4.0]);
        assert_eq!(
            latent_cross(&[1.0, 2.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]),
            vec![2.0, 4.0]
        );
    }

    #[test]
    fn score_examples() {
        let p = params_with_rows(&[&[0.0, 0.0]], &[&[2.0, 3.0], &[0.0, 0.0]], &[&[1.0, 0.0]]);
        let (a, o) = ([0.0, 1.0], [1.0, 1.0]);
        assert_eq!(score(0, &a, &o, 0, &p, Ablation::None), 10.0);
        assert_eq!(score(0, &a, &o, 0, &p, Ablation::DropU), 8.0);
        assert_eq!(score(0, &a, &o, 0, &p, Ablation::DropO), 5.0);
        assert_eq!(score(0, &a, &o, 1, &p, Ablation::None), 0.0);
    }

    #[test]
    fn score_all_hand_evaluation() {
        let p = params_with_rows(&[&[2.0], &[0.0]], &[&[3.0], &[-1.0]], &[&[1.0]]);
        let hyper = HyperParams {
            d: 1,
            n_h: 1,
            n_l: 1,
            p: 1,
            ..HyperParams::default()
        };
        assert_eq!(score_all(0, &[0], 0, &p, &hyper).unwrap(), vec![15.0, -5.0]);
    }

    #[test]
    fn score_all_zero_targets() {
        let mut p = ModelParams::init(2, 3, 4, 1);
        p.target.as_mut_slice().fill(0.0);
        let hyper = HyperParams {
            d: 4,
            n_h: 2,
            n_l: 1,
            ..HyperParams::default()
        };
        assert_eq!(score_all(1, &[0, 2], 0, &p, &hyper).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn score_all_matches_score() {
        let params = ModelParams::init(3, 6, 5, 9);
        for p in 1..=3 {
            let hyper = HyperParams {
                d: 5,
                n_h: 3,
                n_l: 2,
                p,
                ..HyperParams::default()
            };
            let ctx = [6, 2, 4];
            let st = forward(2, &ctx, 1, &params, &hyper).unwrap();
            let all = score_all(2, &ctx, 1, &params, &hyper).unwrap();
            for (j, &r) in all.iter().enumerate() {
                assert_eq!(
                    r,
                    score(2, &st.assoc, &st.low.value, j, &params, hyper.ablation)
                );
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(4, 7, 9, 3);
        assert_eq!(a, ModelParams::init(4, 7, 9, 3));
        assert_ne!(a, ModelParams::init(4, 7, 9, 4));
        assert!(a.source.row(7).iter().all(|&x| x == 0.0));
        let bound = 1.0 / 3.0;
        assert!(a.user.as_slice().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn hyper_validation() {
        assert!(HyperParams::default().validate().is_ok());
        let bad = [
            HyperParams {
                n_l: 6,
                ..HyperParams::default()
            },
            HyperParams {
                p: 6,
                ..HyperParams::default()
            },
            HyperParams {
                d: 0,
                ..HyperParams::default()
            },
            HyperParams {
                lambda: -1.0,
                ..HyperParams::default()
            },
            HyperParams {
                n_p: 0,
                ..HyperParams::default()
            },
        ];
        for h in bad {
            assert!(h.validate().is_err(), "{h:?}");
        }
    }

    #[test]
    fn enum_names_round_trip() {
        assert_eq!("drop-o".parse::<Ablation>().unwrap(), Ablation::DropO);
        assert_eq!(Ablation::DropU.to_string(), "drop_u");
        assert_eq!("MAX".parse::<Pooling>().unwrap(), Pooling::Max);
        assert!("median".parse::<Pooling>().is_err());
    }

    #[test]
    fn mean_of_identical_items_is_that_row() {
        let params = ModelParams::init(1, 4, 3, 5);
        let hyper = HyperParams {
            d: 3,
            n_h: 3,
            n_l: 1,
            ..HyperParams::default()
        };
        let st = forward(0, &[2, 2, 2], 0, &params, &hyper).unwrap();
        for (a, b) in st.high.value.iter().zip(params.source.row(2)) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
