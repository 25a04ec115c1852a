//! BPR training with uniform negative sampling, analytic gradients through
//! the full forward pass and row-sparse Adam.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{make_instances, Dataset, ItemId, SplitPlan, TrainingInstance};
use crate::evaluation::{self, EvalOptions, EvalTarget};
use crate::model::{
    self, Ablation, ForwardState, HyperParams, Matrix, ModelError, ModelParams, Optimizer, Pooled,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("cannot sample a negative: all {num_items} items are targets")]
    EmptyNegativeSupport { num_items: usize },
    #[error("forward state does not match instance: {0}")]
    ForwardMismatch(String),
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (user {user}, context {context:?}, targets {targets:?})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        user: usize,
        context: Vec<ItemId>,
        targets: Vec<ItemId>,
    },
    #[error("no training instances (sequences too short for n_p={0})")]
    NoInstances(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
}

/// Uniform draw over real items outside the target window.
pub fn sample_negative<R: Rng + ?Sized>(
    targets: &[ItemId],
    num_items: usize,
    rng: &mut R,
) -> Result<ItemId, TrainError> {
    let mut distinct: Vec<ItemId> = targets.iter().copied().filter(|&t| t < num_items).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() >= num_items {
        return Err(TrainError::EmptyNegativeSupport { num_items });
    }
    loop {
        let j = rng.gen_range(0..num_items);
        if distinct.binary_search(&j).is_err() {
            return Ok(j);
        }
    }
}

/// log(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// -log sigma(r_pos - r_neg).
pub fn bpr_loss(r_pos: f64, r_neg: f64) -> f64 {
    softplus(r_neg - r_pos)
}

/// Gradient rows for one embedding table, keyed by row index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowGrads {
    dim: usize,
    rows: Vec<usize>,
    slots: HashMap<usize, usize>,
    data: Vec<f64>,
}

impl RowGrads {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.slots.clear();
        self.data.clear();
    }

    /// Marks `row` as touched and returns its accumulator.
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let d = self.dim;
        let slot = *self.slots.entry(row).or_insert_with(|| {
            self.rows.push(row);
            self.data.resize(self.data.len() + d, 0.0);
            self.rows.len() - 1
        });
        &mut self.data[slot * d..(slot + 1) * d]
    }

    pub fn get(&self, row: usize) -> Option<&[f64]> {
        self.slots
            .get(&row)
            .map(|&s| &self.data[s * self.dim..(s + 1) * self.dim])
    }

    /// Touched rows in first-touch order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .iter()
            .zip(self.data.chunks_exact(self.dim.max(1)))
            .map(|(&r, g)| (r, g))
    }

    pub fn touched(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub user: RowGrads,
    pub source: RowGrads,
    pub target: RowGrads,
}

impl Gradients {
    pub fn new(dim: usize) -> Self {
        Self {
            user: RowGrads::new(dim),
            source: RowGrads::new(dim),
            target: RowGrads::new(dim),
        }
    }

    pub fn clear(&mut self) {
        self.user.clear();
        self.source.clear();
        self.target.clear();
    }
}

#[inline]
fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

fn pool_backward(
    pooled: &Pooled,
    grad: &[f64],
    context: &[ItemId],
    start: usize,
    source: &mut RowGrads,
) {
    let items = &context[start..];
    match &pooled.argmax {
        None => {
            let share = 1.0 / items.len() as f64;
            for &j in items {
                axpy(source.row_mut(j), share, grad);
            }
        }
        Some(argmax) => {
            for &j in items {
                source.row_mut(j);
            }
            for (t, &pos) in argmax.iter().enumerate() {
                source.row_mut(context[pos])[t] += grad[t];
            }
        }
    }
}

fn check_forward(
    instance: &TrainingInstance,
    params: &ModelParams,
    fwd: &ForwardState,
) -> Result<(), TrainError> {
    let fail = |m: String| Err(TrainError::ForwardMismatch(m));
    if fwd.user != instance.user {
        return fail(format!("user {} vs {}", fwd.user, instance.user));
    }
    if fwd.window_len != instance.context.len() {
        return fail(format!(
            "window {} vs {}",
            fwd.window_len,
            instance.context.len()
        ));
    }
    if fwd.high_start < instance.pad_count || fwd.low_start < fwd.high_start {
        return fail("window offsets inconsistent with padding".into());
    }
    if fwd.query.len() != params.dim() || fwd.high.value.len() != params.dim() {
        return fail(format!("dimension {} vs {}", fwd.query.len(), params.dim()));
    }
    Ok(())
}

/// Accumulates the data-term gradient of one instance into `grads` and
/// returns its summed BPR loss. Every row the instance references is
/// marked touched, even when its gradient is zero.
pub fn accumulate_data_gradients(
    instance: &TrainingInstance,
    negatives: &[ItemId],
    params: &ModelParams,
    hyper: &HyperParams,
    fwd: &ForwardState,
    grads: &mut Gradients,
) -> Result<f64, TrainError> {
    check_forward(instance, params, fwd)?;
    if negatives.len() != instance.targets.len() {
        return Err(TrainError::ForwardMismatch(format!(
            "{} negatives for {} targets",
            negatives.len(),
            instance.targets.len()
        )));
    }
    let d = params.dim();
    let q = &fwd.query;
    let mut gq = vec![0.0; d];
    let mut loss = 0.0;
    for (&pos, &neg) in instance.targets.iter().zip(negatives) {
        let w_pos = params.target.row(pos);
        let w_neg = params.target.row(neg);
        let margin = model::dot(q, w_pos) - model::dot(q, w_neg);
        loss += softplus(-margin);
        // d/dmargin of softplus(-margin)
        let g = -sigmoid(-margin);
        axpy(grads.target.row_mut(pos), g, q);
        axpy(grads.target.row_mut(neg), -g, q);
        for ((a, p), n) in gq.iter_mut().zip(w_pos).zip(w_neg) {
            *a += g * (p - n);
        }
    }

    if hyper.ablation != Ablation::DropU {
        axpy(grads.user.row_mut(instance.user), 1.0, &gq);
    }

    let h = &fwd.high.value;
    let syn = &fwd.synergies;
    let window = &instance.context[fwd.high_start..];
    let mut gh = gq.clone();
    if !syn.is_empty() {
        // s = h * (1 + sum_k c^(k))
        for c in &syn.orders {
            for ((g, a), c) in gh.iter_mut().zip(&gq).zip(c) {
                *g += a * c;
            }
        }
        let gc: Vec<f64> = gq.iter().zip(h).map(|(a, h)| a * h).collect();
        let n = window.len();
        let inv_n = 1.0 / n as f64;
        let p = syn.per_item.len();
        let mut grad_others: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
        for j in 0..n {
            let r = &syn.others[j];
            // upstream gradient of c_j^(k), walking k = p down to 1
            let mut up: Vec<f64> = gc.iter().map(|g| g * inv_n).collect();
            for k in (1..p).rev() {
                let c_prev = &syn.per_item[k - 1][j];
                for t in 0..d {
                    grad_others[j][t] += up[t] * c_prev[t];
                }
                let carried: Vec<f64> = up.iter().zip(r).map(|(u, r)| u * r).collect();
                up = if k >= 2 {
                    carried
                        .iter()
                        .zip(&gc)
                        .map(|(c, g)| c + g * inv_n)
                        .collect()
                } else {
                    carried
                };
            }
            axpy(grads.source.row_mut(window[j]), 1.0, &up);
        }
        let mut total = vec![0.0; d];
        for g in &grad_others {
            axpy(&mut total, 1.0, g);
        }
        for (j, &item) in window.iter().enumerate() {
            let row = grads.source.row_mut(item);
            for t in 0..d {
                row[t] += total[t] - grad_others[j][t];
            }
        }
    }

    pool_backward(
        &fwd.high,
        &gh,
        &instance.context,
        fwd.high_start,
        &mut grads.source,
    );
    if hyper.ablation != Ablation::DropO {
        pool_backward(
            &fwd.low,
            &gq,
            &instance.context,
            fwd.low_start,
            &mut grads.source,
        );
    }
    Ok(loss)
}

/// Adds the gradient of lambda * ||row||^2 for every touched row and
/// returns that penalty.
pub fn add_regularization(grads: &mut Gradients, params: &ModelParams, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut penalty = 0.0;
    for (table, g) in [
        (&params.user, &mut grads.user),
        (&params.source, &mut grads.source),
        (&params.target, &mut grads.target),
    ] {
        for slot in 0..g.rows.len() {
            let row = table.row(g.rows[slot]);
            let d = g.dim;
            let acc = &mut g.data[slot * d..(slot + 1) * d];
            for (a, x) in acc.iter_mut().zip(row) {
                *a += 2.0 * lambda * x;
                penalty += lambda * x * x;
            }
        }
    }
    penalty
}

/// Gradient of one instance's loss: BPR terms plus the L2 penalty on the
/// rows it touches. Returns (loss, gradients).
pub fn backward(
    instance: &TrainingInstance,
    negatives: &[ItemId],
    params: &ModelParams,
    hyper: &HyperParams,
    fwd: &ForwardState,
) -> Result<(f64, Gradients), TrainError> {
    let mut grads = Gradients::new(params.dim());
    let data = accumulate_data_gradients(instance, negatives, params, hyper, fwd, &mut grads)?;
    let reg = add_regularization(&mut grads, params, hyper.lambda);
    Ok((data + reg, grads))
}

/// First/second moment accumulators shaped like U, V, W.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: [Matrix; 3],
    pub second: [Matrix; 3],
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let shape = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        let tables = [&params.user, &params.source, &params.target];
        Self {
            first: tables.map(shape),
            second: tables.map(shape),
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam step on the rows with a nonzero gradient. The
/// pad row of V is never updated.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let pad = params.pad_id();
    let AdamState { first, second, .. } = state;
    let tables = [&mut params.user, &mut params.source, &mut params.target];
    let table_grads = [&grads.user, &grads.source, &grads.target];
    for (i, (table, g)) in tables.into_iter().zip(table_grads).enumerate() {
        for (row, grad) in g.iter() {
            if (i == 1 && row == pad) || grad.iter().all(|&x| x == 0.0) {
                continue;
            }
            let m = first[i].row_mut(row);
            let v = second[i].row_mut(row);
            let theta = table.row_mut(row);
            for t in 0..grad.len() {
                m[t] = b1 * m[t] + (1.0 - b1) * grad[t];
                v[t] = b2 * v[t] + (1.0 - b2) * grad[t] * grad[t];
                let m_hat = m[t] / c1;
                let v_hat = v[t] / c2;
                theta[t] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// theta -= lr * g on touched rows (pad row excluded).
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, learning_rate: f64) {
    let pad = params.pad_id();
    let tables = [&mut params.user, &mut params.source, &mut params.target];
    let table_grads = [&grads.user, &grads.source, &grads.target];
    for (i, (table, g)) in tables.into_iter().zip(table_grads).enumerate() {
        for (row, grad) in g.iter() {
            if i == 1 && row == pad {
                continue;
            }
            axpy(table.row_mut(row), -learning_rate, grad);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub epoch: usize,
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub checkpoints: Vec<ValidationPoint>,
    pub best_epoch: Option<usize>,
    /// Mean per-instance BPR loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    /// Same content ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.checkpoints == other.checkpoints
            && self.best_epoch == other.best_epoch
            && self.epoch_losses == other.epoch_losses
    }

    pub fn best(&self) -> Option<&ValidationPoint> {
        self.best_epoch
            .and_then(|e| self.checkpoints.iter().find(|c| c.epoch == e))
    }

    /// Line-oriented report: `#` header lines, then
    /// `epoch,recall@10,ndcg@10,loss,seconds,best` rows (metrics blank on
    /// epochs without validation).
    pub fn write_to<W: Write>(&self, mut out: W, header: &str) -> std::io::Result<()> {
        for line in header.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "epoch,recall@10,ndcg@10,loss,seconds,best")?;
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            let epoch = i + 1;
            let mut row = format!("{epoch},");
            match self.checkpoints.iter().find(|c| c.epoch == epoch) {
                Some(c) => {
                    let _ = write!(row, "{:.6},{:.6},", c.recall_at_10, c.ndcg_at_10);
                }
                None => row.push_str(",,"),
            }
            let secs = self.epoch_seconds.get(i).copied().unwrap_or(0.0);
            let best = u8::from(self.best_epoch == Some(epoch));
            let _ = write!(row, "{loss:.6},{secs:.3},{best}");
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainOptions {
    /// Train on train+validation and skip validation (final retraining).
    pub include_validation: bool,
    /// Per-epoch progress on standard error.
    pub verbose: bool,
}

/// Trains on the training range, validating every `validate_every` epochs
/// (and after the last epoch); returns the parameters with the best
/// validation Recall@10.
pub fn train(
    dataset: &Dataset,
    plan: &SplitPlan,
    hyper: &HyperParams,
) -> Result<(ModelParams, TrainReport), TrainError> {
    train_with(dataset, plan, hyper, TrainOptions::default())
}

pub fn train_with(
    dataset: &Dataset,
    plan: &SplitPlan,
    hyper: &HyperParams,
    opts: TrainOptions,
) -> Result<(ModelParams, TrainReport), TrainError> {
    hyper.validate()?;
    plan.check(dataset).map_err(evaluation::EvalError::from)?;
    let mut params = ModelParams::init(
        dataset.num_users(),
        dataset.num_items(),
        hyper.d,
        hyper.seed,
    );
    let mut report = TrainReport::default();
    if hyper.max_epochs == 0 {
        return Ok((params, report));
    }
    let instances = make_instances(dataset, plan, hyper.n_h, hyper.n_p, opts.include_validation);
    if instances.is_empty() {
        return Err(TrainError::NoInstances(hyper.n_p));
    }
    let num_items = dataset.num_items();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut adam = AdamState::new(&params, hyper.beta1, hyper.beta2, hyper.epsilon);
    let mut grads = Gradients::new(hyper.d);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut negatives = Vec::with_capacity(hyper.n_p);
    let mut best: Option<(f64, ModelParams)> = None;
    let eval_opts = EvalOptions {
        ks: vec![10],
        target: EvalTarget::Validation,
        exclude_seen: false,
        measure_latency: false,
    };

    for epoch in 1..=hyper.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(hyper.batch_size).enumerate() {
            grads.clear();
            for &idx in batch {
                let inst = &instances[idx];
                let fwd = model::forward(inst.user, &inst.context, inst.pad_count, &params, hyper)?;
                negatives.clear();
                for _ in &inst.targets {
                    negatives.push(sample_negative(&inst.targets, num_items, &mut rng)?);
                }
                let loss =
                    accumulate_data_gradients(inst, &negatives, &params, hyper, &fwd, &mut grads)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                        user: inst.user,
                        context: inst.context.clone(),
                        targets: inst.targets.clone(),
                    });
                }
                epoch_loss += loss;
            }
            add_regularization(&mut grads, &params, hyper.lambda);
            match hyper.optimizer {
                Optimizer::Adam => adam_step(&mut params, &grads, &mut adam, hyper.learning_rate),
                Optimizer::Sgd => sgd_step(&mut params, &grads, hyper.learning_rate),
            }
        }
        let mean_loss = epoch_loss / instances.len() as f64;
        report.epoch_losses.push(mean_loss);
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        if !params.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                user: usize::MAX,
                context: Vec::new(),
                targets: Vec::new(),
            });
        }

        let validate = !opts.include_validation
            && (epoch % hyper.validate_every == 0 || epoch == hyper.max_epochs);
        if validate {
            let res = evaluation::evaluate(&params, dataset, plan, hyper, &eval_opts)?;
            let point = ValidationPoint {
                epoch,
                recall_at_10: res.recall(10),
                ndcg_at_10: res.ndcg(10),
                mean_loss,
            };
            if opts.verbose {
                eprintln!(
                    "epoch {epoch}: loss {mean_loss:.5} valid recall@10 {:.4} ndcg@10 {:.4}",
                    point.recall_at_10, point.ndcg_at_10
                );
            }
            report.checkpoints.push(point);
            if best.as_ref().is_none_or(|(r, _)| point.recall_at_10 > *r) {
                best = Some((point.recall_at_10, params.clone()));
                report.best_epoch = Some(epoch);
            }
        } else if opts.verbose {
            eprintln!("epoch {epoch}: loss {mean_loss:.5}");
        }
    }
    let params = match best {
        Some((_, p)) => p,
        None => params,
    };
    Ok((params, report))
}
