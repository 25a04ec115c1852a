//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code path it checks.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use ham_core::data::{ItemId, TrainingInstance};
use ham_core::model::{self, Ablation, HyperParams, Matrix, ModelParams, Pooling};
use ham_core::training;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One random small gradient-check problem.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub hyper: HyperParams,
    pub params: ModelParams,
    pub instance: TrainingInstance,
    pub negatives: Vec<ItemId>,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

pub fn random_grad_case(seed: u64, pooling: Pooling, ablation: Ablation, p: usize) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_h = rng.gen_range(p.max(2)..=4);
    let n_l = rng.gen_range(1..=2.min(n_h - 1));
    let n_p = rng.gen_range(1..=2);
    let d = rng.gen_range(1..=5);
    let m = rng.gen_range(1..=8);
    let n = rng.gen_range((n_p + 2).max(3)..=8);
    let lambda = [0.0, 1e-3, 0.05][rng.gen_range(0..3)];
    let hyper = HyperParams {
        d,
        n_h,
        n_l,
        n_p,
        p,
        pooling,
        ablation,
        lambda,
        ..HyperParams::default()
    };
    let mut source = uniform_matrix(&mut rng, n + 1, d);
    source.row_mut(n).fill(0.0);
    let params = ModelParams {
        user: uniform_matrix(&mut rng, m, d),
        source,
        target: uniform_matrix(&mut rng, n, d),
    };
    let pad_count = rng.gen_range(0..n_h);
    let mut context = vec![n; pad_count];
    // repeats allowed: window positions, not distinct ids, are the index set
    context.extend((pad_count..n_h).map(|_| rng.gen_range(0..n)));
    let targets: Vec<ItemId> = (0..n_p).map(|_| rng.gen_range(0..n)).collect();
    let negatives = targets
        .iter()
        .map(|_| loop {
            let j = rng.gen_range(0..n);
            if !targets.contains(&j) {
                break j;
            }
        })
        .collect();
    GradCase {
        hyper,
        instance: TrainingInstance {
            user: rng.gen_range(0..m),
            context,
            targets,
            pad_count,
        },
        params,
        negatives,
    }
}

/// Rows whose L2 penalty belongs to the instance loss.
pub fn touched_rows(case: &GradCase) -> [BTreeSet<usize>; 3] {
    let mut user = BTreeSet::new();
    if case.hyper.ablation != Ablation::DropU {
        user.insert(case.instance.user);
    }
    let source = case.instance.context[case.instance.pad_count..]
        .iter()
        .copied()
        .collect();
    let target = case
        .instance
        .targets
        .iter()
        .chain(&case.negatives)
        .copied()
        .collect();
    [user, source, target]
}

/// Per-instance loss: summed -log sigma(r_pos - r_neg) over targets plus
/// lambda * ||row||^2 over the touched rows. Scores come from the forward
/// pass under test; the derivative comes from differencing this function.
pub fn instance_loss(case: &GradCase, params: &ModelParams) -> f64 {
    let inst = &case.instance;
    let scores = model::score_all(
        inst.user,
        &inst.context,
        inst.pad_count,
        params,
        &case.hyper,
    )
    .unwrap();
    let mut loss = 0.0;
    for (&pos, &neg) in inst.targets.iter().zip(&case.negatives) {
        let x = scores[pos] - scores[neg];
        loss += (1.0 + (-x).exp()).ln();
    }
    let tables = [&params.user, &params.source, &params.target];
    for (rows, table) in touched_rows(case).iter().zip(tables) {
        for &r in rows {
            loss += case.hyper.lambda * table.row(r).iter().map(|x| x * x).sum::<f64>();
        }
    }
    loss
}

fn table_mut(params: &mut ModelParams, which: usize) -> &mut Matrix {
    match which {
        0 => &mut params.user,
        1 => &mut params.source,
        _ => &mut params.target,
    }
}

/// Maximum relative error between the analytic gradient and central finite
/// differences (step `h`) over every coordinate of every touched row; also
/// confirms rows outside the touched set get no analytic gradient.
pub fn max_grad_rel_error(case: &GradCase, h: f64) -> f64 {
    let inst = &case.instance;
    let fwd = model::forward(
        inst.user,
        &inst.context,
        inst.pad_count,
        &case.params,
        &case.hyper,
    )
    .unwrap();
    let (_, grads) =
        training::backward(inst, &case.negatives, &case.params, &case.hyper, &fwd).unwrap();
    let analytic = [&grads.user, &grads.source, &grads.target];
    let touched = touched_rows(case);
    let mut worst = 0.0f64;
    for which in 0..3 {
        for (row, _) in analytic[which].iter() {
            assert!(
                touched[which].contains(&row),
                "table {which}: row {row} not referenced"
            );
        }
        for &row in &touched[which] {
            let g = analytic[which]
                .get(row)
                .expect("touched row missing gradient");
            for (t, &gt) in g.iter().enumerate() {
                let mut plus = case.params.clone();
                table_mut(&mut plus, which).row_mut(row)[t] += h;
                let mut minus = case.params.clone();
                table_mut(&mut minus, which).row_mut(row)[t] -= h;
                let fd = (instance_loss(case, &plus) - instance_loss(case, &minus)) / (2.0 * h);
                let denom = gt.abs().max(fd.abs()).max(1e-6);
                worst = worst.max((gt - fd).abs() / denom);
            }
        }
    }
    worst
}

/// c^(k) for k = 2..=p by literal nested loops: for each j and each
/// ordered choice of other positions (i_2, .., i_k), each differing from j,
/// accumulate v_j * v_{i_2} * .. * v_{i_k}; then average over j.
pub fn brute_force_synergies(rows: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    for k in 2..=p {
        let mut mean = vec![0.0; d];
        for j in 0..n {
            let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            // enumerate all (k-1)-tuples over `others`
            let mut idx = vec![0usize; k - 1];
            loop {
                for t in 0..d {
                    let mut prod = rows[j][t];
                    for &i in &idx {
                        prod *= rows[others[i]][t];
                    }
                    mean[t] += prod;
                }
                let mut pos = 0;
                loop {
                    if pos == idx.len() {
                        break;
                    }
                    idx[pos] += 1;
                    if idx[pos] < others.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
                if pos == idx.len() {
                    break;
                }
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        out.push(mean);
    }
    out
}

/// Recall via explicit counting over a fully sorted list.
pub fn naive_recall(ranked: &[ItemId], k: usize, truth: &HashSet<ItemId>) -> f64 {
    let mut hits = 0;
    for item in ranked.iter().take(k) {
        if truth.contains(item) {
            hits += 1;
        }
    }
    hits as f64 / truth.len() as f64
}

pub fn naive_ndcg(ranked: &[ItemId], k: usize, truth: &HashSet<ItemId>) -> f64 {
    let mut dcg = 0.0;
    for (i, item) in ranked.iter().take(k).enumerate() {
        if truth.contains(item) {
            dcg += 1.0 / (i as f64 + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for i in 0..k.min(truth.len()) {
        idcg += 1.0 / (i as f64 + 2.0).log2();
    }
    dcg / idcg
}

/// Full stable sort by descending score, ties by ascending id.
pub fn naive_rank(scores: &[f64], exclude: &HashSet<ItemId>) -> Vec<ItemId> {
    let mut ids: Vec<ItemId> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    ids.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    ids
}
