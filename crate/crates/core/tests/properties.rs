mod common;

use std::collections::HashSet;

use ham_core::data::{
    self, Dataset, InteractionRecord, PreprocessOptions, SplitPlan, SplitSetting,
};
use ham_core::evaluation::{ndcg_at_k, recall_at_k, top_k};
use ham_core::model::{self, Ablation, HyperParams, ModelParams, Optimizer, Pooling};
use ham_core::training::{self, AdamState, Gradients};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params_from(seed: u64, m: usize, n: usize, d: usize) -> ModelParams {
    ModelParams::init(m, n, d, seed)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

fn random_sequences(
    rng: &mut ChaCha8Rng,
    users: usize,
    items: usize,
    max_len: usize,
) -> Vec<Vec<usize>> {
    (0..users)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| rng.gen_range(0..items)).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pooling_ignores_item_order(seed in any::<u64>(), len in 1usize..6, d in 1usize..6, shift in 0usize..6) {
        let params = params_from(seed, 1, 8, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<usize> = (0..len).map(|_| rng.gen_range(0..8)).collect();
        let mut rotated = items.clone();
        rotated.rotate_left(shift % len);
        for mode in [Pooling::Mean, Pooling::Max] {
            let a = model::pool(&items, 0, &params, mode, len).unwrap().value;
            let b = model::pool(&rotated, 0, &params, mode, len).unwrap().value;
            prop_assert!(close(&a, &b, 1e-12), "{mode}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn pad_slots_do_not_change_pooling(seed in any::<u64>(), len in 1usize..5, pads in 0usize..4, d in 1usize..5) {
        let params = params_from(seed, 1, 6, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let items: Vec<usize> = (0..len).map(|_| rng.gen_range(0..6)).collect();
        let mut padded = vec![params.pad_id(); pads];
        padded.extend(&items);
        for mode in [Pooling::Mean, Pooling::Max] {
            let a = model::pool(&items, 0, &params, mode, len).unwrap().value;
            let b = model::pool(&padded, pads, &params, mode, len + pads).unwrap().value;
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn synergies_are_symmetric_in_the_window(seed in any::<u64>(), len in 2usize..6, d in 1usize..5, p in 2usize..5) {
        let params = params_from(seed, 1, 10, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let items: Vec<usize> = (0..len).map(|_| rng.gen_range(0..10)).collect();
        let mut reversed = items.clone();
        reversed.reverse();
        let a = model::synergy_orders(&items, &params, p).orders;
        let b = model::synergy_orders(&reversed, &params, p).orders;
        prop_assert_eq!(a.len(), p - 1);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(x, y, 1e-12));
        }
    }

    #[test]
    fn synergy_pair_is_bilinear(a in prop::collection::vec(-2.0f64..2.0, 1..6), alpha in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
        let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
        let lhs = model::synergy_pair(&scaled, &b);
        let rhs: Vec<f64> = model::synergy_pair(&a, &b).iter().map(|x| alpha * x).collect();
        prop_assert!(close(&lhs, &rhs, 1e-12));
        prop_assert_eq!(model::synergy_pair(&a, &b), model::synergy_pair(&b, &a));
    }

    #[test]
    fn score_decomposes_into_three_dots(seed in any::<u64>(), d in 1usize..8) {
        let params = params_from(seed, 3, 5, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let assoc: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let low: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (user, cand) = (rng.gen_range(0..3), rng.gen_range(0..5));
        let w = params.target.row(cand);
        let u = model::dot(params.user.row(user), w);
        let (h, o) = (model::dot(&assoc, w), model::dot(&low, w));
        for (ablation, expected) in [(Ablation::None, u + h + o), (Ablation::DropU, h + o), (Ablation::DropO, u + h)] {
            let r = model::score(user, &assoc, &low, cand, &params, ablation);
            prop_assert!((r - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn bpr_loss_is_positive_and_monotone(pos in -20.0f64..20.0, neg in -20.0f64..20.0, step in 0.01f64..5.0) {
        let l = training::bpr_loss(pos, neg);
        prop_assert!(l > 0.0 && l.is_finite());
        prop_assert!(training::bpr_loss(pos + step, neg) < l);
        prop_assert!(training::bpr_loss(pos, neg + step) > l);
    }

    #[test]
    fn cutoff_metrics_behave(scores in prop::collection::vec(0i32..20, 2..30), seed in any::<u64>()) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let n = scores.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: HashSet<usize> = (0..rng.gen_range(1..=n)).map(|_| rng.gen_range(0..n)).collect();
        let none = HashSet::new();
        let mut last_recall = 0.0;
        for k in 1..=n {
            let ranked = top_k(&scores, k, &none).unwrap();
            let recall = recall_at_k(&ranked, &truth).unwrap();
            let ndcg = ndcg_at_k(&ranked, &truth).unwrap();
            prop_assert!(recall >= last_recall);
            last_recall = recall;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ndcg));
            let hits = ranked.iter().filter(|j| truth.contains(j)).count();
            prop_assert_eq!(recall, hits as f64 / truth.len() as f64);
            // shifting every score by a constant leaves the ranking alone
            let shifted: Vec<f64> = scores.iter().map(|s| s + 7.0).collect();
            prop_assert_eq!(&top_k(&shifted, k, &none).unwrap(), &ranked);
        }
        prop_assert_eq!(last_recall, 1.0);
    }

    #[test]
    fn instances_are_contiguous_slices(seed in any::<u64>(), n_h in 1usize..5, n_p in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = Dataset::from_sequences(9, random_sequences(&mut rng, 5, 9, 30)).unwrap();
        let plan = data::split(&ds, SplitSetting::Cut80_20);
        for include_validation in [false, true] {
            let instances = data::make_instances(&ds, &plan, n_h, n_p, include_validation);
            for u in 0..ds.num_users() {
                let b = plan.bounds[u];
                let end = if include_validation { b.valid_end } else { b.train_end };
                let seq = &ds.sequence(u)[..end];
                let mine: Vec<_> = instances.iter().filter(|i| i.user == u).collect();
                prop_assert_eq!(mine.len(), seq.len().saturating_sub(n_p));
                for (t, inst) in (1..).zip(&mine) {
                    prop_assert_eq!(inst.context.len(), n_h);
                    prop_assert!(inst.pad_count < n_h);
                    prop_assert!(inst.context[..inst.pad_count].iter().all(|&j| j == ds.pad_id()));
                    let hist = inst.history();
                    prop_assert_eq!(hist, &seq[t - hist.len()..t]);
                    prop_assert_eq!(&inst.targets[..], &seq[t..t + n_p]);
                }
            }
        }
    }

    #[test]
    fn preprocessing_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<InteractionRecord> = (0..400)
            .map(|i| InteractionRecord {
                user: format!("u{}", rng.gen_range(0..25)),
                item: rng.gen_range(0..40).to_string(),
                rating: rng.gen_range(1..=5) as f64,
                timestamp: rng.gen_range(0..50) + i % 3,
            })
            .collect();
        let opts = PreprocessOptions { min_user_interactions: 5, min_item_interactions: 3, positive_threshold: 3.0 };
        if let Ok(once) = data::preprocess(&records, &opts) {
            let twice = data::preprocess(&once.to_records(), &opts).unwrap();
            prop_assert_eq!(&twice, &once);
            for u in 0..once.num_users() {
                prop_assert!(once.sequence(u).len() >= 5);
            }
            let mut counts = vec![0; once.num_items()];
            once.sequences().iter().flatten().for_each(|&j| counts[j] += 1);
            prop_assert!(counts.iter().all(|&c| c >= 3));

            let mut buf = Vec::new();
            once.write_id_map(true, &mut buf).unwrap();
            for line in String::from_utf8(buf).unwrap().lines() {
                let (id, key) = line.split_once('\t').unwrap();
                prop_assert_eq!(once.item_id(key), Some(id.parse().unwrap()));
            }
            let mut file = Vec::new();
            once.write_to(&mut file).unwrap();
            let back = Dataset::read_from(&file[..]).unwrap();
            prop_assert_eq!(back.sequences(), once.sequences());
        }
    }

    #[test]
    fn updates_touch_only_referenced_rows(seed in any::<u64>(), sgd in any::<bool>()) {
        let case = common::random_grad_case(seed, Pooling::Mean, Ablation::None, 2);
        let inst = &case.instance;
        let fwd = model::forward(inst.user, &inst.context, inst.pad_count, &case.params, &case.hyper).unwrap();
        let (_, grads) = training::backward(inst, &case.negatives, &case.params, &case.hyper, &fwd).unwrap();
        let mut after = case.params.clone();
        if sgd {
            training::sgd_step(&mut after, &grads, 0.1);
        } else {
            let mut state = AdamState::new(&after, 0.9, 0.999, 1e-8);
            training::adam_step(&mut after, &grads, &mut state, 0.1);
        }
        let touched = common::touched_rows(&case);
        let tables = [(&case.params.user, &after.user), (&case.params.source, &after.source), (&case.params.target, &after.target)];
        for (which, (before, now)) in tables.iter().enumerate() {
            for r in 0..before.rows() {
                if !touched[which].contains(&r) {
                    prop_assert_eq!(before.row(r), now.row(r), "table {} row {}", which, r);
                }
            }
        }
        prop_assert!(after.source.row(after.pad_id()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn regularization_alone_shrinks_rows_geometrically(seed in any::<u64>(), lambda in 1e-4f64..0.1, lr in 1e-3f64..1.0) {
        let mut params = params_from(seed, 2, 4, 3);
        let before = params.clone();
        let mut grads = Gradients::new(3);
        grads.user.row_mut(1);
        grads.target.row_mut(2);
        training::add_regularization(&mut grads, &params, lambda);
        training::sgd_step(&mut params, &grads, lr);
        let factor = 1.0 - 2.0 * lr * lambda;
        for (b, a) in [(before.user.row(1), params.user.row(1)), (before.target.row(2), params.target.row(2))] {
            let expected: Vec<f64> = b.iter().map(|x| x * factor).collect();
            prop_assert!(close(a, &expected, 1e-12));
        }
        prop_assert_eq!(before.user.row(0), params.user.row(0));
        prop_assert_eq!(&before.source, &params.source);
    }
}

fn tiny_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs = (0..12)
        .map(|_| {
            (0..rng.gen_range(12..20))
                .map(|_| rng.gen_range(0..15))
                .collect()
        })
        .collect();
    Dataset::from_sequences(15, seqs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn seeded_training_is_reproducible(seed in any::<u64>(), sgd in any::<bool>(), max_pool in any::<bool>()) {
        let ds = tiny_dataset(seed);
        let plan = SplitPlan::leave_last(&ds, 2, 2);
        let hyper = HyperParams {
            d: 4,
            n_h: 3,
            n_l: 1,
            n_p: 2,
            p: 3,
            pooling: if max_pool { Pooling::Max } else { Pooling::Mean },
            optimizer: if sgd { Optimizer::Sgd } else { Optimizer::Adam },
            learning_rate: 0.01,
            batch_size: 8,
            max_epochs: 4,
            validate_every: 2,
            seed,
            ..HyperParams::default()
        };
        let (p1, r1) = training::train(&ds, &plan, &hyper).unwrap();
        let (p2, r2) = training::train(&ds, &plan, &hyper).unwrap();
        prop_assert_eq!(&p1, &p2);
        prop_assert!(r1.same_outcome(&r2));
        prop_assert!(p1.is_finite());
        let other = HyperParams { seed: seed.wrapping_add(1), ..hyper };
        let (p3, _) = training::train(&ds, &plan, &other).unwrap();
        prop_assert_ne!(&p1, &p3);
    }
}
