use std::collections::BTreeSet;

use aewc_core::consolidation::{ConsolidationConfig, ConsolidationState, Mode};
use aewc_core::corpus::{action_inventory, build_instances, generate, splice_plus, CorpusSpec, GeneratorKind};
use aewc_core::layers::LstmCell;
use aewc_core::optim::{clip_global_norm, global_norm, Adam, AdamConfig};
use aewc_core::params::ParamStore;
use aewc_core::ranker::{argmax, distribution};
use aewc_core::rng::{stream, Stream};
use aewc_core::tensor::{Tape, Tensor};
use proptest::collection::vec;
use proptest::prelude::*;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    vec(-50.0..50.0f64, 1..20)
}

/// (g, Δθ) pairs of a fixed width.
fn trajectory(width: usize) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    vec((vec(-2.0..2.0f64, width), vec(-0.1..0.1f64, width)), 1..40)
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(x in scores(), shift in -1e3..1e3f64) {
        let p = distribution(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(distribution(&shifted).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_softmax_matches_plain(x in scores()) {
        let tape = Tape::new();
        let v = tape.var(Tensor::vector(x.clone())).softmax().unwrap().value();
        prop_assert_eq!(v, distribution(&x).unwrap());
    }

    #[test]
    fn predict_survives_monotone_transforms(x in scores(), a in 0.01..10.0f64, b in -100.0..100.0f64) {
        let best = argmax(&x).unwrap();
        let affine: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let cubed: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        prop_assert_eq!(argmax(&affine).unwrap(), best);
        prop_assert_eq!(argmax(&cubed).unwrap(), best);
    }

    #[test]
    fn ranking_loss_is_non_negative(x in scores()) {
        let tape = Tape::new();
        let loss = tape.var(Tensor::vector(x)).log_softmax().unwrap().index(0).unwrap().neg().item();
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn clipping_keeps_direction(g in vec(-100.0..100.0f64, 1..30), max in 0.1..10.0f64) {
        let mut clipped = g.clone();
        let scale = clip_global_norm(&mut clipped, max).unwrap();
        prop_assert!(scale > 0.0 && scale <= 1.0);
        prop_assert!(global_norm(&clipped) <= max * (1.0 + 1e-12));
        for (c, o) in clipped.iter().zip(&g) {
            prop_assert_eq!(*c, o * scale);
        }
    }

    #[test]
    fn adam_returns_the_applied_delta(theta in vec(-5.0..5.0f64, 1..10), steps in vec(-3.0..3.0f64, 1..10)) {
        let mut adam = Adam::new(AdamConfig::default(), theta.len());
        let mut t = theta.clone();
        for s in steps {
            let g: Vec<f64> = t.iter().map(|x| s * x).collect();
            let before = t.clone();
            let d = adam.step(&mut t, &g).unwrap();
            for k in 0..t.len() {
                prop_assert_eq!(t[k], before[k] + d[k]);
            }
        }
    }

    #[test]
    fn decayed_omega_is_bounded(steps in trajectory(3), lambda in 0.5..0.999f64) {
        let config = ConsolidationConfig { lambda, ..ConsolidationConfig::new(Mode::Aewc) };
        let mut state = ConsolidationState::new(config, 3).unwrap();
        let bound = steps
            .iter()
            .flat_map(|(g, d)| g.iter().zip(d).map(|(a, b)| (a * b).abs()))
            .fold(0.0, f64::max);
        for (g, d) in &steps {
            state.on_step(g, d).unwrap();
            for w in &state.omega {
                prop_assert!(w.abs() <= bound / (1.0 - lambda) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn importance_never_decreases(tasks in vec(trajectory(4), 1..4)) {
        let mut state = ConsolidationState::new(ConsolidationConfig::new(Mode::Aewc), 4).unwrap();
        let mut theta = vec![0.0; 4];
        for task in &tasks {
            let before = state.importance.clone();
            for (g, d) in task {
                state.on_step(g, d).unwrap();
                for (t, dk) in theta.iter_mut().zip(d) {
                    *t += dk;
                }
            }
            state.on_task_end(&theta).unwrap();
            for (b, a) in before.iter().zip(&state.importance) {
                prop_assert!(a >= b);
            }
            prop_assert!(state.omega.iter().chain(&state.delta).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn undecayed_aewc_is_path_integral(tasks in vec(trajectory(3), 1..3)) {
        let aewc = ConsolidationConfig { lambda: 1.0, ..ConsolidationConfig::new(Mode::Aewc) };
        let mut a = ConsolidationState::new(aewc, 3).unwrap();
        let mut p = ConsolidationState::new(ConsolidationConfig::new(Mode::PathIntegral), 3).unwrap();
        let theta = vec![0.5, -0.5, 0.0];
        for task in &tasks {
            for (g, d) in task {
                a.on_step(g, d).unwrap();
                p.on_step(g, d).unwrap();
                prop_assert_eq!(&a.omega, &p.omega);
                prop_assert_eq!(&a.delta, &p.delta);
            }
            a.on_task_end(&theta).unwrap();
            p.on_task_end(&theta).unwrap();
            prop_assert_eq!(&a.importance, &p.importance);
        }
    }

    #[test]
    fn penalty_vanishes_before_a_boundary_and_at_the_anchor(
        task in trajectory(3),
        theta in vec(-1.0..1.0f64, 3),
    ) {
        let mut state = ConsolidationState::new(ConsolidationConfig::new(Mode::Aewc), 3).unwrap();
        for (g, d) in &task {
            state.on_step(g, d).unwrap();
        }
        prop_assert_eq!(state.penalty(&theta).unwrap(), 0.0);
        state.on_task_end(&theta).unwrap();
        prop_assert_eq!(state.penalty(&theta).unwrap(), 0.0);
    }

    #[test]
    fn lstm_hidden_state_is_bounded(seed in any::<u64>(), x in vec(-5.0..5.0f64, 3), c in vec(-20.0..20.0f64, 4)) {
        let mut store = ParamStore::new();
        let cell = LstmCell::register(&mut store, "l", 3, 4, &mut stream(seed, Stream::Init, 0)).unwrap();
        let tape = Tape::new();
        let bound = cell.bind(&tape, &store);
        let h0 = tape.var(Tensor::vector(vec![0.9, -0.9, 0.0, 0.5]));
        let (h, _) = bound
            .step(tape.var(Tensor::vector(x)), h0, tape.var(Tensor::vector(c)))
            .unwrap();
        prop_assert!(h.value().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn backward_is_deterministic(x in vec(-3.0..3.0f64, 2..8)) {
        let run = || {
            let tape = Tape::new();
            let v = tape.var(Tensor::vector(x.clone()));
            let loss = v.tanh().mul(v.exp()).unwrap().log_softmax().unwrap().index(0).unwrap();
            tape.backward(loss).unwrap().wrt(v)
        };
        prop_assert_eq!(run(), run());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distractors_never_contain_truth_or_repeats(seed in any::<u64>(), k in 1usize..10) {
        let dialogs = generate(&CorpusSpec::new(GeneratorKind::Task, seed).with_count(60)).unwrap();
        let inventory = action_inventory(&dialogs);
        let instances = build_instances(&dialogs, &inventory, k, &mut stream(seed, Stream::Sampling, 0)).unwrap();
        for inst in &instances {
            let set: BTreeSet<&String> = inst.distractors.iter().collect();
            prop_assert_eq!(set.len(), k);
            prop_assert!(!set.contains(&inst.truth));
        }
    }

    #[test]
    fn plus_inventory_is_the_union(seed in any::<u64>()) {
        // enough task dialogs that every open_close dialog gets drawn
        let task = generate(&CorpusSpec::new(GeneratorKind::Task, seed).with_count(300)).unwrap();
        let oc = generate(&CorpusSpec::new(GeneratorKind::OpenClose, seed)).unwrap();
        let plus = splice_plus(&task, &oc, &mut stream(seed, Stream::Sampling, 1)).unwrap();
        let union: BTreeSet<String> = action_inventory(&task).into_iter().chain(action_inventory(&oc)).collect();
        let got: BTreeSet<String> = action_inventory(&plus).into_iter().collect();
        prop_assert_eq!(got, union);
        for (p, t) in plus.iter().zip(&task) {
            prop_assert_eq!(&p.turns[1..p.turns.len() - 1], &t.turns[..]);
        }
    }

    #[test]
    fn generation_is_a_pure_function_of_the_spec(seed in any::<u64>(), kind in 0usize..4) {
        let kind = [GeneratorKind::OpenClose, GeneratorKind::Task, GeneratorKind::TaskPlus, GeneratorKind::HhLike][kind];
        let spec = CorpusSpec::new(kind, seed).with_count(15);
        prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }
}
