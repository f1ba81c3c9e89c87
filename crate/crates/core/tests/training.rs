use proptest::prelude::*;
use unifront::frontends::ParamSet;
use unifront::tensor::{grad_check, Tape, Tensor};
use unifront::training::*;
use unifront::{Error, RandomSource};

fn random_log_probs(t: usize, k: usize, rng: &mut RandomSource) -> Tensor {
    let mut data = Vec::with_capacity(t * k);
    for _ in 0..t {
        let row: Vec<f64> = (0..k).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        data.extend(row.iter().map(|v| v - lse));
    }
    Tensor::new(&[t, k], data).unwrap()
}

fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != BLANK {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Sum of path probabilities over every length-T path collapsing to target.
fn brute_force(lp: &Tensor, target: &[usize]) -> f64 {
    let (t, k) = (lp.shape()[0], lp.shape()[1]);
    let mut total = 0.0;
    for code in 0..k.pow(t as u32) {
        let mut c = code;
        let path: Vec<usize> = (0..t)
            .map(|_| {
                let s = c % k;
                c /= k;
                s
            })
            .collect();
        if collapse(&path) == target {
            total += path.iter().enumerate().map(|(i, &s)| lp.at(&[i, s])).sum::<f64>().exp();
        }
    }
    total
}

fn targets(l_max: usize, k: usize) -> Vec<Vec<usize>> {
    let mut all = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..l_max {
        let mut next = Vec::new();
        for p in &frontier {
            for s in 1..=k {
                let mut q: Vec<usize> = p.clone();
                q.push(s);
                next.push(q);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

#[test]
fn ctc_matches_exhaustive_enumeration() {
    let mut rng = RandomSource::new(17);
    let mut checked = 0;
    for t in 1..=4 {
        for k in 1..=2 {
            for target in targets(2, k) {
                let lp = random_log_probs(t, k + 1, &mut rng);
                let p = brute_force(&lp, &target);
                match ctc_forward_backward(&lp, &target) {
                    Ok((loss, _)) => {
                        assert!((loss + p.ln()).abs() < 1e-9, "T={t} K={k} {target:?}: {loss} vs {}", -p.ln());
                        checked += 1;
                    }
                    Err(Error::InfeasibleAlignment(_)) => assert_eq!(p, 0.0, "T={t} {target:?}"),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
    assert!(checked > 30);
}

#[test]
fn ctc_gradient_matches_finite_differences() {
    let mut rng = RandomSource::new(5);
    for (t, k, target) in [(4usize, 3usize, vec![1usize, 2]), (5, 3, vec![2, 2]), (3, 2, vec![1]), (6, 4, vec![3, 1, 3])] {
        let lp = random_log_probs(t, k, &mut rng);
        let report = grad_check(
            |tape: &mut Tape, x| {
                let y = ctc_loss(tape, x, &target)?;
                Ok(y)
            },
            &lp,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn ctc_through_log_softmax_gradient() {
    let mut rng = RandomSource::new(8);
    let logits = Tensor::new(&[5, 3], (0..15).map(|_| rng.normal()).collect()).unwrap();
    let report = grad_check(
        |tape: &mut Tape, x| {
            let lp = tape.log_softmax(x)?;
            ctc_loss(tape, lp, &[1, 2])
        },
        &logits,
        1e-6,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn raising_path_probability_lowers_loss() {
    let mut rng = RandomSource::new(3);
    let lp = random_log_probs(4, 3, &mut rng);
    let (base, _) = ctc_forward_backward(&lp, &[1, 2]).unwrap();
    // path 1 1 2 0 becomes more likely when its cells gain mass
    let path = [1usize, 1, 2, 0];
    let mut logits = lp.data().to_vec();
    for (t, &s) in path.iter().enumerate() {
        logits[t * 3 + s] += 0.5;
    }
    let mut data = Vec::new();
    for row in logits.chunks(3) {
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        data.extend(row.iter().map(|v| v - lse));
    }
    let (raised, _) = ctc_forward_backward(&Tensor::new(&[4, 3], data).unwrap(), &[1, 2]).unwrap();
    assert!(raised < base);
}

#[test]
fn lr_zero_leaves_parameters_unchanged() {
    let task = ToyTask { n_train: 2, n_dev: 1, max_symbols: 1, ..Default::default() };
    let opts = TrainOptions {
        epochs: 1,
        batch_size: 2,
        model_dim: 16,
        schedule: OneCycle { start: 0.0, peak: 0.0, end: 0.0 },
        ..Default::default()
    };
    let cfg = toy_frontends()[2].clone();
    let mut init_rng = RandomSource::new(4).fork(1);
    let fresh = ToyModel::new(cfg.clone(), task.vocab_size(), 16, 16000, &mut init_rng).unwrap();
    let out = train_toy(&cfg, &task, &opts, &mut RandomSource::new(4)).unwrap();
    assert_eq!(out.model.params(), fresh.params());
}

#[test]
fn identical_seeds_identical_runs() {
    let task = ToyTask { n_train: 4, n_dev: 2, ..Default::default() };
    let opts = TrainOptions { epochs: 2, batch_size: 2, model_dim: 16, ..Default::default() };
    let cfg = toy_generic2d();
    let a = train_toy(&cfg, &task, &opts, &mut RandomSource::new(9)).unwrap();
    let b = train_toy(&cfg, &task, &opts, &mut RandomSource::new(9)).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.report.to_json_lines().lines().count(), 2);
}

#[test]
fn every_toy_frontend_trains_with_each_mask_placement() {
    let task = ToyTask { n_train: 2, n_dev: 1, ..Default::default() };
    for placement in [MaskPlacement::Off, MaskPlacement::Features, MaskPlacement::Stft] {
        for cfg in toy_frontends() {
            let opts = TrainOptions { epochs: 1, batch_size: 2, model_dim: 16, mask_placement: placement, ..Default::default() };
            let out = train_toy(&cfg, &task, &opts, &mut RandomSource::new(1)).unwrap();
            assert!(out.report.epochs[0].mean_loss.is_finite(), "{} {placement:?}", cfg.name());
        }
    }
}

#[test]
fn one_cycle_is_continuous_and_peaks_at_midpoint() {
    let s = OneCycle::default();
    let total = 1000;
    let lrs: Vec<f64> = (0..=total).map(|i| s.lr(i, total)).collect();
    let argmax = lrs.iter().enumerate().fold(0, |b, (i, &v)| if v > lrs[b] { i } else { b });
    assert_eq!(argmax, total / 2);
    for w in lrs.windows(2) {
        assert!((w[1] - w[0]).abs() <= (7e-4 - 7e-6) / 500.0 + 1e-15);
    }
    assert_eq!(one_cycle_lr(0, 10, 7e-6, 7e-4, 7e-6), 7e-6);
}

#[test]
fn adamw_runs_are_bitwise_reproducible() {
    let run = || {
        let mut p = ParamSet::new();
        p.add("w", Tensor::new(&[3], vec![0.1, -0.2, 0.3]).unwrap(), true);
        let mut st = OptimizerState::new(AdamWConfig::default(), 1e-2);
        let mut rng = RandomSource::new(2);
        for _ in 0..50 {
            let g: Grads = [("w".to_string(), (0..3).map(|_| rng.normal()).collect())].into();
            adamw_step(&mut st, &mut p, &g).unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn clipped_norm_never_exceeds_limit(v in prop::collection::vec(-100.0f64..100.0, 1..20), max in 0.01f64..10.0) {
        let mut g: Grads = [("a".to_string(), v)].into();
        clip_grad_norm(&mut g, max).unwrap();
        prop_assert!(global_norm(&g) <= max * (1.0 + 1e-12));
    }
}
