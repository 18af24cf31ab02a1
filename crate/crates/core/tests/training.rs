use proptest::prelude::*;
use that_core::model::{ModelConfig, That};
use that_core::nn::{named_parameters, Module};
use that_core::tensor::{no_grad, Tensor};
use that_core::training::{l1_loss, lr_at, train_loop, Adam, TrainConfig};
use that_core::wald::{make_pairs, make_synthetic_scene, normalize_crop, WaldConfig, WaldPair};
use that_core::{Error, Var};

fn v(shape: &[usize], data: Vec<f64>) -> Var<f64> {
    Var::param(Tensor::new(shape, data).unwrap())
}

#[test]
fn schedule_matches_published_values() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(0, &cfg), 5e-4);
    assert_eq!(lr_at(20, &cfg), 2.5e-4);
    assert_eq!(lr_at(40, &cfg), 1.25e-4);
    assert_eq!(lr_at(19, &cfg), 5e-4);
}

proptest! {
    #[test]
    fn schedule_is_piecewise_constant(epoch in 0usize..500, every in 1usize..50) {
        let cfg = TrainConfig { decay_every: every, ..Default::default() };
        let here = lr_at(epoch, &cfg);
        if (epoch + 1) % every == 0 {
            prop_assert_eq!(lr_at(epoch + 1, &cfg), here * 0.5);
        } else {
            prop_assert_eq!(lr_at(epoch + 1, &cfg), here);
        }
    }
}

#[test]
fn l1_examples_and_subgradient() {
    let a = v(&[2], vec![0.0, 1.0]);
    let b = Var::constant(Tensor::new(&[2], vec![1.0, 1.0]).unwrap());
    let loss = l1_loss(&a, &b).unwrap();
    assert_eq!(loss.value().item(), 0.5);
    loss.backward().unwrap();
    // d|a-b|/da: -1/2 for the first entry, 0 at the tie.
    assert_eq!(a.grad().data(), &[-0.5, 0.0]);

    let r = Var::constant(Tensor::from_fn(&[3, 4], |i| i as f64 * 0.1));
    let p = Var::constant(r.value().map(|x| x + 0.1));
    assert!((l1_loss(&p, &r).unwrap().value().item() - 0.1).abs() < 1e-12);
    assert_eq!(l1_loss(&r, &r).unwrap().value().item(), 0.0);
    assert!(matches!(l1_loss(&r, &a), Err(Error::Dimension(_))));
}

struct Leaf(Var<f64>);

impl Module<f64> for Leaf {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<f64>)) {
        f(prefix, &self.0);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<f64>)) {
        f(prefix, &mut self.0);
    }
}

#[test]
fn adam_first_step_moves_by_lr() {
    let cfg = TrainConfig::default();
    for g in [1e-3, -0.7, 42.0] {
        let mut m = Leaf(v(&[3], vec![1.0, -2.0, 0.5]));
        // Loss g·Σw gives gradient g everywhere.
        m.0.sum_all().scale(g).backward().unwrap();
        let mut adam = Adam::new(&cfg);
        adam.step(&mut m, 1e-2);
        // m̂ = g, v̂ = g², so the update is lr·g/(|g| + eps).
        let expect = 1e-2 * g / (g.abs() + cfg.eps);
        for (after, before) in m.0.value().data().iter().zip([1.0, -2.0, 0.5]) {
            assert!((before - after - expect).abs() < 1e-15, "g={g}");
        }
        assert_eq!(adam.step, 1);
    }
}

#[test]
fn adam_second_step_matches_hand_recursion() {
    let cfg = TrainConfig::default();
    let mut m = Leaf(v(&[1], vec![0.0]));
    let mut adam = Adam::new(&cfg);
    let (b1, b2, lr) = (0.9f64, 0.999f64, 1e-3);
    let (mut mm, mut vv, mut w) = (0.0f64, 0.0f64, 0.0f64);
    for (t, g) in [(1, 2.0f64), (2, -1.0)] {
        m.0.sum_all().scale(g).backward().unwrap();
        adam.step(&mut m, lr);
        mm = b1 * mm + (1.0 - b1) * g;
        vv = b2 * vv + (1.0 - b2) * g * g;
        let mh = mm / (1.0 - b1.powi(t));
        let vh = vv / (1.0 - b2.powi(t));
        w -= lr * mh / (vh.sqrt() + cfg.eps);
        assert!((m.0.value().data()[0] - w).abs() < 1e-15);
    }
}

#[test]
fn adam_with_zero_gradient_is_a_no_op() {
    let mut model = That::<f32>::new(ModelConfig::tiny(4, 2), 3).unwrap();
    let before = named_parameters(&model);
    let mut adam = Adam::new(&TrainConfig::default());
    for _ in 0..3 {
        adam.step(&mut model, 1e-3);
    }
    let after = named_parameters(&model);
    assert_eq!(before, after);
}

#[test]
fn no_grad_records_nothing() {
    let a = v(&[2], vec![1.0, 2.0]);
    let b = no_grad(|| a.square().sum_all());
    assert!(!b.requires_grad());
    assert!(b.op_name().is_none());
    assert!(a.square().requires_grad());
}

fn sample(size: usize, bands: usize, seed: u64) -> Vec<WaldPair> {
    let mut wc = WaldConfig::for_scale(2);
    wc.crop = size;
    let hr = normalize_crop(&make_synthetic_scene(seed, size, size, bands).unwrap(), size).unwrap();
    make_pairs(&hr, size, &wc).unwrap()
}

#[test]
fn short_training_descends_and_is_deterministic() {
    let pairs = sample(32, 4, 0);
    let cfg = TrainConfig {
        epochs: 500,
        batch: 1,
        eval_every: 500,
        ..Default::default()
    };
    let run = || {
        let mut model = That::<f32>::new(ModelConfig::tiny(4, 2), 0).unwrap();
        train_loop(&mut model, &pairs, &[], &cfg, None, |_| {}).unwrap()
    };
    let a = run();
    let losses: Vec<f64> = a.log.iter().map(|e| e.loss).collect();
    assert!(losses.iter().all(|l| l.is_finite()));
    assert!(losses[499] < losses[0], "{} vs {}", losses[499], losses[0]);
    let b = run();
    assert_eq!(losses, b.log.iter().map(|e| e.loss).collect::<Vec<_>>());
    assert!(a.best.is_some());
}

#[test]
fn checkpoints_and_log_are_written() {
    let pairs = sample(16, 4, 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch: 2,
        eval_every: 2,
        ..Default::default()
    };
    let mut model = That::<f32>::new(ModelConfig::tiny(4, 2), 0).unwrap();
    let s = train_loop(&mut model, &pairs, &[], &cfg, Some(dir.path()), |_| {}).unwrap();
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows[0], "epoch,lr,loss,psnr,ssim,sam,ergas,scc");
    assert_eq!(rows.len(), 4);
    // Epoch 0 is not an evaluation epoch; 1 (second) and 2 (last) are.
    assert!(rows[1].ends_with(",,,,,"));
    assert!(!rows[2].ends_with(','));
    assert!(s.final_checkpoint.unwrap().exists());
    assert!(s.best_checkpoint.unwrap().exists());
}

#[test]
fn non_finite_parameter_aborts_with_its_name() {
    let pairs = sample(16, 4, 2);
    let mut model = That::<f32>::new(ModelConfig::tiny(4, 2), 0).unwrap();
    model.visit_mut("", &mut |name, p| {
        if name == "recon.bias" {
            let mut t = p.value().clone();
            t.data_mut()[0] = f32::NAN;
            *p = Var::param(t);
        }
    });
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    match train_loop(&mut model, &pairs, &[], &cfg, None, |_| {}) {
        Err(Error::Numerical(msg)) => assert!(msg.contains("recon.bias"), "{msg}"),
        other => panic!("expected a numerical error, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = TrainConfig {
        lr0: 0.0,
        decay_factor: 1.5,
        batch: 0,
        ..Default::default()
    };
    assert_eq!(bad.problems().len(), 3);
    let pairs = sample(16, 4, 3);
    let mut model = That::<f32>::new(ModelConfig::tiny(4, 2), 0).unwrap();
    assert!(matches!(
        train_loop(&mut model, &pairs, &[], &bad, None, |_| {}),
        Err(Error::Config(_))
    ));
}
