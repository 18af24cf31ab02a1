use std::collections::BTreeSet;

use that_core::attention::MaskTape;
use that_core::gradcheck::{
    check_model, check_ops, gradcheck_model_config, op_name, run_gradcheck, GradcheckReport, OP_NAMES,
};
use that_core::model::{that_forward, That};
use that_core::tensor::{corrupt_adjoint, Tensor};
use that_core::training::l1_loss;
use that_core::Var;

#[test]
fn full_suite_passes_and_lists_each_op_once() {
    let report = run_gradcheck(0).unwrap();
    print!("{}", report.render());
    assert!(report.passed(), "{:?}", report.failures());
    let names: Vec<_> = report.ops.iter().map(|c| c.op).collect();
    let unique: BTreeSet<_> = names.iter().copied().collect();
    assert_eq!(unique.len(), names.len());
    assert_eq!(names, OP_NAMES);
    assert!(report.ops.iter().all(|c| c.instances >= 20));
    assert_eq!(report.render().lines().filter(|l| l.starts_with("conv2d ")).count(), 1);
}

#[test]
fn op_list_covers_the_network_graph() {
    let cfg = gradcheck_model_config();
    let model = That::<f64>::new(cfg.clone(), 1).unwrap();
    let y = Var::constant(Tensor::full(&[1, cfg.bands, 8, 8], 0.5));
    let x = Var::constant(Tensor::full(&[1, 1, 16, 16], 0.5));
    let gt = Var::constant(Tensor::full(&[1, cfg.bands, 16, 16], 0.1));
    let out = that_forward(&y, &x, &model, &mut MaskTape::default()).unwrap();
    let used = l1_loss(&out, &gt).unwrap().graph_ops();
    let listed: BTreeSet<_> = OP_NAMES.iter().copied().collect();
    let missing: Vec<_> = used.difference(&listed).collect();
    assert!(missing.is_empty(), "unchecked ops: {missing:?}");
}

#[test]
fn corrupted_adjoint_is_caught_and_named() {
    for name in ["softmax", "conv2d", "layer_norm"] {
        corrupt_adjoint(op_name(name));
        let ops = check_ops(3, 2);
        let model = check_model(&gradcheck_model_config(), 3, 10);
        corrupt_adjoint(None);
        let report = GradcheckReport {
            ops: ops.unwrap(),
            model: model.unwrap(),
        };
        assert!(!report.passed());
        let failures = report.failures();
        assert!(
            failures.iter().any(|f| f.contains(&format!("op {name} "))),
            "{failures:?}"
        );
        assert!(
            failures
                .iter()
                .filter(|f| f.starts_with("op "))
                .all(|f| f.contains(name)),
            "{failures:?}"
        );
        assert!(report.render().contains("FAIL"));
    }
}

#[test]
fn unknown_op_names_are_rejected() {
    assert_eq!(op_name("softmax"), Some("softmax"));
    assert_eq!(op_name("fft"), None);
}
