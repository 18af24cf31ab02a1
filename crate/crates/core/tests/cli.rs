use std::path::Path;
use std::process::{Command, Output};

use that_core::cli::{exit_code, RunConfig, CONFIG_KEYS};
use that_core::wald::load_cube;
use that_core::Error;

const TINY: &[&str] = &[
    "--set",
    "synthetic_size=32",
    "--set",
    "synthetic_bands=4",
    "--set",
    "crop=32",
    "--set",
    "scale=2",
    "--set",
    "channels=16",
    "--set",
    "blocks=1",
    "--set",
    "heads=2",
    "--set",
    "window=4",
    "--set",
    "bands=4",
];

fn that(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_that"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn params_prints_m_and_g_units() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["params"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "flops_lr_size=8"]);
    let o = that(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o).lines().next().unwrap().to_string();
    // 10,627 parameters and 2,735,104 MACs per the hand table.
    assert_eq!(first, "params=0.0106 M flops=0.0027 G");
}

#[test]
fn config_errors_are_listed_together_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# comment\nchannels = 16 # trailing\nbogus = 1\nlr0 = fast\nno equals sign\n",
    )
    .unwrap();
    let o = that(
        &["params", "--config", cfg.to_str().unwrap(), "--set", "other=2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["bogus", "lr0"] {
        assert!(err.contains(needle), "{err}");
    }
    assert!(err.contains(":5: expected key = value"), "{err}");
    assert!(err.contains("other"), "{err}");
    assert!(err.contains("channels (16) must be divisible by heads (6)"), "{err}");
}

#[test]
fn degrade_writes_three_cubes_with_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let o = that(
        &[
            "degrade",
            "--set",
            "synthetic_size=64",
            "--set",
            "synthetic_bands=8",
            "--set",
            "crop=64",
            "--set",
            "scale=2",
            "--out",
            "d",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let y = load_cube(&dir.path().join("d/Y.hsc")).unwrap();
    let x = load_cube(&dir.path().join("d/X.hsc")).unwrap();
    let gt = load_cube(&dir.path().join("d/GT.hsc")).unwrap();
    assert_eq!((y.height(), y.width(), y.bands()), (32, 32, 8));
    assert_eq!((x.height(), x.width(), x.bands()), (64, 64, 1));
    assert_eq!((gt.height(), gt.width(), gt.bands()), (64, 64, 8));
    assert!(stdout(&o).contains("Y: 32x32x8"));
}

#[test]
fn scale_eight_selects_the_small_blur_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let o = that(
        &[
            "degrade",
            "--set",
            "synthetic_size=64",
            "--set",
            "synthetic_bands=4",
            "--set",
            "crop=64",
            "--set",
            "scale=8",
            "--out",
            "d",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("scale x8 blur 4x4"), "{}", stdout(&o));
    let cfg = RunConfig::from_sources(None, &["scale=8".into()]).unwrap();
    assert_eq!(cfg.wald.blur_kernel, 4);
    let cfg = RunConfig::from_sources(None, &["scale=2".into()]).unwrap();
    assert_eq!(cfg.wald.blur_kernel, 20);
}

#[test]
fn missing_input_names_the_path_and_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = that(&["degrade", "no/such/cube.hsc", "--out", "d"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no/such/cube.hsc"), "{}", stderr(&o));
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["degrade", "--out", "d"];
    args.extend_from_slice(TINY);
    assert!(that(&args, dir.path()).status.success());
    let o = that(
        &[
            "eval", "--data", "d", "--pred", "d/GT.hsc", "--set", "scale=2", "--out", "e",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("e/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dataset,scale,psnr,ssim,sam,ergas,scc"));
    assert_eq!(
        lines.next(),
        Some("synthetic,2,100.000000,1.000000,0.000000,0.000000,1.000000")
    );
    assert!(dir.path().join("e/band_psnr.csv").exists());
}

#[test]
fn train_infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--out",
        "t",
        "--set",
        "epochs=2",
        "--set",
        "eval_every=1",
        "--set",
        "tile=16",
        "--set",
        "eval_tiles=1",
    ];
    args.extend_from_slice(TINY);
    let o = that(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("t/train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,lr,loss,psnr,ssim,sam,ergas,scc"));
    assert_eq!(log.lines().count(), 3);
    assert!(dir.path().join("t/final.ckpt").exists() && dir.path().join("t/best.ckpt").exists());

    // Same seed, same log.
    let again = that(
        &args
            .iter()
            .map(|a| if *a == "t" { "t2" } else { a })
            .collect::<Vec<_>>(),
        dir.path(),
    );
    assert!(again.status.success());
    assert_eq!(
        log,
        std::fs::read_to_string(dir.path().join("t2/train_log.csv")).unwrap()
    );

    let mut dargs = vec!["degrade", "--out", "d"];
    dargs.extend_from_slice(TINY);
    assert!(that(&dargs, dir.path()).status.success());
    let o = that(
        &[
            "infer",
            "--checkpoint",
            "t/final.ckpt",
            "--lr",
            "d/Y.hsc",
            "--pan",
            "d/X.hsc",
            "--out",
            "i",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let fused = load_cube(&dir.path().join("i/fused.hsc")).unwrap();
    assert_eq!((fused.height(), fused.width(), fused.bands()), (32, 32, 4));
    let pgm = std::fs::read_to_string(dir.path().join("i/fused_band000.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n32 32\n255\n"));
    assert!(dir.path().join("i/pan.pgm").exists());

    let o = that(
        &[
            "eval",
            "--data",
            "d",
            "--checkpoint",
            "t/final.ckpt",
            "--set",
            "scale=2",
            "--out",
            "e",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("psnr "));
}

#[test]
fn gradcheck_passes_and_detects_a_corrupted_op() {
    let dir = tempfile::tempdir().unwrap();
    let o = that(&["gradcheck"], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).trim_end().ends_with("PASS"));

    let o = that(&["gradcheck", "--corrupt-op", "softmax"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let out = stdout(&o);
    assert!(
        out.lines().any(|l| l.starts_with("softmax ") && l.ends_with("FAIL")),
        "{out}"
    );
    assert!(stderr(&o).contains("op softmax"), "{}", stderr(&o));

    let o = that(&["gradcheck", "--corrupt-op", "warp"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_documented_key_is_accepted() {
    let mut cfg = RunConfig::default();
    for key in CONFIG_KEYS {
        let value = match *key {
            "use_pci" | "use_ptsa" | "use_mvfn" => "true",
            "upsample_stage" => "output",
            "token_axis" => "spatial_window",
            "dataset" | "input" => "x",
            _ => "2",
        };
        cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
}

#[test]
fn exit_codes_follow_error_kind() {
    assert_eq!(exit_code(&Error::Config(vec![])), 2);
    assert_eq!(
        exit_code(&Error::Format {
            offset: 0,
            message: String::new()
        }),
        3
    );
    assert_eq!(exit_code(&Error::Dimension(String::new())), 3);
    assert_eq!(exit_code(&Error::Numerical(String::new())), 4);
}
