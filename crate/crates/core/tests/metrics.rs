use proptest::prelude::*;
use that_core::metrics::{ergas, evaluate, psnr, sam, scc, ssim, METRICS_CSV_HEADER};
use that_core::wald::HyperCube;
use that_core::Error;

fn cube(h: usize, w: usize, s: usize, f: impl Fn(usize, usize, usize) -> f32) -> HyperCube {
    let mut v = Vec::new();
    for b in 0..s {
        for y in 0..h {
            for x in 0..w {
                v.push(f(y, x, b));
            }
        }
    }
    HyperCube::new(h, w, s, v, None).unwrap()
}

fn textured(h: usize, w: usize, s: usize) -> HyperCube {
    cube(h, w, s, |y, x, b| {
        (((y * 7 + x * 13 + b * 5) % 17) as f32 / 16.0) * 0.8 + 0.1
    })
}

#[test]
fn psnr_examples() {
    let r = textured(12, 12, 3);
    assert_eq!(psnr(&r, &r).unwrap().0, 100.0);
    let zero = cube(4, 4, 1, |_, _, _| 0.0);
    let half = cube(4, 4, 1, |_, _, _| 0.5);
    assert!((psnr(&zero, &half).unwrap().0 - 6.0206).abs() < 1e-4);

    let p = cube(5, 5, 3, |y, x, b| ((y + x * b) % 4) as f32 / 4.0);
    let q = cube(5, 5, 3, |y, x, b| ((y * b + x) % 3) as f32 / 3.0);
    let perm = [2, 0, 1];
    let pp = cube(5, 5, 3, |y, x, b| p.get(y, x, perm[b]));
    let qp = cube(5, 5, 3, |y, x, b| q.get(y, x, perm[b]));
    let (m1, per1) = psnr(&p, &q).unwrap();
    let (m2, per2) = psnr(&pp, &qp).unwrap();
    assert!((m1 - m2).abs() < 1e-12);
    for b in 0..3 {
        assert_eq!(per2[b], per1[perm[b]]);
    }
}

#[test]
fn ssim_examples() {
    let r = textured(16, 16, 2);
    assert!((ssim(&r, &r).unwrap() - 1.0).abs() < 1e-12);
    let inv = cube(16, 16, 2, |y, x, b| 1.0 - r.get(y, x, b));
    assert!(ssim(&inv, &r).unwrap() < 1.0);
    let small = textured(10, 16, 1);
    assert!(matches!(ssim(&small, &small), Err(Error::Dimension(_))));
}

#[test]
fn sam_examples() {
    let r = textured(4, 4, 3);
    let scaled = cube(4, 4, 3, |y, x, b| 2.5 * r.get(y, x, b));
    assert!(sam(&scaled, &r).unwrap().abs() < 1e-5);
    let a = HyperCube::new(1, 1, 2, vec![1.0, 0.0], None).unwrap();
    let b = HyperCube::new(1, 1, 2, vec![0.0, 1.0], None).unwrap();
    let c = HyperCube::new(1, 1, 2, vec![1.0, 1.0], None).unwrap();
    assert!((sam(&a, &b).unwrap() - 90.0).abs() < 1e-9);
    assert!((sam(&a, &c).unwrap() - 45.0).abs() < 1e-3);
    let z = HyperCube::new(1, 1, 2, vec![0.0, 0.0], None).unwrap();
    assert_eq!(sam(&z, &a).unwrap(), 0.0);
}

#[test]
fn ergas_examples() {
    let r = textured(6, 6, 2);
    assert_eq!(ergas(&r, &r, 4).unwrap().0, 0.0);
    let half = cube(3, 3, 1, |_, _, _| 0.5);
    let p = cube(3, 3, 1, |_, _, _| 0.6);
    assert!((ergas(&p, &half, 2).unwrap().0 - 10.0).abs() < 1e-5);
    // Homogeneous under joint scaling.
    let q = cube(6, 6, 2, |y, x, b| r.get(y, x, b) * 0.9 + 0.01);
    let e1 = ergas(&q, &r, 2).unwrap().0;
    let q2 = cube(6, 6, 2, |y, x, b| 0.5 * q.get(y, x, b));
    let r2 = cube(6, 6, 2, |y, x, b| 0.5 * r.get(y, x, b));
    assert!((ergas(&q2, &r2, 2).unwrap().0 - e1).abs() < 1e-5 * e1);
    // Zero-mean band is skipped and reported; all-zero reference fails.
    let mixed = cube(3, 3, 2, |_, _, b| if b == 0 { 0.0 } else { 0.5 });
    let (_, excluded) = ergas(&mixed, &mixed, 2).unwrap();
    assert_eq!(excluded, vec![0]);
    let zero = cube(3, 3, 1, |_, _, _| 0.0);
    assert!(matches!(ergas(&zero, &zero, 2), Err(Error::DegenerateReference(_))));
}

#[test]
fn scc_examples() {
    let r = textured(8, 8, 2);
    assert!((scc(&r, &r).unwrap().0 - 1.0).abs() < 1e-12);
    let neg = cube(8, 8, 2, |y, x, b| -r.get(y, x, b));
    assert!((scc(&neg, &r).unwrap().0 + 1.0).abs() < 1e-12);
    let flat = cube(8, 8, 2, |_, _, _| 0.3);
    let (v, degenerate) = scc(&flat, &r).unwrap();
    assert_eq!((v, degenerate), (0.0, vec![0, 1]));
}

#[test]
fn monotone_in_mse_on_single_band() {
    let r = cube(12, 12, 1, |y, x, _| ((y * 5 + x * 3) % 7) as f32 / 7.0 + 0.05);
    let mut last = (f64::INFINITY, -1.0);
    for k in 1..6 {
        let p = cube(12, 12, 1, |y, x, _| r.get(y, x, 0) + 0.02 * k as f32);
        let (ps, _) = psnr(&p, &r).unwrap();
        let (e, _) = ergas(&p, &r, 2).unwrap();
        assert!(ps < last.0 && e > last.1);
        last = (ps, e);
    }
}

#[test]
fn shape_mismatch_is_rejected_by_every_metric() {
    let a = textured(12, 12, 2);
    let b = textured(12, 12, 3);
    assert!(matches!(psnr(&a, &b), Err(Error::Dimension(_))));
    assert!(matches!(ssim(&a, &b), Err(Error::Dimension(_))));
    assert!(matches!(sam(&a, &b), Err(Error::Dimension(_))));
    assert!(matches!(ergas(&a, &b, 2), Err(Error::Dimension(_))));
    assert!(matches!(scc(&a, &b), Err(Error::Dimension(_))));
}

#[test]
fn report_and_csv() {
    let r = textured(12, 12, 2);
    let rep = evaluate(&r, &r, 2).unwrap();
    assert_eq!((rep.psnr_db, rep.sam_deg, rep.ergas), (100.0, 0.0, 0.0));
    assert!((rep.ssim - 1.0).abs() < 1e-12 && (rep.scc - 1.0).abs() < 1e-12);
    assert_eq!(METRICS_CSV_HEADER, "dataset,scale,psnr,ssim,sam,ergas,scc");
    assert_eq!(
        rep.csv_row("toy", 2),
        "toy,2,100.000000,1.000000,0.000000,0.000000,1.000000"
    );
    let band = rep.band_csv(Some(&[450.0, 500.0]));
    assert_eq!(
        band,
        "band,wavelength_nm,psnr\n0,450.000,100.000000\n1,500.000,100.000000\n"
    );
}

fn pair_strategy() -> impl Strategy<Value = (HyperCube, HyperCube)> {
    (11usize..16, 11usize..16, 1usize..5).prop_flat_map(|(h, w, s)| {
        let n = h * w * s;
        (
            prop::collection::vec(0.05f32..1.0, n),
            prop::collection::vec(0.05f32..1.0, n),
        )
            .prop_map(move |(a, b)| {
                (
                    HyperCube::new(h, w, s, a, None).unwrap(),
                    HyperCube::new(h, w, s, b, None).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_stay_in_range((p, q) in pair_strategy()) {
        let r = evaluate(&p, &q, 4).unwrap();
        prop_assert!(r.psnr_db.is_finite() && r.psnr_db <= 100.0);
        prop_assert!(r.ssim <= 1.0 + 1e-12 && r.ssim >= -1.0 - 1e-12);
        prop_assert!((0.0..=180.0).contains(&r.sam_deg));
        prop_assert!(r.ergas >= 0.0);
        prop_assert!((-1.0..=1.0).contains(&r.scc));
    }

    #[test]
    fn symmetric_metrics_ignore_argument_order((p, q) in pair_strategy()) {
        prop_assert_eq!(psnr(&p, &q).unwrap().0, psnr(&q, &p).unwrap().0);
        prop_assert!((sam(&p, &q).unwrap() - sam(&q, &p).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&p, &q).unwrap() - ssim(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!((scc(&p, &q).unwrap().0 - scc(&q, &p).unwrap().0).abs() < 1e-12);
    }

    #[test]
    fn sam_ignores_per_pixel_brightness((p, q) in pair_strategy(), k in 0.25f32..4.0) {
        let scaled = HyperCube::new(p.height(), p.width(), p.bands(), p.values().data().iter().map(|v| v * k).collect(), None).unwrap();
        prop_assert!((sam(&scaled, &q).unwrap() - sam(&p, &q).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn identical_cubes_score_perfectly((p, _q) in pair_strategy()) {
        let r = evaluate(&p, &p, 2).unwrap();
        prop_assert_eq!((r.psnr_db, r.sam_deg, r.ergas), (100.0, 0.0, 0.0));
        prop_assert!((r.ssim - 1.0).abs() < 1e-12 && (r.scc - 1.0).abs() < 1e-12);
    }
}
