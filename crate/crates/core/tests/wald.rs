use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use that_core::wald::{
    load_cube, make_pairs, make_synthetic_scene, normalize_crop, read_cube, save_cube, synth_pan, wald_degrade,
    write_cube, write_pgm, HyperCube, WaldConfig,
};
use that_core::Error;

fn cube_from_fn(h: usize, w: usize, s: usize, f: impl Fn(usize, usize, usize) -> f32) -> HyperCube {
    let mut v = Vec::with_capacity(h * w * s);
    for b in 0..s {
        for y in 0..h {
            for x in 0..w {
                v.push(f(y, x, b));
            }
        }
    }
    HyperCube::new(h, w, s, v, None).unwrap()
}

#[test]
fn normalize_crop_examples() {
    let c = cube_from_fn(6, 6, 2, |y, x, b| ((y * 6 + x + b) % 11) as f32 / 10.0);
    let n = normalize_crop(&c, 4).unwrap();
    assert_eq!((n.height(), n.width(), n.bands()), (4, 4, 2));
    for y in 0..4 {
        for x in 0..4 {
            assert_eq!(n.get(y, x, 1), c.get(y + 1, x + 1, 1));
        }
    }
    let flat = cube_from_fn(5, 5, 3, |_, _, _| 0.7);
    assert!(normalize_crop(&flat, 5)
        .unwrap()
        .values()
        .data()
        .iter()
        .all(|&v| v == 0.0));

    let big = cube_from_fn(300, 300, 1, |y, x, _| (y * 300 + x) as f32);
    let n = normalize_crop(&big, 256).unwrap();
    let span = (300 * 300 - 1) as f64;
    assert!(((n.get(0, 0, 0) as f64) - (22.0 * 300.0 + 22.0) / span).abs() < 1e-6);
    assert!(matches!(normalize_crop(&big, 301), Err(Error::Dimension(_))));
}

#[test]
fn synth_pan_examples() {
    let same = cube_from_fn(4, 4, 3, |y, x, _| (y + x) as f32 / 8.0);
    let p = synth_pan(&same, (430.0, 700.0)).unwrap();
    assert_eq!(p.values().data(), same.band(0));

    let two = HyperCube::new(1, 2, 2, vec![0.0, 0.0, 1.0, 1.0], Some(vec![500.0, 800.0])).unwrap();
    assert_eq!(synth_pan(&two, (430.0, 700.0)).unwrap().values().data(), &[0.0, 0.0]);
    assert!(matches!(
        synth_pan(&two, (900.0, 1000.0)),
        Err(Error::EmptySelection(_))
    ));

    let four = cube_from_fn(2, 2, 4, |_, _, b| b as f32);
    assert!(synth_pan(&four, (430.0, 700.0))
        .unwrap()
        .values()
        .data()
        .iter()
        .all(|&v| v == 0.5));
}

#[test]
fn degrade_shapes_and_constants() {
    let hr = cube_from_fn(256, 256, 2, |_, _, b| 0.25 + 0.5 * b as f32);
    let (y, x) = wald_degrade(&hr, &WaldConfig::for_scale(4)).unwrap();
    assert_eq!((y.height(), y.width(), y.bands()), (64, 64, 2));
    assert_eq!((x.height(), x.width()), (256, 256));
    for b in 0..2 {
        let want = 0.25 + 0.5 * b as f32;
        assert!(y.band(b).iter().all(|&v| (v - want).abs() < 1e-6));
    }
    assert!(x.values().data().iter().all(|&v| (v - 0.25).abs() < 1e-6));
    assert_eq!(WaldConfig::for_scale(8).blur_kernel, 4);
    assert_eq!(WaldConfig::for_scale(2).blur_kernel, 20);
}

#[test]
fn impulse_response_is_decimated_kernel() {
    let (n, k, sigma, r) = (64usize, 20usize, 2.0, 2usize);
    let hr = cube_from_fn(n, n, 1, |y, x, _| if (y, x) == (32, 32) { 1.0 } else { 0.0 });
    let cfg = WaldConfig {
        blur_kernel: k,
        blur_sigma: sigma,
        ..WaldConfig::for_scale(r)
    };
    let (y, _) = wald_degrade(&hr, &cfg).unwrap();
    // Independent kernel: unnormalized 2-D Gaussian centred at (k-1)/2.
    let c = (k as f64 - 1.0) / 2.0;
    let raw = |i: usize, j: usize| (-((i as f64 - c).powi(2) + (j as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp();
    let total: f64 = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| raw(i, j))
        .sum();
    let before = (k - 1) / 2;
    for a in 0..n / r {
        for b in 0..n / r {
            let i = (32 + before) as isize - (r * a) as isize;
            let jj = (32 + before) as isize - (r * b) as isize;
            let want = if (0..k as isize).contains(&i) && (0..k as isize).contains(&jj) {
                raw(i as usize, jj as usize) / total
            } else {
                0.0
            };
            assert!((y.get(a, b, 0) as f64 - want).abs() < 1e-7, "({a},{b})");
        }
    }
}

fn random_cube(rng: &mut ChaCha8Rng, h: usize, w: usize, s: usize, wl: bool) -> HyperCube {
    let v = (0..h * w * s).map(|_| rng.random::<f32>()).collect();
    let wls = wl.then(|| (0..s).map(|i| 400.0 + 3.5 * i as f64).collect());
    HyperCube::new(h, w, s, v, wls).unwrap()
}

#[test]
fn hsc1_errors_name_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_cube(&mut rng, 3, 5, 2, true);
    let mut buf = Vec::new();
    write_cube(&c, &mut buf).unwrap();
    assert_eq!(buf.len(), 17 + 16 + 4 * 30);
    assert_eq!(&buf[..4], b"HSC1");
    // Pixel-major payload: the second float is band 1 of pixel (0,0).
    assert_eq!(
        f32::from_le_bytes(buf[33 + 4..33 + 8].try_into().unwrap()),
        c.get(0, 0, 1)
    );

    let mut bad = buf.clone();
    bad[1] = b'X';
    assert!(matches!(read_cube(&bad), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(read_cube(&buf[..buf.len() - 1]), Err(Error::Format { .. })));
    let mut huge = buf[..17].to_vec();
    huge[4..16].copy_from_slice(&[0xff; 12]);
    assert!(matches!(read_cube(&huge), Err(Error::Format { .. })));
    let mut flag = buf.clone();
    flag[16] = 7;
    assert!(matches!(read_cube(&flag), Err(Error::Format { offset: 16, .. })));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.hsc");
    save_cube(&c, &path).unwrap();
    assert_eq!(load_cube(&path).unwrap(), c);
    let missing = dir.path().join("nope.hsc");
    let err = load_cube(&missing).unwrap_err().to_string();
    assert!(err.contains("nope.hsc"), "{err}");
}

#[test]
fn synthetic_scene_is_deterministic_and_bounded() {
    let a = make_synthetic_scene(0, 24, 20, 6).unwrap();
    let b = make_synthetic_scene(0, 24, 20, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, make_synthetic_scene(1, 24, 20, 6).unwrap());
    assert!(a.values().data().iter().all(|v| (0.0..=1.0).contains(v)));
    let wl = a.wavelengths_nm().unwrap();
    assert_eq!((wl[0], wl[5]), (430.0, 860.0));
    assert!(make_synthetic_scene(0, 7, 20, 6).is_err());
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

#[test]
fn synthetic_spectra_are_low_rank_mixtures() {
    let s = 16;
    let c = make_synthetic_scene(0, 32, 32, s).unwrap();
    let bands: Vec<Vec<f64>> = (0..s).map(|b| c.band(b).iter().map(|&v| v as f64).collect()).collect();
    let gram: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| bands[i].iter().zip(&bands[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let sv: Vec<f64> = symmetric_eigenvalues(gram)
        .into_iter()
        .map(|e| e.max(0.0).sqrt())
        .collect();
    let k = that_core::wald::SCENE_MATERIALS;
    assert!(sv[k] / sv[0] < 0.01, "singular values {sv:?}");
    assert!(sv[1] / sv[0] > 0.01, "scene should not be rank one: {sv:?}");
}

#[test]
fn pairs_are_aligned_tiles() {
    let hr = make_synthetic_scene(3, 32, 48, 3).unwrap();
    let pairs = make_pairs(&hr, 16, &WaldConfig::for_scale(2)).unwrap();
    assert_eq!(pairs.len(), 6);
    let (y, x) = wald_degrade(&hr, &WaldConfig::for_scale(2)).unwrap();
    let p = &pairs[4];
    assert_eq!((p.lr.height(), p.pan.height(), p.gt.height()), (8, 16, 16));
    assert_eq!(p.gt.get(3, 5, 2), hr.get(16 + 3, 16 + 5, 2));
    assert_eq!(p.lr.get(2, 1, 1), y.get(8 + 2, 8 + 1, 1));
    assert_eq!(p.pan.values().get(&[7, 9]), x.values().get(&[16 + 7, 16 + 9]));
}

#[test]
fn pgm_uses_round_half_even() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.pgm");
    // 0.5·255 = 127.5 is the only exact tie in range and goes to the even 128;
    // 0.25·255 = 63.75 rounds to 64; out-of-range values clamp.
    write_pgm(&path, 1, 4, &[0.5, 0.25, -1.0, 2.0]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "P2\n4 1\n255\n128 64 0 255\n");
}

fn cube_strategy() -> impl Strategy<Value = HyperCube> {
    (1usize..12, 1usize..12, 1usize..6, any::<bool>()).prop_flat_map(|(h, w, s, wl)| {
        (
            prop::collection::vec(any::<u32>().prop_map(f32::from_bits), h * w * s),
            prop::collection::vec(0.1f64..40.0, s),
        )
            .prop_map(move |(v, steps)| {
                let wls = wl.then(|| {
                    steps
                        .iter()
                        .scan(380.0, |nm, d| {
                            *nm += d;
                            Some(*nm)
                        })
                        .collect()
                });
                HyperCube::new(h, w, s, v, wls).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hsc1_round_trip_is_bit_exact(cube in cube_strategy()) {
        let mut buf = Vec::new();
        write_cube(&cube, &mut buf).unwrap();
        let back = read_cube(&buf).unwrap();
        let bits = |c: &HyperCube| c.values().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(back.values().shape(), cube.values().shape());
        prop_assert_eq!(bits(&back), bits(&cube));
        prop_assert_eq!(back.wavelengths_nm(), cube.wavelengths_nm());
    }

    #[test]
    fn degraded_shapes_divide_by_scale(r in prop::sample::select(vec![2usize, 4, 8]), m in 1usize..5, s in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8 * m;
        let hr = random_cube(&mut rng, n, n, s, false);
        let (y, x) = wald_degrade(&hr, &WaldConfig::for_scale(r)).unwrap();
        prop_assert_eq!((y.height(), y.width(), y.bands()), (n / r, n / r, s));
        prop_assert_eq!((x.height(), x.width()), (n, n));
    }

    #[test]
    fn constant_cubes_stay_constant(level in 0.0f32..1.0, r in prop::sample::select(vec![2usize, 4, 8])) {
        let hr = cube_from_fn(16, 16, 3, |_, _, _| level);
        let (y, x) = wald_degrade(&hr, &WaldConfig::for_scale(r)).unwrap();
        prop_assert!(y.values().data().iter().all(|&v| (v - level).abs() < 1e-6));
        prop_assert!(x.values().data().iter().all(|&v| (v - level).abs() < 1e-6));
    }
}
