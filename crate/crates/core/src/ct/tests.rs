use super::*;
use crate::isd::{IsdConfig, IsdMonitor};
use crate::linalg::{dot, norm2, LinearOperator};
use crate::sensing::seeded_rng;
use rand::Rng;

fn small() -> (ImageGrid, FanBeamGeometry) {
    let grid = ImageGrid::zeros(32, 32, 4.0).unwrap();
    let geom = FanBeamGeometry {
        n_views: 90,
        angular_step: 4.0,
        n_bins: 80,
        detector_pixel: 4.0,
        ..FanBeamGeometry::default()
    };
    (grid, geom)
}

fn desk() -> (ImageGrid, FanBeamGeometry) {
    let grid = ImageGrid::zeros(128, 128, 2.0).unwrap();
    let geom = FanBeamGeometry {
        n_bins: 310,
        detector_pixel: 2.0,
        ..FanBeamGeometry::default()
    };
    (grid, geom)
}

/// Slab-method segment length inside an axis-aligned box.
fn box_chord(s: (f64, f64), p: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> f64 {
    let d = (p.0 - s.0, p.1 - s.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (o, dd, l, h) in [(s.0, d.0, lo.0, hi.0), (s.1, d.1, lo.1, hi.1)] {
        if dd.abs() < 1e-300 {
            if o < l || o > h {
                return 0.0;
            }
            continue;
        }
        let (a, b) = ((l - o) / dd, (h - o) / dd);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 <= t0 {
        0.0
    } else {
        (t1 - t0) * (d.0 * d.0 + d.1 * d.1).sqrt()
    }
}

#[test]
fn shepp_matches_membership_oracle() {
    let grid = ImageGrid::zeros(128, 128, 2.0).unwrap();
    let img = make_phantom(PhantomKind::Shepp, &grid);
    let table: [[f64; 6]; 10] = [
        [0.0, 0.0, 0.69, 0.92, 0.0, 2.0],
        [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98],
        [0.22, 0.0, 0.11, 0.31, -18.0, -0.02],
        [-0.22, 0.0, 0.16, 0.41, 18.0, -0.02],
        [0.0, 0.35, 0.21, 0.25, 0.0, 0.01],
        [0.0, 0.1, 0.046, 0.046, 0.0, 0.01],
        [0.0, -0.1, 0.046, 0.046, 0.0, 0.01],
        [-0.08, -0.605, 0.046, 0.023, 0.0, 0.01],
        [0.0, -0.606, 0.023, 0.023, 0.0, 0.01],
        [0.06, -0.605, 0.023, 0.046, 0.0, 0.01],
    ];
    for iy in 0..128 {
        for ix in 0..128 {
            // normalized coordinates of the pixel centre
            let x = (ix as f64 + 0.5) / 64.0 - 1.0;
            let y = 1.0 - (iy as f64 + 0.5) / 64.0;
            let mut want = 0.0;
            for e in &table {
                let th = e[4] * std::f64::consts::PI / 180.0;
                let (dx, dy) = (x - e[0], y - e[1]);
                let u = dx * th.cos() + dy * th.sin();
                let v = -dx * th.sin() + dy * th.cos();
                if (u / e[2]).powi(2) + (v / e[3]).powi(2) <= 1.0 {
                    want += 0.01 * e[5];
                }
            }
            assert!((img.values[iy * 128 + ix] - want).abs() < 1e-12, "pixel ({ix},{iy})");
        }
    }
}

#[test]
fn empty_phantom_is_zero() {
    let grid = ImageGrid::zeros(16, 16, 1.0).unwrap();
    assert!(make_phantom(PhantomKind::Empty, &grid).values.iter().all(|&v| v == 0.0));
    assert!(PhantomKind::parse("pumpkin").is_err());
}

#[test]
fn knee_is_mirror_symmetric_and_unions_its_discs() {
    let grid = ImageGrid::zeros(128, 128, 2.0).unwrap();
    let img = make_phantom(PhantomKind::Knee, &grid);
    for iy in 0..128 {
        for ix in 0..128 {
            assert_eq!(img.values[iy * 128 + ix], img.values[iy * 128 + 127 - ix]);
        }
    }
    // the centre lies in both discs but carries one soft-tissue density
    assert!((img.values[64 * 128 + 64] - 0.02).abs() < 1e-15);
    assert!(img.values.iter().all(|&v| v >= 0.0));
}

#[test]
fn single_pixel_rows_match_ray_box_chords() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let (ix, iy) = (13, 20);
    let k = iy * grid.nx + ix;
    let mut img = grid.clone();
    img.values[k] = 1.0;
    let sino = proj.forward_project(&img).unwrap();
    let (cx, cy) = grid.pixel_center(ix, iy);
    let h = 0.5 * grid.pixel_size;
    let mut hits = 0;
    for v in 0..geom.n_views {
        for b in 0..geom.n_bins {
            let (s, p) = geom.ray(v, b);
            let want = box_chord(s, p, (cx - h, cy - h), (cx + h, cy + h));
            let got = sino.values[v * geom.n_bins + b];
            assert!((got - want).abs() <= 1e-3 * want.max(1e-3), "view {v} bin {b}: {got} vs {want}");
            if want > 0.0 {
                hits += 1;
            }
        }
    }
    assert!(hits > geom.n_views);
}

#[test]
fn disc_central_ray_is_twice_the_radius() {
    let grid = ImageGrid::zeros(512, 512, 0.25).unwrap();
    let geom = FanBeamGeometry {
        n_views: 4,
        angular_step: 90.0,
        n_bins: 1,
        ..FanBeamGeometry::default()
    };
    let radius = 40.0;
    let mut img = grid.clone();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.pixel_center(ix, iy);
            if x * x + y * y <= radius * radius {
                img.values[iy * grid.nx + ix] = 0.02;
            }
        }
    }
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let sino = proj.forward_project(&img).unwrap();
    for &q in &sino.values {
        assert!((q - 2.0 * radius * 0.02).abs() < 0.01 * 2.0 * radius * 0.02, "{q}");
    }
}

#[test]
fn projector_is_linear_adjoint_and_nonnegative() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let mut rng = seeded_rng(11, 0);
    let (m, d) = (proj.rows(), proj.cols());
    for _ in 0..10 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ax = proj.apply_vec(&x);
        let aty = proj.adjoint_vec(&y);
        let lhs = dot(&ax, &y);
        let rhs = dot(&x, &aty);
        assert!((lhs - rhs).abs() <= 1e-10 * norm2(&ax) * norm2(&y));
        let combo: Vec<f64> = x.iter().zip(&w).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let aw = proj.apply_vec(&w);
        let ac = proj.apply_vec(&combo);
        for i in 0..m {
            assert!((ac[i] - (2.0 * ax[i] - 3.0 * aw[i])).abs() < 1e-10 * (1.0 + ac[i].abs()));
        }
    }
    let pos: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
    assert!(proj.apply_vec(&pos).iter().all(|&q| q >= 0.0));
    assert!(proj.apply_vec(&vec![0.0; d]).iter().all(|&q| q == 0.0));
    assert!(proj.adjoint_vec(&vec![0.0; m]).iter().all(|&v| v == 0.0));
}

#[test]
fn impulse_back_projection_smears_the_traced_pixels() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let r = 7 * geom.n_bins + geom.n_bins / 2;
    let mut sino = Sinogram::zeros(&geom);
    sino.values[r] = 1.0;
    let img = proj.back_project(&sino).unwrap();
    let (s, p) = geom.ray(7, geom.n_bins / 2);
    let h = 0.5 * grid.pixel_size;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (cx, cy) = grid.pixel_center(ix, iy);
            let chord = box_chord(s, p, (cx - h, cy - h), (cx + h, cy + h));
            let v = img.values[iy * grid.nx + ix];
            assert_eq!(v > 1e-9, chord > 1e-9, "pixel ({ix},{iy})");
            assert!((v - chord).abs() < 1e-5);
        }
    }
}

#[test]
fn source_inside_the_grid_is_rejected() {
    let grid = ImageGrid::zeros(64, 64, 30.0).unwrap();
    assert!(matches!(
        FanBeamProjector::new(&grid, &FanBeamGeometry::default()),
        Err(crate::Error::Geometry(_))
    ));
}

#[test]
fn overexposure_threshold_rule() {
    let sino = Sinogram::new(2, 4, vec![10.0, 6.0, 5.0, 0.0, 1.0, 2.0, 0.0, 3.0]).unwrap();
    let ox = apply_overexposure(&sino, 4.0).unwrap();
    assert_eq!(ox.s_beta, vec![6.0, 0.0]);
    assert_eq!(ox.obs.p, vec![10.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0]);
    assert_eq!(ox.obs.psi, vec![false, true, true, true, false, false, true, false]);
    assert!(ox.obs.y.iter().zip(&ox.obs.psi).all(|(y, &s)| y.is_some() == s));
    assert!(apply_overexposure(&sino, 0.0).is_err());

    let again = apply_overexposure(&Sinogram::new(2, 4, ox.obs.p.clone()).unwrap(), 4.0).unwrap();
    assert_eq!(again.obs, ox.obs);
    assert_eq!(again.s_beta, ox.s_beta);
}

#[test]
fn knee_saturation_band_matches_threshold_oracle() {
    let (grid, geom) = desk();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let truth = make_phantom(PhantomKind::Knee, &grid);
    let sino = proj.forward_project(&truth).unwrap();
    let kappa = 0.5 * sino.max();
    let ox = apply_overexposure(&sino, kappa).unwrap();
    let mask = true_saturation_mask(&sino, &ox.s_ray).unwrap();
    let mut band = 0;
    for v in 0..geom.n_views {
        let pmax = sino.view(v).iter().copied().fold(0.0, f64::max);
        let s = (pmax - kappa).max(0.0);
        for b in 0..geom.n_bins {
            let i = v * geom.n_bins + b;
            let q = sino.values[i];
            assert_eq!(mask[i], q > 0.0 && q <= s);
            assert_eq!(ox.obs.psi[i], q <= s);
            band += mask[i] as usize;
        }
    }
    assert!(band > 0);
}

#[test]
fn threshold_estimate_brackets_the_truth_and_keeps_positives_measured() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let sino = proj.forward_project(&make_phantom(PhantomKind::Knee, &grid)).unwrap();
    let ox = apply_overexposure(&sino, 0.5 * sino.max()).unwrap();
    let observed = Sinogram::new(sino.n_views, sino.n_bins, ox.obs.p.clone()).unwrap();
    let est = estimate_view_thresholds(&observed).unwrap();
    for v in 0..geom.n_views {
        let row = observed.view(v);
        let min_pos = row.iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
        assert!(est[v] >= ox.s_beta[v] - 1e-12 && est[v] < min_pos, "view {v}");
        for (b, &p) in row.iter().enumerate() {
            assert_eq!(p <= est[v], ox.obs.psi[v * geom.n_bins + b]);
        }
    }
    let flat = Sinogram::new(1, 3, vec![2.0, 2.0, 2.0]).unwrap();
    assert!(estimate_view_thresholds(&flat).unwrap()[0] < 2.0);
}

#[test]
fn rmse_hu_reference_values() {
    let grid = ImageGrid::zeros(4, 4, 1.0).unwrap();
    let a = make_phantom(PhantomKind::Shepp, &grid);
    assert_eq!(rmse_hu(&a, &a, DEFAULT_MU_WATER).unwrap(), 0.0);
    let b = a.with_values(a.values.iter().map(|v| v + DEFAULT_MU_WATER / 1000.0).collect()).unwrap();
    assert!((rmse_hu(&a, &b, DEFAULT_MU_WATER).unwrap() - 1.0).abs() < 1e-9);
    let c = ImageGrid::zeros(5, 4, 1.0).unwrap();
    assert!(rmse_hu(&a, &c, DEFAULT_MU_WATER).is_err());
}

#[test]
fn fbp_of_zero_is_zero_and_disc_mean_is_recovered() {
    let grid = ImageGrid::zeros(256, 256, 1.0).unwrap();
    let geom = FanBeamGeometry::default();
    let zero = fbp(&Sinogram::zeros(&geom), &geom, &grid, FbpFilter::RamLak).unwrap();
    assert!(zero.values.iter().all(|&v| v == 0.0));

    let disc = [Ellipse {
        cx: 0.0,
        cy: 0.0,
        a: 80.0,
        b: 80.0,
        phi: 0.0,
        density: 0.02,
        group: 0,
    }];
    let sino = phantom::ellipse_sinogram(&disc, &geom);
    let img = fbp(&sino, &geom, &grid, FbpFilter::RamLak).unwrap();
    let mut sum = 0.0;
    let mut count = 0;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.pixel_center(ix, iy);
            if x * x + y * y < 60.0 * 60.0 {
                sum += img.values[iy * grid.nx + ix];
                count += 1;
            }
        }
    }
    let mean = sum / count as f64;
    assert!((mean - 0.02).abs() < 0.02 * 0.02, "interior mean {mean}");
}

#[test]
fn fbp_on_saturated_knee_is_far_from_satisfactory() {
    let (grid, geom) = desk();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let truth = make_phantom(PhantomKind::Knee, &grid);
    let sino = proj.forward_project(&truth).unwrap();
    let clean = fbp(&sino, &geom, &grid, FbpFilter::RamLak).unwrap();
    let ox = apply_overexposure(&sino, 0.5 * sino.max()).unwrap();
    let sat = fbp(&Sinogram::new(geom.n_views, geom.n_bins, ox.obs.p).unwrap(), &geom, &grid, FbpFilter::RamLak).unwrap();
    let r_clean = rmse_hu(&truth, &clean, DEFAULT_MU_WATER).unwrap();
    let r_sat = rmse_hu(&truth, &sat, DEFAULT_MU_WATER).unwrap();
    assert!(r_sat > 5.0 * r_clean, "{r_sat} vs {r_clean}");
}

#[test]
fn sart_fits_consistent_data() {
    let (grid, geom) = desk();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let truth = make_phantom(PhantomKind::Shepp, &grid);
    let q = proj.apply_vec(&truth.values);
    let img = sart(&proj, &q, &vec![true; q.len()], SartParams::default(), None).unwrap();
    let r = proj.apply_vec(&img.values);
    let res: Vec<f64> = r.iter().zip(&q).map(|(a, b)| a - b).collect();
    assert!(norm2(&res) <= 1e-3 * norm2(&q), "{}", norm2(&res) / norm2(&q));
    assert!(img.values.iter().all(|&v| v >= 0.0));
}

#[test]
fn sart_without_usable_rays_returns_the_start() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let x0: Vec<f64> = (0..proj.cols()).map(|k| (k % 7) as f64 * 1e-3).collect();
    let q = vec![1.0; proj.rows()];
    let img = sart(&proj, &q, &vec![false; q.len()], SartParams::default(), Some(&x0)).unwrap();
    assert_eq!(img.values, x0);
    assert!(sart(&proj, &q, &vec![true; q.len()], SartParams { iters: 1, relax: 2.0 }, None).is_err());
}

#[test]
fn sart_with_the_true_mask_beats_fbp_on_saturated_data() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let truth = make_phantom(PhantomKind::Knee, &grid);
    let sino = proj.forward_project(&truth).unwrap();
    let ox = apply_overexposure(&sino, 0.5 * sino.max()).unwrap();
    let mask: Vec<bool> = true_saturation_mask(&sino, &ox.s_ray).unwrap().iter().map(|s| !s).collect();
    let s = sart(&proj, &ox.obs.p, &mask, SartParams::default(), None).unwrap();
    let satsino = Sinogram::new(geom.n_views, geom.n_bins, ox.obs.p.clone()).unwrap();
    let f = fbp(&satsino, &geom, &grid, FbpFilter::RamLak).unwrap();
    let (rs, rf) = (
        rmse_hu(&truth, &s, DEFAULT_MU_WATER).unwrap(),
        rmse_hu(&truth, &f, DEFAULT_MU_WATER).unwrap(),
    );
    assert!(rs < rf, "sart {rs} fbp {rf}");
}

#[test]
fn tv_model_on_zero_data_is_zero() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let obs = crate::sensing::SaturatedObservations::all_analog(vec![0.0; proj.rows()]);
    let sol = m1bitcsr_tv_reconstruct(&proj, &obs, &TvReconParams::default(), None).unwrap();
    assert!(sol.x_hat.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn tv_model_matches_sart_without_saturation() {
    let (grid, geom) = desk();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let truth = make_phantom(PhantomKind::Knee, &grid);
    let sino = add_projection_noise(&proj.forward_project(&truth).unwrap(), 0.05, 3).unwrap();
    let ox = apply_overexposure(&sino, 10.0 * sino.max()).unwrap();
    let mask = vec![true; sino.values.len()];
    let s = sart(&proj, &sino.values, &mask, SartParams::default(), None).unwrap();
    let obs = crate::sensing::SaturatedObservations::all_analog(sino.values.clone());
    let params = TvReconParams {
        tv_weight: 0.05,
        max_outer: 40,
        inner_iters: 20,
        ..TvReconParams::default()
    };
    let sol = m1bitcsr_tv_reconstruct(&proj, &obs, &params, None).unwrap();
    assert!(sol.x_hat.as_slice().iter().all(|&v| v >= 0.0));
    let tv = grid.with_values(sol.x_hat.into_vec()).unwrap();
    let (rt, rs) = (
        rmse_hu(&truth, &tv, DEFAULT_MU_WATER).unwrap(),
        rmse_hu(&truth, &s, DEFAULT_MU_WATER).unwrap(),
    );
    assert!(ox.obs.psi.iter().all(|&s| !s) || ox.s_beta.iter().all(|&s| s == 0.0));
    assert!(rt <= rs, "tv {rt} sart {rs}");
}

#[test]
fn isd_with_an_oracle_reconstructor_finds_the_true_mask_in_one_round() {
    let (grid, geom) = small();
    let proj = FanBeamProjector::new(&grid, &geom).unwrap();
    let truth = make_phantom(PhantomKind::Knee, &grid);
    let sino = proj.forward_project(&truth).unwrap();
    let ox = apply_overexposure(&sino, 0.5 * sino.max()).unwrap();
    let psi_true = true_saturation_mask(&sino, &ox.s_ray).unwrap();
    let cfg = IsdConfig::new(ox.s_ray.clone());
    let mut oracle = |_: &crate::sensing::SaturatedObservations, _: Option<&[f64]>| Ok(truth.values.clone());
    // rays that barely clip the object are indistinguishable from zeros
    let faint = sino
        .values
        .iter()
        .zip(&ox.s_ray)
        .filter(|(&q, &s)| q > 0.0 && q <= s / 10.0)
        .count();
    let out = crate::isd::run_isd(
        &proj,
        &ox.obs.p,
        &cfg,
        &mut oracle,
        IsdMonitor {
            psi_true: Some(&psi_true),
            metric: None,
        },
    )
    .unwrap();
    assert_eq!(crate::isd::compare_indicators(&psi_true, &out.psi).unwrap(), (0, faint));
    assert_eq!(out.history.rounds.len(), 2);
    assert_eq!(out.history.rounds[1].flips, 0);
    assert!(out.history.converged);
}
