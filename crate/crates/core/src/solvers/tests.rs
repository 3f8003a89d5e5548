use super::*;
use crate::sensing::{seeded_rng, ObservationMode, Side};
use rand::Rng;
use rand_distr::StandardNormal;

fn obs_from(p: Vec<f64>, y: Vec<Option<Side>>, s: Vec<f64>) -> SaturatedObservations {
    let psi = y.iter().map(|v| v.is_some()).collect();
    SaturatedObservations {
        p,
        psi,
        y,
        s,
        s_minus: f64::NEG_INFINITY,
        s_plus: f64::INFINITY,
        mode: ObservationMode::Clamped,
    }
}

fn tight() -> SolverParams {
    SolverParams {
        tol_primal: 1e-9,
        tol_dual: 1e-9,
        max_outer: 20000,
        fista_iters: 200,
        fista_tol: 1e-14,
        ..SolverParams::default()
    }
}

fn gaussian_matrix(m: usize, d: usize, seed: u64) -> SensingMatrix {
    let mut rng = seeded_rng(seed, 9);
    let data = (0..m * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    SensingMatrix::from_rows(m, d, data).unwrap()
}

/// Minimizer of `mu ||x||_1 + x'Hx/2 - b'x` by enumerating sign patterns
/// and checking the KKT conditions of each candidate.
fn l1_quadratic_oracle(h: &[Vec<f64>], b: &[f64], mu: f64) -> Vec<f64> {
    let d = b.len();
    let obj = |x: &[f64]| {
        let mut v = 0.0;
        for i in 0..d {
            v += mu * x[i].abs() - b[i] * x[i];
            for j in 0..d {
                v += 0.5 * x[i] * h[i][j] * x[j];
            }
        }
        v
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let patterns = 3usize.pow(d as u32);
    for code in 0..patterns {
        let mut sigma = vec![0i32; d];
        let mut c = code;
        for s in sigma.iter_mut() {
            *s = (c % 3) as i32 - 1;
            c /= 3;
        }
        let free: Vec<usize> = (0..d).filter(|&i| sigma[i] != 0).collect();
        let k = free.len();
        // Solve H_FF x_F = b_F - mu sigma_F by Gaussian elimination.
        let mut a = vec![vec![0.0; k + 1]; k];
        for (r, &i) in free.iter().enumerate() {
            for (cidx, &j) in free.iter().enumerate() {
                a[r][cidx] = h[i][j];
            }
            a[r][k] = b[i] - mu * sigma[i] as f64;
        }
        let mut ok = true;
        for col in 0..k {
            let piv = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            if a[piv][col].abs() < 1e-14 {
                ok = false;
                break;
            }
            a.swap(col, piv);
            for r in 0..k {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for cc in col..=k {
                        a[r][cc] -= f * a[col][cc];
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let mut x = vec![0.0; d];
        for (r, &i) in free.iter().enumerate() {
            x[i] = a[r][k] / a[r][r];
            if x[i] * sigma[i] as f64 <= 0.0 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        for i in 0..d {
            if sigma[i] == 0 {
                let g: f64 = b[i] - (0..d).map(|j| h[i][j] * x[j]).sum::<f64>();
                if g.abs() > mu + 1e-12 {
                    ok = false;
                }
            }
        }
        if ok {
            let v = obj(&x);
            if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                best = Some((v, x));
            }
        }
    }
    best.expect("some sign pattern satisfies KKT").1
}

#[test]
fn scalar_least_squares_recovers_the_reading() {
    let u = SensingMatrix::identity(1);
    let obs = SaturatedObservations::all_analog(vec![1.0]);
    let params = SolverParams {
        mu: 0.0,
        c: 10.0,
        ..tight()
    };
    let sol = solve_m1bitcsc(&u, &obs, &params).unwrap();
    assert!(sol.converged);
    assert!((sol.x_hat.as_slice()[0] - 1.0).abs() < 1e-6, "{:?}", sol.x_hat);
}

fn scalar_hinge_instance() -> (SensingMatrix, SaturatedObservations) {
    let u = SensingMatrix::from_rows(2, 1, vec![1.0, 1.0]).unwrap();
    let obs = obs_from(vec![1.0, 2.0], vec![None, Some(Side::Upper)], vec![0.0, 2.0]);
    (u, obs)
}

#[test]
fn scalar_hinge_pulls_estimate_to_the_threshold() {
    let (u, obs) = scalar_hinge_instance();
    let params = SolverParams {
        mu: 0.0,
        lambda: 10.0,
        tau: 0.0,
        c: 10.0,
        ..tight()
    };
    // grid oracle over [-10, 10]
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=200_000 {
        let x = -10.0 + k as f64 * 1e-4;
        let f = model_objective(Model::Csc, &u, &obs, &params, &[x]);
        if f < best.0 {
            best = (f, x);
        }
    }
    assert!((best.1 - 2.0).abs() < 1e-3);
    let sol = solve_m1bitcsc(&u, &obs, &params).unwrap();
    assert!((sol.x_hat.as_slice()[0] - best.1).abs() < 1e-3, "{:?}", sol.x_hat);
    assert!((sol.x_hat.as_slice()[0] - 2.0).abs() < 1e-6);

    let csr = solve_m1bitcsr(&u, &obs, &SolverParams { gamma: 1e-4, ..params }).unwrap();
    assert!((csr.x_hat.as_slice()[0] - sol.x_hat.as_slice()[0]).abs() < 1e-2);
}

#[test]
fn x_subproblem_identity_system_is_least_squares() {
    let u = SensingMatrix::identity(3);
    let obs = SaturatedObservations::all_analog(vec![1.0, -2.0, 0.5]);
    let params = SolverParams {
        mu: 0.0,
        theta2: 1e-12,
        fista_iters: 500,
        ..SolverParams::default()
    };
    let z = vec![0.0; 3];
    let x = fista_x_subproblem(&u, &obs, &[0.0; 3], &z, &[0.0; 3], &z, &z, &params).unwrap();
    for (a, b) in x.iter().zip(&obs.p) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn x_subproblem_large_mu_gives_zero() {
    let u = gaussian_matrix(4, 3, 1);
    let obs = SaturatedObservations::all_analog(vec![1.0, -2.0, 0.5, 0.3]);
    let params = SolverParams {
        mu: 1e6,
        ..SolverParams::default()
    };
    let z = vec![0.1; 3];
    let x = fista_x_subproblem(&u, &obs, &[0.0; 4], &z, &[0.0; 4], &[0.0; 3], &z, &params).unwrap();
    assert!(x.iter().all(|&v| v == 0.0), "{x:?}");
}

#[test]
fn x_subproblem_zero_operator_soft_thresholds_the_center() {
    let u = SensingMatrix::from_rows(2, 2, vec![0.0; 4]).unwrap();
    let obs = SaturatedObservations::all_analog(vec![0.0, 0.0]);
    let params = SolverParams {
        mu: 0.5,
        theta2: 2.0,
        ..SolverParams::default()
    };
    let z = vec![1.0, -0.1];
    let beta = vec![0.0, 0.0];
    let x = fista_x_subproblem(&u, &obs, &[0.0; 2], &z, &[0.0; 2], &beta, &[0.0; 2], &params).unwrap();
    assert_eq!(x, vec![0.75, 0.0]);
}

#[test]
fn x_subproblem_matches_sign_pattern_oracle() {
    for seed in 0..10u64 {
        let u = gaussian_matrix(4, 2, seed);
        let y = vec![None, None, Some(Side::Upper), Some(Side::Lower)];
        let obs = obs_from(vec![0.3, -0.7, 1.0, -1.0], y, vec![0.0, 0.0, 1.0, -1.0]);
        let mut rng = seeded_rng(seed, 11);
        let mut r = || rng.sample::<f64, _>(StandardNormal);
        let e = vec![0.0, 0.0, r(), r()];
        let alpha = vec![0.0, 0.0, r(), r()];
        let z = vec![r(), r()];
        let beta = vec![r(), r()];
        let params = SolverParams {
            mu: 0.3,
            theta1: 1.5,
            theta2: 0.7,
            fista_iters: 20000,
            fista_tol: 0.0,
            ..SolverParams::default()
        };
        let x = fista_x_subproblem(&u, &obs, &e, &z, &alpha, &beta, &[0.0; 2], &params).unwrap();
        // Oracle: expand the smooth part into x'Hx/2 - b'x.
        let sub = XSubproblem::from_iterates(&obs, &e, &z, &alpha, &beta, params.theta1, params.theta2);
        let mut h = vec![vec![0.0; 2]; 2];
        let mut b = vec![0.0; 2];
        for i in 0..4 {
            let row = u.row(i);
            for a in 0..2 {
                b[a] += sub.weights[i] * sub.targets[i] * row[a];
                for c in 0..2 {
                    h[a][c] += sub.weights[i] * row[a] * row[c];
                }
            }
        }
        for a in 0..2 {
            h[a][a] += params.theta2;
            b[a] += params.theta2 * sub.center[a];
        }
        let want = l1_quadratic_oracle(&h, &b, params.mu);
        for k in 0..2 {
            assert!((x[k] - want[k]).abs() < 1e-6, "seed {seed}: {x:?} vs {want:?}");
        }
    }
}

#[test]
fn smooth_gradient_matches_central_differences() {
    let u = gaussian_matrix(6, 4, 3);
    let y = vec![None, Some(Side::Upper), None, Some(Side::Lower), None, None];
    let obs = obs_from(vec![0.1, 1.0, -0.4, -1.0, 0.8, 0.0], y, vec![0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
    let mut rng = seeded_rng(5, 0);
    let mut r = || rng.sample::<f64, _>(StandardNormal);
    let e: Vec<f64> = (0..6).map(|_| r()).collect();
    let alpha: Vec<f64> = (0..6).map(|_| r()).collect();
    let z: Vec<f64> = (0..4).map(|_| r()).collect();
    let beta: Vec<f64> = (0..4).map(|_| r()).collect();
    let sub = XSubproblem::from_iterates(&obs, &e, &z, &alpha, &beta, 1.3, 0.8);
    for _ in 0..20 {
        let x: Vec<f64> = (0..4).map(|_| r()).collect();
        let g = sub.smooth_gradient(&u, &x);
        for k in 0..4 {
            let h = 1e-5;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (sub.smooth_value(&u, &xp) - sub.smooth_value(&u, &xm)) / (2.0 * h);
            let scale = g[k].abs().max(1.0);
            assert!((fd - g[k]).abs() <= 1e-5 * scale, "{fd} vs {}", g[k]);
        }
    }
}

#[test]
fn lasso_matches_enumeration_oracle() {
    for seed in 0..5u64 {
        let u = gaussian_matrix(5, 3, 100 + seed);
        let mut rng = seeded_rng(seed, 12);
        let p: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mu = 0.4;
        let sol = solve_lasso(&u, &p, mu, &tight()).unwrap();
        let mut h = vec![vec![0.0; 3]; 3];
        let mut b = vec![0.0; 3];
        for i in 0..5 {
            let row = u.row(i);
            for a in 0..3 {
                b[a] += row[a] * p[i];
                for c in 0..3 {
                    h[a][c] += row[a] * row[c];
                }
            }
        }
        let want = l1_quadratic_oracle(&h, &b, mu);
        for k in 0..3 {
            assert!((sol.x_hat.as_slice()[k] - want[k]).abs() < 1e-6, "{:?} vs {want:?}", sol.x_hat);
        }
    }
}

#[test]
fn lasso_limits() {
    let u = gaussian_matrix(3, 3, 7);
    let x_true = [0.5, -1.0, 2.0];
    let p = u.apply_vec(&x_true);
    let sol = solve_lasso(&u, &p, 0.0, &tight()).unwrap();
    for k in 0..3 {
        assert!((sol.x_hat.as_slice()[k] - x_true[k]).abs() < 1e-6);
    }
    let up = u.adjoint_vec(&p);
    let mu = up.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sol = solve_lasso(&u, &p, mu, &tight()).unwrap();
    assert!(sol.x_hat.as_slice().iter().all(|v| v.abs() < 1e-8), "{:?}", sol.x_hat);
}

#[test]
fn csc_matches_grid_over_the_ball() {
    let u = gaussian_matrix(5, 2, 21);
    let y = vec![None, None, Some(Side::Upper), None, Some(Side::Lower)];
    let obs = obs_from(vec![0.2, -0.5, 0.8, 0.1, -0.8], y, vec![0.0, 0.0, 0.8, 0.0, -0.8]);
    let params = SolverParams {
        mu: 0.1,
        lambda: 2.0,
        tau: -0.5,
        c: 1.0,
        ..tight()
    };
    let f = |x: f64, y: f64| model_objective(Model::Csc, &u, &obs, &params, &[x, y]);
    // Zooming grid search over the ball.
    let (mut cx, mut cy, mut half) = (0.0, 0.0, 1.0);
    let mut best = f64::INFINITY;
    for _ in 0..12 {
        let n = 200;
        let h = 2.0 * half / n as f64;
        let (mut bx, mut by) = (cx, cy);
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (cx - half + i as f64 * h, cy - half + j as f64 * h);
                let v = f(x, y);
                if v < best {
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        }
        cx = bx;
        cy = by;
        half = (10.0 * h).max(1e-9);
    }
    let sol = solve_m1bitcsc(&u, &obs, &params).unwrap();
    assert!(sol.x_hat.norm() <= params.c + 1e-6);
    assert!((sol.objective - best).abs() < 1e-4, "{} vs {best}", sol.objective);
}

#[test]
fn rdcs_scalar_boundary_minimum() {
    let (u, obs) = scalar_hinge_instance();
    let sol = solve_rdcs(&u, &obs, 0.0, &tight()).unwrap();
    assert!(sol.converged);
    assert!((sol.x_hat.as_slice()[0] - 2.0).abs() < 1e-4, "{:?}", sol.x_hat);
    assert!(consistency_violation(&u, &obs, sol.x_hat.as_slice()) <= 1e-4);
}

#[test]
fn rdcs_matches_projected_gradient() {
    let u = gaussian_matrix(4, 2, 31);
    let x_true = [0.6, -0.3];
    let q = u.apply_vec(&x_true);
    // Upper-saturate the largest reading.
    let imax = (0..4).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
    let s = q[imax] - 0.2;
    let mut p = q.clone();
    p[imax] = s;
    let mut y = vec![None; 4];
    y[imax] = Some(Side::Upper);
    let mut sv = vec![0.0; 4];
    sv[imax] = s;
    // Shift the analog readings so the constraint is active.
    for i in 0..4 {
        if i != imax {
            p[i] -= 0.5 * q[i].signum();
        }
    }
    let obs = obs_from(p.clone(), y, sv);
    let sol = solve_rdcs(&u, &obs, 0.0, &tight()).unwrap();
    // Projected gradient on the half-space u_imax'x >= s.
    let a = u.row(imax).to_vec();
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let mut x = vec![0.0, 0.0];
    let lip = 2.0 * u.data().iter().map(|v| v * v).sum::<f64>();
    for _ in 0..200_000 {
        let ux = u.apply_vec(&x);
        let mut r = vec![0.0; 4];
        for i in 0..4 {
            if i != imax {
                r[i] = ux[i] - p[i];
            }
        }
        let g = u.adjoint_vec(&r);
        for k in 0..2 {
            x[k] -= g[k] / lip;
        }
        let viol = s - (a[0] * x[0] + a[1] * x[1]);
        if viol > 0.0 {
            for k in 0..2 {
                x[k] += viol * a[k] / aa;
            }
        }
    }
    let params = SolverParams { mu: 0.0, ..tight() };
    let want = model_objective(Model::Rdcs, &u, &obs, &params, &x);
    assert!((sol.objective - want).abs() <= 1e-4, "{} vs {want}", sol.objective);
    assert!(consistency_violation(&u, &obs, sol.x_hat.as_slice()) <= 1e-4);
}

#[test]
fn models_agree_without_saturation() {
    let u = gaussian_matrix(30, 20, 41);
    let mut rng = seeded_rng(41, 0);
    let mut x = vec![0.0; 20];
    for k in [1, 5, 12] {
        x[k] = rng.sample::<f64, _>(StandardNormal);
    }
    let obs = SaturatedObservations::all_analog(u.apply_vec(&x));
    let params = SolverParams {
        mu: 0.05,
        gamma: 0.0,
        c: 100.0,
        ..tight()
    };
    let sols: Vec<Vec<f64>> = [Model::Csc, Model::Csr, Model::Lasso, Model::Rdcs]
        .iter()
        .map(|&m| solve_model(m, &u, &obs, &params).unwrap().x_hat.into_vec())
        .collect();
    for s in &sols[1..] {
        for k in 0..20 {
            assert!((s[k] - sols[0][k]).abs() < 1e-4);
        }
    }
}

#[test]
fn admm_residuals_converge_with_default_penalties() {
    let u = gaussian_matrix(60, 100, 51);
    let mut rng = seeded_rng(51, 0);
    let q: Vec<f64> = u.apply_vec(&(0..100).map(|k| if k % 10 == 0 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 }).collect::<Vec<_>>());
    let (sm, sp) = crate::sensing::choose_saturation_levels(&q, 12).unwrap();
    let obs = crate::sensing::saturate_measurements(&q, sm, sp).unwrap();
    let params = SolverParams::default().with_defaults_for(60, 12);
    let sol = solve_m1bitcsc(&u, &obs, &SolverParams { c: 10.0, ..params }).unwrap();
    assert!(sol.converged, "{:?} after {}", sol.residuals, sol.iters);
    assert!(sol.residuals.primal_e < 1e-6 * 12f64.sqrt());
    assert!(sol.residuals.primal_z < 1e-6 * 10.0);
}

#[test]
fn trace_rows_are_emitted() {
    let (u, obs) = scalar_hinge_instance();
    let mut rows = Vec::new();
    let params = SolverParams {
        mu: 0.0,
        lambda: 10.0,
        c: 10.0,
        max_outer: 50,
        ..SolverParams::default()
    };
    Admm::new(&u, &obs, params, NormTerm::Ball(10.0))
        .unwrap()
        .trace(10, |r| rows.push(*r))
        .solve()
        .unwrap();
    assert!(!rows.is_empty());
    assert!(rows.windows(2).all(|w| w[0].iter < w[1].iter));
    assert!(rows[0].to_csv().split(',').count() == 6);
}

#[test]
fn invalid_params_are_rejected() {
    let (u, obs) = scalar_hinge_instance();
    let bad = SolverParams { tau: 0.5, ..SolverParams::default() };
    assert!(matches!(solve_m1bitcsr(&u, &obs, &bad), Err(Error::InvalidSpec(_))));
    let bad = SolverParams { theta1: 0.0, ..SolverParams::default() };
    assert!(matches!(solve_m1bitcsc(&u, &obs, &bad), Err(Error::InvalidSpec(_))));
}

#[test]
fn default_hyperparams_follow_the_heuristic() {
    let h = default_hyperparams(500, 100);
    assert!((h.tau + 0.04).abs() < 1e-15 && (h.lambda - 0.05).abs() < 1e-15 && h.gamma == 1e-4);
    let h = default_hyperparams(500, 500);
    assert!((h.tau + 0.2).abs() < 1e-15 && (h.lambda - 0.01).abs() < 1e-15);
    let h = default_hyperparams(500, 0);
    assert_eq!((h.tau, h.lambda), (0.0, 0.0));
}
