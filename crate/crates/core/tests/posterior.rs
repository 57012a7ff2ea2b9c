mod common;

use std::sync::Arc;

use common::*;
use rand::Rng;
use spect_bayes::bayes::{
    from_unconstrained, log_jacobian, to_unconstrained, LogDensity, PosteriorModel, PriorParams,
};
use spect_bayes::projector::{angles_from_step, DetectorGeometry, Projector};
use spect_bayes::Dims;

fn model(n: usize, seed: u64, params: PriorParams) -> (PosteriorModel, Vec<f64>, Vec<f64>) {
    let dims = Dims::cube(n);
    let geom = DetectorGeometry::for_grid(dims, 1.0, angles_from_step(30.0, 180.0).unwrap()).unwrap();
    let dense = dense_oracle(&geom, dims, 1.0);
    let p = Arc::new(Projector::new(geom, dims, 1.0).unwrap());
    let mut r = rng(seed);
    let truth = uniform_vec(&mut r, dims.len(), 0.2, 3.0);
    let g: Vec<f64> = dense_matvec(&dense, dims.len(), &truth)
        .into_iter()
        .map(|v| v + r.random_range(-0.2..0.2))
        .collect();
    (PosteriorModel::new(p, g.clone(), params).unwrap(), dense, g)
}

/// Simpson's rule for the mass of N(mu, s) above zero.
fn positive_mass(mu: f64, s: f64) -> f64 {
    let (a, b) = (0.0, mu + 40.0 * s);
    let n = 200_000;
    let h = (b - a) / n as f64;
    let pdf = |x: f64| (-(x - mu) * (x - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let mut acc = pdf(a) + pdf(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * pdf(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn oracle_log_posterior(dense: &[f64], g: &[f64], f: &[f64], p: PriorParams) -> f64 {
    let af = dense_matvec(dense, f.len(), f);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut lp = 0.0;
    for (gi, ai) in g.iter().zip(&af) {
        let r = gi - ai;
        lp += -r * r / (2.0 * p.sigma_like * p.sigma_like) - 0.5 * (two_pi * p.sigma_like * p.sigma_like).ln();
    }
    let z = positive_mass(p.prior_mu, p.prior_sigma);
    for &x in f {
        let d = x - p.prior_mu;
        lp += -d * d / (2.0 * p.prior_sigma * p.prior_sigma)
            - 0.5 * (two_pi * p.prior_sigma * p.prior_sigma).ln()
            - z.ln();
    }
    lp
}

#[test]
fn log_posterior_matches_dense_oracle() {
    for (k, params) in [
        PriorParams::default(),
        PriorParams {
            sigma_like: 0.3,
            prior_mu: 0.5,
            prior_sigma: 0.4,
        },
    ]
    .into_iter()
    .enumerate()
    {
        let (m, dense, g) = model(4, 100 + k as u64, params);
        let mut r = rng(k as u64);
        let f = uniform_vec(&mut r, 64, 0.1, 2.0);
        let got = m.log_posterior(&f).unwrap();
        let want = oracle_log_posterior(&dense, &g, &f, params);
        assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn gradient_matches_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let (m, _, _) = model(4, seed, PriorParams::default());
        let mut r = rng(1000 + seed);
        let f = uniform_vec(&mut r, 64, 0.3, 2.5);
        let grad = m.grad_log_posterior(&f).unwrap();
        for j in 0..64 {
            let h = 1e-5 * f[j].abs().max(1.0);
            let mut fp = f.clone();
            let mut fm = f.clone();
            fp[j] += h;
            fm[j] -= h;
            let fd = (m.log_posterior(&fp).unwrap() - m.log_posterior(&fm).unwrap()) / (2.0 * h);
            worst = worst.max(rel_err(grad[j], fd));
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn unconstrained_gradient_matches_central_differences() {
    let (m, _, _) = model(4, 3, PriorParams::default());
    let mut r = rng(9);
    let x = uniform_vec(&mut r, 64, -1.0, 1.0);
    let mut grad = vec![0.0; 64];
    m.log_density_grad(&x, &mut grad);
    let mut scratch = vec![0.0; 64];
    let h = 1e-5;
    for j in 0..64 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fd = (m.log_density_grad(&xp, &mut scratch) - m.log_density_grad(&xm, &mut scratch)) / (2.0 * h);
        assert!(rel_err(grad[j], fd) < 1e-5, "component {j}: {} vs {fd}", grad[j]);
    }
}

#[test]
fn unconstrained_density_adds_the_log_jacobian() {
    let (m, _, _) = model(4, 4, PriorParams::default());
    let mut r = rng(10);
    let f = uniform_vec(&mut r, 64, 0.1, 3.0);
    let x = to_unconstrained(&f).unwrap();
    let back = from_unconstrained(&x);
    assert!(max_abs_diff(&back, &f) < 1e-14);
    let mut grad = vec![0.0; 64];
    let lx = m.log_density_grad(&x, &mut grad);
    let jac: f64 = f.iter().map(|v| v.ln()).sum();
    assert!((log_jacobian(&x) - jac).abs() < 1e-12);
    assert!((lx - (m.log_posterior(&f).unwrap() + jac)).abs() < 1e-9);
    let mut out = vec![0.0; 64];
    m.constrain(&x, &mut out);
    assert!(out.iter().all(|&v| v > 0.0));
}

#[test]
fn invalid_inputs() {
    let (m, _, g) = model(4, 5, PriorParams::default());
    let mut f = vec![1.0; 64];
    f[3] = 0.0;
    assert!(m.log_posterior(&f).is_err());
    assert!(m.grad_log_posterior(&[1.0; 3]).is_err());
    assert!(to_unconstrained(&[-1.0]).is_err());
    let p = Arc::new(m.projector().clone());
    let bad = PriorParams {
        sigma_like: 0.0,
        ..Default::default()
    };
    assert!(PosteriorModel::new(p.clone(), g.clone(), bad).is_err());
    assert!(PosteriorModel::new(p, g[1..].to_vec(), PriorParams::default()).is_err());
}

#[test]
fn posterior_mode_direction_points_towards_data() {
    // Starting below the truth, the likelihood pull dominates the weak prior.
    let (m, _, _) = model(4, 6, PriorParams::default());
    let grad = m.grad_log_posterior(&vec![1e-3; 64]).unwrap();
    assert!(grad.iter().sum::<f64>() > 0.0);
}

/// Two voxels side by side along x, two views of two half-pitch pixels.
fn two_voxel_model(g: Vec<f64>, params: PriorParams) -> PosteriorModel {
    let dims = Dims(2, 1, 1);
    let geom = DetectorGeometry::new(2, 1, 0.5, vec![0.0, 90.0]).unwrap();
    let p = Arc::new(Projector::new(geom, dims, 1.0).unwrap());
    PosteriorModel::new(p, g, params).unwrap()
}

// At 0 degrees both rays cross both voxels; at 90 degrees pixel u = -0.25 sits over
// x = +0.25 (voxel 1) and u = +0.25 over x = -0.25 (voxel 0).
const HAND_A: [[f64; 2]; 4] = [[1.0, 1.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];

#[test]
fn hand_built_two_voxel_system() {
    let geom = DetectorGeometry::new(2, 1, 0.5, vec![0.0, 90.0]).unwrap();
    let a = spect_bayes::projector::build_system_matrix(&geom, Dims(2, 1, 1), 1.0).unwrap();
    let dense = a.to_dense();
    for i in 0..4 {
        for j in 0..2 {
            assert!((dense[i * 2 + j] - HAND_A[i][j]).abs() < 1e-9, "A[{i}][{j}]");
        }
    }

    let params = PriorParams {
        sigma_like: 0.5,
        prior_mu: 1.0,
        prior_sigma: 2.0,
    };
    let g = vec![3.0, 2.5, 1.0, 2.0];
    let m = two_voxel_model(g.clone(), params);
    let f = [0.7, 1.9];
    // expanded by hand: residuals g - Af
    let r = [3.0 - 2.6, 2.5 - 2.6, 1.0 - 1.9, 2.0 - 0.7];
    let quad = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * 0.25);
    let prior = ((0.7f64 - 1.0).powi(2) + (1.9f64 - 1.0).powi(2)) / (2.0 * 4.0);
    let a_lp = m.log_posterior(&f).unwrap();
    let b_lp = m.log_posterior(&[1.0, 1.0]).unwrap();
    // constants cancel in differences
    let r1 = [3.0 - 2.0, 2.5 - 2.0, 0.0, 1.0];
    let quad1 = r1.iter().map(|v| v * v).sum::<f64>() / (2.0 * 0.25);
    assert!(((a_lp - b_lp) - (-(quad + prior) + quad1)).abs() < 1e-12);

    let grad = m.grad_log_posterior(&f).unwrap();
    for j in 0..2 {
        let atr: f64 = (0..4).map(|i| HAND_A[i][j] * r[i]).sum();
        let want = atr / 0.25 - (f[j] - 1.0) / 4.0;
        assert!((grad[j] - want).abs() < 1e-12);
    }
}

#[test]
fn consistent_data_at_the_prior_mean_is_the_maximum() {
    let params = PriorParams::default();
    let g: Vec<f64> = HAND_A.iter().map(|row| row[0] + row[1]).collect();
    let m = two_voxel_model(g, params);
    let best = m.log_posterior(&[1.0, 1.0]).unwrap();
    let grad = m.grad_log_posterior(&[1.0, 1.0]).unwrap();
    assert!(grad.iter().all(|v| v.abs() < 1e-9));
    let mut r = rng(21);
    for _ in 0..100 {
        let f = [r.random_range(0.01..3.0), r.random_range(0.01..3.0)];
        assert!(m.log_posterior(&f).unwrap() < best);
    }
}

#[test]
fn doubling_sigma_quarters_the_quadratic_term() {
    let g = vec![3.0, 2.5, 1.0, 2.0];
    let p1 = PriorParams::default();
    let p2 = PriorParams {
        sigma_like: 2.0 * p1.sigma_like,
        ..p1
    };
    let (m1, m2) = (two_voxel_model(g.clone(), p1), two_voxel_model(g, p2));
    let f = [0.4, 1.2];
    let n = 4.0;
    let l1 = m1.log_likelihood(&f) + n * (p1.sigma_like.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
    let l2 = m2.log_likelihood(&f) + n * (p2.sigma_like.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
    assert!((l2 - 0.25 * l1).abs() < 1e-12);
}
