//! Algebraic identities that hold exactly (up to solver tolerance) for any
//! data set. Each case takes a seed so property tests can sweep them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use svyel::estfn::{LinearRegression, LogisticRegression};
use svyel::{
    calibrate_chisq, fit_at, rescale_weights, rng, CalibrationMethod, ElKind, ElProblem, ParamSpace,
    QuadraticFormDist, Rows, SurveyDataset,
};
use svyel_oracles as oracle;
use svyel_oracles::OracleReport;

/// Regression data with skewed weights and a handful of replicate columns.
pub fn regression_data(seed: u64, n: usize, p: usize, binary: bool) -> SurveyDataset {
    let mut r = rng::stream(seed, 0);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = 0.2;
        x.push(1.0);
        for j in 1..p {
            let v: f64 = StandardNormal.sample(&mut r);
            x.push(v);
            eta += v * if j % 2 == 0 { 0.5 } else { -0.7 };
        }
        let e: f64 = StandardNormal.sample(&mut r);
        y.push(if binary {
            (r.random::<f64>() < svyel::estfn::logistic(eta)) as u8 as f64
        } else {
            eta + e
        });
        w.push((2.0 * r.random::<f64>()).exp());
    }
    let b = 20;
    let reps: Vec<f64> = (0..n * b).map(|k| w[k / b] * [0.0, 1.0, 2.0][r.random_range(0..3)]).collect();
    SurveyDataset::new(
        Rows::new(1, y).unwrap(),
        Rows::new(p, x).unwrap(),
        w,
        Rows::new(b, reps).unwrap(),
    )
    .unwrap()
}

fn x_rows(ds: &SurveyDataset) -> Vec<Vec<f64>> {
    (0..ds.n()).map(|i| ds.x.row(i).to_vec()).collect()
}

/// Just-identified linear model: both maximizers solve the weighted normal
/// equations.
pub fn just_identified_is_weighted_ee(seed: u64) -> Vec<OracleReport> {
    let ds = regression_data(seed, 40, 3, false);
    let gf = LinearRegression { p: 3 };
    let ls = oracle::weighted_ls(&x_rows(&ds), &ds.y.column(0), &ds.final_weights).unwrap();
    let mut out = Vec::new();
    for kind in [ElKind::Pel, ElKind::Sel] {
        let (t, prof) = ElProblem::new(kind, &ds, &gf).maximize(&ParamSpace::unbounded(vec![0.0; 3])).unwrap();
        for j in 0..3 {
            out.push(OracleReport::new(&format!("{kind} r=p theta[{j}] = weighted EE"), ls[j], t[j], 1e-8 * (1.0 + ls[j].abs())));
        }
        out.push(OracleReport::new(&format!("{kind} log ratio at maximum"), 0.0, prof.log_ratio, 1e-10));
        out.push(OracleReport::new(&format!("{kind} probabilities sum to one"), 1.0, prof.p_hat.iter().sum(), 1e-10));
    }
    out
}

/// With `r = p` the sandwich collapses to `Gamma^-1 Omega Gamma^-T`.
pub fn sandwich_just_identified(seed: u64) -> Vec<OracleReport> {
    let ds = regression_data(seed, 60, 3, true);
    let gf = LogisticRegression { p: 3 };
    let mut out = Vec::new();
    for kind in [ElKind::Pel, ElKind::Sel] {
        let (t, _) = ElProblem::new(kind, &ds, &gf).maximize(&ParamSpace::unbounded(vec![0.0; 3])).unwrap();
        let fit = fit_at(kind, &ds, &gf, &t).unwrap();
        let g_inv = fit.gamma_hat.clone().unwrap().try_inverse().unwrap();
        let direct = &g_inv * &fit.omega_hat * g_inv.transpose();
        let v = fit.v_hat.unwrap();
        let scale = direct.abs().max();
        out.push(OracleReport::new(&format!("{kind} sandwich r=p"), 0.0, (&v - &direct).abs().max(), 1e-10 * (1.0 + scale)));
    }
    out
}

/// Calibrated weights reproduce their totals.
pub fn calibration_exact(seed: u64) -> Vec<OracleReport> {
    let mut r = rng::stream(seed, 1);
    let n = 30;
    let d: Vec<f64> = (0..n).map(|_| 1.0 + 9.0 * r.random::<f64>()).collect();
    let x: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 0 { (r.random::<f64>() < 0.4) as u8 as f64 } else { r.random() }).collect();
    let xr = Rows::new(2, x).unwrap();
    let ht = [0, 1].map(|j| (0..n).map(|i| d[i] * xr.get(i, j)).sum::<f64>());
    let totals = [ht[0] * (0.9 + 0.2 * r.random::<f64>()), ht[1] * (0.9 + 0.2 * r.random::<f64>())];
    let cal = calibrate_chisq(&d, &xr, &totals).unwrap();
    (0..2)
        .map(|j| {
            let got: f64 = (0..n).map(|i| cal.weights[i] * xr.get(i, j)).sum();
            OracleReport::new(&format!("calibrated total {j}"), totals[j], got, 1e-10 * totals[j].abs().max(1.0))
        })
        .collect()
}

/// Multiplying every weight by a constant changes nothing.
pub fn weight_scale_invariance(seed: u64, c: f64) -> Vec<OracleReport> {
    let ds = regression_data(seed, 50, 3, true);
    let scaled = rescale_weights(&ds, c * ds.n_hat).unwrap();
    let gf = LogisticRegression { p: 3 };
    let space = ParamSpace::unbounded(vec![0.0; 3]);
    let mut out = Vec::new();
    for kind in [ElKind::Pel, ElKind::Sel] {
        let (a, _) = ElProblem::new(kind, &ds, &gf).maximize(&space).unwrap();
        let (b, _) = ElProblem::new(kind, &scaled, &gf).maximize(&space).unwrap();
        for j in 0..3 {
            out.push(OracleReport::new(&format!("{kind} scale x{c} theta[{j}]"), a[j], b[j], 1e-9));
        }
        let t: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        let ra = ElProblem::new(kind, &ds, &gf).log_ratio(&t);
        let rb = ElProblem::new(kind, &scaled, &gf).log_ratio(&t);
        out.push(OracleReport::new(&format!("{kind} scale x{c} log ratio"), ra, rb, 1e-9 * (1.0 + ra.abs())));
    }
    out
}

/// Rao-Scott moments against plain eigenvalue arithmetic.
pub fn rao_scott_moments(eigs: &[f64]) -> Vec<OracleReport> {
    let d = QuadraticFormDist::new(eigs, CalibrationMethod::Rs2);
    let kept: Vec<f64> = d.eigenvalues.clone();
    let m = kept.len() as f64;
    let s1: f64 = kept.iter().sum();
    let s2: f64 = kept.iter().map(|v| v * v).sum();
    let (a, mm) = d.rs1();
    let (c, k) = d.rs2();
    let tol = |v: f64| 1e-12 * (1.0 + v.abs());
    vec![
        OracleReport::new("RS1 scale = mean eigenvalue", s1 / m, a, tol(a)),
        OracleReport::new("RS1 dof = rank", m, mm, 0.0),
        OracleReport::new("RS2 scale", s2 / s1, c, tol(c)),
        OracleReport::new("RS2 dof", s1 * s1 / s2, k, tol(k)),
        // matching the first two moments of sum delta_j Z_j^2
        OracleReport::new("RS2 mean matches", s1, c * k, tol(s1)),
        OracleReport::new("RS2 variance matches", 2.0 * s2, 2.0 * c * c * k, tol(s2)),
    ]
}

pub fn all() -> Vec<OracleReport> {
    let mut out = Vec::new();
    for seed in [1, 2, 3] {
        out.extend(just_identified_is_weighted_ee(seed));
        out.extend(sandwich_just_identified(seed));
        out.extend(calibration_exact(seed));
        out.extend(weight_scale_invariance(seed, 7.5));
    }
    out.extend(rao_scott_moments(&[2.0, 4.0]));
    out.extend(rao_scott_moments(&[0.3, 1.1, 2.9, 0.05]));
    out
}
