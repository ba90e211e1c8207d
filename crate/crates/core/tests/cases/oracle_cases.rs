//! Engine values against independent oracle computations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use svyel::estfn::{LinearRegression, LogisticRegression, MeanFamily, Quantile};
use svyel::sim::{
    draw_sim_sample, generate_population, pps_systematic, PopulationSpec, Scenario, ScenarioSpec, SigmaMode,
};
use svyel::{
    build_delta, calibrate_chisq, draw_bootstrap, lr_simple, make_replication_weights, plugin_components,
    rep_variance_total, rng, sandwich, scad_penalty, select_tau, solve_lambda, wald_test, AffineConstraint,
    CalibrationMethod, CalibrationSpec, Constraint, DesignSample, ElKind, ElProblem, EstimatingFunction, FitResult,
    ParamSpace, QuadraticFormDist, Rows, SolverConfig, SurveyDataset, default_tau_grid,
};
use svyel_oracles as oracle;
use svyel_oracles::OracleReport;

fn col(v: &[f64]) -> Rows {
    Rows::new(1, v.to_vec()).unwrap()
}

fn plain(y: &[f64], w: &[f64]) -> SurveyDataset {
    SurveyDataset::new(col(y), Rows::empty(y.len()), w.to_vec(), Rows::empty(y.len())).unwrap()
}

fn flag(case: &str, ok: bool) -> OracleReport {
    OracleReport::new(case, 1.0, if ok { 1.0 } else { 0.0 }, 0.0)
}

fn rel(case: &str, oracle: f64, engine: f64, rel_tol: f64) -> OracleReport {
    OracleReport::new(case, oracle, engine, rel_tol * oracle.abs())
}

/// Small linear-model data set with uneven weights and replicate columns.
fn linear_data(n: usize, p: usize, seed: u64) -> SurveyDataset {
    let mut r = rng::stream(seed, 0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for _ in 0..n {
        let mut row = vec![1.0];
        for _ in 1..p {
            row.push(r.random::<f64>() * 2.0);
        }
        let eta: f64 = row.iter().sum();
        let e: f64 = StandardNormal.sample(&mut r);
        y.push(eta + e);
        x.extend(row);
        w.push(1.0 + 4.0 * r.random::<f64>());
    }
    let b = 30;
    let mut reps = Vec::new();
    for i in 0..n {
        for _ in 0..b {
            reps.push(w[i] * if r.random::<f64>() < 0.5 { 0.0 } else { 2.0 });
        }
    }
    let _ = reps.len();
    SurveyDataset::new(col(&y), Rows::new(p, x).unwrap(), w, Rows::new(b, reps).unwrap()).unwrap()
}

fn rows_of(x: &Rows) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).to_vec()).collect()
}

pub fn rescale_invariance() -> Vec<OracleReport> {
    let ds = linear_data(60, 3, 1);
    let gf = LinearRegression { p: 3 };
    let scaled = svyel::rescale_weights(&ds, 60.0).unwrap();
    let space = ParamSpace::unbounded(vec![0.0; 3]);
    let cfg = SolverConfig::default();
    let mut out = Vec::new();
    for kind in [ElKind::Pel, ElKind::Sel] {
        let (a, _) = svyel::maximize(kind, &ds, &gf, &space, &cfg).unwrap();
        let (b, _) = svyel::maximize(kind, &scaled, &gf, &space, &cfg).unwrap();
        for j in 0..3 {
            out.push(OracleReport::new(&format!("rescale {kind} theta[{j}]"), a[j], b[j], 1e-9));
        }
        let t = [a[0] + 0.2, a[1] - 0.1, a[2]];
        let ra = svyel::profile(kind, &ds, &gf, &t).log_ratio;
        let rb = svyel::profile(kind, &scaled, &gf, &t).log_ratio;
        out.push(OracleReport::new(&format!("rescale {kind} log ratio"), ra, rb, 1e-9));
    }
    out
}

pub fn linear_jacobian_outer_product() -> Vec<OracleReport> {
    let gf = LinearRegression { p: 2 };
    let mut jac = [0.0; 4];
    gf.jacobian(&[1.0, 2.0], &[3.0], &[0.3, -0.2], &mut jac);
    let expect = [-1.0, -2.0, -2.0, -4.0];
    (0..4).map(|k| OracleReport::new(&format!("linear jac entry {k}"), expect[k], jac[k], 0.0)).collect()
}

pub fn quantile_step_root() -> Vec<OracleReport> {
    let y = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ds = plain(&y, &[1.0; 5]);
    let gf = Quantile::new(0.5).unwrap();
    let (t, _) = ElProblem::new(ElKind::Pel, &ds, &gf).maximize(&ParamSpace::unbounded(vec![0.0])).unwrap();
    vec![OracleReport::new("median of 1..5", oracle::weighted_quantile(&y, &[1.0; 5], 0.5), t[0], 0.0)]
}

pub fn two_point_lambda() -> Vec<OracleReport> {
    let u = Rows::new(1, vec![-1.0, 2.0]).unwrap();
    let (l, _) = solve_lambda(&u, &[0.5, 0.5], &SolverConfig::default()).unwrap();
    let o = oracle::lambda_bisection(&[-1.0, 2.0], &[0.5, 0.5]).unwrap();
    vec![OracleReport::new("two-point lambda", o, l[0], 1e-12), OracleReport::new("two-point lambda value", 0.25, o, 1e-12)]
}

pub fn two_point_log_ratio() -> Vec<OracleReport> {
    let ds = plain(&[-1.0, 2.0], &[1.0, 1.0]);
    let r = svyel::profile(ElKind::Pel, &ds, &MeanFamily, &[0.0]).log_ratio;
    let o = oracle::weighted_el_log_ratio(&[-1.0, 2.0], &[0.5, 0.5], 2.0);
    vec![
        OracleReport::new("two-point PEL log ratio", o, r, 1e-12),
        OracleReport::new("two-point PEL hand value", -0.1177830, r, 5e-8),
    ]
}

const FIVE: [f64; 5] = [1.3, -0.4, 2.2, 0.9, 3.1];

pub fn sel_equal_weights_is_classical() -> Vec<OracleReport> {
    let ds = plain(&FIVE, &[3.0; 5]);
    let mut out = Vec::new();
    for theta in [0.5, 1.0, 1.8, 2.5] {
        let r = svyel::profile(ElKind::Sel, &ds, &MeanFamily, &[theta]).log_ratio;
        let o = oracle::classical_el_log_ratio(&FIVE, theta);
        out.push(OracleReport::new(&format!("SEL = classical EL at {theta}"), o, r, 1e-9));
        let rp = svyel::profile(ElKind::Pel, &ds, &MeanFamily, &[theta]).log_ratio;
        out.push(OracleReport::new(&format!("PEL = classical EL at {theta}"), o, rp, 1e-9));
    }
    out
}

pub fn logistic_pel_equals_sel() -> Vec<OracleReport> {
    let mut r = rng::stream(17, 0);
    let n = 150;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for _ in 0..n {
        let x1: f64 = StandardNormal.sample(&mut r);
        let x2: f64 = r.random();
        let eta = -0.3 + 0.8 * x1 - x2;
        y.push(if r.random::<f64>() < svyel::estfn::logistic(eta) { 1.0 } else { 0.0 });
        x.extend([1.0, x1, x2]);
        w.push(0.5 + 3.0 * r.random::<f64>());
    }
    let ds = SurveyDataset::new(col(&y), Rows::new(3, x).unwrap(), w, Rows::empty(n)).unwrap();
    let gf = LogisticRegression { p: 3 };
    let space = ParamSpace::unbounded(vec![0.0; 3]);
    let cfg = SolverConfig::default();
    let (a, _) = svyel::maximize(ElKind::Pel, &ds, &gf, &space, &cfg).unwrap();
    let (b, _) = svyel::maximize(ElKind::Sel, &ds, &gf, &space, &cfg).unwrap();
    (0..3).map(|j| OracleReport::new(&format!("logistic PEL=SEL theta[{j}]"), a[j], b[j], 1e-8)).collect()
}

/// Pattern search with shrinking steps; slow but free of derivatives.
fn pattern_search(f: &dyn Fn([f64; 3]) -> f64, start: [f64; 3]) -> f64 {
    let mut best = start;
    let mut best_val = f(best);
    let mut h = 0.5;
    while h > 1e-7 {
        let centre = best;
        for i in -3..=3 {
            for j in -3..=3 {
                for k in -3..=3 {
                    let z = [centre[0] + i as f64 * h, centre[1] + j as f64 * h, centre[2] + k as f64 * h];
                    let v = f(z);
                    if v > best_val {
                        best_val = v;
                        best = z;
                    }
                }
            }
        }
        if best == centre {
            h *= 0.3;
        }
    }
    best_val
}

/// Restricted maximum under `theta_1 = theta_2` against a pattern search
/// over `theta = (a, b, b, c)` of the oracle's vector EL.
pub fn restricted_max_grid() -> Vec<OracleReport> {
    let ds = linear_data(50, 4, 5);
    let gf = LinearRegression { p: 4 };
    let space = ParamSpace::unbounded(vec![0.0; 4]);
    let h = AffineConstraint::difference(4, 1, 2, 0.0);
    let x = rows_of(&ds.x);
    let y = ds.y.column(0);
    let w = &ds.final_weights;
    let n = ds.n() as f64;
    let tot: f64 = w.iter().sum();
    let mut out = Vec::new();
    for kind in [ElKind::Pel, ElKind::Sel] {
        let (_, prof) = svyel::maximize_restricted(kind, &ds, &gf, &space, &h, &SolverConfig::default()).unwrap();
        assert!(h.eval(&prof.theta)[0].abs() < 1e-8);
        // PEL: rows g_i with weights w_i / sum w; SEL: rows w_i g_i, equal weights
        let (scale, nu): (Vec<f64>, Vec<f64>) = match kind {
            ElKind::Pel => (vec![1.0; ds.n()], w.iter().map(|v| v / tot).collect()),
            ElKind::Sel => (w.clone(), vec![1.0 / n; ds.n()]),
        };
        let f = |z: [f64; 3]| -> f64 {
            let theta = [z[0], z[1], z[1], z[2]];
            let u: Vec<Vec<f64>> = (0..ds.n())
                .map(|i| {
                    let e = y[i] - x[i].iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
                    x[i].iter().map(|v| scale[i] * v * e).collect()
                })
                .collect();
            oracle::el_log_ratio_rows(&u, &nu, n)
        };
        let start = [prof.theta[0] + 0.05, prof.theta[1] - 0.05, prof.theta[3] + 0.05];
        out.push(OracleReport::new(&format!("{kind} restricted max vs pattern search"), pattern_search(&f, start), prof.log_ratio, 1e-4));
    }
    out
}

pub fn rep_variance_scalar() -> Vec<OracleReport> {
    let reps = Rows::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
    let ds = SurveyDataset::new(col(&[4.0, 6.0]), Rows::empty(2), vec![1.0, 1.0], reps).unwrap();
    let v = rep_variance_total(&ds, &MeanFamily, &[0.0]).unwrap();
    vec![OracleReport::new("replicate variance U=10 {8,12}", 4.0, v[(0, 0)], 1e-12)]
}

/// `Omega` for a PPS mean from 500 bootstrap columns against the
/// with-replacement variance of `d_i g_i`.
pub fn omega_hansen_hurwitz() -> Vec<OracleReport> {
    let pop = generate_population(&PopulationSpec::linear(20_000, 3)).unwrap();
    let y = pop.linear_response(&[1.0, 1.0, 1.0, 1.0], 1.0);
    let mut r = rng::stream(8, 0);
    let (ids, pi) = pps_systematic(&pop.size_measure, 400, &mut r).unwrap();
    let d: Vec<f64> = pi.iter().map(|p| 1.0 / p).collect();
    let ys: Vec<f64> = ids.iter().map(|&i| y[i]).collect();
    let sample = DesignSample::new(col(&ys), Rows::empty(ids.len()), d.clone(), ids).unwrap();
    let reps = make_replication_weights(&sample, &CalibrationSpec::none(), 500, 99).unwrap();
    let ds = SurveyDataset::new(col(&ys), Rows::empty(ys.len()), d.clone(), reps.matrix()).unwrap();
    let n = ys.len() as f64;
    let n_hat: f64 = d.iter().sum();
    let theta = ys.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / n_hat;
    let fit = plugin_components(ElKind::Pel, &ds, &MeanFamily, &[theta]).unwrap();
    let z: Vec<f64> = ys.iter().zip(&d).map(|(a, b)| b * (a - theta)).collect();
    let zbar = z.iter().sum::<f64>() / n;
    let s2 = z.iter().map(|v| (v - zbar) * (v - zbar)).sum::<f64>() / n;
    let expect = n * (n * s2) / (n_hat * n_hat);
    // Monte Carlo error of the replicate variance from its own terms
    let u: f64 = z.iter().sum();
    let dev: Vec<f64> = (0..ds.n_replicates())
        .map(|b| {
            let eta: f64 = (0..ds.n()).map(|i| ds.rep_weights.get(i, b) * (ys[i] - theta)).sum();
            (eta - u) * (eta - u)
        })
        .collect();
    let m = dev.iter().sum::<f64>() / dev.len() as f64;
    let sd = (dev.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / dev.len() as f64).sqrt();
    let mc = n * sd / (dev.len() as f64).sqrt() / (n_hat * n_hat);
    vec![OracleReport::new("Omega vs Hansen-Hurwitz", expect, fit.omega_hat[(0, 0)], 3.0 * mc)]
}

pub fn sandwich_toy() -> Vec<OracleReport> {
    let fit = FitResult {
        kind: ElKind::Sel,
        theta_hat: vec![0.0],
        w_hat: DMatrix::identity(2, 2),
        gamma_hat: Some(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])),
        omega_hat: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]),
        v_hat: None,
        se: vec![],
        n: 1,
        n_hat: 1.0,
    };
    let sigma = fit.sigma().unwrap()[(0, 0)];
    let v = sandwich(&fit).unwrap().v_hat.unwrap()[(0, 0)];
    vec![OracleReport::new("toy Sigma", 0.5, sigma, 1e-12), OracleReport::new("toy V", 1.25, v, 1e-12)]
}

pub fn lr_monotone_on_rays() -> Vec<OracleReport> {
    let ds = linear_data(80, 3, 21);
    let gf = LinearRegression { p: 3 };
    let space = ParamSpace::unbounded(vec![0.0; 3]);
    let cfg = SolverConfig::default();
    let mut out = Vec::new();
    for kind in [ElKind::Pel, ElKind::Sel] {
        let (th, _) = svyel::maximize(kind, &ds, &gf, &space, &cfg).unwrap();
        for j in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut last = 0.0;
                let mut ok = true;
                for s in 1..=15 {
                    let mut t0 = th.clone();
                    t0[j] += dir * 0.02 * s as f64;
                    let lr = lr_simple(kind, &ds, &gf, &t0, &space, &cfg).unwrap().value;
                    ok &= lr > last;
                    last = lr;
                }
                out.push(flag(&format!("{kind} LR increasing along ray {j}{dir:+}"), ok));
            }
        }
    }
    out
}

pub fn lr_sel_is_owen() -> Vec<OracleReport> {
    let ds = plain(&FIVE, &[2.0; 5]);
    let space = ParamSpace::unbounded(vec![0.0]);
    let cfg = SolverConfig::default();
    [0.4, 1.0, 2.4]
        .iter()
        .map(|&t| {
            let lr = lr_simple(ElKind::Sel, &ds, &MeanFamily, &[t], &space, &cfg).unwrap().value;
            OracleReport::new(&format!("SEL LR = Owen at {t}"), -2.0 * oracle::classical_el_log_ratio(&FIVE, t), lr, 1e-8)
        })
        .collect()
}

pub fn projection_eigenvalues() -> Vec<OracleReport> {
    let fit = FitResult {
        kind: ElKind::Pel,
        theta_hat: vec![0.0],
        w_hat: DMatrix::identity(2, 2),
        gamma_hat: Some(DMatrix::from_row_slice(2, 1, &[1.0, 0.0])),
        omega_hat: DMatrix::identity(2, 2),
        v_hat: None,
        se: vec![],
        n: 1,
        n_hat: 1.0,
    };
    let d = QuadraticFormDist::from_delta(&build_delta(&fit, None).unwrap(), CalibrationMethod::EigenMc);
    vec![
        OracleReport::new("projection eigenvalue count", 1.0, d.eigenvalues.len() as f64, 0.0),
        OracleReport::new("projection eigenvalue", 1.0, d.eigenvalues[0], 1e-12),
    ]
}

pub fn quadform_tail() -> Vec<OracleReport> {
    let q = 3.841458820694124;
    let d = QuadraticFormDist::new(&[1.0], CalibrationMethod::EigenMc);
    let engine = d.p_value(q);
    let exact = oracle::chi2_1_sf(q);
    let mc = oracle::quadform_tail(&[1.0], q, 10_000_000, 5);
    let se = (0.05f64 * 0.95 / d.mc_draws as f64).sqrt();
    let mut out = vec![
        OracleReport::new("EIGEN_MC p at chi2 quantile", exact, engine, 3.0 * se),
        OracleReport::new("oracle MC tail at chi2 quantile", 0.05, mc, 0.0005),
        OracleReport::new("oracle tail at zero", 1.0, oracle::quadform_tail(&[1.0], 0.0, 10, 1), 0.0),
    ];
    // two unequal eigenvalues: engine MC against oracle MC
    let d2 = QuadraticFormDist::new(&[2.0, 0.5], CalibrationMethod::EigenMc);
    let o2 = oracle::quadform_tail(&[2.0, 0.5], 5.0, 2_000_000, 9);
    out.push(OracleReport::new("EIGEN_MC p {2, 0.5}", o2, d2.p_value(5.0), 3.0 * (o2 * (1.0 - o2) / d2.mc_draws as f64).sqrt() + 0.001));
    out
}

pub fn rao_scott_arithmetic() -> Vec<OracleReport> {
    let d = QuadraticFormDist::new(&[2.0, 4.0], CalibrationMethod::Rs1);
    let (a, m) = d.rs1();
    let (c, k) = d.rs2();
    let mut out = vec![
        OracleReport::new("RS1 a", 3.0, a, 1e-15),
        OracleReport::new("RS1 m", 2.0, m, 0.0),
        OracleReport::new("RS2 c", 10.0 / 3.0, c, 1e-15),
        OracleReport::new("RS2 k", 1.8, k, 1e-15),
    ];
    // 3 chi2(2) has tail exp(-q/6)
    out.push(OracleReport::new("RS1 tail", oracle::chi2_2_sf(7.0 / 3.0), d.p_value(7.0), 1e-12));
    // equal eigenvalues make RS1 exact
    let e = QuadraticFormDist::new(&[2.0, 2.0], CalibrationMethod::Rs1);
    out.push(OracleReport::new("RS1 exact for equal eigenvalues", oracle::chi2_2_sf(3.0), e.p_value(6.0), 1e-12));
    out
}

pub fn wald_normal_tail() -> Vec<OracleReport> {
    let fit = FitResult {
        kind: ElKind::Pel,
        theta_hat: vec![1.2],
        w_hat: DMatrix::identity(1, 1),
        gamma_hat: Some(DMatrix::from_element(1, 1, -1.0)),
        omega_hat: DMatrix::identity(1, 1),
        v_hat: Some(DMatrix::from_element(1, 1, 0.01)),
        se: vec![0.1],
        n: 1,
        n_hat: 1.0,
    };
    let t = wald_test(&fit, &[1.0], 1.0).unwrap();
    vec![
        OracleReport::new("Wald z", 2.0, t.statistic, 1e-12),
        OracleReport::new("Wald p", 2.0 * oracle::normal_sf(2.0), t.p_value, 1e-9),
        OracleReport::new("Wald p table value", 0.0455, t.p_value, 5e-5),
    ]
}

pub fn calibration_closed_form() -> Vec<OracleReport> {
    let x = Rows::new(1, vec![1.0, 2.0]).unwrap();
    let cal = calibrate_chisq(&[1.0, 1.0], &x, &[4.0]).unwrap();
    let o = oracle::chisq_calibration(&[1.0, 1.0], &[vec![1.0], vec![2.0]], &[4.0]).unwrap();
    vec![
        OracleReport::new("calibration lambda", 0.2, cal.lambda[0], 1e-15),
        OracleReport::new("calibration w1", o[0], cal.weights[0], 1e-14),
        OracleReport::new("calibration w2", o[1], cal.weights[1], 1e-14),
        OracleReport::new("calibration w hand", 1.2, cal.weights[0], 1e-14),
        OracleReport::new("calibration total", 4.0, cal.weights[0] + 2.0 * cal.weights[1], 1e-14),
    ]
}

pub fn multinomial_counts() -> Vec<OracleReport> {
    let n = 10;
    let x = Rows::from_rows(&(0..n).map(|i| vec![1.0, i as f64]).collect::<Vec<_>>()).unwrap();
    let sample = DesignSample::new(Rows::empty(n), x, vec![2.0; n], (0..n).collect()).unwrap();
    let spec = CalibrationSpec::none();
    let draws = 10_000;
    let mut sum = vec![0.0; n];
    let mut r = rng::stream(77, 0);
    for _ in 0..draws {
        let d = draw_bootstrap(&sample, &spec, &mut r).unwrap();
        assert_eq!(d.counts.iter().sum::<u32>() as usize, n);
        for (s, c) in sum.iter_mut().zip(&d.counts) {
            *s += *c as f64;
        }
    }
    let se = ((1.0 - 1.0 / n as f64) / draws as f64).sqrt();
    (0..n).map(|i| OracleReport::new(&format!("E[h_{i}]"), 1.0, sum[i] / draws as f64, 3.0 * se)).collect()
}

pub fn bootstrap_total_unbiased() -> Vec<OracleReport> {
    let pop = generate_population(&PopulationSpec::linear(10_000, 12)).unwrap();
    let spec = ScenarioSpec::new(Scenario::A, 200);
    let s = draw_sim_sample(&pop, &spec, 500, 4).unwrap();
    let y_pop = pop.linear_response(&[1.0, 1.0, 1.0, 1.0], 1.0);
    let y: Vec<f64> = s.ids().iter().map(|&i| y_pop[i]).collect();
    let ht: f64 = y.iter().zip(&s.design.design_weights).map(|(a, b)| a * b).sum();
    let m = s.rep_matrix();
    let totals: Vec<f64> = (0..m.ncols()).map(|b| (0..m.nrows()).map(|i| m.get(i, b) * y[i]).sum()).collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let sd = (totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (totals.len() - 1) as f64).sqrt();
    vec![OracleReport::new("bootstrap replicate totals centre on HT", ht, mean, 3.0 * sd / (totals.len() as f64).sqrt())]
}

/// Replication variance of the HT total, averaged over samples, against the
/// analytic with-replacement variance.
pub fn replication_variance_hh() -> Vec<OracleReport> {
    let pop = generate_population(&PopulationSpec::linear(20_000, 31)).unwrap();
    let y = pop.linear_response(&[1.0, 1.0, 1.0, 1.0], 1.0);
    let analytic = oracle::hh_variance(&y, &pop.size_measure, 400);
    let samples = 20;
    let mut acc = 0.0;
    for s in 0..samples {
        let mut r = rng::stream(500 + s, 0);
        let (ids, pi) = pps_systematic(&pop.size_measure, 400, &mut r).unwrap();
        let d: Vec<f64> = pi.iter().map(|p| 1.0 / p).collect();
        let ys: Vec<f64> = ids.iter().map(|&i| y[i]).collect();
        let sample = DesignSample::new(col(&ys), Rows::empty(ys.len()), d.clone(), ids).unwrap();
        let reps = make_replication_weights(&sample, &CalibrationSpec::none(), 500, 900 + s).unwrap();
        let ds = SurveyDataset::new(col(&ys), Rows::empty(ys.len()), d, reps.matrix()).unwrap();
        acc += rep_variance_total(&ds, &MeanFamily, &[0.0]).unwrap()[(0, 0)];
    }
    vec![rel("replication variance vs Hansen-Hurwitz", analytic, acc / samples as f64, 0.10)]
}

pub fn scad_knots() -> Vec<OracleReport> {
    let (tau, a) = (0.4, 3.7);
    vec![
        OracleReport::new("SCAD at tau", tau * tau, scad_penalty(tau, tau, a), 1e-15),
        OracleReport::new("SCAD plateau", (a + 1.0) * tau * tau / 2.0, scad_penalty(a * tau, tau, a), 1e-14),
        OracleReport::new("SCAD beyond plateau", (a + 1.0) * tau * tau / 2.0, scad_penalty(5.0, tau, a), 0.0),
    ]
}

/// Noise covariates dropped by BIC-tuned SCAD in at least 90% of runs.
pub fn selection_oracle_property(runs: usize) -> Vec<OracleReport> {
    let pop = generate_population(&PopulationSpec::linear(20_000, 41)).unwrap();
    let spec = ScenarioSpec::new(Scenario::A, 400);
    let y_pop = pop.linear_response(&[1.0, 1.0, 1.0, 1.0], pop.sigma(SigmaMode::S1));
    let p = 8;
    let gf = LinearRegression { p };
    let cfg = SolverConfig::default();
    let mut all_zero = 0;
    for run in 0..runs {
        let seed = rng::child_seed(4100, run as u64);
        let s = draw_sim_sample(&pop, &spec, 1, seed).unwrap();
        let mut r = rng::stream(seed, 9);
        let n = s.n();
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            x.extend_from_slice(s.design.x.row(i));
            for _ in 0..4 {
                x.push(StandardNormal.sample(&mut r));
            }
        }
        let y: Vec<f64> = s.ids().iter().map(|&i| y_pop[i]).collect();
        let ds = SurveyDataset::new_allow_negative_replicates(col(&y), Rows::new(p, x).unwrap(), s.final_weights.clone(), Rows::empty(n))
            .unwrap();
        let grid = default_tau_grid(n, p, 20);
        let res = select_tau(ElKind::Pel, &ds, &gf, &ParamSpace::unbounded(vec![0.0; p]), &grid, &[0], &cfg).unwrap();
        if (4..8).all(|j| res.theta_hat[j] == 0.0) {
            all_zero += 1;
        }
    }
    let rate = all_zero as f64 / runs as f64;
    vec![flag(&format!("noise coefficients all zero in {rate:.3} of runs (>= 0.90)"), rate >= 0.90)]
}

pub fn ht_unbiased() -> Vec<OracleReport> {
    let pop = generate_population(&PopulationSpec::linear(20_000, 51)).unwrap();
    let x2 = pop.x.column(2);
    let x3 = pop.x.column(3);
    let t2: f64 = x2.iter().sum();
    let t3: f64 = x3.iter().sum();
    let draws = 2000;
    let mut e2 = Vec::with_capacity(draws);
    let mut e3 = Vec::with_capacity(draws);
    for k in 0..draws {
        let mut r = rng::stream(5100, k as u64);
        let (ids, pi) = pps_systematic(&pop.size_measure, 400, &mut r).unwrap();
        e2.push(ids.iter().zip(&pi).map(|(&i, p)| x2[i] / p).sum::<f64>());
        e3.push(ids.iter().zip(&pi).map(|(&i, p)| x3[i] / p).sum::<f64>());
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, sd / (v.len() as f64).sqrt())
    };
    let (m2, se2) = stats(&e2);
    let (m3, se3) = stats(&e3);
    vec![
        OracleReport::new("HT total of x3 (size variable)", t3, m3, 3.0 * se3 + 1e-9 * t3),
        OracleReport::new("HT total of x2", t2, m2, 3.0 * se2),
    ]
}

pub fn oracle_self_checks() -> Vec<OracleReport> {
    let mut out = vec![
        OracleReport::new("oracle lambda two-point", 0.25, oracle::lambda_bisection(&[-1.0, 2.0], &[0.5, 0.5]).unwrap(), 1e-12),
        OracleReport::new("oracle lambda at zero mean", 0.0, oracle::lambda_bisection(&[-1.0, 1.0], &[0.5, 0.5]).unwrap(), 1e-12),
        flag("oracle lambda same sign has no root", oracle::lambda_bisection(&[1.0, 2.0], &[0.5, 0.5]).is_none()),
    ];
    let mean = FIVE.iter().sum::<f64>() / 5.0;
    out.push(OracleReport::new("classical EL at mean", 0.0, oracle::classical_el_log_ratio(&FIVE, mean), 1e-12));
    out.push(flag(
        "classical EL decreases away from mean",
        oracle::classical_el_log_ratio(&FIVE, mean + 0.5) < oracle::classical_el_log_ratio(&FIVE, mean + 0.2),
    ));
    out.push(OracleReport::new("HH two-unit toy", 4.0, oracle::hh_variance(&[1.0, 3.0], &[1.0, 1.0], 1), 1e-12));
    out.push(OracleReport::new("HH constant ratio", 0.0, oracle::hh_variance(&[1.0, 3.0], &[1.0, 3.0], 1), 1e-12));
    out.push(OracleReport::new(
        "HH scales with c^2",
        9.0 * oracle::hh_variance(&[1.0, 3.0, 2.0], &[1.0, 1.0, 2.0], 2),
        oracle::hh_variance(&[3.0, 9.0, 6.0], &[1.0, 1.0, 2.0], 2),
        1e-10,
    ));
    out
}

/// Every case; the selection simulation is the slow one.
pub fn all(selection_runs: usize) -> Vec<OracleReport> {
    let mut out = Vec::new();
    out.extend(rescale_invariance());
    out.extend(linear_jacobian_outer_product());
    out.extend(quantile_step_root());
    out.extend(two_point_lambda());
    out.extend(two_point_log_ratio());
    out.extend(sel_equal_weights_is_classical());
    out.extend(logistic_pel_equals_sel());
    out.extend(restricted_max_grid());
    out.extend(rep_variance_scalar());
    out.extend(omega_hansen_hurwitz());
    out.extend(sandwich_toy());
    out.extend(lr_monotone_on_rays());
    out.extend(lr_sel_is_owen());
    out.extend(projection_eigenvalues());
    out.extend(quadform_tail());
    out.extend(rao_scott_arithmetic());
    out.extend(wald_normal_tail());
    out.extend(calibration_closed_form());
    out.extend(multinomial_counts());
    out.extend(bootstrap_total_unbiased());
    out.extend(replication_variance_hh());
    out.extend(scad_knots());
    out.extend(selection_oracle_property(selection_runs));
    out.extend(ht_unbiased());
    out.extend(oracle_self_checks());
    out
}
