//! Analytic Jacobians against central differences.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use svyel::estfn::{Custom, LinearRegression, LogisticRegression, MeanFamily};
use svyel::{rng, EstimatingFunction};
use svyel_oracles as oracle;
use svyel_oracles::OracleReport;

/// Over-identified mean with known variance: `g = (y - t, (y - t)^2 - 1)`.
pub fn two_moment() -> Custom {
    Custom::new(
        2,
        1,
        |_x, y, t, out| {
            let e = y[0] - t[0];
            out[0] = e;
            out[1] = e * e - 1.0;
        },
        Some(Arc::new(|_x: &[f64], y: &[f64], t: &[f64], out: &mut [f64]| {
            out[0] = -1.0;
            out[1] = -2.0 * (y[0] - t[0]);
        })),
    )
    .unwrap()
    .named("two-moment")
}

/// Worst relative discrepancy over `draws` random `(x, y, theta)` points;
/// passes when every entry is within `1e-5 (1 + |analytic|)`.
pub fn check_family(gf: &dyn EstimatingFunction, binary_y: bool, draws: usize, seed: u64) -> OracleReport {
    let mut r = rng::stream(seed, 0);
    let (rd, p) = (gf.r(), gf.p());
    let nx = if gf.name() == "mean" || gf.name() == "two-moment" { 0 } else { p };
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let x: Vec<f64> = (0..nx).map(|j| if j == 0 { 1.0 } else { StandardNormal.sample(&mut r) }).collect();
        let y = [if binary_y { (r.random::<f64>() < 0.5) as u8 as f64 } else { StandardNormal.sample(&mut r) }];
        let theta: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut r)).collect();
        let mut an = vec![0.0; rd * p];
        assert!(gf.jacobian(&x, &y, &theta, &mut an));
        let f = |t: &[f64]| {
            let mut out = vec![0.0; rd];
            gf.eval(&x, &y, t, &mut out);
            out
        };
        let fd = oracle::fd_jacobian(&f, &theta, 1e-6);
        for (a, b) in an.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / (1e-5 * (1.0 + a.abs())));
        }
    }
    // ratio to the allowed error; the case passes when it stays below one
    OracleReport::new(&format!("{} jacobian vs central differences", gf.name()), 0.0, worst, 1.0)
}

pub fn all() -> Vec<OracleReport> {
    vec![
        check_family(&MeanFamily, false, 100, 1),
        check_family(&LinearRegression { p: 4 }, false, 100, 2),
        check_family(&LogisticRegression { p: 4 }, true, 100, 3),
        check_family(&two_moment(), false, 100, 4),
    ]
}
