//! SCAD-penalized PEL/SEL variable selection.
//!
//! The penalized objective is `r(theta) - n sum_j p_tau(|theta_j|)` over the
//! penalized coordinates. It is maximized by the local linear approximation:
//! each outer step freezes the SCAD slopes at the current iterate and solves
//! the resulting weighted-L1 problem by proximal Newton steps (coordinate
//! descent on the curvature model of `r`, then a line search on the true
//! objective).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::SurveyDataset;
use crate::el::{ElKind, ElProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::estfn::{EstimatingFunction, ParamSpace};
use crate::linalg;

pub const SCAD_A: f64 = 3.7;
/// Coefficients smaller than this after convergence are set to exactly zero.
pub const ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub tau: f64,
    pub a: f64,
    /// Coordinates left out of the penalty (typically the intercept).
    pub unpenalized: Vec<usize>,
}

impl PenaltySpec {
    pub fn scad(tau: f64, unpenalized: Vec<usize>) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(PenaltySpec { tau, a: SCAD_A, unpenalized })
    }

    fn penalized(&self, j: usize) -> bool {
        !self.unpenalized.contains(&j)
    }

    pub fn total(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .enumerate()
            .filter(|(j, _)| self.penalized(*j))
            .map(|(_, t)| scad_penalty(t.abs(), self.tau, self.a))
            .sum()
    }
}

pub fn scad_penalty(t: f64, tau: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= tau {
        tau * t
    } else if t <= a * tau {
        -(t * t - 2.0 * a * tau * t + tau * tau) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * tau * tau / 2.0
    }
}

/// Right derivative of the SCAD penalty in `|t|`.
pub fn scad_derivative(t: f64, tau: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= tau {
        tau
    } else if t <= a * tau {
        (a * tau - t) / (a - 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub theta_hat: Vec<f64>,
    pub selected: Vec<usize>,
    pub tau: f64,
    /// Unpenalized log ratio at `theta_hat`.
    pub log_ratio: f64,
    /// Penalized objective at `theta_hat`.
    pub objective: f64,
    pub bic: f64,
    /// `(tau, BIC)` over the grid (a single point for a fixed-`tau` fit).
    pub path: Vec<(f64, f64)>,
}

/// Geometric grid of `k` points spanning `[0.01, 2] sqrt(log(p) / n)`.
pub fn default_tau_grid(n: usize, p: usize, k: usize) -> Vec<f64> {
    let base = ((p.max(2) as f64).ln() / n as f64).sqrt();
    let (lo, hi) = (0.01 * base, 2.0 * base);
    if k <= 1 {
        return vec![hi];
    }
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

/// Penalized maximizer at a fixed `tau`, started from the unpenalized fit.
pub fn maximize_penalized(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    space: &ParamSpace,
    spec: &PenaltySpec,
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    let prob = ElProblem::new(kind, ds, gf).with_config(*cfg);
    let (theta0, _) = prob.maximize(space)?;
    penalized_from(&prob, &theta0, space, spec)
}

fn penalized_from(
    prob: &ElProblem<'_>,
    theta0: &[f64],
    space: &ParamSpace,
    spec: &PenaltySpec,
) -> Result<SelectionResult> {
    if !prob.gf().is_smooth() {
        return Err(Error::InvalidArgument("penalized fits need a smooth family".into()));
    }
    let p = theta0.len();
    let m = prob.mult();
    let mut theta = theta0.to_vec();
    let mut prof = prob.profile(&theta);
    if !prof.is_feasible() {
        return Err(Error::HullViolation);
    }
    let objective = |r: f64, th: &[f64]| r - m * spec.total(th);
    let mut f_true = objective(prof.log_ratio, &theta);

    for _lla in 0..50 {
        let slopes: Vec<f64> = (0..p)
            .map(|j| if spec.penalized(j) { scad_derivative(theta[j], spec.tau, spec.a) } else { 0.0 })
            .collect();
        let l1 = |th: &[f64]| -> f64 { th.iter().zip(&slopes).map(|(t, v)| v * t.abs()).sum::<f64>() * m };
        let start = theta.clone();
        let mut f_lin = prof.log_ratio - l1(&theta);
        for _prox in 0..100 {
            let (grad, hess) = prob.gradient_curvature(&prof)?;
            let a = -hess;
            let z = weighted_l1_newton(&theta, &grad, &a, &slopes, m);
            let dir: Vec<f64> = z.iter().zip(&theta).map(|(a, b)| a - b).collect();
            if linalg::norm(&dir) <= 1e-12 * (1.0 + linalg::norm(&theta)) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                if space.contains(&cand) {
                    let pc = prob.profile(&cand);
                    if pc.is_feasible() {
                        let fc = pc.log_ratio - l1(&cand);
                        if fc >= f_lin - 1e-13 * (1.0 + f_lin.abs()) {
                            accepted = Some((cand, pc, fc));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            let Some((cand, pc, fc)) = accepted else { break };
            let moved = t * linalg::norm(&dir);
            theta = cand;
            prof = pc;
            f_lin = fc;
            if moved <= 1e-10 * (1.0 + linalg::norm(&theta)) {
                break;
            }
        }
        let f_new = objective(prof.log_ratio, &theta);
        let change = linalg::norm(&theta.iter().zip(&start).map(|(a, b)| a - b).collect::<Vec<_>>());
        f_true = f_new;
        if change <= 1e-9 * (1.0 + linalg::norm(&theta)) {
            break;
        }
    }
    for (j, t) in theta.iter_mut().enumerate() {
        if spec.penalized(j) && t.abs() < ZERO_THRESHOLD {
            *t = 0.0;
        }
    }
    let prof = prob.profile(&theta);
    if prof.is_feasible() {
        f_true = objective(prof.log_ratio, &theta);
    }
    let selected: Vec<usize> = (0..p).filter(|&j| theta[j] != 0.0).collect();
    let n = prob.n_units() as f64;
    let bic = -2.0 * prof.log_ratio + selected.len() as f64 * n.ln();
    Ok(SelectionResult {
        theta_hat: theta,
        selected,
        tau: spec.tau,
        log_ratio: prof.log_ratio,
        objective: f_true,
        bic,
        path: vec![(spec.tau, bic)],
    })
}

/// Maximize `g'(z - c) - (z - c)'A(z - c)/2 - m sum_j v_j |z_j|` by cyclic
/// coordinate descent with soft thresholding.
fn weighted_l1_newton(c: &[f64], g: &DVector<f64>, a: &DMatrix<f64>, v: &[f64], m: f64) -> Vec<f64> {
    let p = c.len();
    let mut z = c.to_vec();
    for _sweep in 0..1000 {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let ajj = a[(j, j)].max(1e-12);
            let mut s = g[j] + ajj * c[j];
            for k in 0..p {
                if k != j {
                    s -= a[(j, k)] * (z[k] - c[k]);
                }
            }
            let thr = m * v[j];
            let new = if s > thr {
                (s - thr) / ajj
            } else if s < -thr {
                (s + thr) / ajj
            } else {
                0.0
            };
            max_change = max_change.max((new - z[j]).abs());
            z[j] = new;
        }
        if max_change <= 1e-13 * (1.0 + linalg::norm(&z)) {
            break;
        }
    }
    z
}

/// Fit every `tau` in the grid and keep the one with the smallest BIC
/// (ties go to the larger `tau`).
pub fn select_tau(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    space: &ParamSpace,
    grid: &[f64],
    unpenalized: &[usize],
    cfg: &SolverConfig,
) -> Result<SelectionResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty tau grid".into()));
    }
    let prob = ElProblem::new(kind, ds, gf).with_config(*cfg);
    let (theta0, _) = prob.maximize(space)?;
    let fits: Vec<Result<SelectionResult>> = grid
        .par_iter()
        .map(|&tau| {
            let spec = PenaltySpec::scad(tau, unpenalized.to_vec())?;
            penalized_from(&prob, &theta0, space, &spec)
        })
        .collect();
    let path: Vec<(f64, f64)> = grid
        .iter()
        .zip(&fits)
        .map(|(&t, f)| (t, f.as_ref().map_or(f64::INFINITY, |r| r.bic)))
        .collect();
    let mut best: Option<SelectionResult> = None;
    let mut first_err = None;
    for f in fits {
        match f {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => r.bic < b.bic || (r.bic == b.bic && r.tau > b.tau),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(mut b) => {
            b.path = path;
            Ok(b)
        }
        None => Err(first_err.expect("non-empty grid")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scad_values() {
        let (tau, a) = (0.5, 3.7);
        assert_eq!(scad_penalty(0.0, tau, a), 0.0);
        assert!((scad_penalty(tau, tau, a) - tau * tau).abs() < 1e-15);
        let plateau = (a + 1.0) * tau * tau / 2.0;
        assert!((scad_penalty(a * tau, tau, a) - plateau).abs() < 1e-14);
        assert_eq!(scad_penalty(10.0, tau, a), plateau);
    }

    #[test]
    fn scad_is_c1_at_knots() {
        let (tau, a) = (0.3, 3.7);
        for knot in [tau, a * tau] {
            let h = 1e-7;
            let left = (scad_penalty(knot, tau, a) - scad_penalty(knot - h, tau, a)) / h;
            let right = (scad_penalty(knot + h, tau, a) - scad_penalty(knot, tau, a)) / h;
            assert!((left - right).abs() < 1e-5);
        }
    }

    #[test]
    fn grid_is_geometric() {
        let g = default_tau_grid(400, 8, 20);
        assert_eq!(g.len(), 20);
        let base = (8f64.ln() / 400.0).sqrt();
        assert!((g[0] - 0.01 * base).abs() < 1e-15 && (g[19] - 2.0 * base).abs() < 1e-12);
        assert!((g[1] / g[0] - g[10] / g[9]).abs() < 1e-9);
    }
}
