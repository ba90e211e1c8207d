//! Lagrange-multiplier solver and profile maximization for the pseudo (PEL)
//! and sample (SEL) empirical likelihoods.
//!
//! Both likelihoods share one computational shape. For a given `theta`
//! the constraint rows are `u_i = s_i g_i(theta)` and the outer weights
//! `nu_i` sum to one; the multiplier solves
//! `sum_i nu_i u_i / (1 + lambda'u_i) = 0` and the log ratio is
//! `-m sum_i nu_i log(1 + lambda'u_i)`.
//!
//! | kind | `nu_i`          | `s_i` | `m` |
//! |------|-----------------|-------|-----|
//! | PEL  | `w_i / sum w`   | 1     | n   |
//! | SEL  | `1/n`           | `w_i` | n   |
//!
//! Bootstrap replicates fold resampling counts `h_i` into `nu_i`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::{Rows, SurveyDataset};
use crate::error::{Error, Result};
use crate::estfn::{x_row, EstimatingFunction, ParamSpace};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElKind {
    Pel,
    Sel,
}

impl ElKind {
    pub fn parse(s: &str) -> Result<ElKind> {
        match s.to_ascii_lowercase().as_str() {
            "pel" => Ok(ElKind::Pel),
            "sel" => Ok(ElKind::Sel),
            _ => Err(Error::InvalidArgument(format!("unknown EL kind {s} (expected pel or sel)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ElKind::Pel => "PEL",
            ElKind::Sel => "SEL",
        }
    }
}

impl fmt::Display for ElKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Tolerance on the multiplier equation residual.
    pub lambda_tol: f64,
    /// Relative step size at which the outer maximization stops.
    pub theta_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { lambda_tol: 1e-10, theta_tol: 1e-8, max_inner: 100, max_outer: 200 }
    }
}

/// Solved inner problem at one `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElProfile {
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p_hat: Vec<f64>,
    /// `r_PEL(theta)` or `r_SEL(theta)`; `-inf` when theta lies outside the
    /// EL support.
    pub log_ratio: f64,
    pub converged: bool,
    pub iters: usize,
}

impl ElProfile {
    fn infeasible(theta: &[f64], r: usize) -> Self {
        ElProfile {
            theta: theta.to_vec(),
            lambda: vec![f64::NAN; r],
            p_hat: Vec::new(),
            log_ratio: f64::NEG_INFINITY,
            converged: false,
            iters: 0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.log_ratio.is_finite()
    }
}

/// Solve `sum_i outer_w_i u_i / (1 + lambda'u_i) = 0` by Newton's method
/// with step halving, keeping `1 + lambda'u_i > outer_w_i` (which is `1/n`
/// for equal outer weights) at every accepted iterate. Returns the multiplier and the iteration count.
pub fn solve_lambda(u: &Rows, outer_w: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, usize)> {
    let n = u.nrows();
    let r = u.ncols();
    if outer_w.len() != n {
        return Err(Error::Dimension(format!("{} outer weights for {n} rows", outer_w.len())));
    }
    if n == 0 || r == 0 {
        return Err(Error::Dimension("empty constraint rows".into()));
    }
    let umax = (0..n).map(|i| linalg::norm(u.row(i))).fold(0.0, f64::max);
    let tol = cfg.lambda_tol * (1.0 + umax);

    let mut lambda = vec![0.0; r];
    let mut grad = vec![0.0; r];
    let mut hess = DMatrix::<f64>::zeros(r, r);
    let mut trial = vec![0.0; r];
    let mut gtrial = vec![0.0; r];

    // objective value and gradient norm at a trial multiplier
    let objective = |lam: &[f64], gbuf: &mut [f64]| -> Option<(f64, f64)> {
        let mut f = 0.0;
        gbuf.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let ui = u.row(i);
            let a = 1.0 + linalg::dot(lam, ui);
            // p_i = nu_i / a <= 1 at the root, so a > nu_i loses nothing
            if !(a > outer_w[i]) {
                return None;
            }
            f += outer_w[i] * a.ln();
            let c = outer_w[i] / a;
            for (g, v) in gbuf.iter_mut().zip(ui) {
                *g += c * v;
            }
        }
        Some((f, linalg::norm(gbuf)))
    };

    let mut f_cur: f64 = 0.0;
    let mut polish = 4;
    for iter in 0..cfg.max_inner {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.fill(0.0);
        let mut mass = 0.0;
        for i in 0..n {
            let ui = u.row(i);
            let rho = 1.0 / (1.0 + linalg::dot(&lambda, ui));
            let c = outer_w[i] * rho;
            mass += c;
            let c2 = c * rho;
            for a in 0..r {
                grad[a] += c * ui[a];
                let ca = c2 * ui[a];
                for b in 0..=a {
                    hess[(a, b)] += ca * ui[b];
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let gnorm = linalg::norm(&grad);
        // sum p_i - 1 = -lambda'grad, which a small gradient alone does not
        // bound when lambda is large, so polish a few more Newton steps
        if gnorm <= tol && (linalg::dot(&lambda, &grad).abs() <= 1e-13 || polish == 0) {
            if (mass - 1.0).abs() <= 1e-8 {
                return Ok((lambda, iter));
            }
            return Err(Error::HullViolation);
        }
        if gnorm <= tol {
            polish -= 1;
        }
        let g = DVector::from_column_slice(&grad);
        let step = match linalg::solve_spd(&hess, &g) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                let ridge = 1e-12 * hess.trace().max(1e-300);
                let h = &hess + DMatrix::identity(r, r) * ridge;
                match linalg::solve_spd(&h, &g) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => return Err(Error::HullViolation),
                }
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for a in 0..r {
                trial[a] = lambda[a] + t * step[a];
            }
            // near the root the objective gain drops below rounding, so a
            // smaller gradient also counts as progress
            if let Some((f_new, g_new)) = objective(&trial, &mut gtrial) {
                if f_new >= f_cur - 1e-14 * f_cur.abs() || g_new < gnorm {
                    f_cur = f_new;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::HullViolation);
        }
        lambda.copy_from_slice(&trial);
    }
    Err(Error::HullViolation)
}

/// A differentiable restriction `R(theta) = 0` with `k <= p` rows.
pub trait Constraint: Send + Sync {
    fn k(&self) -> usize;
    fn eval(&self, theta: &[f64]) -> Vec<f64>;
    /// `k x p` Jacobian.
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64>;
    /// `(A, c)` when `R(theta) = A theta - c`.
    fn affine(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }
}

/// `R(theta) = A theta - c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineConstraint {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if a.nrows() != c.len() {
            return Err(Error::Dimension("constraint rows and right-hand side differ".into()));
        }
        if a.nrows() == 0 || a.nrows() > a.ncols() {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k <= p constraints, got k={} for p={}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(AffineConstraint { a, c })
    }

    /// `theta_j = value`.
    pub fn fix(p: usize, j: usize, value: f64) -> Self {
        let mut a = DMatrix::zeros(1, p);
        a[(0, j)] = 1.0;
        AffineConstraint { a, c: DVector::from_element(1, value) }
    }

    /// `theta_i - theta_j = value`.
    pub fn difference(p: usize, i: usize, j: usize, value: f64) -> Self {
        let mut a = DMatrix::zeros(1, p);
        a[(0, i)] = 1.0;
        a[(0, j)] = -1.0;
        AffineConstraint { a, c: DVector::from_element(1, value) }
    }

    /// `theta = theta0` (all `p` coordinates pinned).
    pub fn pin_all(theta0: &[f64]) -> Self {
        let p = theta0.len();
        AffineConstraint { a: DMatrix::identity(p, p), c: DVector::from_column_slice(theta0) }
    }

    /// The same restriction re-centred so that it holds at `theta`.
    pub fn centred_at(&self, theta: &[f64]) -> Self {
        let t = DVector::from_column_slice(theta);
        AffineConstraint { a: self.a.clone(), c: &self.a * t }
    }
}

impl Constraint for AffineConstraint {
    fn k(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (&self.a * t - &self.c).iter().cloned().collect()
    }
    fn jacobian(&self, _theta: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }
    fn affine(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((self.a.clone(), self.c.clone()))
    }
}

type ConstraintFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type ConstraintJac = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Nonlinear restriction from closures.
pub struct FnConstraint {
    k: usize,
    eval: Box<ConstraintFn>,
    jac: Box<ConstraintJac>,
}

impl FnConstraint {
    pub fn new(
        k: usize,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jac: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        FnConstraint { k, eval: Box::new(eval), jac: Box::new(jac) }
    }
}

impl Constraint for FnConstraint {
    fn k(&self) -> usize {
        self.k
    }
    fn eval(&self, theta: &[f64]) -> Vec<f64> {
        (self.eval)(theta)
    }
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        (self.jac)(theta)
    }
}

/// Constraint shifted by its value at a reference point:
/// `R*(theta) = R(theta) - R(theta_ref)`.
pub struct Recentred<'a> {
    inner: &'a dyn Constraint,
    offset: Vec<f64>,
}

impl<'a> Recentred<'a> {
    pub fn new(inner: &'a dyn Constraint, theta_ref: &[f64]) -> Self {
        Recentred { inner, offset: inner.eval(theta_ref) }
    }
}

impl Constraint for Recentred<'_> {
    fn k(&self) -> usize {
        self.inner.k()
    }
    fn eval(&self, theta: &[f64]) -> Vec<f64> {
        self.inner.eval(theta).iter().zip(&self.offset).map(|(a, b)| a - b).collect()
    }
    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        self.inner.jacobian(theta)
    }
    fn affine(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        self.inner
            .affine()
            .map(|(a, c)| (a, c + DVector::from_column_slice(&self.offset)))
    }
}

/// Augmented-Lagrangian terms `-mu'R - rho/2 |R|^2`.
struct AugTerm<'a> {
    constraint: &'a dyn Constraint,
    mu: Vec<f64>,
    rho: f64,
}

impl AugTerm<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        let r = self.constraint.eval(theta);
        -linalg::dot(&self.mu, &r) - 0.5 * self.rho * linalg::dot(&r, &r)
    }

    fn grad_hess(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let r = DVector::from_vec(self.constraint.eval(theta));
        let phi = self.constraint.jacobian(theta);
        let mu = DVector::from_column_slice(&self.mu);
        let g = -(phi.transpose() * (mu + &r * self.rho));
        let h = -(phi.transpose() * &phi) * self.rho;
        (g, h)
    }
}

/// One empirical likelihood problem: data, estimating function and the
/// kind-specific weighting.
#[derive(Clone)]
pub struct ElProblem<'a> {
    kind: ElKind,
    x: &'a Rows,
    y: &'a Rows,
    idx: Vec<usize>,
    outer: Vec<f64>,
    scale: Vec<f64>,
    mult: f64,
    gf: &'a dyn EstimatingFunction,
    cfg: SolverConfig,
}

impl<'a> ElProblem<'a> {
    /// Problem built from the final weights of a dataset.
    pub fn new(kind: ElKind, ds: &'a SurveyDataset, gf: &'a dyn EstimatingFunction) -> Self {
        Self::from_weights(kind, &ds.x, &ds.y, gf, &ds.final_weights)
            .expect("dataset weights are validated positive")
    }

    /// Problem with arbitrary strictly positive unit weights.
    pub fn from_weights(
        kind: ElKind,
        x: &'a Rows,
        y: &'a Rows,
        gf: &'a dyn EstimatingFunction,
        weights: &[f64],
    ) -> Result<Self> {
        let counts = vec![1.0; weights.len()];
        Self::with_counts(kind, x, y, gf, &counts, weights)
    }

    /// Problem over a resampled multiset: unit `i` appears `counts[i]` times
    /// with weight `weights[i]`. Units with zero count are dropped.
    pub fn with_counts(
        kind: ElKind,
        x: &'a Rows,
        y: &'a Rows,
        gf: &'a dyn EstimatingFunction,
        counts: &[f64],
        weights: &[f64],
    ) -> Result<Self> {
        let n_all = y.nrows();
        if counts.len() != n_all || weights.len() != n_all {
            return Err(Error::Dimension("counts/weights length differs from data".into()));
        }
        let idx: Vec<usize> = (0..n_all).filter(|&i| counts[i] > 0.0).collect();
        if idx.len() < 2 {
            return Err(Error::Validation("fewer than two units with positive count".into()));
        }
        let m: f64 = idx.iter().map(|&i| counts[i]).sum();
        let (outer, scale) = match kind {
            ElKind::Pel => {
                if let Some(&i) = idx.iter().find(|&&i| !(weights[i] > 0.0)) {
                    return Err(Error::Validation(format!(
                        "PEL needs positive weights; unit {} has {}",
                        i + 1,
                        weights[i]
                    )));
                }
                let tot: f64 = idx.iter().map(|&i| counts[i] * weights[i]).sum();
                let outer = idx.iter().map(|&i| counts[i] * weights[i] / tot).collect();
                (outer, vec![1.0; idx.len()])
            }
            ElKind::Sel => {
                let outer = idx.iter().map(|&i| counts[i] / m).collect();
                let scale = idx.iter().map(|&i| weights[i]).collect();
                (outer, scale)
            }
        };
        Ok(ElProblem { kind, x, y, idx, outer, scale, mult: m, gf, cfg: SolverConfig::default() })
    }

    pub fn with_config(mut self, cfg: SolverConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn kind(&self) -> ElKind {
        self.kind
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn gf(&self) -> &dyn EstimatingFunction {
        self.gf
    }

    /// Multiplier `m` in front of the log ratio (the sample size).
    pub fn mult(&self) -> f64 {
        self.mult
    }

    /// Number of distinct units in the problem.
    pub fn n_units(&self) -> usize {
        self.idx.len()
    }

    pub fn outer_weights(&self) -> &[f64] {
        &self.outer
    }

    /// Constraint rows `u_i = s_i g_i(theta)`.
    pub fn constraint_rows(&self, theta: &[f64]) -> Rows {
        let r = self.gf.r();
        let mut u = Rows::zeros(self.idx.len(), r);
        for (k, &i) in self.idx.iter().enumerate() {
            let row = u.row_mut(k);
            self.gf.eval(x_row(self.x, i), self.y.row(i), theta, row);
            let s = self.scale[k];
            if s != 1.0 {
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
        u
    }

    /// Inner solve at `theta`; outside the support the profile carries
    /// `log_ratio = -inf` and `converged = false`.
    pub fn profile(&self, theta: &[f64]) -> ElProfile {
        let u = self.constraint_rows(theta);
        self.profile_rows(theta, &u)
    }

    fn profile_rows(&self, theta: &[f64], u: &Rows) -> ElProfile {
        match solve_lambda(u, &self.outer, &self.cfg) {
            Ok((lambda, iters)) => {
                let mut lr = 0.0;
                let mut p_hat = Vec::with_capacity(self.outer.len());
                for (k, nu) in self.outer.iter().enumerate() {
                    let a = 1.0 + linalg::dot(&lambda, u.row(k));
                    lr += nu * a.ln();
                    p_hat.push(nu / a);
                }
                ElProfile {
                    theta: theta.to_vec(),
                    lambda,
                    p_hat,
                    log_ratio: (-self.mult * lr).min(0.0),
                    converged: true,
                    iters,
                }
            }
            Err(_) => ElProfile::infeasible(theta, self.gf.r()),
        }
    }

    pub fn log_ratio(&self, theta: &[f64]) -> f64 {
        self.profile(theta).log_ratio
    }

    /// `sum_i nu_i s_i g_i(theta)`, proportional to the weighted estimating
    /// equations for both kinds.
    pub fn weighted_ee(&self, theta: &[f64]) -> DVector<f64> {
        let r = self.gf.r();
        let mut out = DVector::zeros(r);
        let mut g = vec![0.0; r];
        for (k, &i) in self.idx.iter().enumerate() {
            self.gf.eval(x_row(self.x, i), self.y.row(i), theta, &mut g);
            let c = self.outer[k] * self.scale[k];
            for a in 0..r {
                out[a] += c * g[a];
            }
        }
        out
    }

    /// Jacobian of [`ElProblem::weighted_ee`].
    pub fn weighted_ee_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let (r, p) = (self.gf.r(), self.gf.p());
        let mut out = DMatrix::zeros(r, p);
        let mut j = vec![0.0; r * p];
        for (k, &i) in self.idx.iter().enumerate() {
            if !self.gf.jacobian(x_row(self.x, i), self.y.row(i), theta, &mut j) {
                return Err(Error::InvalidArgument(format!(
                    "{} has no Jacobian",
                    self.gf.name()
                )));
            }
            let c = self.outer[k] * self.scale[k];
            for a in 0..r {
                for b in 0..p {
                    out[(a, b)] += c * j[a * p + b];
                }
            }
        }
        Ok(out)
    }

    /// Gradient of the log ratio via the envelope identity together with a
    /// negative definite curvature approximation `-m G' S^{-1} G`.
    pub fn gradient_curvature(&self, prof: &ElProfile) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (r, p) = (self.gf.r(), self.gf.p());
        let theta = &prof.theta;
        let lambda = &prof.lambda;
        let mut grad = DVector::zeros(p);
        let mut gbar = DMatrix::<f64>::zeros(r, p);
        let mut s = DMatrix::<f64>::zeros(r, r);
        let mut g = vec![0.0; r];
        let mut j = vec![0.0; r * p];
        for (k, &i) in self.idx.iter().enumerate() {
            let xi = x_row(self.x, i);
            let yi = self.y.row(i);
            self.gf.eval(xi, yi, theta, &mut g);
            if !self.gf.jacobian(xi, yi, theta, &mut j) {
                return Err(Error::InvalidArgument(format!(
                    "{} has no Jacobian",
                    self.gf.name()
                )));
            }
            let sc = self.scale[k];
            let lu = sc * linalg::dot(lambda, &g);
            let rho = 1.0 / (1.0 + lu);
            let c = self.outer[k] * rho * sc;
            for b in 0..p {
                let mut lj = 0.0;
                for a in 0..r {
                    let v = j[a * p + b];
                    lj += lambda[a] * v;
                    gbar[(a, b)] += c * v;
                }
                grad[b] += c * lj;
            }
            let c2 = self.outer[k] * rho * rho * sc * sc;
            for a in 0..r {
                for b in 0..=a {
                    s[(a, b)] += c2 * g[a] * g[b];
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                s[(b, a)] = s[(a, b)];
            }
        }
        grad *= -self.mult;
        let sinv_g = match s.clone().cholesky() {
            Some(ch) => ch.solve(&gbar),
            None => {
                let ridge = 1e-10 * s.trace().max(1e-300);
                (s + DMatrix::identity(r, r) * ridge)
                    .cholesky()
                    .ok_or_else(|| Error::SingularComponent("constraint covariance".into()))?
                    .solve(&gbar)
            }
        };
        let h = -(gbar.transpose() * sinv_g) * self.mult;
        Ok((grad, linalg::symmetrize(&h)))
    }

    /// Maximum EL estimator. For `r = p` this is the root of the weighted
    /// estimating equations; otherwise a curvature-scaled ascent on the
    /// profile log ratio.
    pub fn maximize(&self, space: &ParamSpace) -> Result<(Vec<f64>, ElProfile)> {
        let (r, p) = (self.gf.r(), self.gf.p());
        if space.p() != p {
            return Err(Error::Dimension(format!("parameter space has {} dims, need {p}", space.p())));
        }
        if r == p {
            let theta = if self.gf.is_smooth() {
                self.solve_ee(space)?
            } else {
                self.step_root()?
            };
            let prof = self.profile(&theta);
            return Ok((theta, prof));
        }
        if !self.gf.is_smooth() {
            return Err(Error::InvalidArgument("over-identified nonsmooth functions are not supported".into()));
        }
        let identity = DMatrix::identity(p, p);
        let zero = DVector::zeros(p);
        self.ascend(&space.initial, &zero, &identity, None, space)
    }

    /// Damped Newton on the weighted estimating equations.
    fn solve_ee(&self, space: &ParamSpace) -> Result<Vec<f64>> {
        let mut theta = space.initial.clone();
        let mut u = self.weighted_ee(&theta);
        let mut unorm = u.norm();
        for _ in 0..self.cfg.max_outer {
            let jac = self.weighted_ee_jacobian(&theta)?;
            let step = jac
                .clone()
                .lu()
                .solve(&(-&u))
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or_else(|| Error::SingularComponent("estimating equation Jacobian".into()))?;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
                if space.contains(&cand) {
                    let uc = self.weighted_ee(&cand);
                    let nc = uc.norm();
                    if nc.is_finite() && (nc < unorm || nc == 0.0) {
                        accepted = Some((cand, uc, nc));
                        break;
                    }
                }
                t *= 0.5;
            }
            let tnorm = linalg::norm(&theta);
            match accepted {
                Some((cand, uc, nc)) => {
                    let moved = t * step.norm();
                    theta = cand;
                    u = uc;
                    unorm = nc;
                    if moved <= self.cfg.theta_tol * (1.0 + tnorm) || unorm == 0.0 {
                        return Ok(theta);
                    }
                }
                None => {
                    // no decrease possible: at the root to working precision
                    if step.norm() <= 1e-6 * (1.0 + tnorm) {
                        return Ok(theta);
                    }
                    return Err(Error::NoConvergence(self.cfg.max_outer));
                }
            }
        }
        Err(Error::NoConvergence(self.cfg.max_outer))
    }

    /// Smallest step point at which the nondecreasing weighted estimating
    /// function becomes nonnegative.
    fn step_root(&self) -> Result<Vec<f64>> {
        if self.gf.p() != 1 {
            return Err(Error::InvalidArgument("nonsmooth root search needs p = 1".into()));
        }
        let mut pts: Vec<f64> = self
            .idx
            .iter()
            .filter_map(|&i| self.gf.step_point(x_row(self.x, i), self.y.row(i)))
            .collect();
        if pts.is_empty() {
            return Err(Error::InvalidArgument(format!("{} has no step points", self.gf.name())));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let ok = |t: f64| self.weighted_ee(&[t])[0] >= -1e-12;
        let (mut lo, mut hi) = (0usize, pts.len() - 1);
        if !ok(pts[hi]) {
            return Err(Error::Degenerate("estimating function never reaches zero".into()));
        }
        while lo < hi {
            let mid = (lo + hi) / 2;
            if ok(pts[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(vec![pts[lo]])
    }

    /// Sorted distinct step points (nonsmooth scalar families).
    pub fn step_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .idx
            .iter()
            .filter_map(|&i| self.gf.step_point(x_row(self.x, i), self.y.row(i)))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Maximize subject to `R(theta) = 0`, starting from `start` (usually the
    /// unrestricted maximizer).
    pub fn maximize_restricted_from(
        &self,
        constraint: &dyn Constraint,
        start: &[f64],
        space: &ParamSpace,
    ) -> Result<(Vec<f64>, ElProfile)> {
        let p = self.gf.p();
        let k = constraint.k();
        if k == 0 || k > p {
            return Err(Error::InvalidArgument(format!("need 1 <= k <= p, got k={k}, p={p}")));
        }
        if let Some((a, c)) = constraint.affine() {
            if linalg::rank(&a, 1e-10) < k {
                return Err(Error::RankDeficient(format!("constraint matrix has rank < {k}")));
            }
            let offset = linalg::min_norm_solution(&a, &c)
                .ok_or_else(|| Error::RankDeficient("constraint system".into()))?;
            let basis = linalg::null_space(&a);
            return self.ascend(start, &offset, &basis, None, space);
        }
        if !self.gf.is_smooth() {
            return Err(Error::InvalidArgument("nonlinear restrictions need a smooth family".into()));
        }
        let identity = DMatrix::identity(p, p);
        let zero = DVector::zeros(p);
        let mut aug = AugTerm { constraint, mu: vec![0.0; k], rho: 10.0 };
        let mut theta = start.to_vec();
        let mut prof = None;
        for _round in 0..8 {
            let (t, pr) = self.ascend(&theta, &zero, &identity, Some(&aug), space)?;
            theta = t;
            let rv = constraint.eval(&theta);
            prof = Some(pr);
            if linalg::norm(&rv) <= 1e-8 {
                break;
            }
            for (m, v) in aug.mu.iter_mut().zip(&rv) {
                *m += aug.rho * v;
            }
            aug.rho *= 10.0;
        }
        let rv = constraint.eval(&theta);
        if linalg::norm(&rv) > 1e-8 {
            return Err(Error::NoConvergence(8));
        }
        if linalg::rank(&constraint.jacobian(&theta), 1e-10) < k {
            return Err(Error::RankDeficient(format!("constraint Jacobian rank < {k} at solution")));
        }
        Ok((theta, prof.expect("at least one round")))
    }

    /// Ascent on `r(offset + N z) + aug` over `z`.
    fn ascend(
        &self,
        start: &[f64],
        offset: &DVector<f64>,
        basis: &DMatrix<f64>,
        aug: Option<&AugTerm<'_>>,
        space: &ParamSpace,
    ) -> Result<(Vec<f64>, ElProfile)> {
        let q = basis.ncols();
        let s = DVector::from_column_slice(start);
        let mut z = basis.transpose() * (&s - offset);
        let to_theta = |z: &DVector<f64>| -> Vec<f64> { (offset + basis * z).iter().cloned().collect() };
        let objective = |pr: &ElProfile| -> f64 {
            pr.log_ratio + aug.map_or(0.0, |a| a.value(&pr.theta))
        };

        let mut theta = to_theta(&z);
        let mut prof = self.profile(&theta);
        if !prof.is_feasible() {
            z = self.feasible_start(offset, basis, z)?;
            theta = to_theta(&z);
            prof = self.profile(&theta);
            if !prof.is_feasible() {
                return Err(Error::HullViolation);
            }
        }
        if q == 0 {
            return Ok((theta, prof));
        }
        let mut f = objective(&prof);
        for _ in 0..self.cfg.max_outer {
            let (mut grad, mut hess) = self.gradient_curvature(&prof)?;
            if let Some(a) = aug {
                let (ga, ha) = a.grad_hess(&theta);
                grad += ga;
                hess += ha;
            }
            let gz = basis.transpose() * &grad;
            let a_mat = -(basis.transpose() * &hess * basis);
            let dz = match linalg::solve_spd(&a_mat, &gz) {
                Some(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => {
                    let ridge = 1e-8 * a_mat.trace().abs().max(1e-12);
                    linalg::solve_spd(&(a_mat.clone() + DMatrix::identity(q, q) * ridge), &gz)
                        .ok_or_else(|| Error::SingularComponent("ascent curvature".into()))?
                }
            };
            let slope = gz.dot(&dz);
            let tnorm = linalg::norm(&theta);
            if !(slope > 1e-13 * (1.0 + f.abs())) {
                return Ok((theta, prof));
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let zc = &z + &dz * t;
                let tc = to_theta(&zc);
                if space.contains(&tc) {
                    let pc = self.profile(&tc);
                    if pc.is_feasible() {
                        let fc = objective(&pc);
                        if fc >= f + 1e-4 * t * slope {
                            accepted = Some((zc, tc, pc, fc));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((zc, tc, pc, fc)) => {
                    let moved = t * (basis * &dz).norm();
                    z = zc;
                    theta = tc;
                    prof = pc;
                    f = fc;
                    if moved <= self.cfg.theta_tol * (1.0 + tnorm) {
                        return Ok((theta, prof));
                    }
                }
                None => {
                    // the quadratic model predicts a gain below working precision
                    if (basis * &dz).norm() <= 1e-5 * (1.0 + tnorm) || slope <= 1e-9 * (1.0 + f.abs()) {
                        return Ok((theta, prof));
                    }
                    return Err(Error::NoConvergence(self.cfg.max_outer));
                }
            }
        }
        Err(Error::NoConvergence(self.cfg.max_outer))
    }

    /// Gauss-Newton on `|weighted_ee|^2` along the affine set, used when the
    /// starting point lies outside the EL support.
    fn feasible_start(
        &self,
        offset: &DVector<f64>,
        basis: &DMatrix<f64>,
        mut z: DVector<f64>,
    ) -> Result<DVector<f64>> {
        let q = basis.ncols();
        if q == 0 || !self.gf.is_smooth() {
            return Err(Error::HullViolation);
        }
        let to_theta = |z: &DVector<f64>| -> Vec<f64> { (offset + basis * z).iter().cloned().collect() };
        for _ in 0..50 {
            let theta = to_theta(&z);
            if self.profile(&theta).is_feasible() {
                return Ok(z);
            }
            let u = self.weighted_ee(&theta);
            let jz = self.weighted_ee_jacobian(&theta)? * basis;
            let jtj = jz.transpose() * &jz;
            let rhs = -(jz.transpose() * &u);
            let dz = linalg::solve_spd(&jtj, &rhs).ok_or(Error::HullViolation)?;
            let mut t = 1.0;
            let un = u.norm();
            let mut moved = false;
            for _ in 0..30 {
                let zc = &z + &dz * t;
                if self.weighted_ee(&to_theta(&zc)).norm() < un {
                    z = zc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if self.profile(&to_theta(&z)).is_feasible() {
            Ok(z)
        } else {
            Err(Error::HullViolation)
        }
    }
}

/// Profile of the EL ratio at `theta` using the dataset's final weights.
pub fn profile(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    theta: &[f64],
) -> ElProfile {
    ElProblem::new(kind, ds, gf).profile(theta)
}

/// Maximum PEL/SEL estimator.
pub fn maximize(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    space: &ParamSpace,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, ElProfile)> {
    ElProblem::new(kind, ds, gf).with_config(*cfg).maximize(space)
}

/// Restricted maximum PEL/SEL estimator under `R(theta) = 0`.
pub fn maximize_restricted(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    space: &ParamSpace,
    constraint: &dyn Constraint,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, ElProfile)> {
    let prob = ElProblem::new(kind, ds, gf).with_config(*cfg);
    let (theta_hat, _) = prob.maximize(space)?;
    prob.maximize_restricted_from(constraint, &theta_hat, space)
}
