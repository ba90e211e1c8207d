//! Likelihood ratio statistics, their weighted chi-square limits, Rao-Scott
//! corrections, the Wald baseline and confidence intervals by inversion.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma, Normal};

use crate::data::SurveyDataset;
use crate::el::{AffineConstraint, Constraint, ElKind, ElProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::estfn::{EstimatingFunction, ParamSpace};
use crate::linalg;
use crate::rng;
use crate::varest::{self, FitResult};

pub const DEFAULT_MC_DRAWS: usize = 100_000;
pub const DEFAULT_MC_SEED: u64 = 20_190_611;
/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const EIGEN_THRESHOLD: f64 = 1e-8;
const MC_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibrationMethod {
    /// Monte Carlo on `sum_j delta_j Z_j^2`.
    EigenMc,
    /// First-order Rao-Scott: `a chi2(m)` with `a = mean(delta)`.
    Rs1,
    /// Second-order Rao-Scott: `c chi2(k*)`.
    Rs2,
    /// Standard `chi2(m)`, ignoring the design effect. Kept to show why it
    /// is wrong.
    Naive,
}

impl CalibrationMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eigmc" | "eigen_mc" | "mc" => Ok(CalibrationMethod::EigenMc),
            "rs1" => Ok(CalibrationMethod::Rs1),
            "rs2" => Ok(CalibrationMethod::Rs2),
            "naive" | "chisq" => Ok(CalibrationMethod::Naive),
            _ => Err(Error::InvalidArgument(format!("unknown calibration method {s}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMethod::EigenMc => "EIGEN_MC",
            CalibrationMethod::Rs1 => "RS1",
            CalibrationMethod::Rs2 => "RS2",
            CalibrationMethod::Naive => "NAIVE_CHISQ",
        }
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Law of `sum_j delta_j chi2_j(1)` together with the rule used to turn it
/// into p-values.
#[derive(Debug, Clone)]
pub struct QuadraticFormDist {
    pub eigenvalues: Vec<f64>,
    pub method: CalibrationMethod,
    pub mc_draws: usize,
    pub seed: u64,
    draws: OnceLock<Vec<f64>>,
}

impl PartialEq for QuadraticFormDist {
    fn eq(&self, other: &Self) -> bool {
        self.eigenvalues == other.eigenvalues
            && self.method == other.method
            && self.mc_draws == other.mc_draws
            && self.seed == other.seed
    }
}

impl QuadraticFormDist {
    /// Keeps the eigenvalues above the relative threshold.
    pub fn new(eigenvalues: &[f64], method: CalibrationMethod) -> Self {
        let max = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut kept: Vec<f64> =
            eigenvalues.iter().cloned().filter(|&d| max > 0.0 && d > EIGEN_THRESHOLD * max).collect();
        kept.sort_by(|a, b| b.total_cmp(a));
        QuadraticFormDist {
            eigenvalues: kept,
            method,
            mc_draws: DEFAULT_MC_DRAWS,
            seed: DEFAULT_MC_SEED,
            draws: OnceLock::new(),
        }
    }

    pub fn from_delta(delta: &DMatrix<f64>, method: CalibrationMethod) -> Self {
        let (vals, _) = linalg::sym_eigen(delta);
        Self::new(vals.as_slice(), method)
    }

    pub fn with_mc(mut self, draws: usize, seed: u64) -> Self {
        self.mc_draws = draws.max(1);
        self.seed = seed;
        self.draws = OnceLock::new();
        self
    }

    pub fn with_method(&self, method: CalibrationMethod) -> Self {
        let mut out = self.clone();
        out.method = method;
        out
    }

    pub fn dof(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `(a, m)` with `a = sum(delta)/m`.
    pub fn rs1(&self) -> (f64, f64) {
        let m = self.dof() as f64;
        (self.eigenvalues.iter().sum::<f64>() / m, m)
    }

    /// `(c, k*)` with `c = sum(delta^2)/sum(delta)` and
    /// `k* = sum(delta)^2 / sum(delta^2)`.
    pub fn rs2(&self) -> (f64, f64) {
        let s1: f64 = self.eigenvalues.iter().sum();
        let s2: f64 = self.eigenvalues.iter().map(|d| d * d).sum();
        (s2 / s1, s1 * s1 / s2)
    }

    /// Sorted Monte Carlo sample of the quadratic form. Chunk `k` always uses
    /// stream `k` of the seed, so the sample does not depend on threading.
    pub fn mc_sample(&self) -> &[f64] {
        self.draws.get_or_init(|| {
            let m = self.mc_draws;
            let chunks = m.div_ceil(MC_CHUNK);
            let delta = &self.eigenvalues;
            let mut out: Vec<f64> = (0..chunks)
                .into_par_iter()
                .flat_map_iter(|k| {
                    let len = MC_CHUNK.min(m - k * MC_CHUNK);
                    let mut rng = rng::stream(self.seed, k as u64);
                    (0..len)
                        .map(|_| {
                            delta
                                .iter()
                                .map(|d| {
                                    let z: f64 = StandardNormal.sample(&mut rng);
                                    d * z * z
                                })
                                .sum::<f64>()
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            out.sort_by(f64::total_cmp);
            out
        })
    }

    pub fn p_value(&self, statistic: f64) -> f64 {
        if statistic.is_nan() {
            return f64::NAN;
        }
        if statistic <= 0.0 {
            return 1.0;
        }
        if statistic == f64::INFINITY {
            return 0.0;
        }
        if self.eigenvalues.is_empty() {
            return 0.0;
        }
        let m = self.dof() as f64;
        match self.method {
            CalibrationMethod::EigenMc => {
                let s = self.mc_sample();
                let below = s.partition_point(|&v| v <= statistic);
                (s.len() - below) as f64 / s.len() as f64
            }
            CalibrationMethod::Rs1 => {
                let (a, _) = self.rs1();
                chi2(m).sf(statistic / a)
            }
            CalibrationMethod::Rs2 => {
                let (c, k) = self.rs2();
                Gamma::new(k / 2.0, 1.0 / (2.0 * c)).expect("positive shape").sf(statistic)
            }
            CalibrationMethod::Naive => chi2(m).sf(statistic),
        }
    }

    /// Upper-`alpha` critical value.
    pub fn critical_value(&self, alpha: f64) -> f64 {
        if self.eigenvalues.is_empty() {
            return 0.0;
        }
        let m = self.dof() as f64;
        match self.method {
            CalibrationMethod::EigenMc => upper_order_statistic(self.mc_sample(), alpha),
            CalibrationMethod::Rs1 => {
                let (a, _) = self.rs1();
                a * chi2(m).inverse_cdf(1.0 - alpha)
            }
            CalibrationMethod::Rs2 => {
                let (c, k) = self.rs2();
                Gamma::new(k / 2.0, 1.0 / (2.0 * c)).expect("positive shape").inverse_cdf(1.0 - alpha)
            }
            CalibrationMethod::Naive => chi2(m).inverse_cdf(1.0 - alpha),
        }
    }
}

fn chi2(df: f64) -> ChiSquared {
    ChiSquared::new(df).expect("positive degrees of freedom")
}

/// Order statistic `ceil((1 - alpha) B)` of an ascending sample.
pub fn upper_order_statistic(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len();
    if b == 0 {
        return f64::NAN;
    }
    let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(b) - 1]
}

/// `Delta` (unrestricted, `phi = None`) or `Delta^R` for a `k x p`
/// constraint Jacobian `phi`.
pub fn build_delta(fit: &FitResult, phi: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let omega_half = linalg::sym_sqrt(&fit.omega_hat);
    let w_inv = linalg::spd_inverse(&fit.w_hat, "W")?;
    let gamma = match (&fit.gamma_hat, phi) {
        (Some(g), _) => g,
        (None, None) if fit.r() == fit.p() => {
            // r = p: Gamma cancels
            return Ok(linalg::symmetrize(&(&omega_half * &w_inv * &omega_half)));
        }
        _ => return Err(Error::InvalidArgument("Delta needs a Jacobian for this hypothesis".into())),
    };
    let sigma = fit.sigma()?;
    let a = &omega_half * &w_inv * gamma;
    let core = match phi {
        None => &a * &sigma * a.transpose(),
        Some(phi) => {
            let k = phi.nrows();
            if phi.ncols() != fit.p() {
                return Err(Error::Dimension(format!("Phi has {} columns, need {}", phi.ncols(), fit.p())));
            }
            if linalg::rank(phi, 1e-10) < k {
                return Err(Error::RankDeficient(format!("constraint Jacobian rank < {k}")));
            }
            let m_inv = linalg::spd_inverse(&(phi * &sigma * phi.transpose()), "Phi Sigma Phi'")?;
            let b = &a * &sigma * phi.transpose();
            &b * m_inv * b.transpose()
        }
    };
    Ok(linalg::symmetrize(&core))
}

/// A likelihood ratio statistic together with the estimates it compares.
#[derive(Debug, Clone, PartialEq)]
pub struct LrStatistic {
    pub value: f64,
    /// The null value lies outside the EL support.
    pub infinite: bool,
    pub theta_hat: Vec<f64>,
    pub theta_null: Vec<f64>,
}

impl LrStatistic {
    fn new(r_hat: f64, r_null: f64, theta_hat: Vec<f64>, theta_null: Vec<f64>) -> Self {
        if r_null.is_finite() {
            LrStatistic { value: (2.0 * (r_hat - r_null)).max(0.0), infinite: false, theta_hat, theta_null }
        } else {
            LrStatistic { value: f64::INFINITY, infinite: true, theta_hat, theta_null }
        }
    }
}

/// `2 {r(theta_hat) - r(theta0)}`.
pub fn lr_simple(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    theta0: &[f64],
    space: &ParamSpace,
    cfg: &SolverConfig,
) -> Result<LrStatistic> {
    let prob = ElProblem::new(kind, ds, gf).with_config(*cfg);
    let (theta_hat, prof) = prob.maximize(space)?;
    Ok(lr_simple_from(&prob, &theta_hat, prof.log_ratio, theta0))
}

/// Simple LR given an already computed maximizer.
pub fn lr_simple_from(prob: &ElProblem<'_>, theta_hat: &[f64], r_hat: f64, theta0: &[f64]) -> LrStatistic {
    let r0 = prob.log_ratio(theta0);
    LrStatistic::new(r_hat, r0, theta_hat.to_vec(), theta0.to_vec())
}

/// `2 {r(theta_hat) - r(theta_hat^R)}` for `H0: R(theta) = 0`.
pub fn lr_nested(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    constraint: &dyn Constraint,
    space: &ParamSpace,
    cfg: &SolverConfig,
) -> Result<LrStatistic> {
    let prob = ElProblem::new(kind, ds, gf).with_config(*cfg);
    let (theta_hat, prof) = prob.maximize(space)?;
    lr_nested_from(&prob, &theta_hat, prof.log_ratio, constraint, space)
}

/// Nested LR given an already computed unrestricted maximizer.
pub fn lr_nested_from(
    prob: &ElProblem<'_>,
    theta_hat: &[f64],
    r_hat: f64,
    constraint: &dyn Constraint,
    space: &ParamSpace,
) -> Result<LrStatistic> {
    if crate::linalg::norm(&constraint.eval(theta_hat)) <= 1e-12 {
        return Ok(LrStatistic::new(r_hat, r_hat, theta_hat.to_vec(), theta_hat.to_vec()));
    }
    match prob.maximize_restricted_from(constraint, theta_hat, space) {
        Ok((theta_r, prof_r)) => Ok(LrStatistic::new(r_hat, prof_r.log_ratio, theta_hat.to_vec(), theta_r)),
        Err(Error::HullViolation) => {
            Ok(LrStatistic::new(r_hat, f64::NEG_INFINITY, theta_hat.to_vec(), Vec::new()))
        }
        Err(e) => Err(e),
    }
}

/// Where a test's critical value comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    QuadForm(QuadraticFormDist),
    /// Sorted bootstrap replicates of the LR statistic.
    Bootstrap(Vec<f64>),
    Normal,
}

/// How the caller wants the reference built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalSource {
    Asymptotic(CalibrationMethod),
    Wald,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reference: Reference,
    /// Set when the null value lies outside the EL support.
    pub infinite: bool,
    pub lr: Option<LrStatistic>,
}

impl TestResult {
    pub fn from_lr(lr: LrStatistic, reference: Reference) -> Self {
        let p_value = match &reference {
            Reference::QuadForm(d) => d.p_value(lr.value),
            Reference::Bootstrap(s) => bootstrap_p_value(s, lr.value),
            Reference::Normal => f64::NAN,
        };
        TestResult { statistic: lr.value, p_value, reference, infinite: lr.infinite, lr: Some(lr) }
    }

    pub fn reject(&self, alpha: f64) -> bool {
        match &self.reference {
            Reference::Bootstrap(s) => self.statistic > upper_order_statistic(s, alpha),
            _ => self.p_value < alpha,
        }
    }

    pub fn critical_value(&self, alpha: f64) -> f64 {
        match &self.reference {
            Reference::QuadForm(d) => d.critical_value(alpha),
            Reference::Bootstrap(s) => upper_order_statistic(s, alpha),
            Reference::Normal => Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - alpha / 2.0),
        }
    }

    pub fn method_name(&self) -> &'static str {
        match &self.reference {
            Reference::QuadForm(d) => d.method.name(),
            Reference::Bootstrap(_) => "BOOTSTRAP",
            Reference::Normal => "WALD",
        }
    }
}

fn bootstrap_p_value(sorted: &[f64], stat: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let below = sorted.partition_point(|&v| v < stat);
    (sorted.len() - below) as f64 / sorted.len() as f64
}

/// LR test of `H0: theta = theta0` calibrated by the quadratic form at
/// `theta_hat`.
pub fn simple_test(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    theta0: &[f64],
    method: CalibrationMethod,
    space: &ParamSpace,
    cfg: &SolverConfig,
) -> Result<TestResult> {
    let lr = lr_simple(kind, ds, gf, theta0, space, cfg)?;
    let fit = varest::plugin_components(kind, ds, gf, &lr.theta_hat)?;
    let dist = QuadraticFormDist::from_delta(&build_delta(&fit, None)?, method);
    Ok(TestResult::from_lr(lr, Reference::QuadForm(dist)))
}

/// LR test of `H0: R(theta) = 0`; `Delta^R` uses `Phi(theta_hat)`.
pub fn nested_test(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    constraint: &dyn Constraint,
    method: CalibrationMethod,
    space: &ParamSpace,
    cfg: &SolverConfig,
) -> Result<TestResult> {
    let lr = lr_nested(kind, ds, gf, constraint, space, cfg)?;
    let fit = varest::plugin_components(kind, ds, gf, &lr.theta_hat)?;
    let phi = constraint.jacobian(&lr.theta_hat);
    let dist = QuadraticFormDist::from_delta(&build_delta(&fit, Some(&phi))?, method);
    Ok(TestResult::from_lr(lr, Reference::QuadForm(dist)))
}

/// Two-sided Wald test of `c'theta = value0` with the sandwich variance.
pub fn wald_test(fit: &FitResult, contrast: &[f64], value0: f64) -> Result<TestResult> {
    let v = fit
        .v_hat
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("Wald test needs the sandwich variance".into()))?;
    if contrast.len() != fit.p() {
        return Err(Error::Dimension("contrast length differs from p".into()));
    }
    let est = linalg::dot(contrast, &fit.theta_hat);
    let c = nalgebra::DVector::from_column_slice(contrast);
    let var = (c.transpose() * v * &c)[(0, 0)] / fit.n as f64;
    let se = var.max(0.0).sqrt();
    if !(se > 0.0) {
        return Err(Error::Degenerate("zero standard error in Wald test".into()));
    }
    let z = (est - value0) / se;
    let p = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(z.abs());
    Ok(TestResult { statistic: z, p_value: p.min(1.0), reference: Reference::Normal, infinite: false, lr: None })
}

/// Scalar quantity an interval is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiTarget {
    /// The whole (scalar) parameter, `p = 1`.
    Scalar,
    /// One coordinate of a vector parameter, the rest profiled out.
    Component(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub critical: f64,
    /// The search hit the edge of the data range on that side.
    pub lower_unbounded: bool,
    pub upper_unbounded: bool,
}

impl ConfidenceInterval {
    /// Strict containment, matching the step-function convention used for
    /// quantile intervals.
    pub fn covers(&self, value: f64) -> bool {
        self.lower < value && value < self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `{theta: LR(theta) <= critical}` for a scalar target. Smooth targets are
/// bracketed by doubling steps and bisected; nonsmooth scalar families are
/// scanned over their sorted step points outward from the estimate.
pub fn ci_invert(
    prob: &ElProblem<'_>,
    target: CiTarget,
    critical: f64,
    space: &ParamSpace,
) -> Result<ConfidenceInterval> {
    let (theta_hat, prof) = prob.maximize(space)?;
    ci_invert_from(prob, target, critical, space, &theta_hat, prof.log_ratio, None)
}

/// As [`ci_invert`] with a known maximizer; `scale` is a rough width used
/// for the first bracketing step.
pub fn ci_invert_from(
    prob: &ElProblem<'_>,
    target: CiTarget,
    critical: f64,
    space: &ParamSpace,
    theta_hat: &[f64],
    r_hat: f64,
    scale: Option<f64>,
) -> Result<ConfidenceInterval> {
    let p = prob.gf().p();
    if !prob.gf().is_smooth() {
        if target != CiTarget::Scalar || p != 1 {
            return Err(Error::InvalidArgument("step-point intervals need a scalar family".into()));
        }
        return step_interval(prob, critical, theta_hat[0], r_hat);
    }
    let j = match target {
        CiTarget::Scalar if p == 1 => 0,
        CiTarget::Scalar => return Err(Error::InvalidArgument("Scalar target needs p = 1".into())),
        CiTarget::Component(j) if j < p => j,
        CiTarget::Component(j) => return Err(Error::InvalidArgument(format!("component {j} out of range"))),
    };
    let est = theta_hat[j];
    let lr_at = |v: f64| -> f64 {
        if !(space.lower[j] <= v && v <= space.upper[j]) {
            return f64::INFINITY;
        }
        let r0 = if p == 1 {
            prob.log_ratio(&[v])
        } else {
            let c = AffineConstraint::fix(p, j, v);
            match prob.maximize_restricted_from(&c, theta_hat, space) {
                Ok((_, pr)) => pr.log_ratio,
                Err(_) => f64::NEG_INFINITY,
            }
        };
        if r0.is_finite() {
            (2.0 * (r_hat - r0)).max(0.0)
        } else {
            f64::INFINITY
        }
    };
    let step0 = scale.filter(|s| *s > 0.0 && s.is_finite()).unwrap_or(0.1 * (1.0 + est.abs()));
    let bound = |dir: f64| -> (f64, bool) {
        let mut inside = est;
        let mut step = step0;
        let mut outside = None;
        for _ in 0..60 {
            let v = est + dir * step;
            if lr_at(v) > critical {
                outside = Some(v);
                break;
            }
            inside = v;
            step *= 2.0;
        }
        let Some(mut out) = outside else {
            return (inside, true);
        };
        let tol = 1e-6 * (1.0 + est.abs());
        while (out - inside).abs() > tol {
            let mid = 0.5 * (out + inside);
            if lr_at(mid) > critical {
                out = mid;
            } else {
                inside = mid;
            }
        }
        (0.5 * (out + inside), false)
    };
    let (lower, lu) = bound(-1.0);
    let (upper, uu) = bound(1.0);
    Ok(ConfidenceInterval { estimate: est, lower, upper, critical, lower_unbounded: lu, upper_unbounded: uu })
}

/// LR is constant between consecutive step points, so the accepted set is
/// `[pts[l], pts[u + 1])`.
fn step_interval(prob: &ElProblem<'_>, critical: f64, est: f64, r_hat: f64) -> Result<ConfidenceInterval> {
    let pts = prob.step_points();
    let k = pts.partition_point(|&v| v < est);
    if k >= pts.len() {
        return Err(Error::Degenerate("estimate is not a step point".into()));
    }
    let accepted = |i: usize| -> bool {
        let r0 = prob.log_ratio(&[pts[i]]);
        r0.is_finite() && 2.0 * (r_hat - r0) <= critical
    };
    let mut u = k;
    while u + 1 < pts.len() && accepted(u + 1) {
        u += 1;
    }
    let (upper, uu) = if u + 1 < pts.len() { (pts[u + 1], false) } else { (pts[u], true) };
    let mut l = k;
    while l > 0 && accepted(l - 1) {
        l -= 1;
    }
    Ok(ConfidenceInterval {
        estimate: est,
        lower: pts[l],
        upper,
        critical,
        lower_unbounded: l == 0,
        upper_unbounded: uu,
    })
}
