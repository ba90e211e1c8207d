//! Estimating-function families `g(x, y, theta)` and their Jacobians.
//!
//! A finite-population parameter is the root of the census estimating
//! equations `sum_i g(x_i, y_i, theta) = 0`. Evaluators are pure and can be
//! shared across threads.

use std::fmt;
use std::sync::Arc;

use crate::data::Rows;
use crate::error::{Error, Result};

pub trait EstimatingFunction: Send + Sync {
    /// Output dimension of `g`.
    fn r(&self) -> usize;
    /// Parameter dimension.
    fn p(&self) -> usize;
    fn is_smooth(&self) -> bool;

    /// Write `g(x, y, theta)` into `out` (length `r`).
    fn eval(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]);

    /// Write the `r x p` Jacobian, row-major, into `out`. Returns `false`
    /// for nonsmooth families.
    fn jacobian(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) -> bool;

    /// Check that a record is admissible for this family.
    fn check_record(&self, _x: &[f64], _y: &[f64]) -> Result<()> {
        Ok(())
    }

    /// Jump locations of a nonsmooth scalar estimating function; `None` for
    /// smooth families.
    fn step_point(&self, _x: &[f64], _y: &[f64]) -> Option<f64> {
        None
    }

    fn name(&self) -> String;
}

/// `g = y - theta`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanFamily;

impl EstimatingFunction for MeanFamily {
    fn r(&self) -> usize {
        1
    }
    fn p(&self) -> usize {
        1
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn eval(&self, _x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = y[0] - theta[0];
    }
    fn jacobian(&self, _x: &[f64], _y: &[f64], _theta: &[f64], out: &mut [f64]) -> bool {
        out[0] = -1.0;
        true
    }
    fn name(&self) -> String {
        "mean".into()
    }
}

/// `g = x (y - x'theta)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearRegression {
    pub p: usize,
}

impl EstimatingFunction for LinearRegression {
    fn r(&self) -> usize {
        self.p
    }
    fn p(&self) -> usize {
        self.p
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn eval(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        let resid = y[0] - dot(x, theta);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi * resid;
        }
    }
    fn jacobian(&self, x: &[f64], _y: &[f64], _theta: &[f64], out: &mut [f64]) -> bool {
        let p = self.p;
        for a in 0..p {
            for b in 0..p {
                out[a * p + b] = -x[a] * x[b];
            }
        }
        true
    }
    fn check_record(&self, x: &[f64], _y: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!(
                "linear regression expects {} covariates, record has {}",
                self.p,
                x.len()
            )));
        }
        Ok(())
    }
    fn name(&self) -> String {
        "linear".into()
    }
}

/// `g = x {y - mu(x'theta)}` with the logit link.
#[derive(Debug, Clone, Copy)]
pub struct LogisticRegression {
    pub p: usize,
}

/// Logistic function, stable for large `|t|`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl EstimatingFunction for LogisticRegression {
    fn r(&self) -> usize {
        self.p
    }
    fn p(&self) -> usize {
        self.p
    }
    fn is_smooth(&self) -> bool {
        true
    }
    fn eval(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        let resid = y[0] - logistic(dot(x, theta));
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi * resid;
        }
    }
    fn jacobian(&self, x: &[f64], _y: &[f64], theta: &[f64], out: &mut [f64]) -> bool {
        let mu = logistic(dot(x, theta));
        let v = mu * (1.0 - mu);
        let p = self.p;
        for a in 0..p {
            for b in 0..p {
                out[a * p + b] = -v * x[a] * x[b];
            }
        }
        true
    }
    fn check_record(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!(
                "logistic regression expects {} covariates, record has {}",
                self.p,
                x.len()
            )));
        }
        if y[0] != 0.0 && y[0] != 1.0 {
            return Err(Error::Validation(format!("logistic response {} not in {{0,1}}", y[0])));
        }
        Ok(())
    }
    fn name(&self) -> String {
        "logistic".into()
    }
}

/// `g = I(y <= theta) - tau`; nonsmooth, no Jacobian.
#[derive(Debug, Clone, Copy)]
pub struct Quantile {
    tau: f64,
}

impl Quantile {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {tau} outside (0,1)")));
        }
        Ok(Quantile { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl EstimatingFunction for Quantile {
    fn r(&self) -> usize {
        1
    }
    fn p(&self) -> usize {
        1
    }
    fn is_smooth(&self) -> bool {
        false
    }
    fn eval(&self, _x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        out[0] = if y[0] <= theta[0] { 1.0 - self.tau } else { -self.tau };
    }
    fn jacobian(&self, _x: &[f64], _y: &[f64], _theta: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn step_point(&self, _x: &[f64], y: &[f64]) -> Option<f64> {
        Some(y[0])
    }
    fn name(&self) -> String {
        format!("quantile({})", self.tau)
    }
}

type EvalFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;

/// User-supplied estimating function, possibly over-identified (`r > p`).
#[derive(Clone)]
pub struct Custom {
    r: usize,
    p: usize,
    eval: Arc<EvalFn>,
    jac: Option<Arc<EvalFn>>,
    name: String,
}

impl Custom {
    pub fn new(
        r: usize,
        p: usize,
        eval: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        jac: Option<Arc<EvalFn>>,
    ) -> Result<Self> {
        if p == 0 || p > r {
            return Err(Error::InvalidArgument(format!("need 1 <= p <= r, got p={p}, r={r}")));
        }
        Ok(Custom { r, p, eval: Arc::new(eval), jac, name: "custom".into() })
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom {{ r: {}, p: {}, name: {} }}", self.r, self.p, self.name)
    }
}

impl EstimatingFunction for Custom {
    fn r(&self) -> usize {
        self.r
    }
    fn p(&self) -> usize {
        self.p
    }
    fn is_smooth(&self) -> bool {
        self.jac.is_some()
    }
    fn eval(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.eval)(x, y, theta, out)
    }
    fn jacobian(&self, x: &[f64], y: &[f64], theta: &[f64], out: &mut [f64]) -> bool {
        match &self.jac {
            Some(j) => {
                j(x, y, theta, out);
                true
            }
            None => false,
        }
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Built-in family selector, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Mean,
    Linear,
    Logistic,
    Quantile(f64),
}

impl Family {
    pub fn parse(s: &str) -> Result<Family> {
        match s {
            "mean" => Ok(Family::Mean),
            "linear" => Ok(Family::Linear),
            "logistic" => Ok(Family::Logistic),
            _ => Err(Error::InvalidArgument(format!(
                "unknown family {s} (expected mean, linear, logistic)"
            ))),
        }
    }

    /// Instantiate for `p` covariates (ignored by scalar families).
    pub fn build(&self, p: usize) -> Result<Box<dyn EstimatingFunction>> {
        Ok(match *self {
            Family::Mean => Box::new(MeanFamily),
            Family::Linear => Box::new(LinearRegression { p }),
            Family::Logistic => Box::new(LogisticRegression { p }),
            Family::Quantile(tau) => Box::new(Quantile::new(tau)?),
        })
    }
}

/// Box bounds on theta plus a starting value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
}

impl ParamSpace {
    pub fn unbounded(initial: Vec<f64>) -> Self {
        let p = initial.len();
        ParamSpace { lower: vec![f64::NEG_INFINITY; p], upper: vec![f64::INFINITY; p], initial }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        if lower.len() != initial.len() || upper.len() != initial.len() {
            return Err(Error::Dimension("bounds and initial value differ in length".into()));
        }
        for j in 0..initial.len() {
            if !(lower[j] <= initial[j] && initial[j] <= upper[j]) {
                return Err(Error::InvalidArgument(format!(
                    "initial[{j}] = {} outside [{}, {}]",
                    initial[j], lower[j], upper[j]
                )));
            }
        }
        Ok(ParamSpace { lower, upper, initial })
    }

    pub fn p(&self) -> usize {
        self.initial.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `g_i(theta)` for every record, as an `n x r` table.
pub fn eval_rows(gf: &dyn EstimatingFunction, x: &Rows, y: &Rows, theta: &[f64]) -> Rows {
    let n = y.nrows();
    let r = gf.r();
    let mut out = Rows::zeros(n, r);
    for i in 0..n {
        gf.eval(x_row(x, i), y.row(i), theta, out.row_mut(i));
    }
    out
}

/// Covariate row `i`, or the empty slice when there are no covariates.
#[inline]
pub(crate) fn x_row(x: &Rows, i: usize) -> &[f64] {
    if x.ncols() == 0 {
        &[]
    } else {
        x.row(i)
    }
}

/// Validate every record against the family.
pub fn check_records(gf: &dyn EstimatingFunction, x: &Rows, y: &Rows) -> Result<()> {
    for i in 0..y.nrows() {
        gf.check_record(x_row(x, i), y.row(i)).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("row {}: {m}", i + 1)),
            Error::Dimension(m) => Error::Dimension(format!("row {}: {m}", i + 1)),
            other => other,
        })?;
    }
    Ok(())
}
