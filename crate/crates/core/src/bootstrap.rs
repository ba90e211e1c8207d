//! With-replacement bootstrap with chi-square calibration: replication
//! weights for public-use files and bootstrap calibration of LR tests.

use rand::Rng;
use rayon::prelude::*;

use crate::data::{DesignSample, Rows, SurveyDataset};
use crate::el::{Constraint, ElKind, ElProblem, Recentred, SolverConfig};
use crate::error::{Error, Result};
use crate::estfn::{EstimatingFunction, ParamSpace};
use crate::eltest::upper_order_statistic;
use crate::linalg;
use crate::rng::{self, StreamRng};
use nalgebra::{DMatrix, DVector};

/// Calibration variables (columns of the sample's `x`) and their target
/// totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub columns: Vec<usize>,
    pub totals: Vec<f64>,
}

impl CalibrationSpec {
    pub fn new(columns: Vec<usize>, totals: Vec<f64>) -> Result<Self> {
        if columns.len() != totals.len() {
            return Err(Error::Dimension("calibration columns and totals differ".into()));
        }
        Ok(CalibrationSpec { columns, totals })
    }

    /// No calibration: bootstrap weights are the resampled design weights.
    pub fn none() -> Self {
        CalibrationSpec { columns: Vec::new(), totals: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub weights: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Number of units whose calibrated weight is not positive. The closed
    /// form does not prevent these; they are kept and reported.
    pub nonpositive: usize,
}

/// `w_i = d_i (1 + x_i' lambda)` with
/// `lambda = (sum d x x')^{-1} (T - sum d x)`, the minimizer of
/// `sum (w - d)^2 / d` subject to `sum w x = T`.
pub fn calibrate_chisq(d: &[f64], x: &Rows, totals: &[f64]) -> Result<Calibrated> {
    calibrate_counts(d, x, totals, None)
}

/// Calibration over a multiset in which unit `i` appears `counts[i]` times;
/// the constraint is `sum counts_i w_i x_i = T`.
pub fn calibrate_counts(d: &[f64], x: &Rows, totals: &[f64], counts: Option<&[f64]>) -> Result<Calibrated> {
    let n = d.len();
    let q = x.ncols();
    if x.nrows() != n || totals.len() != q {
        return Err(Error::Dimension("calibration inputs differ in shape".into()));
    }
    if q == 0 {
        return Ok(Calibrated { weights: d.to_vec(), lambda: Vec::new(), nonpositive: 0 });
    }
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut that = DVector::<f64>::zeros(q);
    for i in 0..n {
        let h = counts.map_or(1.0, |c| c[i]);
        if h == 0.0 {
            continue;
        }
        let xi = x.row(i);
        let c = h * d[i];
        for a in 0..q {
            that[a] += c * xi[a];
            for b in 0..q {
                gram[(a, b)] += c * xi[a] * xi[b];
            }
        }
    }
    let rhs = DVector::from_column_slice(totals) - that;
    let svd = gram.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > linalg::MAX_CONDITION {
        return Err(Error::SingularGram);
    }
    let lambda = linalg::solve_spd(&gram, &rhs).ok_or(Error::SingularGram)?;
    let weights: Vec<f64> = (0..n)
        .map(|i| d[i] * (1.0 + linalg::dot(x.row(i), lambda.as_slice())))
        .collect();
    let nonpositive = (0..n)
        .filter(|&i| counts.map_or(true, |c| c[i] > 0.0) && weights[i] <= 0.0)
        .count();
    Ok(Calibrated { weights, lambda: lambda.iter().cloned().collect(), nonpositive })
}

/// One bootstrap replicate folded back onto the original units.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw {
    /// Times each unit was drawn; sums to `n`.
    pub counts: Vec<u32>,
    /// Calibrated per-draw weight `w*_i` (zero for units not drawn).
    pub unit_weights: Vec<f64>,
    pub nonpositive: usize,
}

impl BootstrapDraw {
    /// Replication weights `h_i w*_i`.
    pub fn boot_weights(&self) -> Vec<f64> {
        self.counts.iter().zip(&self.unit_weights).map(|(&h, w)| h as f64 * w).collect()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&h| h as f64).collect()
    }
}

fn calibration_matrix(sample: &DesignSample, spec: &CalibrationSpec) -> Result<Rows> {
    if let Some(&c) = spec.columns.iter().find(|&&c| c >= sample.x.ncols()) {
        return Err(Error::InvalidArgument(format!("calibration column {c} out of range")));
    }
    Ok(sample.x.select_columns(&spec.columns))
}

/// `sum_S d_i x_i` over the calibration columns.
pub fn ht_totals(sample: &DesignSample, spec: &CalibrationSpec) -> Result<Vec<f64>> {
    let xc = calibration_matrix(sample, spec)?;
    Ok((0..xc.ncols())
        .map(|a| (0..sample.n()).map(|i| sample.design_weights[i] * xc.get(i, a)).sum())
        .collect())
}

/// Draw `n` units with replacement and calibrate the resampled design
/// weights to the full-sample HT totals of the calibration columns.
pub fn draw_bootstrap(sample: &DesignSample, spec: &CalibrationSpec, rng: &mut StreamRng) -> Result<BootstrapDraw> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::Validation("bootstrap needs at least two units".into()));
    }
    let xc = calibration_matrix(sample, spec)?;
    let t_ht = ht_totals(sample, spec)?;
    for _attempt in 0..10 {
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let h: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        match calibrate_counts(&sample.design_weights, &xc, &t_ht, Some(&h)) {
            Ok(cal) => {
                let unit_weights =
                    cal.weights.iter().zip(&counts).map(|(w, &c)| if c > 0 { *w } else { 0.0 }).collect();
                return Ok(BootstrapDraw { counts, unit_weights, nonpositive: cal.nonpositive });
            }
            Err(Error::SingularGram) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SingularGram)
}

/// `B` bootstrap replicates; replicate `b` uses RNG stream `b` of `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSet {
    pub draws: Vec<BootstrapDraw>,
}

impl ReplicationSet {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// `n x B` matrix of replication weights.
    pub fn matrix(&self) -> Rows {
        let n = self.draws.first().map_or(0, |d| d.counts.len());
        let cols: Vec<Vec<f64>> = self.draws.iter().map(|d| d.boot_weights()).collect();
        if cols.is_empty() {
            return Rows::empty(n);
        }
        Rows::from_columns(&cols).expect("equal-length columns")
    }

    /// Recover draws from the replication columns of a public-use file.
    /// Counts are `round(w_i^(b) / w_i)` (at least one for a positive
    /// replicate weight) and `w*_i = w_i^(b) / h_i`; this inverts the
    /// construction exactly whenever the calibration adjustment moves a
    /// weight by less than half a count.
    pub fn from_dataset(ds: &SurveyDataset) -> Result<Self> {
        let nb = ds.n_replicates();
        if nb == 0 {
            return Err(Error::Validation("no replication weights".into()));
        }
        let n = ds.n();
        let draws = (0..nb)
            .map(|b| {
                let mut counts = vec![0u32; n];
                let mut unit_weights = vec![0.0; n];
                let mut nonpositive = 0;
                for i in 0..n {
                    let wb = ds.rep_weights.get(i, b);
                    if wb > 0.0 {
                        let h = (wb / ds.final_weights[i]).round().max(1.0);
                        counts[i] = h as u32;
                        unit_weights[i] = wb / h;
                    } else if wb < 0.0 {
                        nonpositive += 1;
                    }
                }
                BootstrapDraw { counts, unit_weights, nonpositive }
            })
            .collect();
        Ok(ReplicationSet { draws })
    }
}

/// Replication weights for a design sample (`n x B` via
/// [`ReplicationSet::matrix`]).
pub fn make_replication_weights(
    sample: &DesignSample,
    spec: &CalibrationSpec,
    b: usize,
    seed: u64,
) -> Result<ReplicationSet> {
    if b == 0 {
        return Err(Error::InvalidArgument("B must be at least 1".into()));
    }
    let draws = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            draw_bootstrap(sample, spec, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationSet { draws })
}

/// Null hypothesis re-centred at the full-sample estimate.
#[derive(Clone, Copy)]
pub enum BootNull<'a> {
    /// `LR* = 2 {r*(theta*) - r*(theta_hat)}`.
    Simple,
    /// `LR* = 2 {r*(theta*) - max r* subject to R(theta) = R(theta_hat)}`.
    Nested(&'a dyn Constraint),
}

/// Sorted bootstrap replicates of the LR statistic. Replicates whose inner
/// problems fail are dropped; a null point outside a replicate's support
/// contributes `+inf`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_lr_sample(
    kind: ElKind,
    x: &Rows,
    y: &Rows,
    gf: &dyn EstimatingFunction,
    reps: &ReplicationSet,
    theta_hat: &[f64],
    null: BootNull<'_>,
    space: &ParamSpace,
    cfg: &SolverConfig,
) -> Vec<f64> {
    let warm = ParamSpace { initial: theta_hat.to_vec(), ..space.clone() };
    let recentred = match null {
        BootNull::Nested(c) => Some(Recentred::new(c, theta_hat)),
        BootNull::Simple => None,
    };
    let mut out: Vec<f64> = reps
        .draws
        .par_iter()
        .filter_map(|draw| {
            let counts = draw.counts_f64();
            let prob = ElProblem::with_counts(kind, x, y, gf, &counts, &draw.unit_weights).ok()?.with_config(*cfg);
            let (theta_star, prof_star) = prob.maximize(&warm).ok()?;
            let r_star = prof_star.log_ratio;
            let r_null = match &recentred {
                None => prob.log_ratio(theta_hat),
                Some(c) => match prob.maximize_restricted_from(c, &theta_star, &warm) {
                    Ok((_, pr)) => pr.log_ratio,
                    Err(Error::HullViolation) => f64::NEG_INFINITY,
                    Err(_) => return None,
                },
            };
            if !r_star.is_finite() {
                return None;
            }
            Some(if r_null.is_finite() { (2.0 * (r_star - r_null)).max(0.0) } else { f64::INFINITY })
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `b_alpha`: order statistic `ceil((1 - alpha) B)` of the sorted sample.
pub fn bootstrap_critical_value(sorted: &[f64], alpha: f64) -> Result<f64> {
    let finite = sorted.iter().filter(|v| v.is_finite()).count();
    if finite < 20 {
        return Err(Error::UnstableQuantile(finite));
    }
    Ok(upper_order_statistic(sorted, alpha))
}
