//! PPS sampling, nonresponse adjustment and final/replication weighting of
//! simulated samples.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bootstrap::{calibrate_chisq, make_replication_weights, CalibrationSpec, ReplicationSet};
use crate::data::{DesignSample, Rows};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::sim::population::Population;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Calibration only.
    A,
    /// Uniform nonresponse with ratio adjustment, then calibration.
    B,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(Error::InvalidArgument(format!("unknown scenario '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    /// Expected final sample size.
    pub n_target: usize,
    pub response_prob: f64,
    /// Calibrate final and replication weights on `x1, x2`.
    pub calibrate: bool,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n_target: usize) -> Self {
        let response_prob = match scenario {
            Scenario::A => 1.0,
            Scenario::B => 0.7,
        };
        ScenarioSpec { scenario, n_target, response_prob, calibrate: true }
    }

    /// Initial sample size.
    pub fn n0(&self) -> usize {
        match self.scenario {
            Scenario::A => self.n_target,
            Scenario::B => (self.n_target as f64 / self.response_prob).round() as usize,
        }
    }
}

/// Inclusion probabilities `n z_i / sum z`.
pub fn inclusion_probabilities(size: &[f64], n: usize) -> Result<Vec<f64>> {
    if let Some(i) = size.iter().position(|z| !(*z > 0.0) || !z.is_finite()) {
        return Err(Error::InvalidArgument(format!("size measure of unit {i} is not positive")));
    }
    let total: f64 = size.iter().sum();
    let pi: Vec<f64> = size.iter().map(|z| n as f64 * z / total).collect();
    if let Some((unit, &p)) = pi.iter().enumerate().find(|(_, p)| **p >= 1.0) {
        return Err(Error::CertaintyUnit { unit, pi: p });
    }
    Ok(pi)
}

/// Randomized systematic PPS: shuffle the units, cumulate their inclusion
/// probabilities and take the units hit by `u, u + 1, ..., u + n - 1` for a
/// uniform start `u`. Returns sorted unit indices and their `pi`.
pub fn pps_systematic(size: &[f64], n: usize, rng: &mut StreamRng) -> Result<(Vec<usize>, Vec<f64>)> {
    if n == 0 || n > size.len() {
        return Err(Error::InvalidArgument(format!("sample size {n} for a population of {}", size.len())));
    }
    let pi = inclusion_probabilities(size, n)?;
    let mut order: Vec<usize> = (0..size.len()).collect();
    order.shuffle(rng);
    let u: f64 = rng.random();
    let mut picked = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut next = u;
    for &i in &order {
        let upper = cum + pi[i];
        if next < upper && picked.len() < n {
            picked.push(i);
            next += 1.0;
        }
        cum = upper;
    }
    // rounding in the cumulated sum can leave the last point just past the end
    if picked.len() < n {
        if let Some(&last) = order.iter().rev().find(|i| !picked.contains(i)) {
            picked.push(last);
        }
    }
    picked.sort_unstable();
    let p = picked.iter().map(|&i| pi[i]).collect();
    Ok((picked, p))
}

/// PPS sample of `n` units with the population's size measure; `y` is left
/// empty because responses are attached later.
pub fn pps_randomized_systematic(pop: &Population, n: usize, seed: u64) -> Result<DesignSample> {
    let mut rng = rng::stream(seed, 0);
    let (ids, pi) = pps_systematic(&pop.size_measure, n, &mut rng)?;
    let d = pi.iter().map(|p| 1.0 / p).collect();
    DesignSample::new(Rows::empty(ids.len()), pop.x.select(&ids), d, ids)
}

/// Bernoulli response with probability `response_prob`; respondents get
/// `d_0i = d_i (sum_S0 d) / (sum_S d)`.
pub fn apply_nonresponse_ratio(sample: &DesignSample, response_prob: f64, rng: &mut StreamRng) -> Result<DesignSample> {
    if !(response_prob > 0.0 && response_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!("response probability {response_prob} outside (0,1]")));
    }
    if response_prob == 1.0 {
        return Ok(sample.clone());
    }
    let keep: Vec<usize> = (0..sample.n()).filter(|_| rng.random::<f64>() < response_prob).collect();
    if keep.is_empty() {
        return Err(Error::EmptyRespondents);
    }
    let total0: f64 = sample.design_weights.iter().sum();
    let total: f64 = keep.iter().map(|&i| sample.design_weights[i]).sum();
    let ratio = total0 / total;
    let d0 = keep.iter().map(|&i| sample.design_weights[i] * ratio).collect();
    let ids = keep.iter().map(|&i| sample.unit_ids[i]).collect();
    DesignSample::new(sample.y.select(&keep), sample.x.select(&keep), d0, ids)
}

/// Columns of `x` used for calibration: `x1` and `x2`.
pub const CALIBRATION_COLUMNS: [usize; 2] = [1, 2];

/// One simulated public-use file, without responses.
#[derive(Debug, Clone)]
pub struct SimSample {
    /// Respondents with their (nonresponse-adjusted) design weights.
    pub design: DesignSample,
    pub final_weights: Vec<f64>,
    pub reps: ReplicationSet,
    pub n0: usize,
}

impl SimSample {
    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn ids(&self) -> &[usize] {
        &self.design.unit_ids
    }

    pub fn rep_matrix(&self) -> Rows {
        self.reps.matrix()
    }
}

/// Draw a sample under a scenario and build its final and replication
/// weights. Everything random comes from `seed`.
pub fn draw_sim_sample(pop: &Population, spec: &ScenarioSpec, n_reps: usize, seed: u64) -> Result<SimSample> {
    let n0 = spec.n0();
    let s0 = pps_randomized_systematic(pop, n0, rng::child_seed(seed, 1))?;
    let mut nr_rng = rng::stream(rng::child_seed(seed, 2), 0);
    let design = match spec.scenario {
        Scenario::A => s0,
        Scenario::B => apply_nonresponse_ratio(&s0, spec.response_prob, &mut nr_rng)?,
    };
    let (final_weights, cal_spec) = if spec.calibrate {
        let xc = design.x.select_columns(&CALIBRATION_COLUMNS);
        let totals = pop.calibration_totals();
        let cal = calibrate_chisq(&design.design_weights, &xc, &totals)?;
        (cal.weights, CalibrationSpec::new(CALIBRATION_COLUMNS.to_vec(), totals)?)
    } else {
        (design.design_weights.clone(), CalibrationSpec::none())
    };
    let reps = make_replication_weights(&design, &cal_spec, n_reps, rng::child_seed(seed, 3))?;
    Ok(SimSample { design, final_weights, reps, n0 })
}
