//! Synthetic stand-in for a social-survey logistic regression file: binary
//! and count covariates, a single strong effect, PPS sampling and bootstrap
//! replication weights, all rescaled to sum to `n`.

use rand::Rng;
use rand_distr::{Bernoulli, Binomial, Distribution, Exp};

use crate::bootstrap::{make_replication_weights, CalibrationSpec};
use crate::data::{rescale_weights, DesignSample, Rows, SurveyDataset};
use crate::error::Result;
use crate::estfn::logistic;
use crate::rng;
use crate::sim::sampling::pps_systematic;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSpec {
    pub n: usize,
    /// Covariates excluding the intercept.
    pub n_covariates: usize,
    pub n_reps: usize,
    /// Index (1-based, as in `x1, x2, ...`) of the covariate with an effect.
    pub strong: usize,
    pub strong_effect: f64,
    pub seed: u64,
}

impl Default for ReplicaSpec {
    fn default() -> Self {
        ReplicaSpec { n: 1552, n_covariates: 14, n_reps: 500, strong: 8, strong_effect: 1.258, seed: 2016 }
    }
}

/// Covariate `j` (1-based): every fifth one is a standardized count out of
/// 52, the rest are binary with prevalence between 0.25 and 0.75.
fn draw_covariate(j: usize, rng: &mut impl Rng) -> f64 {
    if j % 5 == 0 {
        let b = Binomial::new(52, 0.8).expect("valid binomial");
        (b.sample(rng) as f64 - 41.6) / (52.0f64 * 0.8 * 0.2).sqrt()
    } else {
        let p = 0.25 + 0.5 * ((j * 37) % 11) as f64 / 10.0;
        if Bernoulli::new(p).expect("valid probability").sample(rng) { 1.0 } else { 0.0 }
    }
}

/// The replica file together with its covariate names (`x1..xq`). The
/// returned dataset has an intercept column first.
pub fn logistic_replica(spec: &ReplicaSpec) -> Result<(SurveyDataset, Vec<String>)> {
    let q = spec.n_covariates;
    let big_n = 20 * spec.n;
    let mut rng = rng::stream(spec.seed, 0);
    let size_law = Exp::new(1.0).expect("positive rate");
    let mut xs = Vec::with_capacity(big_n * (q + 1));
    let mut ys = Vec::with_capacity(big_n);
    let mut size = Vec::with_capacity(big_n);
    for _ in 0..big_n {
        xs.push(1.0);
        let mut eta = 0.0;
        for j in 1..=q {
            let v = draw_covariate(j, &mut rng);
            if j == spec.strong {
                eta += spec.strong_effect * v;
            }
            xs.push(v);
        }
        let y = if rng.random::<f64>() < logistic(eta) { 1.0 } else { 0.0 };
        ys.push(y);
        size.push(0.5 + size_law.sample(&mut rng));
    }
    let x_pop = Rows::new(q + 1, xs)?;
    let mut srng = rng::stream(spec.seed, 1);
    let (ids, pi) = pps_systematic(&size, spec.n, &mut srng)?;
    let d: Vec<f64> = pi.iter().map(|p| 1.0 / p).collect();
    let x = x_pop.select(&ids);
    let y = Rows::new(1, ids.iter().map(|&i| ys[i]).collect())?;
    let sample = DesignSample::new(y.clone(), x.clone(), d.clone(), ids)?;
    let reps = make_replication_weights(&sample, &CalibrationSpec::none(), spec.n_reps, rng::child_seed(spec.seed, 2))?;
    let ds = SurveyDataset::new(y, x, d, reps.matrix())?;
    let ds = rescale_weights(&ds, spec.n as f64)?;
    let mut names = vec!["(intercept)".to_string()];
    names.extend((1..=q).map(|j| format!("x{j}")));
    Ok((ds.with_names(vec!["y".into()], names.clone()), names))
}
