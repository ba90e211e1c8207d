//! Synthetic finite populations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, ChiSquared, Distribution, Exp, StandardNormal};

use crate::data::Rows;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// `sigma = 1`.
    S1,
    /// `sigma = 3`.
    S2,
    /// `sigma` chosen so that `corr(y, x'theta) = rho`.
    S3,
}

impl SigmaMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "s1" | "sigma1" => Ok(SigmaMode::S1),
            "2" | "s2" | "sigma2" => Ok(SigmaMode::S2),
            "3" | "s3" | "sigma3" => Ok(SigmaMode::S3),
            other => Err(Error::InvalidArgument(format!("unknown sigma mode '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SigmaMode::S1 => "sigma1",
            SigmaMode::S2 => "sigma2",
            SigmaMode::S3 => "sigma3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopulationModel {
    /// `y = x'theta + sigma eps` with `x = (1, x1, x2, x3)`,
    /// `x1 ~ Bern(.5)`, `x2 ~ U(0,1)`, `x3 ~ 0.5 + Exp(2)`, `eps ~ N(0,1)`.
    Linear,
    /// `y = 0.5 + x1 + x2 + eps`, `x1 ~ Bern(.5)`, `x2 ~ Exp(1)`,
    /// `eps ~ chi2(3)`.
    Quantile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub size: usize,
    pub model: PopulationModel,
    pub rho: f64,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn linear(size: usize, seed: u64) -> Self {
        PopulationSpec { size, model: PopulationModel::Linear, rho: 0.8, seed }
    }

    pub fn quantile(size: usize, seed: u64) -> Self {
        PopulationSpec { size, model: PopulationModel::Quantile, rho: 0.8, seed }
    }
}

/// Covariates, error draws and the PPS size measure of one finite
/// population. Responses are built on demand so that several parameter
/// settings share the same covariates and errors.
#[derive(Debug, Clone)]
pub struct Population {
    pub spec: PopulationSpec,
    /// `N x p` with a leading intercept column.
    pub x: Rows,
    /// Linear model: standard normal errors made exactly orthogonal to the
    /// columns of `x` and rescaled to unit population variance, so the census
    /// regression coefficients equal the model ones. Quantile model: raw
    /// `chi2(3)` draws.
    pub noise: Vec<f64>,
    /// PPS size measure (`x3` for the linear model, `0.5 + x2` otherwise).
    pub size_measure: Vec<f64>,
}

pub const NULL_THETA: [f64; 4] = [1.0, 1.0, 1.0, 1.0];

pub fn generate_population(spec: &PopulationSpec) -> Result<Population> {
    let n = spec.size;
    if n < 10 {
        return Err(Error::InvalidArgument(format!("population size {n} is too small")));
    }
    let mut rng = rng::stream(spec.seed, 0);
    let bern = Bernoulli::new(0.5).expect("valid probability");
    match spec.model {
        PopulationModel::Linear => {
            let exp2 = Exp::new(2.0).expect("positive rate");
            let mut data = Vec::with_capacity(4 * n);
            let mut raw = Vec::with_capacity(n);
            for _ in 0..n {
                let x1 = if bern.sample(&mut rng) { 1.0 } else { 0.0 };
                let x2: f64 = rng.random();
                let x3 = 0.5 + exp2.sample(&mut rng);
                data.extend_from_slice(&[1.0, x1, x2, x3]);
                raw.push(StandardNormal.sample(&mut rng));
            }
            let x = Rows::new(4, data)?;
            let noise = orthogonal_noise(&x, &raw)?;
            let size_measure = x.column(3);
            Ok(Population { spec: spec.clone(), x, noise, size_measure })
        }
        PopulationModel::Quantile => {
            let exp1 = Exp::new(1.0).expect("positive rate");
            let chi = ChiSquared::new(3.0).expect("positive dof");
            let mut data = Vec::with_capacity(3 * n);
            let mut noise = Vec::with_capacity(n);
            for _ in 0..n {
                let x1 = if bern.sample(&mut rng) { 1.0 } else { 0.0 };
                let x2 = exp1.sample(&mut rng);
                data.extend_from_slice(&[1.0, x1, x2]);
                noise.push(chi.sample(&mut rng));
            }
            let x = Rows::new(3, data)?;
            let size_measure = x.column(2).iter().map(|v| 0.5 + v).collect();
            Ok(Population { spec: spec.clone(), x, noise, size_measure })
        }
    }
}

fn gram(x: &Rows) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let r = x.row(i);
        for a in 0..p {
            for b in 0..=a {
                g[(a, b)] += r[a] * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

fn cross(x: &Rows, v: &[f64]) -> DVector<f64> {
    let p = x.ncols();
    let mut out = DVector::zeros(p);
    for (i, vi) in v.iter().enumerate() {
        for (a, xa) in x.row(i).iter().enumerate() {
            out[a] += xa * vi;
        }
    }
    out
}

/// Least-squares residuals of `raw` on `x`, scaled to unit mean square.
fn orthogonal_noise(x: &Rows, raw: &[f64]) -> Result<Vec<f64>> {
    let coef = census_ls(x, raw)?;
    let mut e: Vec<f64> = (0..raw.len()).map(|i| raw[i] - linalg::dot(x.row(i), &coef)).collect();
    let ms = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    let s = ms.sqrt();
    e.iter_mut().for_each(|v| *v /= s);
    Ok(e)
}

/// Census solution of `sum x_i (y_i - x_i'theta) = 0`.
pub fn census_ls(x: &Rows, y: &[f64]) -> Result<Vec<f64>> {
    let g = gram(x);
    let rhs = cross(x, y);
    let sol = linalg::solve_spd(&g, &rhs).ok_or_else(|| Error::SingularComponent("population X'X".into()))?;
    // one refinement step against rounding in the normal equations
    let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - linalg::dot(x.row(i), sol.as_slice())).collect();
    let corr = linalg::solve_spd(&g, &cross(x, &resid)).unwrap_or_else(|| DVector::zeros(sol.len()));
    Ok((sol + corr).iter().cloned().collect())
}

/// Smallest population value `t` with `#{y <= t} >= tau N`, i.e. the census
/// root of `sum {I(y <= t) - tau}`.
pub fn census_quantile(y: &[f64], tau: f64) -> f64 {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((tau * s.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    s[k.min(s.len()) - 1]
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n
}

impl Population {
    pub fn size(&self) -> usize {
        self.x.nrows()
    }

    pub fn linear_predictor(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.size()).map(|i| linalg::dot(self.x.row(i), theta)).collect()
    }

    /// Error scale for a sigma mode; the third mode is fixed by the null
    /// predictor `x'(1,1,1,1)`.
    pub fn sigma(&self, mode: SigmaMode) -> f64 {
        match mode {
            SigmaMode::S1 => 1.0,
            SigmaMode::S2 => 3.0,
            SigmaMode::S3 => {
                let eta = self.linear_predictor(&NULL_THETA);
                let rho = self.spec.rho;
                (variance(&eta) * (1.0 / (rho * rho) - 1.0)).sqrt()
            }
        }
    }

    pub fn linear_response(&self, theta: &[f64], sigma: f64) -> Vec<f64> {
        self.linear_predictor(theta).iter().zip(&self.noise).map(|(e, n)| e + sigma * n).collect()
    }

    pub fn quantile_response(&self) -> Vec<f64> {
        (0..self.size()).map(|i| 0.5 + self.x.get(i, 1) + self.x.get(i, 2) + self.noise[i]).collect()
    }

    /// Known population totals of the calibration covariates `x1, x2`.
    pub fn calibration_totals(&self) -> Vec<f64> {
        (1..=2).map(|j| (0..self.size()).map(|i| self.x.get(i, j)).sum()).collect()
    }
}

/// Population correlation of two columns.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
