//! Plug-in components and sandwich variances from final and replication
//! weights.
//!
//! The unknown population size is replaced by `n_hat = sum w_i` everywhere;
//! the factors cancel in every test statistic and standard error.

use nalgebra::DMatrix;

use crate::data::SurveyDataset;
use crate::el::ElKind;
use crate::error::{Error, Result};
use crate::estfn::{x_row, EstimatingFunction};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: ElKind,
    pub theta_hat: Vec<f64>,
    /// `W_1` (PEL) or `W_2` (SEL).
    pub w_hat: DMatrix<f64>,
    /// Absent for nonsmooth families.
    pub gamma_hat: Option<DMatrix<f64>>,
    pub omega_hat: DMatrix<f64>,
    pub v_hat: Option<DMatrix<f64>>,
    pub se: Vec<f64>,
    pub n: usize,
    pub n_hat: f64,
}

impl FitResult {
    pub fn r(&self) -> usize {
        self.w_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.theta_hat.len()
    }

    /// `Sigma = (Gamma' W^{-1} Gamma)^{-1}`.
    pub fn sigma(&self) -> Result<DMatrix<f64>> {
        let gamma = self.gamma()?;
        let w_inv = linalg::spd_inverse(&self.w_hat, "W")?;
        linalg::spd_inverse(&(gamma.transpose() * w_inv * gamma), "Gamma' W^-1 Gamma")
    }

    pub fn gamma(&self) -> Result<&DMatrix<f64>> {
        self.gamma_hat
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no Jacobian-based components for a nonsmooth family".into()))
    }
}

/// `(1/B) sum_b (eta_b - U)(eta_b - U)'` with `eta_b = sum_i w_i^(b) g_i`
/// and `U = sum_i w_i g_i`.
pub fn rep_variance_total(
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    let n = ds.n();
    let nb = ds.n_replicates();
    if nb == 0 {
        return Err(Error::Validation("replication weights are required (B = 0)".into()));
    }
    let r = gf.r();
    let mut total = vec![0.0; r];
    let mut eta = vec![0.0; r * nb];
    let mut g = vec![0.0; r];
    for i in 0..n {
        gf.eval(x_row(&ds.x, i), ds.y.row(i), theta, &mut g);
        let w = ds.final_weights[i];
        for a in 0..r {
            total[a] += w * g[a];
        }
        let reps = ds.rep_weights.row(i);
        for (b, wb) in reps.iter().enumerate() {
            if *wb != 0.0 {
                for a in 0..r {
                    eta[b * r + a] += wb * g[a];
                }
            }
        }
    }
    let mut v = DMatrix::zeros(r, r);
    for b in 0..nb {
        let d: Vec<f64> = (0..r).map(|a| eta[b * r + a] - total[a]).collect();
        for a in 0..r {
            for c in 0..r {
                v[(a, c)] += d[a] * d[c];
            }
        }
    }
    Ok(linalg::symmetrize(&(v / nb as f64)))
}

/// `W`, `Gamma` and `Omega` at `theta_hat`; `v_hat` is left empty.
pub fn plugin_components(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    theta_hat: &[f64],
) -> Result<FitResult> {
    let n = ds.n();
    let nf = n as f64;
    let (r, p) = (gf.r(), gf.p());
    if theta_hat.len() != p {
        return Err(Error::Dimension(format!("theta has {} entries, need {p}", theta_hat.len())));
    }
    let n_hat = ds.n_hat;
    let mut w = DMatrix::zeros(r, r);
    let mut gamma = gf.is_smooth().then(|| DMatrix::zeros(r, p));
    let mut g = vec![0.0; r];
    let mut j = vec![0.0; r * p];
    for i in 0..n {
        let xi = x_row(&ds.x, i);
        let yi = ds.y.row(i);
        gf.eval(xi, yi, theta_hat, &mut g);
        let wi = ds.final_weights[i];
        let c = match kind {
            ElKind::Pel => wi / n_hat,
            ElKind::Sel => nf * wi * wi / (n_hat * n_hat),
        };
        for a in 0..r {
            for b in 0..=a {
                w[(a, b)] += c * g[a] * g[b];
            }
        }
        if let Some(gm) = gamma.as_mut() {
            gf.jacobian(xi, yi, theta_hat, &mut j);
            for a in 0..r {
                for b in 0..p {
                    gm[(a, b)] += wi / n_hat * j[a * p + b];
                }
            }
        }
    }
    for a in 0..r {
        for b in 0..a {
            w[(b, a)] = w[(a, b)];
        }
    }
    // refuse ill-conditioned W up front
    linalg::spd_inverse(&w, "W")?;
    let omega = rep_variance_total(ds, gf, theta_hat)? * (nf / (n_hat * n_hat));
    Ok(FitResult {
        kind,
        theta_hat: theta_hat.to_vec(),
        w_hat: w,
        gamma_hat: gamma,
        omega_hat: omega,
        v_hat: None,
        se: Vec::new(),
        n,
        n_hat,
    })
}

/// `V = Sigma Gamma' W^{-1} Omega W^{-1} Gamma Sigma`, `se_j = sqrt(V_jj / n)`.
pub fn sandwich(fit: &FitResult) -> Result<FitResult> {
    let gamma = fit.gamma()?;
    let w_inv = linalg::spd_inverse(&fit.w_hat, "W")?;
    let sigma = fit.sigma()?;
    let a = &sigma * gamma.transpose() * &w_inv;
    let v = linalg::symmetrize(&(&a * &fit.omega_hat * a.transpose()));
    let se = (0..v.nrows()).map(|j| (v[(j, j)].max(0.0) / fit.n as f64).sqrt()).collect();
    let mut out = fit.clone();
    out.v_hat = Some(v);
    out.se = se;
    Ok(out)
}

/// Plug-in components and sandwich variance at `theta_hat` in one call.
pub fn fit_at(
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &dyn EstimatingFunction,
    theta_hat: &[f64],
) -> Result<FitResult> {
    sandwich(&plugin_components(kind, ds, gf, theta_hat)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rows;
    use crate::estfn::MeanFamily;

    fn col(v: &[f64]) -> Rows {
        Rows::new(1, v.to_vec()).unwrap()
    }

    #[test]
    fn replicate_dispersion_scalar() {
        // U = 10 at theta = 0 with y = (4, 6), w = (1, 1); replicates give 8 and 12
        let reps = Rows::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let ds = SurveyDataset::new(col(&[4.0, 6.0]), Rows::empty(2), vec![1.0, 1.0], reps).unwrap();
        let v = rep_variance_total(&ds, &MeanFamily, &[0.0]).unwrap();
        assert!((v[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identical_replicates_give_zero() {
        let reps = Rows::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let ds = SurveyDataset::new(col(&[4.0, 6.0]), Rows::empty(2), vec![1.0, 2.0], reps).unwrap();
        let v = rep_variance_total(&ds, &MeanFamily, &[1.5]).unwrap();
        assert_eq!(v[(0, 0)], 0.0);
    }

    #[test]
    fn mean_components_collapse() {
        let y = [1.0, 3.0, 4.0, 8.0];
        let reps = Rows::from_rows(&[vec![2.0], vec![0.0], vec![1.0], vec![1.0]]).unwrap();
        let ds = SurveyDataset::new(col(&y), Rows::empty(4), vec![2.5; 4], reps).unwrap();
        let mean = 4.0;
        let expect_w = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        for kind in [ElKind::Pel, ElKind::Sel] {
            let fit = plugin_components(kind, &ds, &MeanFamily, &[mean]).unwrap();
            assert!((fit.w_hat[(0, 0)] - expect_w).abs() < 1e-12);
            assert!((fit.gamma_hat.as_ref().unwrap()[(0, 0)] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_sandwich() {
        let fit = FitResult {
            kind: ElKind::Pel,
            theta_hat: vec![0.0],
            w_hat: DMatrix::from_element(1, 1, 3.0),
            gamma_hat: Some(DMatrix::from_element(1, 1, -1.0)),
            omega_hat: DMatrix::from_element(1, 1, 2.0),
            v_hat: None,
            se: vec![],
            n: 8,
            n_hat: 8.0,
        };
        let out = sandwich(&fit).unwrap();
        assert!((out.v_hat.unwrap()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((out.se[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overidentified_toy_sandwich() {
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
        assert!((fit.sigma().unwrap()[(0, 0)] - 0.5).abs() < 1e-12);
        let out = sandwich(&fit).unwrap();
        assert!((out.v_hat.unwrap()[(0, 0)] - 1.25).abs() < 1e-12);
    }
}
