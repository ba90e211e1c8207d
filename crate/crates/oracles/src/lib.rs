//! Brute-force reference computations for the test suites.
//!
//! Nothing here calls into `svyel`: root finding is plain bisection, linear
//! systems use hand-rolled Gaussian elimination, normal probabilities come
//! from Simpson integration and random numbers from a PCG stream with
//! Box-Muller normals. Everything is slow and simple on purpose.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

/// Outcome of comparing one engine value with its oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub case: String,
    pub oracle: f64,
    pub engine: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    /// Absolute comparison.
    pub fn new(case: &str, oracle: f64, engine: f64, tolerance: f64) -> Self {
        let pass = (oracle - engine).abs() <= tolerance || (oracle == engine);
        OracleReport { case: case.to_string(), oracle, engine, tolerance, pass }
    }

    pub fn assert(&self) {
        assert!(
            self.pass,
            "{}: oracle {} vs engine {} (tolerance {})",
            self.case, self.oracle, self.engine, self.tolerance
        );
    }
}

/// Root of `sum w_i u_i / (1 + lambda u_i) = 0` on the interval where every
/// `1 + lambda u_i` is positive. `None` when the `u_i` do not change sign.
pub fn lambda_bisection(u: &[f64], w: &[f64]) -> Option<f64> {
    let has_pos = u.iter().any(|&v| v > 0.0);
    let has_neg = u.iter().any(|&v| v < 0.0);
    if !(has_pos && has_neg) {
        return if u.iter().all(|&v| v == 0.0) { Some(0.0) } else { None };
    }
    let umax = u.iter().cloned().fold(f64::MIN, f64::max);
    let umin = u.iter().cloned().fold(f64::MAX, f64::min);
    // 1 + lambda u > 0 for all i  <=>  -1/umax < lambda < -1/umin
    let mut lo = -1.0 / umax;
    let mut hi = -1.0 / umin;
    let f = |l: f64| -> f64 { u.iter().zip(w).map(|(a, b)| b * a / (1.0 + l * a)).sum() };
    // f decreases in lambda: +inf at lo, -inf at hi
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Textbook EL log ratio `-sum log(1 + lambda (y_i - theta))` for a mean.
pub fn classical_el_log_ratio(y: &[f64], theta: f64) -> f64 {
    let u: Vec<f64> = y.iter().map(|v| v - theta).collect();
    let w = vec![1.0; y.len()];
    match lambda_bisection(&u, &w) {
        Some(l) => -u.iter().map(|a| (1.0 + l * a).ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Weighted EL log ratio `-m sum nu_i log(1 + lambda u_i)` for scalar `u`
/// with outer weights `nu` summing to one.
pub fn weighted_el_log_ratio(u: &[f64], nu: &[f64], m: f64) -> f64 {
    match lambda_bisection(u, nu) {
        Some(l) => -m * u.iter().zip(nu).map(|(a, b)| b * (1.0 + l * a).ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Vector EL log ratio `-m sum nu_i log(1 + lambda'u_i)`: the multiplier
/// maximizes the concave dual `sum nu_i log(1 + lambda'u_i)` by Newton steps
/// with backtracking inside the domain. `-inf` when the dual is unbounded
/// (zero outside the convex hull).
pub fn el_log_ratio_rows(u: &[Vec<f64>], nu: &[f64], m: f64) -> f64 {
    let r = u.first().map_or(0, |v| v.len());
    let dual = |l: &[f64]| -> Option<f64> {
        let mut s = 0.0;
        for (ui, w) in u.iter().zip(nu) {
            let t = 1.0 + ui.iter().zip(l).map(|(a, b)| a * b).sum::<f64>();
            if t <= 0.0 {
                return None;
            }
            s += w * t.ln();
        }
        Some(s)
    };
    let mut l = vec![0.0; r];
    let mut val = 0.0;
    for _ in 0..500 {
        let mut grad = vec![0.0; r];
        let mut hess = vec![vec![0.0; r]; r];
        for (ui, w) in u.iter().zip(nu) {
            let t = 1.0 + ui.iter().zip(&l).map(|(a, b)| a * b).sum::<f64>();
            for a in 0..r {
                grad[a] += w * ui[a] / t;
                for b in 0..r {
                    hess[a][b] += w * ui[a] * ui[b] / (t * t);
                }
            }
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-13 {
            break;
        }
        // ascent direction H^{-1} g for the concave dual (H here is minus the Hessian)
        let Some(step) = gauss_solve(&hess, &grad) else { return f64::NEG_INFINITY };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = l.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Some(v) = dual(&cand) {
                if v >= val {
                    l = cand;
                    val = v;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        if val > 1e6 {
            return f64::NEG_INFINITY;
        }
    }
    -m * val
}

/// Independent random stream: PCG with Box-Muller normals.
pub struct OracleRng {
    inner: Pcg64,
    spare: Option<f64>,
}

impl OracleRng {
    pub fn new(seed: u64) -> Self {
        OracleRng { inner: Pcg64::seed_from_u64(seed), spare: None }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = std::f64::consts::TAU * u2;
        self.spare = Some(r * a.sin());
        r * a.cos()
    }
}

/// `P(sum delta_j Z_j^2 > q)` by plain Monte Carlo.
pub fn quadform_tail(delta: &[f64], q: f64, draws: usize, seed: u64) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    let mut rng = OracleRng::new(seed);
    let mut hits = 0usize;
    for _ in 0..draws {
        let s: f64 = delta.iter().map(|d| {
            let z = rng.normal();
            d * z * z
        }).sum();
        if s > q {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(0 < Z < z)` by composite Simpson with a fixed fine grid.
fn normal_half(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let n = 20_000;
    let h = z / n as f64;
    let mut s = phi(0.0) + phi(z);
    for k in 1..n {
        let t = k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * phi(t);
    }
    s * h / 3.0
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    if z >= 0.0 {
        0.5 - normal_half(z.min(40.0))
    } else {
        0.5 + normal_half((-z).min(40.0))
    }
}

/// Upper tail of `chi2(1)`.
pub fn chi2_1_sf(q: f64) -> f64 {
    if q <= 0.0 {
        1.0
    } else {
        2.0 * normal_sf(q.sqrt())
    }
}

/// Upper tail of `chi2(2)`, which has a closed form.
pub fn chi2_2_sf(q: f64) -> f64 {
    (-0.5 * q.max(0.0)).exp()
}

/// Variance of the Hansen-Hurwitz total estimator `n^{-1} sum y_i / p_i`
/// under `n` with-replacement draws with `p_i = z_i / sum z`.
pub fn hh_variance(y: &[f64], sizes: &[f64], n: usize) -> f64 {
    let zt: f64 = sizes.iter().sum();
    let total: f64 = y.iter().sum();
    let mut v = 0.0;
    for (yi, zi) in y.iter().zip(sizes) {
        let p = zi / zt;
        let d = yi / p - total;
        v += p * d * d;
    }
    v / n as f64
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, v)| {
        let mut row = r.clone();
        row.push(*v);
        row
    }).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Weighted least squares `sum w_i x_i (y_i - x_i'b) = 0`.
pub fn weighted_ls(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let p = x.first()?.len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((xi, yi), wi) in x.iter().zip(y).zip(w) {
        for r in 0..p {
            b[r] += wi * xi[r] * yi;
            for c in 0..p {
                a[r][c] += wi * xi[r] * xi[c];
            }
        }
    }
    gauss_solve(&a, &b)
}

/// Linear calibration `w = d (1 + x'l)` hitting `sum w x = t`.
pub fn chisq_calibration(d: &[f64], x: &[Vec<f64>], t: &[f64]) -> Option<Vec<f64>> {
    let q = t.len();
    let mut a = vec![vec![0.0; q]; q];
    let mut r = t.to_vec();
    for (di, xi) in d.iter().zip(x) {
        for j in 0..q {
            r[j] -= di * xi[j];
            for k in 0..q {
                a[j][k] += di * xi[j] * xi[k];
            }
        }
    }
    let l = gauss_solve(&a, &r)?;
    Some(d.iter().zip(x).map(|(di, xi)| di * (1.0 + xi.iter().zip(&l).map(|(a, b)| a * b).sum::<f64>())).collect())
}

/// Smallest `t` among `y` with weighted CDF `>= tau`.
pub fn weighted_quantile(y: &[f64], w: &[f64], tau: f64) -> f64 {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += w[i];
        if acc >= tau * total * (1.0 - 1e-12) {
            return y[i];
        }
    }
    y[idx[idx.len() - 1]]
}

/// Central finite-difference Jacobian of `f: R^p -> R^r`, row-major `r x p`.
pub fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, theta: &[f64], h: f64) -> Vec<f64> {
    let p = theta.len();
    let r = f(theta).len();
    let mut out = vec![0.0; r * p];
    for j in 0..p {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        let step = h * (1.0 + theta[j].abs());
        tp[j] += step;
        tm[j] -= step;
        let (fp, fm) = (f(&tp), f(&tm));
        for a in 0..r {
            out[a * p + j] = (fp[a] - fm[a]) / (2.0 * step);
        }
    }
    out
}
