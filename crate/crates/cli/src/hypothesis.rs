//! Affine hypotheses on the command line.
//!
//! ```text
//! theta[1]=1
//! theta[1]-theta[2]=0
//! 2*theta[1] + 0.5*theta[3] = 1; theta[2]=0
//! ```
//!
//! Indices are 0-based (`theta[0]` is the intercept when the schema adds
//! one). Constant terms may appear on either side.

use nalgebra::{DMatrix, DVector};
use svyel::{AffineConstraint, Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Theta(usize),
    Plus,
    Minus,
    Star,
    Eq,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("hypothesis: {}", msg.into()))
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1
            }
            '*' => {
                out.push(Tok::Star);
                i += 1
            }
            '=' => {
                out.push(Tok::Eq);
                i += 1
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.' || b[i] == b'e' || b[i] == b'E'
                    || ((b[i] == b'-' || b[i] == b'+') && i > start && (b[i - 1] == b'e' || b[i - 1] == b'E')))
                {
                    i += 1;
                }
                let v: f64 = s[start..i].parse().map_err(|_| bad(format!("bad number '{}'", &s[start..i])))?;
                out.push(Tok::Num(v));
            }
            _ if s[i..].starts_with("theta[") => {
                let rest = &s[i + 6..];
                let close = rest.find(']').ok_or_else(|| bad("unclosed theta["))?;
                let j: usize = rest[..close].trim().parse().map_err(|_| bad(format!("bad index '{}'", &rest[..close])))?;
                out.push(Tok::Theta(j));
                i += 6 + close + 1;
            }
            _ => return Err(bad(format!("unexpected '{c}'"))),
        }
    }
    Ok(out)
}

/// `sum coef_j theta_j + constant`.
fn side(toks: &[Tok], p: usize, coef: &mut [f64], sign: f64) -> Result<f64> {
    if toks.is_empty() {
        return Err(bad("empty side"));
    }
    let mut constant = 0.0;
    let mut i = 0;
    while i < toks.len() {
        let mut s = sign;
        let mut signed = false;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
            if *t == Tok::Minus {
                s = -s;
            }
            signed = true;
            i += 1;
        }
        if i > 0 && !signed {
            return Err(bad("missing operator between terms"));
        }
        match (toks.get(i), toks.get(i + 1), toks.get(i + 2)) {
            (Some(Tok::Num(v)), Some(Tok::Star), Some(Tok::Theta(j))) => {
                if *j >= p {
                    return Err(bad(format!("theta[{j}] out of range (p = {p})")));
                }
                coef[*j] += s * v;
                i += 3;
            }
            (Some(Tok::Theta(j)), _, _) => {
                if *j >= p {
                    return Err(bad(format!("theta[{j}] out of range (p = {p})")));
                }
                coef[*j] += s;
                i += 1;
            }
            (Some(Tok::Num(v)), _, _) => {
                constant += s * v;
                i += 1;
            }
            _ => return Err(bad("expected a number or theta[j]")),
        }
    }
    Ok(constant)
}

/// One `lhs = rhs` restriction as `(a, c)` with `a'theta = c`.
fn restriction(s: &str, p: usize) -> Result<(Vec<f64>, f64)> {
    let toks = lex(s)?;
    let eq: Vec<usize> = toks.iter().enumerate().filter(|(_, t)| **t == Tok::Eq).map(|(i, _)| i).collect();
    if eq.len() != 1 {
        return Err(bad(format!("'{s}' needs exactly one '='")));
    }
    let mut a = vec![0.0; p];
    let cl = side(&toks[..eq[0]], p, &mut a, 1.0)?;
    let cr = side(&toks[eq[0] + 1..], p, &mut a, -1.0)?;
    // a'theta + cl - cr = 0 after moving the right side over; cr already negated
    let c = -(cl + cr);
    if a.iter().all(|v| *v == 0.0) {
        return Err(bad(format!("'{s}' does not involve theta")));
    }
    Ok((a, c))
}

/// Parse `;`-separated restrictions into `A theta = c`.
pub fn parse_hypothesis(s: &str, p: usize) -> Result<AffineConstraint> {
    let parts: Vec<&str> = s.split(';').map(str::trim).filter(|t| !t.is_empty()).collect();
    if parts.is_empty() {
        return Err(bad("empty"));
    }
    let rows = parts.iter().map(|t| restriction(t, p)).collect::<Result<Vec<_>>>()?;
    let k = rows.len();
    let a = DMatrix::from_fn(k, p, |i, j| rows[i].0[j]);
    let c = DVector::from_iterator(k, rows.iter().map(|r| r.1));
    AffineConstraint::new(a, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fix() {
        let h = parse_hypothesis("theta[1]=1", 3).unwrap();
        assert_eq!(h.a.row(0).iter().cloned().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!(h.c[0], 1.0);
    }

    #[test]
    fn contrast_and_constants() {
        let h = parse_hypothesis("2*theta[0] - theta[2] + 1 = 3 - theta[1]", 3).unwrap();
        assert_eq!(h.a.row(0).iter().cloned().collect::<Vec<_>>(), vec![2.0, 1.0, -1.0]);
        assert_eq!(h.c[0], 2.0);
    }

    #[test]
    fn several_rows() {
        let h = parse_hypothesis("theta[1]-theta[2]=0; theta[0]=1.5e0", 3).unwrap();
        assert_eq!(h.a.nrows(), 2);
        assert_eq!(h.c[1], 1.5);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["theta[5]=1", "theta[1]", "1=1", "theta[1] theta[2]=0", "beta=1", ""] {
            assert!(parse_hypothesis(s, 3).is_err(), "{s}");
        }
    }
}
