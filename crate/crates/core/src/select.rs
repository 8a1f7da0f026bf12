//! Rules for choosing which LP coefficients enter a smooth model.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Critical value for the two-sided 5% significance flag.
pub const Z_CRIT: f64 = 1.96;

/// A coefficient-selection rule.
///
/// Rules other than [`Selection::All`] and the explicit lists need the sample
/// size, because they compare `n * coeff^2` against a penalty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Selection {
    /// Keep every coefficient.
    All,
    /// Keep coefficients with `|sqrt(n) * coeff| >= z`.
    Threshold { z: f64 },
    /// Sort by `coeff^2` and keep the top `k` maximizing `n * sum - 2k`.
    Aic,
    /// As [`Selection::Aic`] with penalty `k log n`.
    Bic,
    /// Explicit 1-based orders of a coefficient vector.
    Orders(Vec<usize>),
    /// Explicit 1-based `(j, k)` entries of a coefficient matrix.
    Entries(Vec<(usize, usize)>),
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Threshold { z: Z_CRIT }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::All => write!(f, "all"),
            Selection::Threshold { z } => write!(f, "threshold:{z}"),
            Selection::Aic => write!(f, "aic"),
            Selection::Bic => write!(f, "bic"),
            Selection::Orders(o) => {
                let parts: Vec<String> = o.iter().map(|j| j.to_string()).collect();
                write!(f, "orders:{}", parts.join(","))
            }
            Selection::Entries(e) => {
                let parts: Vec<String> = e.iter().map(|(j, k)| format!("{j}.{k}")).collect();
                write!(f, "entries:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    /// Parses `all`, `aic`, `bic`, `threshold`, `threshold:Z`,
    /// `orders:2,3,5` or `entries:1.1,2.1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown selection rule '{s}'"));
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        match (head.trim().to_ascii_lowercase().as_str(), tail) {
            ("all", None) => Ok(Selection::All),
            ("aic", None) => Ok(Selection::Aic),
            ("bic", None) => Ok(Selection::Bic),
            ("threshold", None) => Ok(Selection::default()),
            ("threshold", Some(z)) => {
                let z: f64 = z.trim().parse().map_err(|_| bad())?;
                if !(z.is_finite() && z >= 0.0) {
                    return Err(bad());
                }
                Ok(Selection::Threshold { z })
            }
            ("orders", Some(list)) => list
                .split(',')
                .map(|t| t.trim().parse::<usize>().ok().filter(|&j| j >= 1).ok_or_else(bad))
                .collect::<Result<Vec<_>>>()
                .map(Selection::Orders),
            ("entries", Some(list)) => list
                .split(',')
                .map(|t| {
                    let (j, k) = t.trim().split_once('.').ok_or_else(bad)?;
                    let j: usize = j.parse().map_err(|_| bad())?;
                    let k: usize = k.parse().map_err(|_| bad())?;
                    if j == 0 || k == 0 {
                        return Err(bad());
                    }
                    Ok((j, k))
                })
                .collect::<Result<Vec<_>>>()
                .map(Selection::Entries),
            _ => Err(bad()),
        }
    }
}

impl Selection {
    /// Selected positions (0-based, ascending) in a coefficient vector.
    pub fn select_vector(&self, coeffs: &[f64], n: Option<f64>) -> Result<Vec<usize>> {
        match self {
            Selection::Orders(orders) => {
                let mut out = Vec::with_capacity(orders.len());
                for &j in orders {
                    if j == 0 || j > coeffs.len() {
                        return Err(Error::OutOfRange(format!(
                            "order {j} outside 1..={}",
                            coeffs.len()
                        )));
                    }
                    out.push(j - 1);
                }
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
            Selection::Entries(_) => Err(Error::InvalidInput(
                "matrix entries given where a coefficient vector is selected".into(),
            )),
            _ => self.select_by_value(coeffs, n),
        }
    }

    /// Selected `(j, k)` positions (0-based, row-major order) in a matrix.
    pub fn select_matrix(&self, entries: &[Vec<f64>], n: Option<f64>) -> Result<Vec<(usize, usize)>> {
        let cols = entries.first().map_or(0, Vec::len);
        match self {
            Selection::Entries(list) => {
                let mut out = Vec::with_capacity(list.len());
                for &(j, k) in list {
                    if j == 0 || k == 0 || j > entries.len() || k > cols {
                        return Err(Error::OutOfRange(format!(
                            "entry ({j},{k}) outside the {}x{cols} comoment matrix",
                            entries.len()
                        )));
                    }
                    out.push((j - 1, k - 1));
                }
                out.sort_unstable();
                out.dedup();
                Ok(out)
            }
            Selection::Orders(_) => Err(Error::InvalidInput(
                "vector orders given where matrix entries are selected".into(),
            )),
            _ => {
                let flat: Vec<f64> = entries.iter().flatten().copied().collect();
                Ok(self
                    .select_by_value(&flat, n)?
                    .into_iter()
                    .map(|i| (i / cols, i % cols))
                    .collect())
            }
        }
    }

    fn select_by_value(&self, coeffs: &[f64], n: Option<f64>) -> Result<Vec<usize>> {
        let need_n = || {
            n.filter(|v| *v > 0.0).ok_or_else(|| {
                Error::InvalidInput(format!("selection rule '{self}' needs a sample size"))
            })
        };
        let mut out: Vec<usize> = match self {
            Selection::All => (0..coeffs.len()).collect(),
            Selection::Threshold { z } => {
                let root_n = need_n()?.sqrt();
                (0..coeffs.len())
                    .filter(|&i| (root_n * coeffs[i]).abs() >= *z)
                    .collect()
            }
            Selection::Aic => penalized(coeffs, need_n()?, 2.0),
            Selection::Bic => {
                let n = need_n()?;
                penalized(coeffs, n, n.ln())
            }
            Selection::Orders(_) | Selection::Entries(_) => unreachable!("handled by callers"),
        };
        out.sort_unstable();
        Ok(out)
    }
}

/// Top-`k` set maximizing `n * sum_{top k} c^2 - penalty * k`; ties in `c^2`
/// keep the lower index first.
fn penalized(coeffs: &[f64], n: f64, penalty: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| {
        (coeffs[b] * coeffs[b])
            .total_cmp(&(coeffs[a] * coeffs[a]))
            .then(a.cmp(&b))
    });
    let mut best = 0.0;
    let mut best_k = 0;
    let mut score = 0.0;
    for (k, &i) in order.iter().enumerate() {
        score += n * coeffs[i] * coeffs[i] - penalty;
        if score > best {
            best = score;
            best_k = k + 1;
        }
    }
    order.truncate(best_k);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aic_examples() {
        assert!(Selection::Aic.select_vector(&[0.0; 6], Some(100.0)).unwrap().is_empty());
        let c = [0.01, 0.02, -0.03, 0.04, 0.0, -0.337];
        assert_eq!(Selection::Aic.select_vector(&c, Some(63.0)).unwrap(), vec![5]);
        // n * c^2 = 1.9 for both: penalty wins
        let c = (1.9f64 / 100.0).sqrt();
        assert!(Selection::Aic.select_vector(&[c, -c], Some(100.0)).unwrap().is_empty());
    }

    #[test]
    fn threshold_uses_root_n() {
        let c = [0.2, 0.12, -0.11];
        let sel = Selection::default().select_vector(&c, Some(314.0)).unwrap();
        assert_eq!(sel, vec![0, 1]);
        let sel = Selection::Threshold { z: 2.5 }.select_vector(&c, Some(314.0)).unwrap();
        assert_eq!(sel, vec![0]);
        assert!(Selection::default().select_vector(&c, None).is_err());
        assert_eq!(Selection::All.select_vector(&c, None).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn matrix_selection_is_row_major() {
        let m = vec![vec![0.5, 0.0], vec![0.0, -0.3]];
        let sel = Selection::default().select_matrix(&m, Some(100.0)).unwrap();
        assert_eq!(sel, vec![(0, 0), (1, 1)]);
        let sel = Selection::Entries(vec![(2, 1), (1, 1)]).select_matrix(&m, None).unwrap();
        assert_eq!(sel, vec![(0, 0), (1, 0)]);
        assert!(Selection::Entries(vec![(3, 1)]).select_matrix(&m, None).is_err());
    }

    #[test]
    fn parse_round_trips() {
        for s in ["all", "aic", "bic", "threshold:1.96", "orders:2,3,5", "entries:1.1,2.1"] {
            let sel: Selection = s.parse().unwrap();
            assert_eq!(sel.to_string(), s);
        }
        assert_eq!("threshold".parse::<Selection>().unwrap(), Selection::default());
        assert!("nope".parse::<Selection>().is_err());
        assert!("orders:0".parse::<Selection>().is_err());
    }
}
