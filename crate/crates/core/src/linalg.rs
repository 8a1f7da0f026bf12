//! Dense linear algebra for the small matrices that show up here: comoment
//! matrices are at most a few dozen entries on a side.

use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(s) V^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x r` left singular vectors, stored by row.
    pub u: Vec<Vec<f64>>,
    /// Singular values, non-increasing.
    pub s: Vec<f64>,
    /// `cols x r` right singular vectors, stored by row.
    pub v: Vec<Vec<f64>>,
}

impl Svd {
    /// Column `k` of `U`.
    pub fn u_col(&self, k: usize) -> Vec<f64> {
        self.u.iter().map(|row| row[k]).collect()
    }

    /// Column `k` of `V`.
    pub fn v_col(&self, k: usize) -> Vec<f64> {
        self.v.iter().map(|row| row[k]).collect()
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

const SIGN_EPS: f64 = 1e-12;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Singular vectors are sign-normalized so the first component of each left
/// vector exceeding `1e-12` in magnitude is positive; the matching right
/// vector flips with it.
pub fn jacobi_svd(a: &[Vec<f64>]) -> Svd {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Svd {
            u: vec![Vec::new(); rows],
            s: Vec::new(),
            v: vec![Vec::new(); cols],
        };
    }
    if rows < cols {
        let t = transpose(a);
        let svd = jacobi_svd_tall(&t);
        let mut out = Svd {
            u: svd.v,
            s: svd.s,
            v: svd.u,
        };
        normalize_signs(&mut out);
        return out;
    }
    let mut out = jacobi_svd_tall(a);
    normalize_signs(&mut out);
    out
}

fn jacobi_svd_tall(a: &[Vec<f64>]) -> Svd {
    let m = a.len();
    let n = a[0].len();
    // columns of the working copy
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.iter().map(|r| r[j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let xp = w[p][i];
                    let xq = w[q][i];
                    w[p][i] = c * xp - s * xq;
                    w[q][i] = s * xp + c * xq;
                }
                for i in 0..n {
                    let xp = v[p][i];
                    let xq = v[q][i];
                    v[p][i] = c * xp - s * xq;
                    v[q][i] = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(j, col)| (col.iter().map(|x| x * x).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let scale = order.first().map_or(0.0, |o| o.0);
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * (m.max(n) as f64);
    let mut s = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &(sigma, j) in &order {
        v_cols.push(v[j].clone());
        if sigma > tiny {
            s.push(sigma);
            u_cols.push(w[j].iter().map(|x| x / sigma).collect());
        } else {
            s.push(0.0);
            u_cols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut u_cols, m);

    Svd {
        u: (0..m).map(|i| u_cols.iter().map(|c| c[i]).collect()).collect(),
        s,
        v: (0..n).map(|i| v_cols.iter().map(|c| c[i]).collect()).collect(),
    }
}

/// Fills empty columns (null singular directions) with unit vectors
/// orthogonal to the populated ones.
fn complete_orthonormal(cols: &mut [Vec<f64>], dim: usize) {
    let mut candidate = 0usize;
    for k in 0..cols.len() {
        if !cols[k].is_empty() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _pass in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let dot: f64 = e.iter().zip(other).map(|(a, b)| a * b).sum();
                    for (ei, oi) in e.iter_mut().zip(other) {
                        *ei -= dot * oi;
                    }
                }
            }
            let norm: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[k] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
        if cols[k].is_empty() {
            cols[k] = vec![0.0; dim];
        }
    }
}

fn normalize_signs(svd: &mut Svd) {
    for k in 0..svd.s.len() {
        let lead = svd
            .u
            .iter()
            .map(|row| row[k])
            .find(|x| x.abs() > SIGN_EPS)
            .unwrap_or(1.0);
        if lead < 0.0 {
            for row in svd.u.iter_mut() {
                row[k] = -row[k];
            }
            for row in svd.v.iter_mut() {
                row[k] = -row[k];
            }
        }
    }
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Solves `H x = g` for symmetric positive (semi-)definite `H` by Cholesky,
/// adding a growing ridge when the factorization breaks down.
pub fn solve_spd(h: &[Vec<f64>], g: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    let diag_scale = (0..n).map(|i| h[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        if let Some(l) = cholesky(h, ridge) {
            return Ok(cholesky_solve(&l, g));
        }
        ridge = if ridge == 0.0 {
            1e-12 * diag_scale
        } else {
            ridge * 100.0
        };
    }
    Err(Error::Numeric("singular Newton system".into()))
}

fn cholesky(h: &[Vec<f64>], ridge: f64) -> Option<Vec<Vec<f64>>> {
    let n = h.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = h[i][j];
            if i == j {
                sum += ridge;
            }
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (g[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}
