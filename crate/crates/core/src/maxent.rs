//! Maximum-entropy (exponential family) fits on a finite weighted point set.
//!
//! Given points with base weights `w_i` and feature vectors `f_i`, finds
//! `theta` with `E_theta[f] = target` under the tilted law
//! `w_i exp(theta . f_i - K(theta))`. Continuous problems pass quadrature
//! nodes as points; discrete ones pass atoms and their masses.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::numeric::pairwise_sum_by;

pub const MAX_ITERATIONS: usize = 200;

/// Moment-matching tolerance (max absolute residual).
pub const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntFit {
    pub theta: Vec<f64>,
    /// `K(theta) = log sum_i w_i exp(theta . f_i)`.
    pub log_norm: f64,
    pub iterations: usize,
    /// Max absolute moment residual at the returned `theta`.
    pub residual: f64,
}

struct State {
    log_norm: f64,
    mean: Vec<f64>,
    probs: Vec<f64>,
}

fn evaluate(weights: &[f64], features: &[Vec<f64>], theta: &[f64]) -> State {
    let eta: Vec<f64> = features
        .iter()
        .map(|f| f.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect();
    let top = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = weights.iter().zip(&eta).map(|(w, e)| w * (e - top).exp()).collect();
    let z = pairwise_sum_by(scaled.len(), |i| scaled[i]);
    let probs: Vec<f64> = scaled.iter().map(|s| s / z).collect();
    let q = theta.len();
    let mean = (0..q)
        .map(|a| pairwise_sum_by(probs.len(), |i| probs[i] * features[i][a]))
        .collect();
    State {
        log_norm: top + z.ln(),
        mean,
        probs,
    }
}

/// Newton iteration with backtracking on the concave dual
/// `theta . target - K(theta)`.
pub fn fit_maxent(weights: &[f64], features: &[Vec<f64>], target: &[f64]) -> Result<MaxEntFit> {
    let q = target.len();
    if weights.len() != features.len() || features.iter().any(|f| f.len() != q) {
        return Err(Error::InvalidInput("feature table does not match targets".into()));
    }
    let mut theta = vec![0.0; q];
    let mut state = evaluate(weights, features, &theta);
    let residual_of = |s: &State| {
        s.mean
            .iter()
            .zip(target)
            .map(|(m, t)| (m - t).abs())
            .fold(0.0, f64::max)
    };
    let dual = |theta: &[f64], s: &State| {
        theta.iter().zip(target).map(|(a, b)| a * b).sum::<f64>() - s.log_norm
    };
    for iter in 0..MAX_ITERATIONS {
        let residual = residual_of(&state);
        if residual < TOLERANCE {
            return Ok(MaxEntFit {
                theta,
                log_norm: state.log_norm,
                iterations: iter,
                residual,
            });
        }
        let grad: Vec<f64> = target.iter().zip(&state.mean).map(|(t, m)| t - m).collect();
        let hess: Vec<Vec<f64>> = (0..q)
            .map(|a| {
                (0..q)
                    .map(|b| {
                        pairwise_sum_by(state.probs.len(), |i| {
                            state.probs[i]
                                * (features[i][a] - state.mean[a])
                                * (features[i][b] - state.mean[b])
                        })
                    })
                    .collect()
            })
            .collect();
        let step = solve_spd(&hess, &grad)?;
        let current = dual(&theta, &state);
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        // once the Newton decrement is tiny the dual gain drops below the
        // roundoff in K, so a line search would only see noise
        if slope < 1e-12 {
            theta = theta.iter().zip(&step).map(|(a, s)| a + s).collect();
            state = evaluate(weights, features, &theta);
            continue;
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let next = evaluate(weights, features, &trial);
            if next.log_norm.is_finite() && dual(&trial, &next) >= current + 1e-4 * t * slope {
                theta = trial;
                state = next;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NonConvergence {
                    iterations: iter + 1,
                    residual,
                });
            }
        }
    }
    let residual = residual_of(&state);
    if residual < TOLERANCE {
        return Ok(MaxEntFit {
            theta,
            log_norm: state.log_norm,
            iterations: MAX_ITERATIONS,
            residual,
        });
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual,
    })
}
