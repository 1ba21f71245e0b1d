//! Weighted logistic regression by Newton–Raphson with step-halving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-predictor swing (coefficient times column range) beyond which a
/// fit is treated as diverging towards a separating hyperplane.
pub const DIVERGENCE_THRESHOLD: f64 = 30.0;

/// Smallest admissible ratio of a coefficient's Fisher information to the
/// weighted sum of squares of its centred column.
pub const FLAT_INFORMATION_RATIO: f64 = 1e-6;

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Bound on the weight-normalised score norm, `|X'W(y - p)| / sum(w)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per design column.
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Design (with intercept) and response, reusable across weight vectors.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    q: usize,
    /// Row-major `n x q`, intercept column first.
    rows: Vec<f64>,
    y: Vec<f64>,
    ranges: Vec<f64>,
}

impl LogisticProblem {
    /// `x` excludes the intercept column; it is prepended here.
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!(
                "response must be 0/1, got {bad}"
            )));
        }
        let q = x.ncols() + 1;
        if n < q {
            return Err(Error::RankDeficient(format!(
                "{n} rows for {q} coefficients"
            )));
        }
        let mut ranges = Vec::with_capacity(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::RankDeficient(format!(
                    "column {j} is identically zero"
                )));
            }
            ranges.push(col.max() - col.min());
        }
        let mut rows = Vec::with_capacity(n * q);
        for i in 0..n {
            rows.push(1.0);
            rows.extend(x.row(i).iter());
        }
        Ok(Self {
            q,
            rows,
            y: y.to_vec(),
            ranges,
        })
    }

    pub fn nrows(&self) -> usize {
        self.y.len()
    }

    pub fn ncoef(&self) -> usize {
        self.q
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.q..(i + 1) * self.q]
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    fn loglik(&self, eta: &[f64], w: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .zip(w)
            .map(|((&e, &y), &wi)| wi * (y * e - softplus(e)))
            .sum()
    }

    fn check_divergence(&self, beta: &[f64], eta: &[f64]) -> Result<()> {
        for (j, range) in self.ranges.iter().enumerate() {
            if (beta[j + 1] * range).abs() > DIVERGENCE_THRESHOLD {
                return Err(Error::Separation { column: j + 1 });
            }
        }
        if eta.iter().any(|e| e.abs() > DIVERGENCE_THRESHOLD) {
            return Err(Error::Separation { column: 0 });
        }
        Ok(())
    }

    fn check_flat(&self, p: &[f64], w: &[f64], total: f64) -> Result<()> {
        for j in 1..self.q {
            let mean = (0..self.nrows())
                .map(|i| w[i] * self.rows[i * self.q + j])
                .sum::<f64>()
                / total;
            let mut spread = 0.0;
            let mut info = 0.0;
            for i in 0..self.nrows() {
                let dev = (self.rows[i * self.q + j] - mean).powi(2);
                spread += w[i] * dev;
                info += w[i] * p[i] * (1.0 - p[i]) * dev;
            }
            if info <= FLAT_INFORMATION_RATIO * spread {
                return Err(Error::Separation { column: j });
            }
        }
        Ok(())
    }

    /// Maximises the weighted Bernoulli log-likelihood, optionally starting
    /// from `start`.
    pub fn fit(&self, w: &[f64], opts: &FitOptions, start: Option<&[f64]>) -> Result<LogisticFit> {
        let n = self.nrows();
        let q = self.q;
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            });
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }

        let mut beta: Vec<f64> = match start {
            Some(s) if s.len() == q => s.to_vec(),
            _ => vec![0.0; q],
        };
        let mut eta = self.eta(&beta);
        let mut ll = self.loglik(&eta, w);
        let mut gradient_norm = f64::INFINITY;
        let mut p = vec![0.0; n];
        let mut score = vec![0.0; q];
        let mut info = vec![0.0; q * q];

        for iter in 0..=opts.max_iter {
            score.iter_mut().for_each(|v| *v = 0.0);
            info.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                p[i] = sigmoid(eta[i]);
                let x = self.row(i);
                let r = w[i] * (self.y[i] - p[i]);
                let v = w[i] * p[i] * (1.0 - p[i]);
                for a in 0..q {
                    score[a] += r * x[a];
                    let vx = v * x[a];
                    for b in a..q {
                        info[a * q + b] += vx * x[b];
                    }
                }
            }
            gradient_norm = score.iter().map(|v| v * v).sum::<f64>().sqrt() / total;
            if gradient_norm <= opts.tol {
                self.check_flat(&p, w, total)?;
                return Ok(LogisticFit {
                    beta,
                    converged: true,
                    iterations: iter,
                    gradient_norm,
                });
            }
            if iter == opts.max_iter {
                break;
            }

            let info = DMatrix::from_fn(q, q, |a, b| info[a.min(b) * q + a.max(b)]);
            let step = info
                .cholesky()
                .ok_or_else(|| Error::RankDeficient("information matrix is singular".into()))?
                .solve(&DVector::from_column_slice(&score));

            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let candidate: Vec<f64> = beta
                    .iter()
                    .zip(step.iter())
                    .map(|(b, s)| b + scale * s)
                    .collect();
                let cand_eta = self.eta(&candidate);
                let cand_ll = self.loglik(&cand_eta, w);
                if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                    let improving = cand_ll > ll;
                    beta = candidate;
                    eta = cand_eta;
                    ll = cand_ll;
                    accepted = true;
                    if improving {
                        self.check_divergence(&beta, &eta)?;
                    }
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NonConvergence {
            iterations: opts.max_iter,
            gradient_norm,
        })
    }
}

/// Fits `logit Pr(y=1) = beta_0 + x'beta` by weighted maximum likelihood.
/// `x` excludes the intercept column.
pub fn fit_weighted_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    opts: &FitOptions,
) -> Result<LogisticFit> {
    LogisticProblem::new(x, y)?.fit(w, opts, None)
}

/// `logit^{-1}(beta . (1, x))`.
pub fn predict_prob(fit: &LogisticFit, x: &[f64]) -> Result<f64> {
    predict_with(&fit.beta, x)
}

pub(crate) fn predict_with(beta: &[f64], x: &[f64]) -> Result<f64> {
    if beta.len() != x.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: beta.len().saturating_sub(1),
            found: x.len(),
        });
    }
    let eta = beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    Ok(sigmoid(eta))
}
