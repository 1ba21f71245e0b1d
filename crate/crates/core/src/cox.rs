//! Weighted Cox proportional-hazards regression (Breslow ties) and the
//! Breslow estimator of the baseline cumulative hazard.
//!
//! Design columns are laid out as
//! `[a] ++ [m_1..m_k] ++ [a*m_j for j > ell] ++ [c_1..c_p]`.
//! Structural-zero mediators get no interaction column: whenever `m_j = 1`
//! for `j <= ell` we also have `a = 1`, so `a*m_j` equals `m_j` and the
//! extra column would make the model non-identified.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MediatorSchema};
use crate::error::{Error, Result};
use crate::logistic::{FitOptions, DIVERGENCE_THRESHOLD, FLAT_INFORMATION_RATIO};

const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub schema: MediatorSchema,
    pub p: usize,
}

impl DesignSpec {
    pub fn new(schema: MediatorSchema, p: usize) -> Self {
        Self { schema, p }
    }

    pub fn for_dataset(d: &Dataset) -> Self {
        Self::new(d.schema().clone(), d.p())
    }

    pub fn ncols(&self) -> usize {
        let k = self.schema.k;
        1 + k + (k - self.schema.ell) + self.p
    }

    pub fn exposure_index(&self) -> usize {
        0
    }

    pub fn mediator_index(&self, j: usize) -> usize {
        1 + j
    }

    /// Column of `a*m_j`; `None` for structural-zero mediators.
    pub fn interaction_index(&self, j: usize) -> Option<usize> {
        (j >= self.schema.ell).then(|| 1 + self.schema.k + (j - self.schema.ell))
    }

    pub fn covariate_index(&self, i: usize) -> usize {
        1 + self.schema.k + (self.schema.k - self.schema.ell) + i
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["a".to_string()];
        names.extend(self.schema.names.iter().cloned());
        names.extend(
            self.schema.names[self.schema.ell..]
                .iter()
                .map(|n| format!("a:{n}")),
        );
        names.extend((1..=self.p).map(|i| format!("c_{i}")));
        names
    }

    /// Appends the design row for `(a, m, c)` to `out`.
    pub fn push_row(&self, a: u8, m: &[u8], c: &[f64], out: &mut Vec<f64>) {
        let a = f64::from(a);
        out.push(a);
        out.extend(m.iter().map(|&v| f64::from(v)));
        out.extend(m[self.schema.ell..].iter().map(|&v| a * f64::from(v)));
        out.extend_from_slice(c);
    }

    /// `theta . x(a, m, c)` without materialising the row.
    pub fn linear_predictor(&self, theta: &[f64], a: u8, m: &[u8], c: &[f64]) -> f64 {
        let a = f64::from(a);
        let mut eta = theta[0] * a + self.covariate_part(theta, c);
        for (j, &mj) in m.iter().enumerate() {
            if mj == 1 {
                eta += theta[self.mediator_index(j)];
                if let Some(ix) = self.interaction_index(j) {
                    eta += theta[ix] * a;
                }
            }
        }
        eta
    }

    pub(crate) fn covariate_part(&self, theta: &[f64], c: &[f64]) -> f64 {
        let base = self.covariate_index(0);
        c.iter().enumerate().map(|(i, v)| theta[base + i] * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the partial-likelihood score divided by the total weight.
    pub gradient_norm: f64,
}

/// Right-continuous step function: 0 before the first knot, last value
/// after the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "knots must be strictly increasing".into(),
            ));
        }
        if values.first().is_some_and(|&v| v < 0.0) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(
                "cumulative hazard must be nonnegative and nondecreasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn zero() -> Self {
        Self {
            times: vec![],
            values: vec![],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first_knot(&self) -> Option<f64> {
        self.times.first().copied()
    }
}

/// Last-observation-carried-forward evaluation of `s` at `t`.
pub fn cumhaz_at(s: &StepFunction, t: f64) -> f64 {
    let idx = s.times.partition_point(|&knot| knot <= t);
    if idx == 0 {
        0.0
    } else {
        s.values[idx - 1]
    }
}

struct Derivatives {
    loglik: f64,
    score: DVector<f64>,
    info: DMatrix<f64>,
}

/// Sorted survival data and design, reusable across weight vectors.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    q: usize,
    /// Row-major design, `n x q`.
    design: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
    /// Subject indices sorted by decreasing time.
    order: Vec<usize>,
    /// `[start, end)` ranges into `order` sharing one time value.
    groups: Vec<(usize, usize)>,
    ranges: Vec<f64>,
}

impl CoxProblem {
    pub fn new(d: &Dataset, spec: &DesignSpec) -> Result<Self> {
        if spec.p != d.p() || spec.schema != *d.schema() {
            return Err(Error::InvalidInput(
                "design spec does not match dataset".into(),
            ));
        }
        let q = spec.ncols();
        let mut design = Vec::with_capacity(d.len() * q);
        for r in d.records() {
            spec.push_row(r.a, &r.m, &r.c, &mut design);
        }
        let times = d.records().iter().map(|r| r.time).collect();
        let events = d.records().iter().map(|r| r.event).collect();
        Self::from_design(q, design, times, events)
    }

    /// Builds a problem from an explicit row-major `n x q` design.
    pub fn from_design(
        q: usize,
        design: Vec<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
    ) -> Result<Self> {
        Self::build(q, design, times, events, true)
    }

    fn build(
        q: usize,
        design: Vec<f64>,
        times: Vec<f64>,
        events: Vec<bool>,
        reject_constant: bool,
    ) -> Result<Self> {
        let n = times.len();
        if design.len() != n * q {
            return Err(Error::DimensionMismatch {
                expected: n * q,
                found: design.len(),
            });
        }
        if events.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: events.len(),
            });
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("times must be finite".into()));
        }
        let mut ranges = Vec::with_capacity(q);
        for j in 0..q {
            let col = (0..n).map(|i| design[i * q + j]);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            if reject_constant && n > 0 && lo == hi {
                return Err(Error::RankDeficient(format!(
                    "design column {j} is constant (collinear with the baseline hazard)"
                )));
            }
            ranges.push(hi - lo);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| times[j].total_cmp(&times[i]).then(i.cmp(&j)));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let t = times[order[start]];
            let mut end = start + 1;
            while end < n && times[order[end]] == t {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Ok(Self {
            q,
            design,
            times,
            events,
            order,
            groups,
            ranges,
        })
    }

    pub fn nrows(&self) -> usize {
        self.times.len()
    }

    pub fn ncoef(&self) -> usize {
        self.q
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.q..(i + 1) * self.q]
    }

    fn eta(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| self.row(i).iter().zip(theta).map(|(x, b)| x * b).sum())
            .collect()
    }

    fn check_weights(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.nrows(),
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
        Ok(total)
    }

    /// Weighted Breslow partial log-likelihood at `theta`.
    pub fn loglik(&self, theta: &[f64], w: &[f64]) -> Result<f64> {
        self.check_weights(w)?;
        Ok(self.derivatives(theta, w, false).loglik)
    }

    fn derivatives(&self, theta: &[f64], w: &[f64], second: bool) -> Derivatives {
        let q = self.q;
        let eta = self.eta(theta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; q];
        let mut s2 = vec![0.0; if second { q * q } else { 0 }];
        let mut loglik = 0.0;
        let mut score = vec![0.0; q];
        let mut info = vec![0.0; if second { q * q } else { 0 }];

        for &(start, end) in &self.groups {
            let mut dw = 0.0;
            for &i in &self.order[start..end] {
                let x = self.row(i);
                let r = w[i] * (eta[i] - shift).exp();
                s0 += r;
                for a in 0..q {
                    let rx = r * x[a];
                    s1[a] += rx;
                    if second {
                        for b in a..q {
                            s2[a * q + b] += rx * x[b];
                        }
                    }
                }
                if self.events[i] && w[i] > 0.0 {
                    dw += w[i];
                    loglik += w[i] * (eta[i] - shift);
                    for a in 0..q {
                        score[a] += w[i] * x[a];
                    }
                }
            }
            if dw == 0.0 {
                continue;
            }
            loglik -= dw * s0.ln();
            for a in 0..q {
                let mean_a = s1[a] / s0;
                score[a] -= dw * mean_a;
                if second {
                    for b in a..q {
                        info[a * q + b] += dw * (s2[a * q + b] / s0 - mean_a * s1[b] / s0);
                    }
                }
            }
        }
        let info = if second {
            DMatrix::from_fn(q, q, |a, b| {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                info[lo * q + hi]
            })
        } else {
            DMatrix::zeros(0, 0)
        };
        Derivatives {
            loglik,
            score: DVector::from_vec(score),
            info,
        }
    }

    fn check_divergence(&self, theta: &[f64]) -> Result<()> {
        for (j, (b, r)) in theta.iter().zip(&self.ranges).enumerate() {
            if (b * r).abs() > DIVERGENCE_THRESHOLD {
                return Err(Error::MonotoneLikelihood { column: j });
            }
        }
        Ok(())
    }

    /// A coefficient whose information is negligible next to its column's
    /// weighted spread sits on a likelihood plateau at infinity.
    fn check_flat(&self, info: &DMatrix<f64>, w: &[f64], total: f64) -> Result<()> {
        for j in 0..self.q {
            let mean = (0..self.nrows())
                .map(|i| w[i] * self.design[i * self.q + j])
                .sum::<f64>()
                / total;
            let spread: f64 = (0..self.nrows())
                .map(|i| w[i] * (self.design[i * self.q + j] - mean).powi(2))
                .sum();
            if info[(j, j)] <= FLAT_INFORMATION_RATIO * spread {
                return Err(Error::MonotoneLikelihood { column: j });
            }
        }
        Ok(())
    }

    /// Newton–Raphson with step-halving on the weighted partial likelihood.
    pub fn fit(&self, w: &[f64], opts: &FitOptions, start: Option<&[f64]>) -> Result<CoxFit> {
        let total = self.check_weights(w)?;
        let distinct_events = self
            .groups
            .iter()
            .filter(|&&(s, e)| {
                self.order[s..e]
                    .iter()
                    .any(|&i| self.events[i] && w[i] > 0.0)
            })
            .count();
        if distinct_events < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 distinct event times, found {distinct_events}"
            )));
        }

        let mut theta: Vec<f64> = match start {
            Some(s) if s.len() == self.q => s.to_vec(),
            _ => vec![0.0; self.q],
        };
        let mut gradient_norm = f64::INFINITY;
        let mut current = self.derivatives(&theta, w, true);
        for iter in 0..=opts.max_iter {
            gradient_norm = current.score.norm() / total;
            if gradient_norm <= opts.tol {
                self.check_flat(&current.info, w, total)?;
                return Ok(CoxFit {
                    theta,
                    loglik: current.loglik,
                    converged: true,
                    iterations: iter,
                    gradient_norm,
                });
            }
            if iter == opts.max_iter {
                break;
            }
            let step = current
                .info
                .clone()
                .cholesky()
                .ok_or_else(|| {
                    Error::RankDeficient("information matrix is singular (collinear design)".into())
                })?
                .solve(&current.score);

            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let candidate: Vec<f64> = theta
                    .iter()
                    .zip(step.iter())
                    .map(|(t, s)| t + scale * s)
                    .collect();
                let evaluated = self.derivatives(&candidate, w, true);
                let floor = current.loglik - 1e-12 * current.loglik.abs().max(1.0);
                if evaluated.loglik.is_finite() && evaluated.loglik >= floor {
                    let improving = evaluated.loglik > current.loglik;
                    theta = candidate;
                    current = evaluated;
                    accepted = true;
                    if improving {
                        self.check_divergence(&theta)?;
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

    /// Breslow cumulative baseline hazard at `theta`: at each distinct
    /// event time the increment is (weighted events) / (weighted risk-set
    /// sum of `exp(theta . x)`).
    pub fn baseline(&self, theta: &[f64], w: &[f64]) -> Result<StepFunction> {
        self.check_weights(w)?;
        if theta.len() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                found: theta.len(),
            });
        }
        let eta = self.eta(theta);
        let mut s0 = 0.0;
        let mut knots = Vec::new();
        let mut increments = Vec::new();
        for &(start, end) in &self.groups {
            let mut dw = 0.0;
            for &i in &self.order[start..end] {
                s0 += w[i] * eta[i].exp();
                if self.events[i] {
                    dw += w[i];
                }
            }
            if dw > 0.0 {
                let t = self.times[self.order[start]];
                if s0 <= 0.0 {
                    return Err(Error::EmptyRiskSet { time: t });
                }
                knots.push(t);
                increments.push(dw / s0);
            }
        }
        knots.reverse();
        increments.reverse();
        let mut acc = 0.0;
        let values = increments
            .iter()
            .map(|inc| {
                acc += inc;
                acc
            })
            .collect();
        Ok(StepFunction {
            times: knots,
            values,
        })
    }
}

/// Fits the outcome model to `d` with subject weights `w`.
pub fn fit_weighted_cox(
    d: &Dataset,
    spec: &DesignSpec,
    w: &[f64],
    opts: &FitOptions,
) -> Result<CoxFit> {
    CoxProblem::new(d, spec)?.fit(w, opts, None)
}

/// Breslow baseline for a fit obtained from `d` with the same weights.
pub fn breslow_baseline(fit: &CoxFit, d: &Dataset, w: &[f64]) -> Result<StepFunction> {
    let spec = DesignSpec::for_dataset(d);
    if fit.theta.len() != spec.ncols() {
        return Err(Error::DimensionMismatch {
            expected: spec.ncols(),
            found: fit.theta.len(),
        });
    }
    let mut design = Vec::with_capacity(d.len() * spec.ncols());
    for r in d.records() {
        spec.push_row(r.a, &r.m, &r.c, &mut design);
    }
    // Constant columns are legal here; only the fit needs them to vary.
    let times = d.records().iter().map(|r| r.time).collect();
    let events = d.records().iter().map(|r| r.event).collect();
    CoxProblem::build(spec.ncols(), design, times, events, false)?.baseline(&fit.theta, w)
}
