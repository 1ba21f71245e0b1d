//! Factorised joint mediator law `Pr(m | a, c) = prod_j Pr(m_j | m_<j, a, c)`
//! with one logistic model per factor.
//!
//! Regressor recipes (intercept always first):
//! * `j <= ell` (structural zero): `c`, then `m_1..m_{j-1}`; fit on exposed rows only.
//! * `j > ell`: `a`, `c`, then for each earlier `i`, `a*m_i` if `i <= ell`
//!   and `m_i` otherwise; fit on all rows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MediatorSchema};
use crate::error::{Error, Result};
use crate::logistic::{sigmoid, FitOptions, LogisticFit, LogisticProblem};

/// Largest `k` for which `enumerate_joint` materialises all `2^k` vectors.
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorJointModel {
    schema: MediatorSchema,
    p: usize,
    fits: Vec<LogisticFit>,
}

/// Number of regressors (excluding the intercept) for factor `j`.
fn recipe_len(schema: &MediatorSchema, p: usize, j: usize) -> usize {
    if schema.is_structural(j) {
        p + j
    } else {
        1 + p + j
    }
}

/// Appends the regressors of factor `j` to `out`. Only `m[..j]` is read.
fn push_regressors(
    schema: &MediatorSchema,
    j: usize,
    a: u8,
    c: &[f64],
    m: &[u8],
    out: &mut Vec<f64>,
) {
    let af = f64::from(a);
    if schema.is_structural(j) {
        out.extend_from_slice(c);
        out.extend(m[..j].iter().map(|&v| f64::from(v)));
    } else {
        out.push(af);
        out.extend_from_slice(c);
        out.extend(m[..j].iter().enumerate().map(|(i, &v)| {
            if schema.is_structural(i) {
                af * f64::from(v)
            } else {
                f64::from(v)
            }
        }));
    }
}

impl MediatorJointModel {
    /// Assembles a model from coefficient vectors (intercept first), one per
    /// factor in schema order.
    pub fn from_parts(schema: MediatorSchema, p: usize, betas: Vec<Vec<f64>>) -> Result<Self> {
        schema.check()?;
        if betas.len() != schema.k {
            return Err(Error::DimensionMismatch {
                expected: schema.k,
                found: betas.len(),
            });
        }
        let mut fits = Vec::with_capacity(schema.k);
        for (j, beta) in betas.into_iter().enumerate() {
            let expected = 1 + recipe_len(&schema, p, j);
            if beta.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: beta.len(),
                });
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite coefficient in factor {}",
                    j + 1
                )));
            }
            fits.push(LogisticFit {
                beta,
                converged: true,
                iterations: 0,
                gradient_norm: 0.0,
            });
        }
        Ok(Self { schema, p, fits })
    }

    pub fn schema(&self) -> &MediatorSchema {
        &self.schema
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.schema.k
    }

    pub fn fits(&self) -> &[LogisticFit] {
        &self.fits
    }

    /// `Pr(m_j = 1 | m_<j, a, c)`. Structural factors under `a = 0` are 0.
    fn factor_prob(&self, j: usize, a: u8, c: &[f64], m: &[u8], scratch: &mut Vec<f64>) -> f64 {
        if a == 0 && self.schema.is_structural(j) {
            return 0.0;
        }
        scratch.clear();
        push_regressors(&self.schema, j, a, c, m, scratch);
        let beta = &self.fits[j].beta;
        let eta = beta[0]
            + beta[1..]
                .iter()
                .zip(scratch.iter())
                .map(|(b, x)| b * x)
                .sum::<f64>();
        sigmoid(eta)
    }

    pub(crate) fn check_inputs(&self, a: u8, c: &[f64]) -> Result<()> {
        if a > 1 {
            return Err(Error::InvalidInput(format!(
                "exposure must be 0 or 1, got {a}"
            )));
        }
        if c.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: c.len(),
            });
        }
        Ok(())
    }
}

/// Row subsets and designs for every factor, reusable across weight vectors.
#[derive(Debug, Clone)]
pub struct MediatorFitter {
    schema: MediatorSchema,
    p: usize,
    factors: Vec<FactorProblem>,
}

#[derive(Debug, Clone)]
struct FactorProblem {
    rows: Vec<usize>,
    problem: LogisticProblem,
}

impl MediatorFitter {
    pub fn new(d: &Dataset) -> Result<Self> {
        let schema = d.schema().clone();
        let p = d.p();
        let mut factors = Vec::with_capacity(schema.k);
        let mut scratch = Vec::new();
        for j in 0..schema.k {
            let rows: Vec<usize> = d
                .records()
                .iter()
                .enumerate()
                .filter(|(_, r)| !schema.is_structural(j) || r.a == 1)
                .map(|(i, _)| i)
                .collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|&i| f64::from(d.records()[i].m[j]))
                .collect();
            if y.is_empty() || y.iter().all(|&v| v == y[0]) {
                return Err(Error::DegenerateMediator { index: j + 1 });
            }
            let q = recipe_len(&schema, p, j);
            let mut flat = Vec::with_capacity(rows.len() * q);
            for &i in &rows {
                let r = &d.records()[i];
                scratch.clear();
                push_regressors(&schema, j, r.a, &r.c, &r.m, &mut scratch);
                flat.extend_from_slice(&scratch);
            }
            let x = DMatrix::from_row_slice(rows.len(), q, &flat);
            let problem = LogisticProblem::new(&x, &y)?;
            factors.push(FactorProblem { rows, problem });
        }
        Ok(Self { schema, p, factors })
    }

    /// Fits every factor with subject weights `w` (indexed like the dataset),
    /// optionally warm-starting from `start`.
    pub fn fit(
        &self,
        w: &[f64],
        opts: &FitOptions,
        start: Option<&MediatorJointModel>,
    ) -> Result<MediatorJointModel> {
        let mut fits = Vec::with_capacity(self.factors.len());
        for (j, f) in self.factors.iter().enumerate() {
            let wj: Vec<f64> = f
                .rows
                .iter()
                .map(|&i| {
                    w.get(i).copied().ok_or(Error::DimensionMismatch {
                        expected: i + 1,
                        found: w.len(),
                    })
                })
                .collect::<Result<_>>()?;
            let warm = start
                .and_then(|m| m.fits.get(j))
                .map(|fit| fit.beta.as_slice());
            fits.push(f.problem.fit(&wj, opts, warm)?);
        }
        Ok(MediatorJointModel {
            schema: self.schema.clone(),
            p: self.p,
            fits,
        })
    }
}

/// Fits the factorised mediator law to `d` with subject weights `w`.
pub fn fit_mediator_model(d: &Dataset, w: &[f64]) -> Result<MediatorJointModel> {
    if w.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: w.len(),
        });
    }
    MediatorFitter::new(d)?.fit(w, &FitOptions::default(), None)
}

/// `Pr(m | a, c)` under the fitted factorisation.
pub fn joint_prob(mdl: &MediatorJointModel, m: &[u8], a: u8, c: &[f64]) -> Result<f64> {
    mdl.check_inputs(a, c)?;
    if m.len() != mdl.k() {
        return Err(Error::DimensionMismatch {
            expected: mdl.k(),
            found: m.len(),
        });
    }
    if m.iter().any(|&v| v > 1) {
        return Err(Error::InvalidInput("mediator values must be 0 or 1".into()));
    }
    let mut scratch = Vec::new();
    let mut prob = 1.0;
    for (j, &mj) in m.iter().enumerate() {
        let p1 = mdl.factor_prob(j, a, c, m, &mut scratch);
        prob *= if mj == 1 { p1 } else { 1.0 - p1 };
    }
    Ok(prob)
}

/// Decodes index `idx` of an enumeration over `k` mediators; `m_1` is the
/// most significant bit.
pub fn mediator_vector(idx: usize, k: usize) -> Vec<u8> {
    (0..k).map(|j| ((idx >> (k - 1 - j)) & 1) as u8).collect()
}

/// Reusable buffers for repeated enumerations.
#[derive(Debug, Default, Clone)]
pub(crate) struct JointEnumerator {
    probs: Vec<f64>,
    next: Vec<f64>,
    prefix: Vec<u8>,
    scratch: Vec<f64>,
}

impl JointEnumerator {
    /// Fills and returns the `2^k` probabilities; inputs must already be
    /// validated and `k <= ENUMERATION_CAP`.
    pub(crate) fn fill(&mut self, mdl: &MediatorJointModel, a: u8, c: &[f64]) -> &[f64] {
        let k = mdl.k();
        self.probs.clear();
        self.probs.push(1.0);
        self.prefix.clear();
        self.prefix.resize(k, 0);
        for j in 0..k {
            self.next.clear();
            self.next.resize(self.probs.len() * 2, 0.0);
            for (idx, &pr) in self.probs.iter().enumerate() {
                if pr == 0.0 {
                    continue;
                }
                for (i, slot) in self.prefix[..j].iter_mut().enumerate() {
                    *slot = ((idx >> (j - 1 - i)) & 1) as u8;
                }
                let p1 = mdl.factor_prob(j, a, c, &self.prefix, &mut self.scratch);
                self.next[2 * idx] = pr * (1.0 - p1);
                self.next[2 * idx + 1] = pr * p1;
            }
            std::mem::swap(&mut self.probs, &mut self.next);
        }
        &self.probs
    }
}

/// Probabilities of all `2^k` mediator vectors in lexicographic order
/// (see [`mediator_vector`]).
pub fn enumerate_joint(mdl: &MediatorJointModel, a: u8, c: &[f64]) -> Result<Vec<f64>> {
    mdl.check_inputs(a, c)?;
    let k = mdl.k();
    if k > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            k,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(JointEnumerator::default().fill(mdl, a, c).to_vec())
}
