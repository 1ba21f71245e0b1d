//! Bayesian bootstrap: every replicate refits the full pipeline under
//! flat-Dirichlet subject weights scaled to sum to `n`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{EffectEstimates, Neumaier, Pipeline};

pub const DEFAULT_REPLICATES: usize = 1000;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;
pub const CI_LEVEL: f64 = 0.95;

/// `n` unit-exponential draws rescaled to sum to `n`.
pub fn draw_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let mut total = Neumaier::default();
    draws.iter().for_each(|&x| total.add(x));
    let scale = n as f64 / total.value();
    draws.into_iter().map(|x| x * scale).collect()
}

/// Generator for replicate `rep`: stream `rep` of the ChaCha8 key derived
/// from `seed`, so replicate output never depends on scheduling.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub rep: usize,
    /// `None` when the refit failed.
    pub estimates: Option<EffectEstimates>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectIntervals {
    pub joint: Interval,
    pub anesthesia: Interval,
    pub surgery: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: Vec<Replicate>,
    pub point: EffectEstimates,
    pub ci: EffectIntervals,
    pub seed: u64,
    #[serde(rename = "R")]
    pub r: usize,
    pub failed: usize,
}

impl BootstrapResult {
    /// Writes `rep,joint,anesthesia,surgery,converged`; failed replicates
    /// have empty effect fields.
    pub fn write_replicates_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_replicates(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_replicates<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "rep,joint,anesthesia,surgery,converged")?;
        for r in &self.replicates {
            match &r.estimates {
                Some(e) => writeln!(
                    out,
                    "{},{},{},{},true",
                    r.rep, e.joint, e.anesthesia, e.surgery
                )?,
                None => writeln!(out, "{},,,,false", r.rep)?,
            }
        }
        Ok(())
    }
}

fn interval(values: &mut [f64]) -> Interval {
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - CI_LEVEL) / 2.0;
    Interval {
        lower: percentile(values, alpha),
        upper: percentile(values, 1.0 - alpha),
    }
}

/// Bootstrap over a prepared pipeline. Replicates run on the current rayon
/// pool and warm-start from the unit-weight fit.
pub fn bootstrap_with(
    pipeline: &Pipeline,
    d: &Dataset,
    t: f64,
    r: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if r < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 replicates, got {r}"
        )));
    }
    let unit = vec![1.0; d.len()];
    let point_models = pipeline.fit(&unit, None)?;
    let point = {
        let [r00, r01, r11] = crate::estimator::estimate_arms(&point_models, d, t, &unit)?;
        crate::estimator::effect_ratios(&r00, &r01, &r11)?
    };

    let replicates: Vec<Replicate> = (0..r)
        .into_par_iter()
        .map(|rep| {
            let w = draw_weights(d.len(), &mut replicate_rng(seed, rep as u64));
            match pipeline.effects(d, t, &w, Some(&point_models)) {
                Ok(e) => Replicate {
                    rep,
                    estimates: Some(e),
                    error: None,
                },
                Err(err) => Replicate {
                    rep,
                    estimates: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();

    let failed = replicates.iter().filter(|x| x.estimates.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * r as f64 {
        let first = replicates
            .iter()
            .find_map(|x| {
                x.error
                    .as_ref()
                    .map(|e| format!("replicate {}: {e}", x.rep))
            })
            .unwrap_or_default();
        return Err(Error::TooManyFailures {
            failed,
            total: r,
            first,
        });
    }
    let mut cols = [Vec::new(), Vec::new(), Vec::new()];
    for e in replicates.iter().filter_map(|x| x.estimates) {
        for (col, v) in cols.iter_mut().zip(e.as_array()) {
            col.push(v);
        }
    }
    let [joint, anesthesia, surgery] = &mut cols;
    let ci = EffectIntervals {
        joint: interval(joint),
        anesthesia: interval(anesthesia),
        surgery: interval(surgery),
    };
    Ok(BootstrapResult {
        replicates,
        point,
        ci,
        seed,
        r,
        failed,
    })
}

/// Point estimates at unit weights plus `r` Bayesian-bootstrap replicates
/// seeded by `(seed, replicate index)`.
pub fn bootstrap_effects(d: &Dataset, t: f64, r: usize, seed: u64) -> Result<BootstrapResult> {
    bootstrap_with(&Pipeline::new(d)?, d, t, r, seed)
}
