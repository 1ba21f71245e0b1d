//! Synthetic data with known separable effects, Monte Carlo truths, and the
//! repeated-sampling experiment harness (RMSE and CI coverage of the
//! sensitivity-adjusted anesthesia effect).
//!
//! Per subject: `C ~ N(0, I_4)`, `A ~ Bern(expit(-2 + sum C))`, and for each
//! counterfactual arm `(n, o)`:
//! * `M1(n,o) = n * 1[u1 < expit(-1 + sum C + xi*o)]`
//! * `M2(n,o) = 1[u2 < expit(-2 + sum C + n + tau*o)]`
//! * `Y(n,o) = (scale * -log U / exp(0.25 sum C - 1.5 M1 - 1.5 M2 + 0.5 o + zeta n))^shape`
//!
//! The uniforms `u1`, `u2`, `U` are shared by all arms of a subject.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_with, replicate_rng, MAX_FAILURE_FRACTION};
use crate::data::{Dataset, MediatorSchema, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimator::Pipeline;
use crate::logistic::sigmoid;
use crate::sensitivity::SensitivityKind;

/// Counterfactual arms `(n, o)` in storage order.
pub const LATENT_ARMS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 1), (1, 0)];

fn default_n() -> usize {
    5000
}
fn default_shape() -> f64 {
    2.0
}
fn default_scale() -> f64 {
    2.0
}
fn default_dropout() -> f64 {
    0.5
}
fn default_cutoff() -> f64 {
    15.0
}
fn default_coefficients() -> OutcomeCoefficients {
    OutcomeCoefficients::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCoefficients {
    /// Coefficient on each of the four covariates.
    pub c: f64,
    pub m1: f64,
    pub m2: f64,
    pub o: f64,
}

impl Default for OutcomeCoefficients {
    fn default() -> Self {
        Self {
            c: 0.25,
            m1: -1.5,
            m2: -1.5,
            o: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default)]
    pub xi: f64,
    /// Anesthesia effect on `M2`; equals `xi` when absent.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shape")]
    pub shape: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_coefficients")]
    pub outcome: OutcomeCoefficients,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            zeta: 0.0,
            xi: 0.0,
            tau: None,
            seed: 0,
            shape: default_shape(),
            scale: default_scale(),
            dropout_rate: default_dropout(),
            cutoff: default_cutoff(),
            outcome: OutcomeCoefficients::default(),
        }
    }
}

impl DgpConfig {
    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.xi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        for (name, v) in [
            ("shape", self.shape),
            ("scale", self.scale),
            ("dropout_rate", self.dropout_rate),
            ("cutoff", self.cutoff),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let o = &self.outcome;
        if [self.zeta, self.xi, self.tau(), o.c, o.m1, o.m2, o.o]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Outcome time for arm `(n, o)` with mediators `m`.
    pub fn outcome_time(&self, sum_c: f64, n: u8, o: u8, m: [u8; 2], neg_log_u: f64) -> f64 {
        let b = &self.outcome;
        let lp = b.c * sum_c
            + b.m1 * f64::from(m[0])
            + b.m2 * f64::from(m[1])
            + b.o * f64::from(o)
            + self.zeta * f64::from(n);
        (self.scale * neg_log_u / lp.exp()).powf(self.shape)
    }

    /// `Pr(M1 = 1)` and `Pr(M2 = 1)` for arm `(n, o)`.
    pub fn mediator_probs(&self, sum_c: f64, n: u8, o: u8) -> [f64; 2] {
        let (n, o) = (f64::from(n), f64::from(o));
        [
            n * sigmoid(-1.0 + sum_c + self.xi * o),
            sigmoid(-2.0 + sum_c + n + self.tau() * o),
        ]
    }
}

/// Counterfactual mediators and outcomes of one subject, indexed like
/// [`LATENT_ARMS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentSubject {
    pub sum_c: f64,
    pub neg_log_u: f64,
    pub m: [[u8; 2]; 4],
    pub y: [f64; 4],
}

impl LatentSubject {
    pub fn arm(n: u8, o: u8) -> usize {
        LATENT_ARMS
            .iter()
            .position(|&x| x == (n, o))
            .expect("binary arm")
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub observed: Dataset,
    pub latent: Vec<LatentSubject>,
}

struct Draw {
    c: [f64; 4],
    a: u8,
    latent: LatentSubject,
    dropout: f64,
}

fn draw_subject<R: Rng>(cfg: &DgpConfig, dropout: &Exp<f64>, rng: &mut R) -> Draw {
    let c: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let sum_c: f64 = c.iter().sum();
    let u_a: f64 = rng.sample(Open01);
    let u1: f64 = rng.sample(Open01);
    let u2: f64 = rng.sample(Open01);
    let u: f64 = rng.sample(Open01);
    let s1 = rng.sample(dropout);
    let a = u8::from(u_a < sigmoid(-2.0 + sum_c));
    let neg_log_u = -u.ln();
    let mut m = [[0u8; 2]; 4];
    let mut y = [0.0; 4];
    for (ix, &(n, o)) in LATENT_ARMS.iter().enumerate() {
        let [p1, p2] = cfg.mediator_probs(sum_c, n, o);
        m[ix] = [u8::from(u1 < p1), u8::from(u2 < p2)];
        y[ix] = cfg.outcome_time(sum_c, n, o, m[ix], neg_log_u);
    }
    Draw {
        c,
        a,
        latent: LatentSubject {
            sum_c,
            neg_log_u,
            m,
            y,
        },
        dropout: s1,
    }
}

/// Simulates `cfg.n` subjects from the generator seeded by `cfg.seed`.
pub fn generate_dataset(cfg: &DgpConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dropout = Exp::new(cfg.dropout_rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut records = Vec::with_capacity(cfg.n);
    let mut latent = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let d = draw_subject(cfg, &dropout, &mut rng);
        let arm = LatentSubject::arm(d.a, d.a);
        let y = d.latent.y[arm];
        let censor = d.dropout.min(cfg.cutoff);
        records.push(SubjectRecord {
            c: d.c.to_vec(),
            a: d.a,
            m: d.latent.m[arm].to_vec(),
            time: y.min(censor),
            event: y <= censor,
        });
        latent.push(d.latent);
    }
    let schema = MediatorSchema::new(2, 1, vec!["m_1".into(), "m_2".into()])?;
    Ok(SimulatedData {
        observed: Dataset::new(schema, 4, records)?,
        latent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthStandardErrors {
    pub joint: f64,
    pub anesthesia: f64,
    pub surgery: f64,
    pub gamma: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub t: f64,
    pub joint: f64,
    pub anesthesia: f64,
    pub surgery: f64,
    /// `Pr{Y(1,1,M(0,0)) <= t} / Pr{Y(0,1,M(0,0)) <= t}`.
    pub gamma_true: f64,
    /// `Pr{Y(0,1,M(0,0)) <= t} / Pr{Y(0,1,M(0,1)) <= t}`.
    pub eta_true: f64,
    pub mc_size: usize,
    pub mc_se: TruthStandardErrors,
}

impl TrueEffects {
    /// True value of the bias parameter matching `kind`.
    pub fn bias_parameter(&self, kind: SensitivityKind) -> f64 {
        match kind {
            SensitivityKind::Gamma => self.gamma_true,
            SensitivityKind::Eta => self.eta_true,
        }
    }
}

/// Counts for one ratio of two event probabilities estimated on shared draws.
#[derive(Debug, Clone, Copy, Default)]
struct RatioCounts {
    num: u64,
    den: u64,
    both: u64,
}

impl RatioCounts {
    fn add(&mut self, num: bool, den: bool) {
        self.num += u64::from(num);
        self.den += u64::from(den);
        self.both += u64::from(num && den);
    }

    /// Ratio and its delta-method standard error.
    fn estimate(&self, n: usize, what: &str, t: f64) -> Result<(f64, f64)> {
        if self.den == 0 {
            return Err(Error::ZeroDenominator(format!(
                "no Monte Carlo draw of {what} fails by t = {t}"
            )));
        }
        let nf = n as f64;
        let (p1, p2, p12) = (
            self.num as f64 / nf,
            self.den as f64 / nf,
            self.both as f64 / nf,
        );
        let r = p1 / p2;
        let var = (p1 - 2.0 * r * p12 + r * r * p2) / (p2 * p2);
        Ok((r, (var.max(0.0) / nf).sqrt()))
    }
}

/// Monte Carlo truths at each horizon in `ts`, sharing one set of draws.
pub fn oracle_truths_at(cfg: &DgpConfig, ts: &[f64], mc_n: usize) -> Result<Vec<TrueEffects>> {
    cfg.validate()?;
    if mc_n == 0 {
        return Err(Error::InvalidInput("mc_n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dropout = Exp::new(cfg.dropout_rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
    // joint, anesthesia, surgery, gamma, eta
    let mut counts = vec![[RatioCounts::default(); 5]; ts.len()];
    let (i00, i01, i11) = (
        LatentSubject::arm(0, 0),
        LatentSubject::arm(0, 1),
        LatentSubject::arm(1, 1),
    );
    for _ in 0..mc_n {
        let d = draw_subject(cfg, &dropout, &mut rng).latent;
        let y = d.y;
        let m00 = d.m[i00];
        let y11_m00 = cfg.outcome_time(d.sum_c, 1, 1, m00, d.neg_log_u);
        let y01_m00 = cfg.outcome_time(d.sum_c, 0, 1, m00, d.neg_log_u);
        for (c, &t) in counts.iter_mut().zip(ts) {
            let (f00, f01, f11) = (y[i00] <= t, y[i01] <= t, y[i11] <= t);
            c[0].add(f11, f00);
            c[1].add(f01, f00);
            c[2].add(f11, f01);
            c[3].add(y11_m00 <= t, y01_m00 <= t);
            c[4].add(y01_m00 <= t, f01);
        }
    }
    counts
        .iter()
        .zip(ts)
        .map(|(c, &t)| {
            let (joint, se_j) = c[0].estimate(mc_n, "Y(0,0)", t)?;
            let (anesthesia, se_a) = c[1].estimate(mc_n, "Y(0,0)", t)?;
            let (surgery, se_s) = c[2].estimate(mc_n, "Y(0,1)", t)?;
            let (gamma_true, se_g) = c[3].estimate(mc_n, "Y(0,1,M(0,0))", t)?;
            let (eta_true, se_e) = c[4].estimate(mc_n, "Y(0,1)", t)?;
            Ok(TrueEffects {
                t,
                joint,
                anesthesia,
                surgery,
                gamma_true,
                eta_true,
                mc_size: mc_n,
                mc_se: TruthStandardErrors {
                    joint: se_j,
                    anesthesia: se_a,
                    surgery: se_s,
                    gamma: se_g,
                    eta: se_e,
                },
            })
        })
        .collect()
}

/// Monte Carlo truths at horizon `t` from `mc_n` latent draws seeded by `cfg.seed`.
pub fn oracle_truths(cfg: &DgpConfig, t: f64, mc_n: usize) -> Result<TrueEffects> {
    Ok(oracle_truths_at(cfg, &[t], mc_n)?.remove(0))
}

/// Horizon in `ts` whose truths are closest (max absolute deviation) to
/// the `(anesthesia, surgery, joint)` target.
pub fn best_matching_horizon(
    truths: &[TrueEffects],
    target: [f64; 3],
) -> Option<(TrueEffects, f64)> {
    truths
        .iter()
        .map(|x| {
            let dev = [
                x.anesthesia - target[0],
                x.surgery - target[1],
                x.joint - target[2],
            ]
            .iter()
            .fold(0.0f64, |acc, d| acc.max(d.abs()));
            (*x, dev)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Random uncensored, covariate-free dataset with `k` binary mediators (the
/// first `ell` structural) and integer times in `1..=5`. The first `2^k` rows
/// are exposed subjects covering every mediator vector, so each cell needed
/// by the front-door check is populated.
pub fn random_discrete_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    k: usize,
    ell: usize,
) -> Result<Dataset> {
    let schema = MediatorSchema::with_default_names(k, ell)?;
    let cells = 1usize << k;
    if n < cells + 1 {
        return Err(Error::InvalidInput(format!(
            "need more than {cells} rows for k = {k}"
        )));
    }
    let mut records = Vec::with_capacity(n);
    let time = |rng: &mut R| f64::from(rng.random_range(1u8..=5));
    for idx in 0..cells {
        records.push(SubjectRecord {
            c: vec![],
            a: 1,
            m: crate::mediator::mediator_vector(idx, k),
            time: time(rng),
            event: true,
        });
    }
    // guarantee one unexposed subject
    let mut a = 0u8;
    while records.len() < n {
        let m = (0..k)
            .map(|j| {
                if a == 0 && j < ell {
                    0
                } else {
                    u8::from(rng.random_bool(0.5))
                }
            })
            .collect();
        records.push(SubjectRecord {
            c: vec![],
            a,
            m,
            time: time(rng),
            event: true,
        });
        a = u8::from(rng.random_bool(0.5));
    }
    Dataset::new(schema, 0, records)
}

fn default_reps() -> usize {
    100
}
fn default_t() -> f64 {
    5.0
}
fn default_grid() -> Vec<f64> {
    (0..15)
        .map(|i| ((0.9 + 0.05 * i as f64) * 1e12).round() / 1e12)
        .collect()
}
fn default_boot() -> usize {
    200
}
fn default_mc_n() -> usize {
    1_000_000
}

/// Experiment settings; the JSON form nests the generator under `dgp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub dgp: DgpConfig,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_boot")]
    pub boot_r: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
    /// Reporting label; defaults to `eta` when `xi` or `tau` is nonzero.
    #[serde(default)]
    pub kind: Option<SensitivityKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgp: DgpConfig::default(),
            reps: default_reps(),
            t: default_t(),
            grid: default_grid(),
            boot_r: default_boot(),
            master_seed: 0,
            mc_n: default_mc_n(),
            kind: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn kind(&self) -> SensitivityKind {
        self.kind
            .unwrap_or(if self.dgp.xi != 0.0 || self.dgp.tau() != 0.0 {
                SensitivityKind::Eta
            } else {
                SensitivityKind::Gamma
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub est: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub data_seed: u64,
    pub boot_seed: u64,
    /// `None` when the rep failed; `lo`/`hi` are NaN without a bootstrap.
    pub effects: Option<[EffectSummary; 3]>,
    pub boot_failed: usize,
    pub error: Option<String>,
}

impl RepResult {
    pub fn anesthesia(&self) -> Option<EffectSummary> {
        self.effects.map(|e| e[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMetric {
    pub param: f64,
    pub rmse: f64,
    pub bias: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: SensitivityKind,
    pub truth: TrueEffects,
    pub reps: Vec<RepResult>,
    pub metrics: Vec<GridMetric>,
}

/// Data and bootstrap seeds for rep `rep`.
pub fn rep_seeds(master_seed: u64, rep: usize) -> (u64, u64) {
    let mut rng = replicate_rng(master_seed, rep as u64);
    (rng.next_u64(), rng.next_u64())
}

fn run_rep(cfg: &ExperimentConfig, rep: usize) -> RepResult {
    let (data_seed, boot_seed) = rep_seeds(cfg.master_seed, rep);
    let outcome = (|| -> Result<([EffectSummary; 3], usize)> {
        let dgp = DgpConfig {
            seed: data_seed,
            ..cfg.dgp
        };
        let sim = generate_dataset(&dgp)?;
        let d = &sim.observed;
        let pipeline = Pipeline::new(d)?;
        if cfg.boot_r == 0 {
            let w = vec![1.0; d.len()];
            let e = pipeline.effects(d, cfg.t, &w, None)?;
            let s = |est| EffectSummary {
                est,
                lo: f64::NAN,
                hi: f64::NAN,
            };
            return Ok(([s(e.joint), s(e.anesthesia), s(e.surgery)], 0));
        }
        let b = bootstrap_with(&pipeline, d, cfg.t, cfg.boot_r, boot_seed)?;
        let s = |est, ci: crate::bootstrap::Interval| EffectSummary {
            est,
            lo: ci.lower,
            hi: ci.upper,
        };
        Ok((
            [
                s(b.point.joint, b.ci.joint),
                s(b.point.anesthesia, b.ci.anesthesia),
                s(b.point.surgery, b.ci.surgery),
            ],
            b.failed,
        ))
    })();
    match outcome {
        Ok((effects, boot_failed)) => RepResult {
            rep,
            data_seed,
            boot_seed,
            effects: Some(effects),
            boot_failed,
            error: None,
        },
        Err(e) => RepResult {
            rep,
            data_seed,
            boot_seed,
            effects: None,
            boot_failed: 0,
            error: Some(e.to_string()),
        },
    }
}

/// RMSE, bias and coverage of the adjusted anesthesia effect against
/// `truth` at each grid value, over the successful reps.
pub fn grid_metrics(reps: &[RepResult], truth: f64, grid: &[f64]) -> Vec<GridMetric> {
    let ok: Vec<EffectSummary> = reps.iter().filter_map(RepResult::anesthesia).collect();
    let n = ok.len() as f64;
    grid.iter()
        .map(|&g| {
            let mut sq = 0.0;
            let mut bias = 0.0;
            let mut covered = 0usize;
            for e in &ok {
                let err = e.est / g - truth;
                sq += err * err;
                bias += err;
                if e.lo / g <= truth && truth <= e.hi / g {
                    covered += 1;
                }
            }
            GridMetric {
                param: g,
                rmse: (sq / n).sqrt(),
                bias: bias / n,
                coverage: covered as f64 / n,
            }
        })
        .collect()
}

/// Repeated-sampling experiment. Rep `r` draws its data and bootstrap seeds
/// from stream `r` of `master_seed`; truths use a separate stream.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.dgp.validate()?;
    if cfg.reps < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 reps, got {}",
            cfg.reps
        )));
    }
    if cfg.grid.is_empty() || cfg.grid.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidInput("grid values must be positive".into()));
    }
    let truth_cfg = DgpConfig {
        seed: replicate_rng(cfg.master_seed, u64::MAX).next_u64(),
        ..cfg.dgp
    };
    let truth = oracle_truths(&truth_cfg, cfg.t, cfg.mc_n)?;
    let reps: Vec<RepResult> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(cfg, r))
        .collect();
    let failed = reps.iter().filter(|r| r.effects.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.reps as f64 {
        let first = reps
            .iter()
            .find_map(|r| r.error.as_ref().map(|e| format!("rep {}: {e}", r.rep)))
            .unwrap_or_default();
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.reps,
            first,
        });
    }
    let metrics = grid_metrics(&reps, truth.anesthesia, &cfg.grid);
    Ok(ExperimentResult {
        kind: cfg.kind(),
        truth,
        reps,
        metrics,
    })
}

impl ExperimentResult {
    pub fn write_reps<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "rep,data_seed,boot_seed,joint,joint_lo,joint_hi,anesthesia,anesthesia_lo,anesthesia_hi,\
             surgery,surgery_lo,surgery_hi,boot_failed,error"
        )?;
        for r in &self.reps {
            write!(out, "{},{},{}", r.rep, r.data_seed, r.boot_seed)?;
            match &r.effects {
                Some(effects) => {
                    for e in effects {
                        write!(out, ",{},{},{}", e.est, e.lo, e.hi)?;
                    }
                }
                None => write!(out, ",,,,,,,,,")?,
            }
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, ",{},{}", r.boot_failed, err)?;
        }
        Ok(())
    }

    /// Rows `param,kind,rmse,bias,coverage,truth,bias_param_true`.
    pub fn write_metrics<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "param,kind,rmse,bias,coverage,truth,bias_param_true")?;
        let bias_true = self.truth.bias_parameter(self.kind);
        for m in &self.metrics {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                m.param,
                self.kind.as_str(),
                m.rmse,
                m.bias,
                m.coverage,
                self.truth.anesthesia,
                bias_true
            )?;
        }
        Ok(())
    }

    pub fn write_csvs(
        &self,
        reps_path: impl AsRef<Path>,
        metrics_path: impl AsRef<Path>,
    ) -> Result<()> {
        let mut reps = std::io::BufWriter::new(std::fs::File::create(reps_path)?);
        self.write_reps(&mut reps)?;
        reps.flush()?;
        let mut metrics = std::io::BufWriter::new(std::fs::File::create(metrics_path)?);
        self.write_metrics(&mut metrics)?;
        metrics.flush()?;
        Ok(())
    }
}
