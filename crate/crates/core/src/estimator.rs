//! Substitution estimators of the counterfactual risks `Psi_{a,a*}(t)`.
//!
//! Arm convention: `a` is the surgery component and selects the mediator law
//! `Pr(m | A=a, c)`; `a_star` is the anesthesia component and selects the
//! outcome model `Pr(Y <= t | m, A=a_star, c)`. The arm `(a=1, a_star=0)`
//! would evaluate the outcome model at `A=0` on structural mediators equal
//! to 1, which never occur in the data, and is rejected.

use serde::{Deserialize, Serialize};

use crate::cox::{cumhaz_at, CoxFit, CoxProblem, DesignSpec, StepFunction};
use crate::data::{Dataset, MediatorSchema, SubjectRecord};
use crate::error::{Error, Result};
use crate::logistic::FitOptions;
use crate::mediator::{
    enumerate_joint, mediator_vector, JointEnumerator, MediatorFitter, MediatorJointModel,
    ENUMERATION_CAP,
};

/// The three identified arms in reporting order: `Psi_00`, `Psi_01`, `Psi_11`.
pub const ARMS: [(u8, u8); 3] = [(0, 0), (0, 1), (1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRisk {
    pub a: u8,
    pub a_star: u8,
    pub t: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub t: f64,
    pub joint: f64,
    pub anesthesia: f64,
    pub surgery: f64,
}

impl EffectEstimates {
    pub fn as_array(&self) -> [f64; 3] {
        [self.joint, self.anesthesia, self.surgery]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub grid: Vec<f64>,
    pub s00: Vec<f64>,
    pub s01: Vec<f64>,
    pub s11: Vec<f64>,
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_arm(a: u8, a_star: u8) -> Result<()> {
    match (a, a_star) {
        (1, 0) => Err(Error::UnidentifiedArms),
        (0 | 1, 0 | 1) => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "arms must be 0/1, got ({a}, {a_star})"
        ))),
    }
}

fn check_weights(d: &Dataset, w: &[f64]) -> Result<f64> {
    if w.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: w.len(),
        });
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let mut total = Neumaier::default();
    w.iter().for_each(|&v| total.add(v));
    let total = total.value();
    if total <= 0.0 {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    Ok(total)
}

/// Risk table `[t][arm]` for the requested arms, sharing one pair of
/// mediator enumerations per subject.
fn risk_table(
    theta: &[f64],
    base: &StepFunction,
    med: &MediatorJointModel,
    d: &Dataset,
    ts: &[f64],
    arms: &[(u8, u8)],
    w: &[f64],
) -> Result<Vec<Vec<f64>>> {
    for &(a, a_star) in arms {
        check_arm(a, a_star)?;
    }
    if ts.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidInput(
            "evaluation times must be nonnegative".into(),
        ));
    }
    let spec = DesignSpec::for_dataset(d);
    if theta.len() != spec.ncols() {
        return Err(Error::DimensionMismatch {
            expected: spec.ncols(),
            found: theta.len(),
        });
    }
    if med.schema() != d.schema() || med.p() != d.p() {
        return Err(Error::InvalidInput(
            "mediator model does not match dataset".into(),
        ));
    }
    let k = d.k();
    if k > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            k,
            cap: ENUMERATION_CAP,
        });
    }
    let total = check_weights(d, w)?;
    let cumhaz: Vec<f64> = ts.iter().map(|&t| cumhaz_at(base, t)).collect();
    // exp of the mediator and exposure part of the linear predictor, per (o, m)
    let zeros = vec![0.0; d.p()];
    let med_part: [Vec<f64>; 2] = std::array::from_fn(|o| {
        (0..1usize << k)
            .map(|idx| {
                spec.linear_predictor(theta, o as u8, &mediator_vector(idx, k), &zeros)
                    .exp()
            })
            .collect()
    });

    let mut enumerators = [JointEnumerator::default(), JointEnumerator::default()];
    let mut sums = vec![vec![Neumaier::default(); arms.len()]; ts.len()];
    for (r, &wi) in d.records().iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let cov = spec.covariate_part(theta, &r.c).exp();
        let [e0, e1] = &mut enumerators;
        let law = [e0.fill(med, 0, &r.c), e1.fill(med, 1, &r.c)];
        for (arm_ix, &(a, a_star)) in arms.iter().enumerate() {
            let probs = law[a as usize];
            let hr = &med_part[a_star as usize];
            for (t_ix, &lam) in cumhaz.iter().enumerate() {
                let mut risk = 0.0;
                for (&p, &h) in probs.iter().zip(hr) {
                    if p > 0.0 {
                        risk += p * -(-lam * cov * h).exp_m1();
                    }
                }
                sums[t_ix][arm_ix].add(wi * risk);
            }
        }
    }
    Ok(sums
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| (s.value() / total).clamp(0.0, 1.0))
                .collect()
        })
        .collect())
}

/// `Psi_{a,a_star}(t)`: weighted average over subjects of
/// `sum_m Pr(Y <= t | m, A=a_star, C_i) Pr(m | A=a, C_i)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_psi(
    cox: &CoxFit,
    base: &StepFunction,
    med: &MediatorJointModel,
    d: &Dataset,
    a: u8,
    a_star: u8,
    t: f64,
    w: &[f64],
) -> Result<CounterfactualRisk> {
    let risk = risk_table(&cox.theta, base, med, d, &[t], &[(a, a_star)], w)?[0][0];
    Ok(CounterfactualRisk { a, a_star, t, risk })
}

/// `Psi_00`, `Psi_01`, `Psi_11` at `t`, in [`ARMS`] order.
pub fn estimate_arms(
    models: &FittedModels,
    d: &Dataset,
    t: f64,
    w: &[f64],
) -> Result<[CounterfactualRisk; 3]> {
    let row = &risk_table(
        &models.cox.theta,
        &models.baseline,
        &models.mediators,
        d,
        &[t],
        &ARMS,
        w,
    )?[0];
    Ok(std::array::from_fn(|i| CounterfactualRisk {
        a: ARMS[i].0,
        a_star: ARMS[i].1,
        t,
        risk: row[i],
    }))
}

/// Counterfactual survival `1 - Psi` for the three arms on a sorted grid.
pub fn survival_curves(
    cox: &CoxFit,
    base: &StepFunction,
    med: &MediatorJointModel,
    d: &Dataset,
    grid: &[f64],
    w: &[f64],
) -> Result<CurveSet> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if grid.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::InvalidInput("time grid must be sorted".into()));
    }
    let table = risk_table(&cox.theta, base, med, d, grid, &ARMS, w)?;
    let column = |j: usize| table.iter().map(|row| 1.0 - row[j]).collect();
    Ok(CurveSet {
        grid: grid.to_vec(),
        s00: column(0),
        s01: column(1),
        s11: column(2),
    })
}

/// Relative risks `Psi_11/Psi_00`, `Psi_01/Psi_00` and `Psi_11/Psi_01`.
pub fn effect_ratios(
    r00: &CounterfactualRisk,
    r01: &CounterfactualRisk,
    r11: &CounterfactualRisk,
) -> Result<EffectEstimates> {
    if r00.t != r01.t || r00.t != r11.t {
        return Err(Error::InvalidInput(
            "risks evaluated at different times".into(),
        ));
    }
    if (r00.a, r00.a_star, r01.a, r01.a_star, r11.a, r11.a_star) != (0, 0, 0, 1, 1, 1) {
        return Err(Error::InvalidInput(
            "risks must be supplied as Psi_00, Psi_01, Psi_11".into(),
        ));
    }
    if !(r00.risk > 0.0) {
        return Err(Error::ZeroDenominator(format!(
            "Psi_00({}) = {}",
            r00.t, r00.risk
        )));
    }
    if !(r01.risk > 0.0) {
        return Err(Error::ZeroDenominator(format!(
            "Psi_01({}) = {}",
            r01.t, r01.risk
        )));
    }
    Ok(EffectEstimates {
        t: r00.t,
        joint: r11.risk / r00.risk,
        anesthesia: r01.risk / r00.risk,
        surgery: r11.risk / r01.risk,
    })
}

/// Outcome model, its baseline hazard and the mediator law, all fitted with
/// the same weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub cox: CoxFit,
    pub baseline: StepFunction,
    pub mediators: MediatorJointModel,
}

/// Designs and sort orders for one dataset, refittable under any weights.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cox: CoxProblem,
    mediators: MediatorFitter,
    opts: FitOptions,
}

impl Pipeline {
    pub fn new(d: &Dataset) -> Result<Self> {
        Ok(Self {
            cox: CoxProblem::new(d, &DesignSpec::for_dataset(d))?,
            mediators: MediatorFitter::new(d)?,
            opts: FitOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: FitOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn fit(&self, w: &[f64], warm: Option<&FittedModels>) -> Result<FittedModels> {
        let cox = self
            .cox
            .fit(w, &self.opts, warm.map(|m| m.cox.theta.as_slice()))?;
        let baseline = self.cox.baseline(&cox.theta, w)?;
        let mediators = self
            .mediators
            .fit(w, &self.opts, warm.map(|m| &m.mediators))?;
        Ok(FittedModels {
            cox,
            baseline,
            mediators,
        })
    }

    /// Fits all models under `w` and returns the three effect ratios at `t`.
    pub fn effects(
        &self,
        d: &Dataset,
        t: f64,
        w: &[f64],
        warm: Option<&FittedModels>,
    ) -> Result<EffectEstimates> {
        let models = self.fit(w, warm)?;
        let [r00, r01, r11] = estimate_arms(&models, d, t, w)?;
        effect_ratios(&r00, &r01, &r11)
    }
}

/// Fits the outcome and mediator models to `d` with weights `w`.
pub fn fit_models(d: &Dataset, w: &[f64]) -> Result<FittedModels> {
    Pipeline::new(d)?.fit(w, None)
}

/// Effect ratios at `t` from unit-weight fits.
pub fn estimate_effects(d: &Dataset, t: f64) -> Result<EffectEstimates> {
    let w = vec![1.0; d.len()];
    Pipeline::new(d)?.effects(d, t, &w, None)
}

/// `Pr{Y(n=0, o=1) <= t}` from raw frequencies of an uncensored, covariate-free
/// dataset, computed as the direct plug-in `sum_m Pr(Y<=t | A=1, m) Pr(m | A=0)`
/// and cross-checked against the front-door rearrangement
/// `[sum_m Pr(m | A=0) sum_a' Pr(Y<=t | a', m) Pr(a') - Pr(Y<=t | A=0) Pr(A=0)] / Pr(A=1)`.
pub fn frontdoor_psi01_empirical(d: &Dataset, t: f64) -> Result<f64> {
    let (direct, frontdoor) = frontdoor_routes(d, t)?;
    if (direct - frontdoor).abs() > 1e-10 {
        return Err(Error::Consistency(format!(
            "front-door route {frontdoor} disagrees with direct route {direct}"
        )));
    }
    Ok(direct)
}

/// Both routes of [`frontdoor_psi01_empirical`], `(direct, front-door)`.
pub fn frontdoor_routes(d: &Dataset, t: f64) -> Result<(f64, f64)> {
    if d.p() != 0 {
        return Err(Error::InvalidInput(
            "front-door check requires p = 0".into(),
        ));
    }
    if d.records().iter().any(|r| !r.event) {
        return Err(Error::InvalidInput(
            "front-door check requires uncensored data".into(),
        ));
    }
    let k = d.k();
    if k > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            k,
            cap: ENUMERATION_CAP,
        });
    }
    let cells = 1usize << k;
    let index = |m: &[u8]| m.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    // count[a][m], failures[a][m]
    let mut count = vec![vec![0usize; cells]; 2];
    let mut fail = vec![vec![0usize; cells]; 2];
    for r in d.records() {
        let (a, m) = (r.a as usize, index(&r.m));
        count[a][m] += 1;
        if r.time <= t {
            fail[a][m] += 1;
        }
    }
    let n = d.len() as f64;
    let n_a = [
        count[0].iter().sum::<usize>() as f64,
        count[1].iter().sum::<usize>() as f64,
    ];
    if n_a[0] == 0.0 || n_a[1] == 0.0 {
        return Err(Error::EmptyCell(
            "both exposure levels must be observed".into(),
        ));
    }
    let p_a = [n_a[0] / n, n_a[1] / n];
    let cond = |a: usize, m: usize| fail[a][m] as f64 / count[a][m] as f64;

    let mut direct = 0.0;
    let mut frontdoor = 0.0;
    for m in 0..cells {
        if count[0][m] == 0 {
            continue;
        }
        if count[1][m] == 0 {
            let vec = mediator_vector(m, k);
            return Err(Error::EmptyCell(format!(
                "no exposed subjects with m = {vec:?}"
            )));
        }
        let p_m0 = count[0][m] as f64 / n_a[0];
        direct += cond(1, m) * p_m0;
        frontdoor += p_m0 * (cond(1, m) * p_a[1] + cond(0, m) * p_a[0]);
    }
    let fail0 = fail[0].iter().sum::<usize>() as f64 / n_a[0];
    Ok((direct, (frontdoor - fail0 * p_a[0]) / p_a[1]))
}

/// Rebuilds `d` with the auxiliary binary variables `l` appended to the
/// covariates, for fitting outcome and mediator models that condition on L.
pub fn augment_with_l(d: &Dataset, l: &[Vec<u8>]) -> Result<Dataset> {
    let k_l = check_l(d, l)?;
    let records = d
        .records()
        .iter()
        .zip(l)
        .map(|(r, li)| SubjectRecord {
            c: r.c
                .iter()
                .copied()
                .chain(li.iter().map(|&v| f64::from(v)))
                .collect(),
            ..r.clone()
        })
        .collect();
    Dataset::new(d.schema().clone(), d.p() + k_l, records)
}

/// Dataset whose "mediators" are the L variables (no structural zeros), used
/// to fit `Pr(l | a, c)` with the mediator machinery.
pub fn l_dataset(d: &Dataset, l: &[Vec<u8>]) -> Result<Dataset> {
    let k_l = check_l(d, l)?;
    let schema = MediatorSchema::new(k_l, 0, (1..=k_l).map(|j| format!("l_{j}")).collect())?;
    let records = d
        .records()
        .iter()
        .zip(l)
        .map(|(r, li)| SubjectRecord {
            m: li.clone(),
            ..r.clone()
        })
        .collect();
    Dataset::new(schema, d.p(), records)
}

fn check_l(d: &Dataset, l: &[Vec<u8>]) -> Result<usize> {
    if l.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: l.len(),
        });
    }
    let k_l = l.first().map_or(0, Vec::len);
    if l.iter()
        .any(|li| li.len() != k_l || li.iter().any(|&v| v > 1))
    {
        return Err(Error::InvalidInput(
            "L must be a rectangular 0/1 table".into(),
        ));
    }
    Ok(k_l)
}

/// `Pr{Y(n=0, o=1) <= t}` when a binary vector L sits between the exposure
/// components and the mediators:
/// `sum_i w_i sum_l Pr(l | A=l_arm, c_i) sum_m Pr(Y<=t | A=1, m, l, c_i) Pr(m | A=0, l, c_i) / sum w`.
///
/// `cox_l`, `base_l` and `med_l` are fitted to [`augment_with_l`]`(d, l)`;
/// `l_model` is fitted to [`l_dataset`]`(d, l)`. `d` is the dataset without L.
#[allow(clippy::too_many_arguments)]
pub fn estimate_psi01_extended(
    cox_l: &CoxFit,
    base_l: &StepFunction,
    med_l: &MediatorJointModel,
    l_model: &MediatorJointModel,
    d: &Dataset,
    t: f64,
    l_arm: u8,
    w: &[f64],
) -> Result<f64> {
    if l_arm > 1 {
        return Err(Error::InvalidInput(format!(
            "l_arm must be 0 or 1, got {l_arm}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(
            "evaluation time must be nonnegative".into(),
        ));
    }
    let k_l = l_model.k();
    let k = d.k();
    if k + k_l > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            k: k + k_l,
            cap: ENUMERATION_CAP,
        });
    }
    if l_model.p() != d.p() || med_l.p() != d.p() + k_l || med_l.schema() != d.schema() {
        return Err(Error::InvalidInput(
            "L-augmented models do not match dataset".into(),
        ));
    }
    let spec = DesignSpec::new(d.schema().clone(), d.p() + k_l);
    if cox_l.theta.len() != spec.ncols() {
        return Err(Error::DimensionMismatch {
            expected: spec.ncols(),
            found: cox_l.theta.len(),
        });
    }
    let total = check_weights(d, w)?;
    let lam = cumhaz_at(base_l, t);
    let m_vectors: Vec<Vec<u8>> = (0..1usize << k)
        .map(|idx| mediator_vector(idx, k))
        .collect();

    let mut sum = Neumaier::default();
    let mut c_aug = Vec::with_capacity(d.p() + k_l);
    for (r, &wi) in d.records().iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let mut risk_i = 0.0;
        for (l_idx, &pl) in enumerate_joint(l_model, l_arm, &r.c)?.iter().enumerate() {
            if pl == 0.0 {
                continue;
            }
            c_aug.clear();
            c_aug.extend_from_slice(&r.c);
            c_aug.extend(mediator_vector(l_idx, k_l).iter().map(|&v| f64::from(v)));
            let mut inner = 0.0;
            for (pm, m) in enumerate_joint(med_l, 0, &c_aug)?.iter().zip(&m_vectors) {
                if *pm > 0.0 {
                    let h = spec.linear_predictor(&cox_l.theta, 1, m, &c_aug).exp();
                    inner += pm * -(-lam * h).exp_m1();
                }
            }
            risk_i += pl * inner;
        }
        sum.add(wi * risk_i);
    }
    Ok((sum.value() / total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Dataset, FittedModels) {
        let schema = MediatorSchema::with_default_names(0, 0).unwrap();
        let records = (0..4)
            .map(|i| SubjectRecord {
                c: vec![],
                a: (i % 2) as u8,
                m: vec![],
                time: 1.0 + i as f64,
                event: true,
            })
            .collect();
        let d = Dataset::new(schema.clone(), 0, records).unwrap();
        let models = FittedModels {
            cox: CoxFit {
                theta: vec![0.0],
                loglik: 0.0,
                converged: true,
                iterations: 0,
                gradient_norm: 0.0,
            },
            baseline: StepFunction::new(vec![2.0, 3.0], vec![0.4, 0.9]).unwrap(),
            mediators: MediatorJointModel::from_parts(schema, 0, vec![]).unwrap(),
        };
        (d, models)
    }

    #[test]
    fn closed_form_without_mediators() {
        let (d, m) = toy();
        for &(a, s) in &ARMS {
            let r =
                estimate_psi(&m.cox, &m.baseline, &m.mediators, &d, a, s, 2.5, &[1.0; 4]).unwrap();
            assert!((r.risk - (1.0 - (-0.4f64).exp())).abs() < 1e-15);
            let early =
                estimate_psi(&m.cox, &m.baseline, &m.mediators, &d, a, s, 1.0, &[1.0; 4]).unwrap();
            assert_eq!(early.risk, 0.0);
        }
    }

    #[test]
    fn unidentified_arm_rejected() {
        let (d, m) = toy();
        let err =
            estimate_psi(&m.cox, &m.baseline, &m.mediators, &d, 1, 0, 2.5, &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::UnidentifiedArms));
    }

    #[test]
    fn ratio_arithmetic() {
        let r = |a, a_star, risk| CounterfactualRisk {
            a,
            a_star,
            t: 1.0,
            risk,
        };
        let e = effect_ratios(&r(0, 0, 0.25), &r(0, 1, 0.28), &r(1, 1, 0.30)).unwrap();
        assert!((e.joint - 1.2).abs() < 1e-15);
        assert!((e.anesthesia - 1.12).abs() < 1e-15);
        assert!((e.surgery - 30.0 / 28.0).abs() < 1e-15);
        let e = effect_ratios(&r(0, 0, 0.25), &r(0, 1, 0.25), &r(1, 1, 0.30)).unwrap();
        assert_eq!(e.anesthesia, 1.0);
        assert_eq!(e.surgery, e.joint);
        assert!(matches!(
            effect_ratios(&r(0, 0, 0.0), &r(0, 1, 0.25), &r(1, 1, 0.30)),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn curves_before_first_knot_are_one() {
        let (d, m) = toy();
        let c = survival_curves(
            &m.cox,
            &m.baseline,
            &m.mediators,
            &d,
            &[0.5, 1.0, 1.9],
            &[1.0; 4],
        )
        .unwrap();
        assert!(c.s00.iter().chain(&c.s01).chain(&c.s11).all(|&s| s == 1.0));
        assert!(survival_curves(
            &m.cox,
            &m.baseline,
            &m.mediators,
            &d,
            &[2.0, 1.0],
            &[1.0; 4]
        )
        .is_err());
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let mut s = Neumaier::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
