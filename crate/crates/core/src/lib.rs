//! Separable-effects estimation for a time-to-event outcome with binary
//! mediators: model fitting, counterfactual risks, Bayesian bootstrap,
//! sensitivity analysis, simulation and pseudo-exposure assignment.

// `!(x > 0.0)` style guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod cox;
pub mod data;
pub mod error;
pub mod estimator;
pub mod logistic;
pub mod mediator;
pub mod pseudo_exposure;
pub mod sensitivity;
pub mod simulation;

pub use bootstrap::{
    bootstrap_effects, bootstrap_with, draw_weights, replicate_rng, BootstrapResult,
    EffectIntervals, Interval,
};
pub use cox::{
    breslow_baseline, cumhaz_at, fit_weighted_cox, CoxFit, CoxProblem, DesignSpec, StepFunction,
};
pub use data::{
    load_dataset, validate_dataset, write_dataset, Check, Dataset, Finding, MediatorSchema,
    SchemaFile, SubjectRecord, ValidationReport,
};
pub use error::{Error, ErrorKind, Result};
pub use estimator::{
    augment_with_l, effect_ratios, estimate_arms, estimate_effects, estimate_psi,
    estimate_psi01_extended, fit_models, frontdoor_psi01_empirical, frontdoor_routes, l_dataset,
    survival_curves, CounterfactualRisk, CurveSet, EffectEstimates, FittedModels, Pipeline, ARMS,
};
pub use logistic::{fit_weighted_logistic, predict_prob, FitOptions, LogisticFit, LogisticProblem};
pub use mediator::{
    enumerate_joint, fit_mediator_model, joint_prob, mediator_vector, MediatorJointModel,
    ENUMERATION_CAP,
};
pub use pseudo_exposure::{assign_pseudo_months, EligibilityTable, MonthAssignment};
pub use sensitivity::{
    adjusted_effect, crossing_points, sensitivity_curve, CrossingPoints, SensitivityCurve,
    SensitivityKind,
};
pub use simulation::{
    generate_dataset, oracle_truths, random_discrete_instance, run_experiment, DgpConfig,
    ExperimentConfig, ExperimentResult, SimulatedData, TrueEffects,
};
