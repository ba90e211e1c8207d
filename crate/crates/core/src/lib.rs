//! Design-based empirical likelihood inference for public-use survey data.
//!
//! The crate works from what a public-use file actually ships: response and
//! covariate columns, one column of final survey weights and `B` columns of
//! replication weights. Parameters are defined through census estimating
//! equations, and both the pseudo empirical likelihood ([`ElKind::Pel`]) and
//! the sample empirical likelihood ([`ElKind::Sel`]) are supported for point
//! estimation, likelihood ratio tests with quadratic-form calibration,
//! bootstrap calibration, SCAD variable selection and quantile intervals.
//!
//! The [`sim`] module manufactures synthetic public-use files from finite
//! populations and drives the size/power and coverage experiments.

pub mod bootstrap;
pub mod data;
pub mod el;
pub mod error;
pub mod estfn;
pub mod eltest;
pub mod linalg;
pub mod penalty;
pub mod report;
pub mod rng;
pub mod sim;
pub mod varest;

pub use bootstrap::{
    bootstrap_critical_value, bootstrap_lr_sample, calibrate_chisq, draw_bootstrap,
    make_replication_weights, calibrate_counts, ht_totals, BootNull, BootstrapDraw, CalibrationSpec,
    Calibrated, ReplicationSet,
};
pub use data::{load_dataset, rescale_weights, DesignSample, Rows, Schema, SurveyDataset};
pub use el::{
    maximize, maximize_restricted, profile, solve_lambda, AffineConstraint, Constraint,
    FnConstraint, Recentred, ElKind, ElProblem, ElProfile, SolverConfig,
};
pub use eltest::{
    build_delta, ci_invert, ci_invert_from, lr_nested, lr_nested_from, lr_simple, lr_simple_from,
    nested_test, simple_test, upper_order_statistic, wald_test, CalibrationMethod,
    CiTarget, ConfidenceInterval, CriticalSource, LrStatistic, QuadraticFormDist, Reference,
    TestResult,
};
pub use error::{Error, ErrorClass, Result};
pub use estfn::{EstimatingFunction, Family, ParamSpace};
pub use penalty::{
    default_tau_grid, maximize_penalized, scad_derivative, scad_penalty, select_tau,
    PenaltySpec, SelectionResult,
};
pub use varest::{fit_at, plugin_components, rep_variance_total, sandwich, FitResult};
