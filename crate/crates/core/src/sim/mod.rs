//! Simulation lab: finite populations, PPS samples with calibrated final and
//! replication weights, and the repeated-sampling experiments built on them.

pub mod experiment;
pub mod population;
pub mod replica;
pub mod sampling;

pub use experiment::{
    census_theta, run_experiment, ExperimentKind, ExperimentOutput, ExperimentSpec, PowerCell, PowerResults,
    QuantileCell, QuantileResults, TestMethod,
};
pub use population::{
    census_ls, census_quantile, correlation, generate_population, Population, PopulationModel, PopulationSpec,
    SigmaMode, NULL_THETA,
};
pub use sampling::{
    apply_nonresponse_ratio, draw_sim_sample, inclusion_probabilities, pps_randomized_systematic, pps_systematic,
    Scenario, ScenarioSpec, SimSample, CALIBRATION_COLUMNS,
};
pub use replica::{logistic_replica, ReplicaSpec};
