use svyel::rng;
use svyel::sim::{
    census_quantile, census_theta, correlation, draw_sim_sample, generate_population, logistic_replica,
    run_experiment, ExperimentKind, ExperimentOutput, ExperimentSpec, PopulationSpec, ReplicaSpec, Scenario,
    ScenarioSpec, SigmaMode, TestMethod,
};
use svyel::ElKind;

const DESCRIPTORS: [(&str, &str); 4] = [
    ("tab0", include_str!("../../../descriptors/tab0.txt")),
    ("tab1", include_str!("../../../descriptors/tab1.txt")),
    ("tab3", include_str!("../../../descriptors/tab3.txt")),
    ("tab5b", include_str!("../../../descriptors/tab5b.txt")),
];

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn shipped_descriptors_parse_and_round_trip() {
    for (name, text) in DESCRIPTORS {
        let s = ExperimentSpec::parse(text).unwrap();
        assert_eq!(s.table, name);
        assert_eq!(s.population_size(), 20_000);
        assert_eq!(ExperimentSpec::parse(&s.to_kv().to_string()).unwrap(), s);
    }
    let tab1 = ExperimentSpec::parse(DESCRIPTORS[1].1).unwrap();
    assert_eq!(tab1.methods.len(), 5);
    assert_eq!(tab1.boot_runs, 200);
    assert_eq!(ExperimentSpec::parse(DESCRIPTORS[3].1).unwrap().experiment, ExperimentKind::Quantile);
}

#[test]
fn unknown_descriptor_keys_are_rejected() {
    assert!(ExperimentSpec::parse("experiment=single\nbogus=1\n").is_err());
    assert!(ExperimentSpec::parse("experiment=quantile\ntaus=0,0.5\n").is_err());
    assert!(ExperimentSpec::parse("experiment=single\nmethods=VI\n").is_err());
}

#[test]
fn linear_population_moments() {
    let pop = generate_population(&PopulationSpec::linear(20_000, 3)).unwrap();
    assert!((mean(&pop.x.column(0)) - 1.0).abs() < 1e-15);
    assert!((mean(&pop.x.column(1)) - 0.5).abs() < 0.02);
    assert!((mean(&pop.x.column(2)) - 0.5).abs() < 0.01);
    assert!((mean(&pop.x.column(3)) - 1.0).abs() < 0.02);
    assert!(pop.x.column(3).iter().all(|v| *v >= 0.5));
    assert_eq!(pop.size_measure, pop.x.column(3));
}

#[test]
fn census_parameter_equals_model_parameter() {
    let pop = generate_population(&PopulationSpec::linear(20_000, 4)).unwrap();
    for sigma in [SigmaMode::S1, SigmaMode::S2, SigmaMode::S3] {
        let theta = [1.0, 0.75, 1.0, 1.0];
        let t = census_theta(&pop, &theta, sigma).unwrap();
        for j in 0..4 {
            assert!((t[j] - theta[j]).abs() < 1e-9, "{sigma:?} {j}: {}", t[j]);
        }
    }
}

#[test]
fn third_sigma_mode_hits_target_correlation() {
    let pop = generate_population(&PopulationSpec::linear(20_000, 5)).unwrap();
    let theta = [1.0, 1.0, 1.0, 1.0];
    let eta = pop.linear_predictor(&theta);
    let y = pop.linear_response(&theta, pop.sigma(SigmaMode::S3));
    assert!((correlation(&eta, &y) - 0.8).abs() < 1e-6);
}

#[test]
fn nonresponse_keeps_about_the_target_size() {
    let pop = generate_population(&PopulationSpec::linear(20_000, 6)).unwrap();
    let spec = ScenarioSpec::new(Scenario::B, 400);
    assert_eq!(spec.n0(), 571);
    let sizes: Vec<f64> = (0..40).map(|r| draw_sim_sample(&pop, &spec, 2, rng::child_seed(6, r)).unwrap().n() as f64).collect();
    // Binomial(571, 0.7): mean 399.7, sd 10.9
    assert!((mean(&sizes) - 399.7).abs() < 3.0 * 10.9 / (40f64).sqrt() + 0.5);
    let a = draw_sim_sample(&pop, &ScenarioSpec::new(Scenario::A, 400), 2, 9).unwrap();
    assert_eq!(a.n(), 400);
}

#[test]
fn calibrated_weights_hit_population_totals() {
    let pop = generate_population(&PopulationSpec::linear(20_000, 7)).unwrap();
    let totals = pop.calibration_totals();
    for sc in [Scenario::A, Scenario::B] {
        let s = draw_sim_sample(&pop, &ScenarioSpec::new(sc, 400), 3, 11).unwrap();
        for (k, j) in [1usize, 2].iter().enumerate() {
            let got: f64 = (0..s.n()).map(|i| s.final_weights[i] * s.design.x.get(i, *j)).sum();
            assert!((got - totals[k]).abs() < 1e-8 * totals[k]);
        }
    }
}

#[test]
fn quantile_population_has_skewed_response() {
    let pop = generate_population(&PopulationSpec::quantile(20_000, 8)).unwrap();
    let y = pop.quantile_response();
    let med = census_quantile(&y, 0.5);
    assert!(mean(&y) > med);
    assert!(census_quantile(&y, 0.1) < med && med < census_quantile(&y, 0.9));
}

fn small_power_spec() -> ExperimentSpec {
    let mut s = ExperimentSpec::defaults(ExperimentKind::Single);
    s.runs = 6;
    s.n = 200;
    s.n_reps = 40;
    s.mc_draws = 2000;
    s.sigmas = vec![SigmaMode::S1];
    s.alternatives = vec![(1.0, 1.0), (1.5, 1.0)];
    s.methods = vec![TestMethod::EigenMc, TestMethod::Rs2, TestMethod::Wald, TestMethod::Naive, TestMethod::Bootstrap];
    s.boot_runs = 2;
    s.scenarios = vec![Scenario::A, Scenario::B];
    s
}

#[test]
fn experiments_are_reproducible() {
    let spec = small_power_spec();
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&spec).unwrap();
    assert_eq!(a, b);
    let ExperimentOutput::Power(r) = &a else { panic!("power experiment") };
    let cell = r.cell(ElKind::Pel, Scenario::A, TestMethod::EigenMc, SigmaMode::S1, (1.0, 1.0)).unwrap();
    assert_eq!(cell.valid + cell.failed, 6);
    let boot = r.cell(ElKind::Sel, Scenario::B, TestMethod::Bootstrap, SigmaMode::S1, (1.5, 1.0)).unwrap();
    assert!(boot.valid + boot.failed <= 2);
    let tables = a.tables();
    assert_eq!(tables[0].0, "results.csv");
    // header + kinds x scenarios x methods x sigmas
    assert_eq!(tables[0].1.to_csv().lines().count(), 1 + 2 * 2 * 5);
}

#[test]
fn different_seed_changes_results() {
    let spec = small_power_spec();
    let mut other = spec.clone();
    other.seed += 1;
    other.methods = vec![TestMethod::Wald];
    let mut base = spec;
    base.methods = vec![TestMethod::Wald];
    base.scenarios = vec![Scenario::A];
    other.scenarios = vec![Scenario::A];
    let (ExperimentOutput::Power(a), ExperimentOutput::Power(b)) = (run_experiment(&base).unwrap(), run_experiment(&other).unwrap())
    else {
        panic!("power experiment")
    };
    assert_eq!(a.cells.len(), b.cells.len());
}

#[test]
fn quantile_experiment_layout() {
    let mut s = ExperimentSpec::defaults(ExperimentKind::Quantile);
    s.runs = 5;
    s.n = 150;
    s.n_reps = 30;
    s.mc_draws = 2000;
    s.taus = vec![0.25, 0.5];
    let ExperimentOutput::Quantile(r) = run_experiment(&s).unwrap() else { panic!("quantile experiment") };
    assert_eq!(r.cells.len(), 2 * 2);
    for c in &r.cells {
        assert_eq!(c.valid + c.failed, 5);
        assert_eq!(c.covered + c.lower_errors + c.upper_errors, c.valid);
        assert!(c.average_length() > 0.0);
    }
}

#[test]
fn replica_file_shape() {
    let (ds, names) = logistic_replica(&ReplicaSpec { n: 300, n_reps: 20, ..ReplicaSpec::default() }).unwrap();
    assert_eq!(ds.n(), 300);
    assert_eq!(ds.x.ncols(), 15);
    assert_eq!(ds.n_replicates(), 20);
    assert_eq!(names.len(), 15);
    assert_eq!(names[8], "x8");
    assert!(ds.y.column(0).iter().all(|v| *v == 0.0 || *v == 1.0));
    assert!((ds.n_hat - 300.0).abs() < 1e-8);
}
