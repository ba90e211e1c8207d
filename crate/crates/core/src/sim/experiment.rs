//! Size/power and interval-coverage experiments over repeated samples from
//! one finite population.

use rayon::prelude::*;

use crate::bootstrap::{bootstrap_lr_sample, BootNull};
use crate::data::{Rows, SurveyDataset};
use crate::el::{AffineConstraint, Constraint, ElKind, ElProblem, SolverConfig};
use crate::eltest::{
    build_delta, ci_invert_from, lr_nested_from, upper_order_statistic, wald_test, CalibrationMethod, CiTarget,
    QuadraticFormDist, Reference, TestResult, DEFAULT_MC_DRAWS, DEFAULT_MC_SEED,
};
use crate::error::{Error, Result};
use crate::estfn::{LinearRegression, ParamSpace, Quantile};
use crate::report::{fixed, CsvTable, KvReport};
use crate::rng;
use crate::sim::population::{census_ls, census_quantile, generate_population, Population, PopulationSpec, SigmaMode};
use crate::sim::sampling::{draw_sim_sample, Scenario, ScenarioSpec, SimSample};
use crate::varest;

/// Test calibration methods compared in the power tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestMethod {
    /// Quadratic form, Monte Carlo.
    EigenMc,
    Rs1,
    Rs2,
    Bootstrap,
    Wald,
    /// Plain chi-square reference (deliberately wrong under complex designs).
    Naive,
}

impl TestMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "i" | "eigmc" | "eigen_mc" => Ok(TestMethod::EigenMc),
            "ii" | "rs1" => Ok(TestMethod::Rs1),
            "iii" | "rs2" => Ok(TestMethod::Rs2),
            "iv" | "boot" | "bootstrap" => Ok(TestMethod::Bootstrap),
            "v" | "wald" => Ok(TestMethod::Wald),
            "naive" | "chisq" => Ok(TestMethod::Naive),
            other => Err(Error::InvalidArgument(format!("unknown test method '{other}'"))),
        }
    }

    /// Roman numeral label used in the tables.
    pub fn label(&self) -> &'static str {
        match self {
            TestMethod::EigenMc => "I",
            TestMethod::Rs1 => "II",
            TestMethod::Rs2 => "III",
            TestMethod::Bootstrap => "IV",
            TestMethod::Wald => "V",
            TestMethod::Naive => "naive",
        }
    }

    fn calibration(&self) -> Option<CalibrationMethod> {
        match self {
            TestMethod::EigenMc => Some(CalibrationMethod::EigenMc),
            TestMethod::Rs1 => Some(CalibrationMethod::Rs1),
            TestMethod::Rs2 => Some(CalibrationMethod::Rs2),
            TestMethod::Naive => Some(CalibrationMethod::Naive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// `H0: theta_1 = 1` against populations with `theta_1 = b`.
    Single,
    /// `H0: theta_1 = theta_2` against populations with `(b1, b2)`.
    Nested,
    /// Intervals for population quantiles.
    Quantile,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "single" | "simple" => Ok(ExperimentKind::Single),
            "nested" | "difference" => Ok(ExperimentKind::Nested),
            "quantile" => Ok(ExperimentKind::Quantile),
            other => Err(Error::InvalidArgument(format!("unknown experiment '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Single => "single",
            ExperimentKind::Nested => "nested",
            ExperimentKind::Quantile => "quantile",
        }
    }
}

/// Parsed experiment descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub table: String,
    pub experiment: ExperimentKind,
    pub scenarios: Vec<Scenario>,
    /// Sampling fraction `n / N`.
    pub fraction: f64,
    pub n: usize,
    pub sigmas: Vec<SigmaMode>,
    pub kinds: Vec<ElKind>,
    pub methods: Vec<TestMethod>,
    /// Population values `(theta_1, theta_2)` of each column.
    pub alternatives: Vec<(f64, f64)>,
    pub taus: Vec<f64>,
    pub runs: usize,
    /// Runs (the first ones) on which the bootstrap method is evaluated.
    pub boot_runs: usize,
    pub n_reps: usize,
    pub alpha: f64,
    pub mc_draws: usize,
    pub seed: u64,
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::InvalidArgument(format!("'{s}' is not a number")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::InvalidArgument(format!("'{s}' is not a count")))
}

impl ExperimentSpec {
    /// Defaults for a descriptor of the given kind.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        let alternatives = match experiment {
            ExperimentKind::Single => [0.5, 0.75, 1.0, 1.25, 1.5].iter().map(|&b| (b, 1.0)).collect(),
            ExperimentKind::Nested => vec![(1.0, 2.0), (1.0, 1.5), (1.0, 1.0), (1.5, 1.0), (2.0, 1.0)],
            ExperimentKind::Quantile => Vec::new(),
        };
        ExperimentSpec {
            table: "results".into(),
            experiment,
            scenarios: vec![Scenario::A],
            fraction: 0.02,
            n: 400,
            sigmas: vec![SigmaMode::S1, SigmaMode::S2, SigmaMode::S3],
            kinds: vec![ElKind::Pel, ElKind::Sel],
            methods: vec![TestMethod::EigenMc, TestMethod::Rs1, TestMethod::Rs2, TestMethod::Wald],
            alternatives,
            taus: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            runs: 500,
            boot_runs: 0,
            n_reps: 500,
            alpha: 0.05,
            mc_draws: DEFAULT_MC_DRAWS,
            seed: 20_190_611,
        }
    }

    pub fn from_kv(kv: &KvReport) -> Result<Self> {
        let experiment = ExperimentKind::parse(kv.get("experiment").unwrap_or("single"))?;
        let mut s = Self::defaults(experiment);
        for (k, v) in kv.entries() {
            match k.as_str() {
                "experiment" => {}
                "table" => s.table = v.clone(),
                "scenario" | "scenarios" => s.scenarios = parse_list(v, Scenario::parse)?,
                "fraction" => s.fraction = parse_f64(v)?,
                "n" => s.n = parse_usize(v)?,
                "sigma" | "sigmas" => s.sigmas = parse_list(v, SigmaMode::parse)?,
                "el" | "kinds" => s.kinds = parse_list(v, ElKind::parse)?,
                "methods" => s.methods = parse_list(v, TestMethod::parse)?,
                "b" => s.alternatives = parse_list(v, |b| Ok((parse_f64(b)?, 1.0)))?,
                "pairs" => {
                    s.alternatives = parse_list(v, |p| {
                        let (a, b) = p
                            .split_once(':')
                            .ok_or_else(|| Error::InvalidArgument(format!("pair '{p}' needs the form b1:b2")))?;
                        Ok((parse_f64(a)?, parse_f64(b)?))
                    })?
                }
                "taus" | "tau" => s.taus = parse_list(v, parse_f64)?,
                "runs" => s.runs = parse_usize(v)?,
                "boot_runs" => s.boot_runs = parse_usize(v)?,
                "B" | "reps" => s.n_reps = parse_usize(v)?,
                "alpha" => s.alpha = parse_f64(v)?,
                "mc_draws" => s.mc_draws = parse_usize(v)?,
                "seed" => s.seed = v.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad seed '{v}'")))?,
                other => return Err(Error::InvalidArgument(format!("unknown descriptor key '{other}'"))),
            }
        }
        if s.methods.contains(&TestMethod::Bootstrap) && !kv.entries().iter().any(|(k, _)| k == "boot_runs") {
            s.boot_runs = s.runs;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvReport::parse(text))
    }

    fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("fraction {} outside (0,1)", self.fraction)));
        }
        if self.runs == 0 || self.n < 10 || self.n_reps == 0 {
            return Err(Error::InvalidArgument("runs, n and B must be positive (n >= 10)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if self.experiment == ExperimentKind::Quantile {
            if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                return Err(Error::InvalidArgument("quantile levels must lie in (0,1)".into()));
            }
        } else if self.alternatives.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("need at least one alternative and one method".into()));
        }
        Ok(())
    }

    pub fn population_size(&self) -> usize {
        (self.n as f64 / self.fraction).round() as usize
    }

    /// Descriptor text that parses back to the same spec.
    pub fn to_kv(&self) -> KvReport {
        let mut kv = KvReport::new();
        kv.push("table", &self.table).push("experiment", self.experiment.name());
        kv.push("scenario", self.scenarios.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
        kv.push_real("fraction", self.fraction).push("n", self.n);
        kv.push("el", self.kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(","));
        match self.experiment {
            ExperimentKind::Quantile => {
                kv.push_list("taus", &self.taus);
            }
            _ => {
                kv.push("sigma", self.sigmas.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
                kv.push("methods", self.methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(","));
                let pairs: Vec<String> = self.alternatives.iter().map(|(a, b)| format!("{a}:{b}")).collect();
                kv.push("pairs", pairs.join(","));
                kv.push("boot_runs", self.boot_runs);
            }
        }
        kv.push("runs", self.runs).push("B", self.n_reps).push_real("alpha", self.alpha);
        kv.push("mc_draws", self.mc_draws).push("seed", self.seed);
        kv
    }

    fn column_label(&self, alt: (f64, f64)) -> String {
        match self.experiment {
            ExperimentKind::Single => format!("b={:.2}", alt.0),
            _ => format!("b=({:.1};{:.1})", alt.0, alt.1),
        }
    }
}

/// Rejection count for one table cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCell {
    pub kind: ElKind,
    pub scenario: Scenario,
    pub method: TestMethod,
    pub sigma: SigmaMode,
    pub alternative: (f64, f64),
    pub rejections: usize,
    pub valid: usize,
    pub failed: usize,
}

impl PowerCell {
    pub fn rate(&self) -> f64 {
        if self.valid == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.valid as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResults {
    pub spec: ExperimentSpec,
    pub cells: Vec<PowerCell>,
}

impl PowerResults {
    pub fn cell(
        &self,
        kind: ElKind,
        scenario: Scenario,
        method: TestMethod,
        sigma: SigmaMode,
        alternative: (f64, f64),
    ) -> Option<&PowerCell> {
        self.cells.iter().find(|c| {
            c.kind == kind
                && c.scenario == scenario
                && c.method == method
                && c.sigma == sigma
                && (c.alternative.0 - alternative.0).abs() < 1e-12
                && (c.alternative.1 - alternative.1).abs() < 1e-12
        })
    }

    pub fn rate(
        &self,
        kind: ElKind,
        scenario: Scenario,
        method: TestMethod,
        sigma: SigmaMode,
        alternative: (f64, f64),
    ) -> f64 {
        self.cell(kind, scenario, method, sigma, alternative).map_or(f64::NAN, PowerCell::rate)
    }

    /// One row per (EL kind, scenario, method, sigma); one column per
    /// alternative.
    pub fn wide_table(&self) -> CsvTable {
        let mut header = vec!["el".to_string(), "scenario".into(), "method".into(), "sigma".into()];
        header.extend(self.spec.alternatives.iter().map(|a| self.spec.column_label(*a)));
        let mut t = CsvTable::new(&header);
        for &kind in &self.spec.kinds {
            for &sc in &self.spec.scenarios {
                for &m in &self.spec.methods {
                    for &s in &self.spec.sigmas {
                        let mut row = vec![kind.name().to_string(), sc.name().into(), m.label().into(), s.name().into()];
                        row.extend(self.spec.alternatives.iter().map(|a| fixed(self.rate(kind, sc, m, s, *a), 3)));
                        t.push(row);
                    }
                }
            }
        }
        t
    }

    /// Raw counts, one row per cell.
    pub fn long_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "el", "scenario", "method", "sigma", "b1", "b2", "rejections", "valid", "failed", "rate",
        ]);
        for c in &self.cells {
            t.push(vec![
                c.kind.name().into(),
                c.scenario.name().into(),
                c.method.label().into(),
                c.sigma.name().into(),
                c.alternative.0.to_string(),
                c.alternative.1.to_string(),
                c.rejections.to_string(),
                c.valid.to_string(),
                c.failed.to_string(),
                fixed(c.rate(), 4),
            ]);
        }
        t
    }
}

/// Interval summary at one quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCell {
    pub kind: ElKind,
    pub scenario: Scenario,
    pub tau: f64,
    pub theta_n: f64,
    pub total_length: f64,
    pub covered: usize,
    pub lower_errors: usize,
    pub upper_errors: usize,
    pub valid: usize,
    pub failed: usize,
}

impl QuantileCell {
    fn frac(&self, k: usize) -> f64 {
        if self.valid == 0 {
            f64::NAN
        } else {
            k as f64 / self.valid as f64
        }
    }

    pub fn average_length(&self) -> f64 {
        self.frac(1) * self.total_length
    }

    pub fn coverage(&self) -> f64 {
        self.frac(self.covered)
    }

    pub fn lower_error(&self) -> f64 {
        self.frac(self.lower_errors)
    }

    pub fn upper_error(&self) -> f64 {
        self.frac(self.upper_errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileResults {
    pub spec: ExperimentSpec,
    pub cells: Vec<QuantileCell>,
}

impl QuantileResults {
    pub fn cell(&self, kind: ElKind, scenario: Scenario, tau: f64) -> Option<&QuantileCell> {
        self.cells.iter().find(|c| c.kind == kind && c.scenario == scenario && (c.tau - tau).abs() < 1e-12)
    }

    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["el", "scenario", "n_over_N", "tau", "LE", "CP", "UE", "AL", "valid", "failed"]);
        for c in &self.cells {
            t.push(vec![
                c.kind.name().into(),
                c.scenario.name().into(),
                format!("{}%", (self.spec.fraction * 100.0).round()),
                c.tau.to_string(),
                fixed(c.lower_error(), 3),
                fixed(c.coverage(), 3),
                fixed(c.upper_error(), 3),
                fixed(c.average_length(), 3),
                c.valid.to_string(),
                c.failed.to_string(),
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Power(PowerResults),
    Quantile(QuantileResults),
}

impl ExperimentOutput {
    /// Named CSV tables: the display table first.
    pub fn tables(&self) -> Vec<(String, CsvTable)> {
        match self {
            ExperimentOutput::Power(r) => vec![
                (format!("{}.csv", r.spec.table), r.wide_table()),
                (format!("{}_counts.csv", r.spec.table), r.long_table()),
            ],
            ExperimentOutput::Quantile(r) => vec![(format!("{}.csv", r.spec.table), r.table())],
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    match spec.experiment {
        ExperimentKind::Quantile => run_quantile(spec).map(ExperimentOutput::Quantile),
        _ => run_power(spec).map(ExperimentOutput::Power),
    }
}

fn scenario_spec(spec: &ExperimentSpec, sc: Scenario) -> ScenarioSpec {
    ScenarioSpec::new(sc, spec.n)
}

fn run_seed(spec: &ExperimentSpec, sc: Scenario, run: usize) -> u64 {
    let tag = match sc {
        Scenario::A => 1,
        Scenario::B => 2,
    };
    rng::child_seed(rng::child_seed(spec.seed, tag), run as u64)
}

fn population_spec(spec: &ExperimentSpec) -> PopulationSpec {
    let seed = rng::child_seed(spec.seed, 0);
    match spec.experiment {
        ExperimentKind::Quantile => PopulationSpec::quantile(spec.population_size(), seed),
        _ => PopulationSpec::linear(spec.population_size(), seed),
    }
}

fn sample_dataset(sample: &SimSample, y_pop: &[f64], reps: &Rows) -> Result<SurveyDataset> {
    let y: Vec<f64> = sample.ids().iter().map(|&i| y_pop[i]).collect();
    SurveyDataset::new_allow_negative_replicates(
        Rows::new(1, y)?,
        sample.design.x.clone(),
        sample.final_weights.clone(),
        reps.clone(),
    )
}

/// Per-cell outcome of one run: `Some(reject)` or `None` on failure.
type RunOutcome = Vec<Option<bool>>;

struct PowerLayout {
    cells: Vec<(ElKind, TestMethod, SigmaMode, (f64, f64))>,
}

impl PowerLayout {
    fn new(spec: &ExperimentSpec) -> Self {
        let mut cells = Vec::new();
        for &kind in &spec.kinds {
            for &m in &spec.methods {
                for &s in &spec.sigmas {
                    for &a in &spec.alternatives {
                        cells.push((kind, m, s, a));
                    }
                }
            }
        }
        PowerLayout { cells }
    }

    fn index(&self, kind: ElKind, m: TestMethod, s: SigmaMode, a: (f64, f64)) -> usize {
        self.cells.iter().position(|c| *c == (kind, m, s, a)).expect("cell in layout")
    }
}

fn run_power(spec: &ExperimentSpec) -> Result<PowerResults> {
    let pop = generate_population(&population_spec(spec))?;
    let layout = PowerLayout::new(spec);
    let mut cells = Vec::new();
    for &sc in &spec.scenarios {
        let sspec = scenario_spec(spec, sc);
        let outcomes: Vec<RunOutcome> =
            (0..spec.runs).into_par_iter().map(|run| power_run(spec, &pop, &sspec, &layout, run)).collect();
        for (ci, &(kind, method, sigma, alternative)) in layout.cells.iter().enumerate() {
            let mut cell = PowerCell { kind, scenario: sc, method, sigma, alternative, rejections: 0, valid: 0, failed: 0 };
            for (run, o) in outcomes.iter().enumerate() {
                if method == TestMethod::Bootstrap && run >= spec.boot_runs {
                    continue;
                }
                match o[ci] {
                    Some(r) => {
                        cell.valid += 1;
                        cell.rejections += r as usize;
                    }
                    None => cell.failed += 1,
                }
            }
            cells.push(cell);
        }
    }
    Ok(PowerResults { spec: spec.clone(), cells })
}

fn power_run(spec: &ExperimentSpec, pop: &Population, sspec: &ScenarioSpec, layout: &PowerLayout, run: usize) -> RunOutcome {
    let mut out = vec![None; layout.cells.len()];
    let seed = run_seed(spec, sspec.scenario, run);
    let Ok(sample) = draw_sim_sample(pop, sspec, spec.n_reps, seed) else {
        return out;
    };
    let reps = sample.rep_matrix();
    let p = 4;
    let gf = LinearRegression { p };
    let (constraint, contrast, value0) = match spec.experiment {
        ExperimentKind::Single => (AffineConstraint::fix(p, 1, 1.0), vec![0.0, 1.0, 0.0, 0.0], 1.0),
        _ => (AffineConstraint::difference(p, 1, 2, 0.0), vec![0.0, 1.0, -1.0, 0.0], 0.0),
    };
    let cfg = SolverConfig::default();
    let with_boot = spec.methods.contains(&TestMethod::Bootstrap) && run < spec.boot_runs;
    for &sigma_mode in &spec.sigmas {
        let sigma = pop.sigma(sigma_mode);
        for &alt in &spec.alternatives {
            let theta = [1.0, alt.0, alt.1, 1.0];
            let y_pop = pop.linear_response(&theta, sigma);
            let Ok(ds) = sample_dataset(&sample, &y_pop, &reps) else { continue };
            let space = ParamSpace::unbounded(theta.to_vec());
            for &kind in &spec.kinds {
                let res = test_cell(spec, kind, &ds, &gf, &constraint, &contrast, value0, &space, &cfg, &sample, with_boot);
                for &m in &spec.methods {
                    let idx = layout.index(kind, m, sigma_mode, alt);
                    out[idx] = res.as_ref().ok().and_then(|r| r.iter().find(|(mm, _)| *mm == m).and_then(|(_, v)| *v));
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn test_cell(
    spec: &ExperimentSpec,
    kind: ElKind,
    ds: &SurveyDataset,
    gf: &LinearRegression,
    constraint: &AffineConstraint,
    contrast: &[f64],
    value0: f64,
    space: &ParamSpace,
    cfg: &SolverConfig,
    sample: &SimSample,
    with_boot: bool,
) -> Result<Vec<(TestMethod, Option<bool>)>> {
    let prob = ElProblem::new(kind, ds, gf).with_config(*cfg);
    let (theta_hat, prof) = prob.maximize(space)?;
    let lr = lr_nested_from(&prob, &theta_hat, prof.log_ratio, constraint, space)?;
    let fit = varest::plugin_components(kind, ds, gf, &theta_hat)?;
    let phi = constraint.jacobian(&theta_hat);
    let base = build_delta(&fit, Some(&phi))
        .map(|d| QuadraticFormDist::from_delta(&d, CalibrationMethod::EigenMc).with_mc(spec.mc_draws, DEFAULT_MC_SEED));
    let mut res = Vec::with_capacity(spec.methods.len());
    for &m in &spec.methods {
        let decision = match m {
            TestMethod::Bootstrap => {
                if !with_boot {
                    None
                } else {
                    let sorted = bootstrap_lr_sample(
                        kind,
                        &ds.x,
                        &ds.y,
                        gf,
                        &sample.reps,
                        &theta_hat,
                        BootNull::Nested(constraint),
                        space,
                        cfg,
                    );
                    let finite = sorted.iter().filter(|v| v.is_finite()).count();
                    (finite >= 20).then(|| lr.value > upper_order_statistic(&sorted, spec.alpha))
                }
            }
            TestMethod::Wald => varest::sandwich(&fit)
                .and_then(|f| wald_test(&f, contrast, value0))
                .ok()
                .map(|t| t.reject(spec.alpha)),
            TestMethod::Naive => {
                let k = constraint.k() as f64;
                let d = QuadraticFormDist::new(&vec![1.0; k as usize], CalibrationMethod::Naive);
                Some(TestResult::from_lr(lr.clone(), Reference::QuadForm(d)).reject(spec.alpha))
            }
            _ => {
                let method = m.calibration().expect("asymptotic method");
                base.as_ref().ok().map(|d| {
                    let d = d.with_method(method);
                    lr.infinite || lr.value > d.critical_value(spec.alpha)
                })
            }
        };
        res.push((m, decision));
    }
    Ok(res)
}

fn run_quantile(spec: &ExperimentSpec) -> Result<QuantileResults> {
    let pop = generate_population(&population_spec(spec))?;
    let y_pop = pop.quantile_response();
    let truths: Vec<f64> = spec.taus.iter().map(|&t| census_quantile(&y_pop, t)).collect();
    let mut cells = Vec::new();
    for &sc in &spec.scenarios {
        let sspec = scenario_spec(spec, sc);
        // per run: for each (kind, tau) the interval or None
        let outcomes: Vec<Vec<Option<(f64, f64)>>> = (0..spec.runs)
            .into_par_iter()
            .map(|run| quantile_run(spec, &pop, &y_pop, &sspec, run))
            .collect();
        let mut ci = 0;
        for &kind in &spec.kinds {
            for (ti, &tau) in spec.taus.iter().enumerate() {
                let theta_n = truths[ti];
                let mut cell = QuantileCell {
                    kind,
                    scenario: sc,
                    tau,
                    theta_n,
                    total_length: 0.0,
                    covered: 0,
                    lower_errors: 0,
                    upper_errors: 0,
                    valid: 0,
                    failed: 0,
                };
                for o in &outcomes {
                    match o[ci] {
                        Some((lo, hi)) => {
                            cell.valid += 1;
                            cell.total_length += hi - lo;
                            if lo < theta_n && theta_n < hi {
                                cell.covered += 1;
                            }
                            if theta_n <= lo {
                                cell.lower_errors += 1;
                            }
                            if theta_n >= hi {
                                cell.upper_errors += 1;
                            }
                        }
                        None => cell.failed += 1,
                    }
                }
                cells.push(cell);
                ci += 1;
            }
        }
    }
    Ok(QuantileResults { spec: spec.clone(), cells })
}

fn quantile_run(
    spec: &ExperimentSpec,
    pop: &Population,
    y_pop: &[f64],
    sspec: &ScenarioSpec,
    run: usize,
) -> Vec<Option<(f64, f64)>> {
    let mut out = vec![None; spec.kinds.len() * spec.taus.len()];
    let seed = run_seed(spec, sspec.scenario, run);
    let Ok(sample) = draw_sim_sample(pop, sspec, spec.n_reps, seed) else {
        return out;
    };
    let reps = sample.rep_matrix();
    let Ok(ds) = sample_dataset(&sample, y_pop, &reps) else {
        return out;
    };
    let cfg = SolverConfig::default();
    let mut ci = 0;
    for &kind in &spec.kinds {
        for &tau in &spec.taus {
            out[ci] = quantile_interval(spec, kind, &ds, tau, &cfg).ok();
            ci += 1;
        }
    }
    out
}

fn quantile_interval(spec: &ExperimentSpec, kind: ElKind, ds: &SurveyDataset, tau: f64, cfg: &SolverConfig) -> Result<(f64, f64)> {
    let gf = Quantile::new(tau)?;
    let prob = ElProblem::new(kind, ds, &gf).with_config(*cfg);
    let space = ParamSpace::unbounded(vec![0.0]);
    let (theta_hat, prof) = prob.maximize(&space)?;
    let fit = varest::plugin_components(kind, ds, &gf, &theta_hat)?;
    let dist = QuadraticFormDist::from_delta(&build_delta(&fit, None)?, CalibrationMethod::EigenMc)
        .with_mc(spec.mc_draws, DEFAULT_MC_SEED);
    let crit = dist.critical_value(spec.alpha);
    let ci = ci_invert_from(&prob, CiTarget::Scalar, crit, &space, &theta_hat, prof.log_ratio, None)?;
    Ok((ci.lower, ci.upper))
}

/// Census regression coefficients of the population used for an alternative.
pub fn census_theta(pop: &Population, theta: &[f64], sigma: SigmaMode) -> Result<Vec<f64>> {
    census_ls(&pop.x, &pop.linear_response(theta, pop.sigma(sigma)))
}
