use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use svyel::data::{dataset_from_raw, fmt_real, RawTable};
use svyel::report::{CsvTable, KvReport};
use svyel::sim::{run_experiment, ExperimentSpec};
use svyel::{
    bootstrap_lr_sample, build_delta, ci_invert_from, default_tau_grid, ht_totals, lr_nested_from,
    lr_simple_from, make_replication_weights, plugin_components, sandwich, select_tau, wald_test,
    AffineConstraint, BootNull, CalibrationMethod, CalibrationSpec, CiTarget, Constraint, DesignSample,
    ElKind, ElProblem, Error, EstimatingFunction, Family, FitResult, ParamSpace, QuadraticFormDist,
    Reference, Result, Rows, Schema, SolverConfig, SurveyDataset, TestResult,
};

use crate::hypothesis::parse_hypothesis;
use crate::manifest::RunManifest;

pub const BOOT_CAVEAT: &str = "note: bootstrap calibration is justified for single-stage designs with small \
sampling fractions only; at larger fractions the test tends to be conservative";

/// A loaded file with its estimating function.
pub struct Analysis {
    pub raw: RawTable,
    pub schema: Schema,
    pub ds: SurveyDataset,
    pub gf: Box<dyn EstimatingFunction>,
    pub family: Family,
}

impl Analysis {
    pub fn load(data: &Path, schema: &Path, family: &str, tau: Option<f64>) -> Result<Self> {
        let schema = Schema::from_file(schema).map_err(|e| with_path(e, schema))?;
        let raw = RawTable::read(data).map_err(|e| with_path(e, data))?;
        let ds = dataset_from_raw(&raw, &schema)?;
        let family = match (family, tau) {
            ("quantile", Some(t)) => Family::Quantile(t),
            ("quantile", None) => return Err(Error::InvalidArgument("family quantile needs --tau".into())),
            (f, _) => Family::parse(f)?,
        };
        let gf = family.build(ds.x.ncols())?;
        svyel::estfn::check_records(gf.as_ref(), &ds.x, &ds.y)?;
        Ok(Analysis { raw, schema, ds, gf, family })
    }

    pub fn p(&self) -> usize {
        self.gf.p()
    }

    pub fn names(&self) -> Vec<String> {
        if self.ds.x.ncols() == self.p() && !self.ds.x_names.is_empty() {
            self.ds.x_names.clone()
        } else if self.p() == 1 {
            vec!["theta".into()]
        } else {
            (0..self.p()).map(|j| format!("theta{j}")).collect()
        }
    }

    fn space(&self) -> ParamSpace {
        ParamSpace::unbounded(vec![0.0; self.p()])
    }

    fn problem(&self, kind: ElKind) -> ElProblem<'_> {
        ElProblem::new(kind, &self.ds, self.gf.as_ref()).with_config(SolverConfig::default())
    }
}

/// Name the file in I/O errors.
pub fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::InvalidArgument(format!("{}: {io}", path.display())),
        e => e,
    }
}

pub fn kinds(el: &str) -> Result<Vec<ElKind>> {
    match el {
        "both" => Ok(vec![ElKind::Pel, ElKind::Sel]),
        other => Ok(vec![ElKind::parse(other)?]),
    }
}

fn lower(kind: ElKind) -> &'static str {
    match kind {
        ElKind::Pel => "pel",
        ElKind::Sel => "sel",
    }
}

fn real_or_na(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => fmt_real(v),
        _ => "NA".into(),
    }
}

fn write_table(dir: &Path, name: &str, t: &CsvTable) -> Result<()> {
    fs::create_dir_all(dir)?;
    t.write(dir.join(name))
}

/// Monte Carlo settings for `EIGEN_MC` references.
#[derive(Debug, Clone, Copy)]
pub struct McSettings {
    pub draws: usize,
    pub seed: u64,
}

/// Unrestricted fit: estimate, profile value and plug-in components.
struct Fitted {
    theta: Vec<f64>,
    r_hat: f64,
    fit: FitResult,
}

fn fit(a: &Analysis, kind: ElKind) -> Result<Fitted> {
    let prob = a.problem(kind);
    let (theta, prof) = prob.maximize(&a.space())?;
    let fit = plugin_components(kind, &a.ds, a.gf.as_ref(), &theta)?;
    Ok(Fitted { theta, r_hat: prof.log_ratio, fit })
}

/// The solution of `A theta = c` when `A` is square.
fn pinned_point(h: &AffineConstraint) -> Result<Vec<f64>> {
    let sol = h.a.clone().lu().solve(&h.c).ok_or_else(|| Error::RankDeficient("hypothesis matrix".into()))?;
    Ok(sol.iter().cloned().collect())
}

/// LR test of `A theta = c` with an asymptotic reference. A hypothesis that
/// pins every coordinate is tested with the simple LR and unrestricted
/// `Delta`.
fn lr_test(a: &Analysis, kind: ElKind, f: &Fitted, h: &AffineConstraint, method: CalibrationMethod, mc: McSettings) -> Result<TestResult> {
    let prob = a.problem(kind);
    let p = a.p();
    let full = h.k() == p;
    let lr = if full {
        lr_simple_from(&prob, &f.theta, f.r_hat, &pinned_point(h)?)
    } else {
        lr_nested_from(&prob, &f.theta, f.r_hat, h, &a.space())?
    };
    let dist = if method == CalibrationMethod::Naive {
        QuadraticFormDist::new(&vec![1.0; h.k()], CalibrationMethod::Naive)
    } else {
        let phi: Option<&DMatrix<f64>> = if full { None } else { Some(&h.a) };
        QuadraticFormDist::from_delta(&build_delta(&f.fit, phi)?, method).with_mc(mc.draws, mc.seed)
    };
    Ok(TestResult::from_lr(lr, Reference::QuadForm(dist)))
}

// ---------------------------------------------------------------- estimate

pub struct EstimateArgs<'a> {
    pub kinds: Vec<ElKind>,
    pub method: CalibrationMethod,
    pub mc: McSettings,
    pub select: bool,
    pub keep_intercept: bool,
    pub grid: usize,
    pub out_dir: &'a Path,
}

/// Coefficient table: one block of columns per EL kind.
pub fn estimate(a: &Analysis, args: &EstimateArgs<'_>) -> Result<CsvTable> {
    let p = a.p();
    let logistic = a.family == Family::Logistic;
    let mut header = vec!["covariate".to_string()];
    for &k in &args.kinds {
        let s = lower(k);
        header.push(format!("estimate_{s}"));
        header.push(format!("se_{s}"));
        if logistic {
            header.push(format!("or_{s}"));
        }
        header.push(format!("p_{s}"));
    }
    if args.select {
        for &k in &args.kinds {
            header.push(format!("sel_{}", lower(k)));
        }
    }
    let mut cols: Vec<Vec<String>> = Vec::new();
    let mut sel_cols: Vec<Vec<String>> = Vec::new();
    let mut path = CsvTable::new(&["el", "tau", "bic", "chosen"]);
    for &kind in &args.kinds {
        let f = fit(a, kind)?;
        let se: Vec<Option<f64>> = match sandwich(&f.fit) {
            Ok(s) => s.se.iter().map(|v| Some(*v)).collect(),
            Err(_) => vec![None; p],
        };
        let pv: Vec<Option<f64>> = (0..p)
            .map(|j| lr_test(a, kind, &f, &AffineConstraint::fix(p, j, 0.0), args.method, args.mc).ok().map(|t| t.p_value))
            .collect();
        for j in 0..p {
            cols.push(vec![fmt_real(f.theta[j]), real_or_na(se[j])]);
            let c = cols.last_mut().expect("pushed");
            if logistic {
                c.push(fmt_real(f.theta[j].exp()));
            }
            c.push(real_or_na(pv[j]));
        }
        if args.select {
            let res = selection(a, kind, args.keep_intercept, args.grid, None)?;
            sel_cols.push((0..p).map(|j| u8::from(res.selected.contains(&j)).to_string()).collect());
            for &(t, b) in &res.path {
                path.push(vec![lower(kind).into(), fmt_real(t), fmt_real(b), u8::from(t == res.tau).to_string()]);
            }
        }
    }
    let names = a.names();
    let mut t = CsvTable::new(&header);
    for j in 0..p {
        let mut row = vec![names[j].clone()];
        for ki in 0..args.kinds.len() {
            row.extend(cols[ki * p + j].iter().cloned());
        }
        for s in &sel_cols {
            row.push(s[j].clone());
        }
        t.push(row);
    }
    write_table(args.out_dir, "estimates.csv", &t)?;
    if args.select {
        write_table(args.out_dir, "selection_path.csv", &path)?;
    }
    Ok(t)
}

// ---------------------------------------------------------------- select

fn selection(
    a: &Analysis,
    kind: ElKind,
    keep_intercept: bool,
    grid: usize,
    taus: Option<&[f64]>,
) -> Result<svyel::SelectionResult> {
    let p = a.p();
    let grid: Vec<f64> = match taus {
        Some(t) => t.to_vec(),
        None => default_tau_grid(a.ds.n(), p, grid),
    };
    let unpen: Vec<usize> = if keep_intercept && a.schema.intercept { vec![0] } else { Vec::new() };
    select_tau(kind, &a.ds, a.gf.as_ref(), &a.space(), &grid, &unpen, &SolverConfig::default())
}

pub struct SelectArgs<'a> {
    pub kinds: Vec<ElKind>,
    pub keep_intercept: bool,
    pub grid: usize,
    pub taus: Option<Vec<f64>>,
    pub out_dir: &'a Path,
}

pub fn select(a: &Analysis, args: &SelectArgs<'_>) -> Result<(CsvTable, KvReport)> {
    let p = a.p();
    let names = a.names();
    let mut header = vec!["covariate".to_string()];
    for &k in &args.kinds {
        header.push(format!("estimate_{}", lower(k)));
        header.push(format!("selected_{}", lower(k)));
    }
    let mut path = CsvTable::new(&["el", "tau", "bic", "chosen"]);
    let mut kv = KvReport::new();
    let mut results = Vec::new();
    for &kind in &args.kinds {
        let r = selection(a, kind, args.keep_intercept, args.grid, args.taus.as_deref())?;
        let s = lower(kind);
        kv.push_real(&format!("tau_{s}"), r.tau);
        kv.push_real(&format!("bic_{s}"), r.bic);
        let sel: Vec<String> = r.selected.iter().map(|&j| names[j].clone()).collect();
        kv.push(&format!("selected_{s}"), sel.join(","));
        for &(t, b) in &r.path {
            path.push(vec![s.into(), fmt_real(t), fmt_real(b), u8::from(t == r.tau).to_string()]);
        }
        results.push(r);
    }
    let mut t = CsvTable::new(&header);
    for j in 0..p {
        let mut row = vec![names[j].clone()];
        for r in &results {
            row.push(fmt_real(r.theta_hat[j]));
            row.push(u8::from(r.selected.contains(&j)).to_string());
        }
        t.push(row);
    }
    write_table(args.out_dir, "selection.csv", &t)?;
    write_table(args.out_dir, "selection_path.csv", &path)?;
    Ok((t, kv))
}

// ---------------------------------------------------------------- test

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestMethodArg {
    Asymptotic(CalibrationMethod),
    Boot,
    Wald,
}

impl TestMethodArg {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boot" | "bootstrap" => Ok(TestMethodArg::Boot),
            "wald" => Ok(TestMethodArg::Wald),
            other => CalibrationMethod::parse(other).map(TestMethodArg::Asymptotic),
        }
    }
}

pub struct TestArgs<'a> {
    pub kind: ElKind,
    pub hypothesis: &'a str,
    pub method: TestMethodArg,
    pub alpha: f64,
    pub mc: McSettings,
    pub design_weights: Option<&'a Path>,
    pub b: usize,
    pub seed: u64,
}

/// Design weights from a sidecar CSV: the first column, one row per record.
pub fn read_design_weights(path: &Path, n: usize) -> Result<Vec<f64>> {
    let raw = RawTable::read(path).map_err(|e| with_path(e, path))?;
    let name = raw.headers.first().cloned().ok_or_else(|| Error::Schema("design-weight file has no columns".into()))?;
    let d = raw.numeric_column(&name)?;
    if d.len() != n {
        return Err(Error::Dimension(format!("{} design weights for {n} records", d.len())));
    }
    Ok(d)
}

/// Design sample whose `x` holds the schema's calibration columns.
fn calibration_sample(a: &Analysis, d: Vec<f64>) -> Result<(DesignSample, CalibrationSpec)> {
    let n = a.ds.n();
    let cols = a.schema.calib.iter().map(|c| a.raw.numeric_column(c)).collect::<Result<Vec<_>>>()?;
    let xc = if cols.is_empty() { Rows::empty(n) } else { Rows::from_columns(&cols)? };
    let q = xc.ncols();
    let sample = DesignSample::new(Rows::empty(n), xc, d, (0..n).collect())?;
    let probe = CalibrationSpec::new((0..q).collect(), vec![0.0; q])?;
    let totals = ht_totals(&sample, &probe)?;
    Ok((sample, CalibrationSpec::new((0..q).collect(), totals)?))
}

pub fn test(a: &Analysis, args: &TestArgs<'_>) -> Result<KvReport> {
    let p = a.p();
    let h = parse_hypothesis(args.hypothesis, p)?;
    let kind = args.kind;
    let f = fit(a, kind)?;
    let mut kv = KvReport::new();
    kv.push("el", kind.name());
    kv.push("hypothesis", args.hypothesis.replace(' ', ""));
    kv.push("k", h.k());
    let result = match args.method {
        TestMethodArg::Asymptotic(m) => lr_test(a, kind, &f, &h, m, args.mc)?,
        TestMethodArg::Wald => {
            if h.k() != 1 {
                return Err(Error::InvalidArgument("wald handles a single restriction".into()));
            }
            let contrast: Vec<f64> = h.a.row(0).iter().cloned().collect();
            wald_test(&sandwich(&f.fit)?, &contrast, h.c[0])?
        }
        TestMethodArg::Boot => {
            let path = args.design_weights.ok_or_else(|| {
                Error::InvalidArgument(
                    "method boot needs design weights (--design-weights): replication columns alone \
                     do not identify the bootstrap resampling of the design"
                        .into(),
                )
            })?;
            let d = read_design_weights(path, a.ds.n())?;
            let (sample, cal) = calibration_sample(a, d)?;
            let reps = make_replication_weights(&sample, &cal, args.b, args.seed)?;
            let prob = a.problem(kind);
            let lr = if h.k() == p {
                lr_simple_from(&prob, &f.theta, f.r_hat, &pinned_point(&h)?)
            } else {
                lr_nested_from(&prob, &f.theta, f.r_hat, &h, &a.space())?
            };
            let null = if h.k() == p { BootNull::Simple } else { BootNull::Nested(&h) };
            let sorted =
                bootstrap_lr_sample(kind, &a.ds.x, &a.ds.y, a.gf.as_ref(), &reps, &f.theta, null, &a.space(), &SolverConfig::default());
            svyel::bootstrap_critical_value(&sorted, args.alpha)?;
            kv.push("boot_replicates", sorted.iter().filter(|v| v.is_finite()).count());
            TestResult::from_lr(lr, Reference::Bootstrap(sorted))
        }
    };
    kv.push("method", result.method_name());
    kv.push_real("statistic", result.statistic);
    kv.push_real("p_value", result.p_value);
    kv.push_real("alpha", args.alpha);
    kv.push_real("critical_value", result.critical_value(args.alpha));
    kv.push("reject", result.reject(args.alpha));
    if let Reference::QuadForm(d) = &result.reference {
        kv.push_list("eigenvalues", &d.eigenvalues);
    }
    kv.push_list("theta_hat", &f.theta);
    if let Some(lr) = &result.lr {
        if !lr.theta_null.is_empty() {
            kv.push_list("theta_null", &lr.theta_null);
        }
        kv.push("infinite", lr.infinite);
    }
    Ok(kv)
}

// ---------------------------------------------------------------- quantile

pub struct QuantileArgs {
    pub kind: ElKind,
    pub taus: Vec<f64>,
    pub alpha: f64,
    pub method: CalibrationMethod,
    pub mc: McSettings,
}

/// Intervals for each `tau`; the response is the schema's first `y` column.
pub fn quantile(data: &Path, schema: &Path, args: &QuantileArgs) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["el", "tau", "estimate", "lower", "upper", "critical_value", "method"]);
    for &tau in &args.taus {
        let a = Analysis::load(data, schema, "quantile", Some(tau))?;
        let prob = a.problem(args.kind);
        let space = a.space();
        let (theta, prof) = prob.maximize(&space)?;
        let fit = plugin_components(args.kind, &a.ds, a.gf.as_ref(), &theta)?;
        let crit = if args.method == CalibrationMethod::Naive {
            QuadraticFormDist::new(&[1.0], CalibrationMethod::Naive).critical_value(args.alpha)
        } else {
            QuadraticFormDist::from_delta(&build_delta(&fit, None)?, args.method)
                .with_mc(args.mc.draws, args.mc.seed)
                .critical_value(args.alpha)
        };
        let ci = ci_invert_from(&prob, CiTarget::Scalar, crit, &space, &theta, prof.log_ratio, None)?;
        t.push(vec![
            args.kind.name().into(),
            fmt_real(tau),
            fmt_real(ci.estimate),
            fmt_real(ci.lower),
            fmt_real(ci.upper),
            fmt_real(crit),
            args.method.name().into(),
        ]);
    }
    Ok(t)
}

// ---------------------------------------------------------------- repweights

pub struct RepweightsArgs<'a> {
    pub b: usize,
    pub seed: u64,
    pub out: &'a Path,
}

/// The input file with `<prefix>1..B` bootstrap replication columns
/// appended. The schema's weight column is taken as the design weights and
/// replicates are calibrated on its `calib` columns to their HT totals.
pub fn repweights(data: &Path, schema: &Path, args: &RepweightsArgs<'_>) -> Result<usize> {
    let schema = Schema::from_file(schema).map_err(|e| with_path(e, schema))?;
    let raw = RawTable::read(data).map_err(|e| with_path(e, data))?;
    let d = raw.numeric_column(&schema.weight)?;
    let n = d.len();
    let prefix = schema.rep_prefix.clone().unwrap_or_else(|| "w_rep_".into());
    if raw.headers.iter().any(|h| h.strip_prefix(prefix.as_str()).is_some_and(|r| r.parse::<usize>().is_ok())) {
        return Err(Error::Schema(format!("input already has {prefix}<b> columns")));
    }
    let cols = schema.calib.iter().map(|c| raw.numeric_column(c)).collect::<Result<Vec<_>>>()?;
    let xc = if cols.is_empty() { Rows::empty(n) } else { Rows::from_columns(&cols)? };
    let q = xc.ncols();
    let sample = DesignSample::new(Rows::empty(n), xc, d, (0..n).collect())?;
    let totals = ht_totals(&sample, &CalibrationSpec::new((0..q).collect(), vec![0.0; q])?)?;
    let reps = make_replication_weights(&sample, &CalibrationSpec::new((0..q).collect(), totals)?, args.b, args.seed)?;
    let m = reps.matrix();
    let mut header = raw.headers.clone();
    header.extend((1..=args.b).map(|b| format!("{prefix}{b}")));
    let mut t = CsvTable::new(&header);
    let mut negative = 0;
    for (i, rec) in raw.records.iter().enumerate() {
        let mut row = rec.clone();
        for v in m.row(i) {
            negative += usize::from(*v < 0.0);
            row.push(fmt_real(*v));
        }
        t.push(row);
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    t.write(args.out)?;
    Ok(negative)
}

// ---------------------------------------------------------------- simulate

/// Command-line overrides of descriptor counts, for quick runs.
#[derive(Debug, Clone, Default)]
pub struct SimOverrides {
    pub runs: Option<usize>,
    pub boot_runs: Option<usize>,
    pub n_reps: Option<usize>,
}

pub fn simulate(descriptor: &Path, out_dir: &Path, over: &SimOverrides, manifest: &mut RunManifest) -> Result<Vec<String>> {
    let text = fs::read_to_string(descriptor).map_err(|e| with_path(e.into(), descriptor))?;
    let mut spec = ExperimentSpec::parse(&text)?;
    if let Some(r) = over.runs {
        spec.runs = r;
        spec.boot_runs = spec.boot_runs.min(r);
    }
    if let Some(b) = over.boot_runs {
        spec.boot_runs = b.min(spec.runs);
    }
    if let Some(b) = over.n_reps {
        spec.n_reps = b;
    }
    for (k, v) in spec.to_kv().entries() {
        manifest.config(k, v);
    }
    manifest.seed("experiment", spec.seed);
    let out = run_experiment(&spec)?;
    fs::create_dir_all(out_dir)?;
    spec.to_kv().write(out_dir.join("descriptor.txt"))?;
    let mut names = Vec::new();
    for (name, table) in out.tables() {
        table.write(out_dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}
