mod commands;
mod hypothesis;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use svyel::eltest::{DEFAULT_MC_DRAWS, DEFAULT_MC_SEED};
use svyel::{CalibrationMethod, ElKind, Error, ErrorClass, Result};

use commands::{Analysis, McSettings, TestMethodArg};
use manifest::{RunManifest, MANIFEST_NAME};

#[derive(Parser, Debug)]
#[command(name = "svyel", version, about = "Empirical likelihood inference for public-use survey files")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// mean, linear, logistic or quantile.
    #[arg(long, default_value = "mean")]
    family: String,
    /// Quantile level for `--family quantile`.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    mc_draws: usize,
    #[arg(long, default_value_t = DEFAULT_MC_SEED)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Point estimates, standard errors and coefficient p-values.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "both")]
        el: String,
        /// Reference for the coefficient tests: eigmc, rs1, rs2 or naive.
        #[arg(long, default_value = "rs1")]
        method: String,
        #[command(flatten)]
        mc: McArgs,
        /// Add SCAD selection indicators.
        #[arg(long)]
        select: bool,
        /// Leave the intercept out of the penalty.
        #[arg(long)]
        keep_intercept: bool,
        #[arg(long, default_value_t = 20)]
        grid: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Likelihood ratio (or Wald) test of an affine hypothesis.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "pel")]
        el: String,
        /// For example `theta[1]=1` or `theta[1]-theta[2]=0; theta[3]=0`.
        #[arg(long)]
        hypothesis: String,
        /// eigmc, rs1, rs2, boot, wald or naive.
        #[arg(long, default_value = "eigmc")]
        method: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        mc: McArgs,
        /// CSV of design weights (first column), required by `--method boot`.
        #[arg(long)]
        design_weights: Option<PathBuf>,
        #[arg(long = "B", default_value_t = 500)]
        b: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Confidence intervals for population quantiles.
    Quantile {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// One or more levels, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "pel")]
        el: String,
        #[arg(long, default_value = "eigmc")]
        method: String,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// SCAD-penalized variable selection with a BIC-chosen tuning parameter.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "both")]
        el: String,
        #[arg(long)]
        keep_intercept: bool,
        #[arg(long, default_value_t = 20)]
        grid: usize,
        /// Explicit tuning grid, comma separated (overrides --grid).
        #[arg(long, value_delimiter = ',')]
        penalties: Option<Vec<f64>>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Append bootstrap replication weights to a file with design weights.
    Repweights {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long = "B", default_value_t = 500)]
        b: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a simulation experiment from a descriptor file.
    Simulate {
        #[arg(long)]
        descriptor: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the descriptor's number of runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the number of runs that include the bootstrap.
        #[arg(long)]
        boot_runs: Option<usize>,
        /// Override the number of replicate weight columns.
        #[arg(long = "B")]
        b: Option<usize>,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn mc(m: &McArgs) -> McSettings {
    McSettings { draws: m.mc_draws, seed: m.seed }
}

fn single_kind(el: &str) -> Result<ElKind> {
    ElKind::parse(el)
}

fn finish(manifest: &mut RunManifest, dir: Option<&Path>, started: Instant) -> Result<()> {
    manifest.elapsed = started.elapsed();
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        manifest.write(d)?;
    }
    Ok(())
}

fn run(cli: Cli, args: &[String]) -> Result<()> {
    let started = Instant::now();
    match cli.cmd {
        Command::Estimate { data, el, method, mc: m, select, keep_intercept, grid, out_dir } => {
            let mut man = RunManifest::new("estimate", args);
            let a = Analysis::load(&data.data, &data.schema, &data.family, data.tau)?;
            let method = CalibrationMethod::parse(&method)?;
            man.config("family", &data.family).config("el", &el).config("method", method.name());
            man.seed("mc", m.seed);
            let t = commands::estimate(
                &a,
                &commands::EstimateArgs {
                    kinds: commands::kinds(&el)?,
                    method,
                    mc: mc(&m),
                    select,
                    keep_intercept,
                    grid,
                    out_dir: &out_dir,
                },
            )?;
            print!("{}", t.to_csv());
            finish(&mut man, Some(&out_dir), started)
        }
        Command::Test { data, el, hypothesis, method, alpha, mc: m, design_weights, b, out_dir } => {
            let mut man = RunManifest::new("test", args);
            let method = TestMethodArg::parse(&method)?;
            if method == TestMethodArg::Boot {
                eprintln!("{}", commands::BOOT_CAVEAT);
            }
            let a = Analysis::load(&data.data, &data.schema, &data.family, data.tau)?;
            man.config("family", &data.family).config("el", &el).config("hypothesis", &hypothesis);
            man.seed("mc", m.seed);
            let kv = commands::test(
                &a,
                &commands::TestArgs {
                    kind: single_kind(&el)?,
                    hypothesis: &hypothesis,
                    method,
                    alpha,
                    mc: mc(&m),
                    design_weights: design_weights.as_deref(),
                    b,
                    seed: m.seed,
                },
            )?;
            print!("{kv}");
            if let Some(d) = &out_dir {
                std::fs::create_dir_all(d)?;
                kv.write(d.join("test.txt"))?;
            }
            finish(&mut man, out_dir.as_deref(), started)
        }
        Command::Quantile { data, schema, tau, alpha, el, method, mc: m, out_dir } => {
            let mut man = RunManifest::new("quantile", args);
            let method = CalibrationMethod::parse(&method)?;
            man.config("el", &el).config("method", method.name());
            man.seed("mc", m.seed);
            let t = commands::quantile(
                &data,
                &schema,
                &commands::QuantileArgs { kind: single_kind(&el)?, taus: tau, alpha, method, mc: mc(&m) },
            )?;
            print!("{}", t.to_csv());
            if let Some(d) = &out_dir {
                std::fs::create_dir_all(d)?;
                t.write(d.join("quantile.csv"))?;
            }
            finish(&mut man, out_dir.as_deref(), started)
        }
        Command::Select { data, el, keep_intercept, grid, penalties, out_dir } => {
            let mut man = RunManifest::new("select", args);
            let a = Analysis::load(&data.data, &data.schema, &data.family, data.tau)?;
            man.config("family", &data.family).config("el", &el);
            let (t, kv) = commands::select(
                &a,
                &commands::SelectArgs { kinds: commands::kinds(&el)?, keep_intercept, grid, taus: penalties, out_dir: &out_dir },
            )?;
            print!("{}", t.to_csv());
            print!("{kv}");
            kv.write(out_dir.join("selection.txt"))?;
            finish(&mut man, Some(&out_dir), started)
        }
        Command::Repweights { data, schema, b, seed, out_dir } => {
            let mut man = RunManifest::new("repweights", args);
            man.config("B", b).seed("bootstrap", seed);
            let out = out_dir.join("repweights.csv");
            let negative = commands::repweights(&data, &schema, &commands::RepweightsArgs { b, seed, out: &out })?;
            if negative > 0 {
                eprintln!("warning: {negative} replication weights are negative after calibration");
            }
            println!("wrote {}", out.display());
            finish(&mut man, Some(&out_dir), started)
        }
        Command::Simulate { descriptor, out_dir, runs, boot_runs, b } => {
            let mut man = RunManifest::new("simulate", args);
            let over = commands::SimOverrides { runs, boot_runs, n_reps: b };
            let names = commands::simulate(&descriptor, &out_dir, &over, &mut man)?;
            for n in names {
                println!("wrote {}", out_dir.join(n).display());
            }
            finish(&mut man, Some(&out_dir), started)
        }
        Command::Replay { manifest, out_dir } => replay(&manifest, out_dir.as_deref()),
    }
}

/// Re-run the recorded arguments from the recorded working directory,
/// optionally redirecting `--out-dir`.
fn replay(path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    let m = RunManifest::read(&path)?;
    if m.args.first().map(String::as_str) == Some("replay") {
        return Err(Error::InvalidArgument("cannot replay a replay".into()));
    }
    let override_dir = match out_dir {
        Some(d) => Some(std::path::absolute(d)?),
        None => None,
    };
    let mut args = m.args.clone();
    if let Some(d) = &override_dir {
        let d = d.display().to_string();
        let mut found = false;
        let mut i = 0;
        while i < args.len() {
            if args[i] == "--out-dir" && i + 1 < args.len() {
                args[i + 1] = d.clone();
                found = true;
                i += 1;
            } else if args[i].starts_with("--out-dir=") {
                args[i] = format!("--out-dir={d}");
                found = true;
            }
            i += 1;
        }
        if !found {
            args.push("--out-dir".into());
            args.push(d);
        }
    }
    if !m.cwd.as_os_str().is_empty() {
        std::env::set_current_dir(&m.cwd)?;
    }
    let cli = Cli::try_parse_from(std::iter::once("svyel".to_string()).chain(args.iter().cloned()))
        .map_err(|e| Error::InvalidArgument(first_line(&e.to_string())))?;
    run(cli, &args)
}

fn first_line(s: &str) -> String {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim().trim_start_matches("error: ").to_string()
}

fn fail(class: ErrorClass, msg: &str) -> ExitCode {
    let (name, code) = match class {
        ErrorClass::Usage => ("usage", 2),
        ErrorClass::Data => ("data", 3),
        ErrorClass::Numerical => ("numerical", 4),
    };
    let msg = msg.replace('"', "'").replace(['\n', '\r'], " ");
    eprintln!("error class={name} msg=\"{msg}\"");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                _ => fail(ErrorClass::Usage, &first_line(&e.to_string())),
            };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(ErrorClass::Usage, &format!("--threads: {e}"));
        }
    }
    match run(cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.class(), &e.to_string()),
    }
}
