use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use npis::effdim::{effective_dimension, DEFAULT_GAMMA, DEFAULT_L};
use npis::exec::Executor;
use npis::harness::{
    equal_time_benchmark, price, run_benchmark, write_csv, Method, MethodOptions, Prepared, ScenarioKind,
    ScenarioSpec,
};
use npis::npis::stage1;
use npis::Error;

#[derive(Parser)]
#[command(name = "npis", version, about = "Importance sampling benchmarks for Monte Carlo option pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price a scenario with one run.
    Price {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(long, default_value = "npis")]
        method: Method,
        #[arg(long = "N", default_value_t = 1 << 12)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Replicated runs with VR and RCE against crude MC.
    Benchmark {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "mc,qmc,lsis,npis,qlsis,qnpis")]
        method: Vec<Method>,
        #[arg(long = "N", default_value_t = 1 << 10)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Replicated runs with each method calibrated to a per-run time budget.
    EqualTime {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_delimiter = ',', default_value = "mc,lsis,npis")]
        method: Vec<Method>,
        /// Seconds per run.
        #[arg(long, default_value_t = 0.35)]
        budget: f64,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Cumulated variance profile of leading coordinates and the effective dimension.
    Effdim {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = DEFAULT_L)]
        l: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "parallel")]
        executor: Executor,
    },
    /// Run the trial stage once and dump the proposal density grid.
    Proposal {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(long = "N", default_value_t = 1 << 12)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file with key=value lines.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario (straddle, asian, asian-ko, asian-straddle, basket-avg, basket-max, cir-cap).
    #[arg(long)]
    preset: Option<ScenarioKind>,
    /// Parameter override, e.g. `--set K=140`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Size of the leading subspace (default: effective dimension, at most 3).
    #[arg(long = "u-size")]
    u_size: Option<usize>,
}

#[derive(Args)]
struct TuningArgs {
    /// Trial-stage / fitting sample size.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Uniform weight in the defensive mixture.
    #[arg(long)]
    beta: Option<f64>,
    /// Bin-width multiplier.
    #[arg(long)]
    hmult: Option<f64>,
    /// Tail mass of the trial box.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value = "parallel")]
    executor: Executor,
}

#[derive(Args)]
struct OutputArgs {
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `-` for time-dependent columns so output is reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl ScenarioArgs {
    fn spec(&self) -> Result<ScenarioSpec, Error> {
        let mut spec = match (&self.scenario, self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ScenarioSpec::parse(&text)?
            }
            (None, Some(kind)) => ScenarioSpec::preset(kind),
            (None, None) => return Err(Error::Config("need --scenario FILE or --preset NAME".into())),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
            spec.set(k.trim(), v.trim())?;
        }
        if let Some(u) = self.u_size {
            spec.u_size = Some(u);
        }
        Ok(spec)
    }
}

impl TuningArgs {
    fn options(&self) -> MethodOptions {
        MethodOptions {
            m: self.m,
            beta: self.beta,
            bin_mult: self.hmult,
            eps: self.eps,
        }
    }
}

enum Failure {
    Model(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn sink(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Price {
            scenario,
            tuning,
            method,
            n,
            seed,
        } => {
            let prep = Prepared::new(&scenario.spec()?, tuning.options(), tuning.executor)?;
            let p = price(&prep, method, n, seed)?;
            println!("scenario: {}", prep.spec.label());
            println!("method: {method}  N: {n}  u: {}", prep.u.len());
            println!("estimate: {}", p.estimate.mean);
            println!("se: {}", p.estimate.se);
            println!("time_s: {:.6}", p.time_s);
        }
        Command::Benchmark {
            scenario,
            tuning,
            output,
            method,
            n,
            runs,
            seed,
        } => {
            let prep = Prepared::new(&scenario.spec()?, tuning.options(), tuning.executor)?;
            let reports = run_benchmark(&prep, &method, n, runs, seed, tuning.executor)?;
            let mut w = sink(&output.out)?;
            write_csv(&mut w, &reports, !output.no_timing)?;
            w.flush()?;
        }
        Command::EqualTime {
            scenario,
            tuning,
            output,
            method,
            budget,
            runs,
            seed,
        } => {
            let prep = Prepared::new(&scenario.spec()?, tuning.options(), tuning.executor)?;
            let reports = equal_time_benchmark(&prep, &method, budget, runs, seed, tuning.executor)?;
            let mut w = sink(&output.out)?;
            write_csv(&mut w, &reports, !output.no_timing)?;
            w.flush()?;
        }
        Command::Effdim {
            scenario,
            gamma,
            l,
            seed,
            out,
            executor,
        } => {
            let spec = scenario.spec()?;
            let scn = spec.build(spec.construction)?;
            let rep = effective_dimension(&scn, gamma, l, seed, executor)?;
            let mut w = sink(&out)?;
            writeln!(w, "k,gamma_k,se,fraction")?;
            for (k, ((g, se), f)) in rep.profile.iter().zip(&rep.profile_se).zip(rep.fractions()).enumerate() {
                writeln!(w, "{},{},{},{}", k + 1, g, se, f)?;
            }
            w.flush()?;
            eprintln!("{}: variance {} ED {} (gamma {gamma}, l {l})", spec.label(), rep.total_variance, rep.ed);
        }
        Command::Proposal {
            scenario,
            tuning,
            n,
            seed,
            out,
        } => {
            let spec = scenario.spec()?;
            let prep = Prepared::new(&spec, tuning.options(), tuning.executor)?;
            let cfg = tuning.options().npis_config(n, false, spec.is_bimodal());
            let p = stage1(&prep.scenario, &prep.u, &cfg, seed)?;
            let mut w = sink(&out)?;
            p.density().write_grid(&mut w)?;
            w.flush()?;
            eprintln!(
                "{}: h {} rho {} normalizer {}",
                spec.label(),
                p.bin_width(),
                p.rho(),
                p.normalizer()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors.
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(e)) if e.is_trial_failure() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
