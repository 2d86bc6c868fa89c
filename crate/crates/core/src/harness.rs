//! Scenario configuration, the replicated benchmark protocol, equal-time
//! calibration and CSV output.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use crate::effdim::{effective_dimension, DEFAULT_GAMMA, DEFAULT_L};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::integrand::{Estimate, Integrand};
use crate::lbfp::MAX_DIM;
use crate::lsis::{lsis, LsisConfig};
use crate::models::{BsModel, CirModel, Model, Payout, Scenario};
use crate::npis::{npis, NpisConfig, Subspace};
use crate::paths::ConstructionKind;
use crate::rng::{inv_normal_open, mix_seed, PointKind, PointStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mc,
    Qmc,
    Lsis,
    Npis,
    Qlsis,
    Qnpis,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Mc, Method::Qmc, Method::Lsis, Method::Npis, Method::Qlsis, Method::Qnpis];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Qmc => "qmc",
            Method::Lsis => "lsis",
            Method::Npis => "npis",
            Method::Qlsis => "qlsis",
            Method::Qnpis => "qnpis",
        }
    }

    pub fn uses_subspace(self) -> bool {
        !matches!(self, Method::Mc | Method::Qmc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Straddle,
    Asian,
    AsianKo,
    AsianStraddle,
    BasketAvg,
    BasketMax,
    CirCap,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Straddle,
        ScenarioKind::Asian,
        ScenarioKind::AsianKo,
        ScenarioKind::AsianStraddle,
        ScenarioKind::BasketAvg,
        ScenarioKind::BasketMax,
        ScenarioKind::CirCap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Straddle => "straddle",
            ScenarioKind::Asian => "asian",
            ScenarioKind::AsianKo => "asian-ko",
            ScenarioKind::AsianStraddle => "asian-straddle",
            ScenarioKind::BasketAvg => "basket-avg",
            ScenarioKind::BasketMax => "basket-max",
            ScenarioKind::CirCap => "cir-cap",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// A named scenario with its parameters; `d` is the time-step count or,
/// for baskets, the asset count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub s0: f64,
    pub sigma: f64,
    pub r: f64,
    pub t: f64,
    pub strike: f64,
    pub barrier: f64,
    pub d: usize,
    pub corr: f64,
    pub r0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub construction: ConstructionKind,
    /// Size of the leading subspace; chosen from the effective dimension when unset.
    pub u_size: Option<usize>,
}

impl ScenarioSpec {
    pub fn preset(kind: ScenarioKind) -> Self {
        let base = ScenarioSpec {
            kind,
            s0: 100.0,
            sigma: 0.3,
            r: 0.05,
            t: 1.0,
            strike: 100.0,
            barrier: 150.0,
            d: 16,
            corr: 0.3,
            r0: 0.07,
            kappa: 0.2,
            theta: 0.075,
            construction: ConstructionKind::Pca,
            u_size: None,
        };
        match kind {
            ScenarioKind::Straddle => ScenarioSpec { d: 1, ..base },
            ScenarioKind::AsianKo => ScenarioSpec { strike: 140.0, ..base },
            ScenarioKind::BasketMax => ScenarioSpec { strike: 150.0, d: 2, ..base },
            ScenarioKind::CirCap => ScenarioSpec {
                sigma: 0.02,
                strike: 0.07,
                ..base
            },
            _ => base,
        }
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
        };
        let int = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("`{key}` expects a count, got `{value}`")))
        };
        match key {
            "scenario" => {
                let kind: ScenarioKind = value.parse()?;
                if kind != self.kind {
                    *self = ScenarioSpec::preset(kind);
                }
            }
            "S0" => self.s0 = num()?,
            "sigma" => self.sigma = num()?,
            "r" => self.r = num()?,
            "T" => self.t = num()?,
            "K" => self.strike = num()?,
            "K_ko" => self.barrier = num()?,
            "d" | "s" => self.d = int()?,
            "corr" => self.corr = num()?,
            "r0" => self.r0 = num()?,
            "kappa" => self.kappa = num()?,
            "theta" => self.theta = num()?,
            "construction" => self.construction = value.parse()?,
            "u" => self.u_size = Some(int()?),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file; `#` starts a comment. A `scenario`
    /// line resets to that preset, so it should come first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec: Option<ScenarioSpec> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match (&mut spec, k) {
                (None, "scenario") => spec = Some(ScenarioSpec::preset(v.parse()?)),
                (None, _) => return Err(Error::Config(format!("line {}: `scenario` must come first", no + 1))),
                (Some(s), _) => s.set(k, v)?,
            }
        }
        spec.ok_or_else(|| Error::Config("missing `scenario`".into()))
    }

    pub fn to_config(&self) -> String {
        let mut s = format!(
            "scenario={}\nS0={}\nsigma={}\nr={}\nT={}\nK={}\nK_ko={}\nd={}\ncorr={}\nr0={}\nkappa={}\ntheta={}\nconstruction={}\n",
            self.kind.name(),
            self.s0,
            self.sigma,
            self.r,
            self.t,
            self.strike,
            self.barrier,
            self.d,
            self.corr,
            self.r0,
            self.kappa,
            self.theta,
            match self.construction {
                ConstructionKind::Pca => "pca",
                ConstructionKind::RandomWalk => "random-walk",
            }
        );
        if let Some(u) = self.u_size {
            s.push_str(&format!("u={u}\n"));
        }
        s
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self.kind {
            ScenarioKind::AsianKo => format!("{} K={} K_ko={} d={}", self.kind.name(), self.strike, self.barrier, self.d),
            ScenarioKind::CirCap => format!("{} K={} T={} d={}", self.kind.name(), self.strike, self.t, self.d),
            ScenarioKind::BasketAvg | ScenarioKind::BasketMax => {
                format!("{} K={} s={}", self.kind.name(), self.strike, self.d)
            }
            _ => format!("{} K={} d={}", self.kind.name(), self.strike, self.d),
        }
    }

    pub fn payout(&self) -> Payout {
        let k = self.strike;
        match self.kind {
            ScenarioKind::Straddle => Payout::Straddle { strike: k },
            ScenarioKind::Asian => Payout::AsianCall { strike: k },
            ScenarioKind::AsianKo => Payout::AsianKnockout {
                strike: k,
                barrier: self.barrier,
            },
            ScenarioKind::AsianStraddle => Payout::AsianStraddle { strike: k },
            ScenarioKind::BasketAvg => Payout::BasketAverage { strike: k },
            ScenarioKind::BasketMax => Payout::BasketMax { strike: k },
            ScenarioKind::CirCap => Payout::CirCap { strike: k },
        }
    }

    pub fn build(&self, construction: ConstructionKind) -> Result<Scenario> {
        let model = match self.kind {
            ScenarioKind::CirCap => Model::Cir {
                model: CirModel::new(self.r0, self.kappa, self.theta, self.sigma)?,
                horizon: self.t,
            },
            ScenarioKind::BasketAvg | ScenarioKind::BasketMax => Model::MultiAsset {
                base: BsModel::new(self.s0, self.sigma, self.r, self.t)?,
                assets: self.d,
                rho: self.corr,
            },
            _ => Model::BlackScholes(BsModel::new(self.s0, self.sigma, self.r, self.t)?),
        };
        let steps = if self.kind == ScenarioKind::Straddle { 1 } else { self.d };
        Scenario::new(model, self.payout(), steps, construction)
    }

    pub fn is_bimodal(&self) -> bool {
        self.payout().is_bimodal()
    }

    /// Subspace size: the explicit value, else the effective dimension
    /// (γ = 0.9) of the PCA scenario capped at 3.
    pub fn resolve_u_size(&self, exec: Executor) -> Result<usize> {
        if let Some(u) = self.u_size {
            return Ok(u);
        }
        let scn = self.build(ConstructionKind::Pca)?;
        if scn.dim() == 1 {
            return Ok(1);
        }
        let rep = effective_dimension(&scn, DEFAULT_GAMMA, DEFAULT_L, ED_SEED, exec)?;
        Ok(rep.ed.min(MAX_DIM))
    }
}

const ED_SEED: u64 = 0x05ee_d0ed;

/// Tuning overrides shared by the IS methods; unset fields take the
/// method defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MethodOptions {
    pub m: Option<usize>,
    pub beta: Option<f64>,
    pub bin_mult: Option<f64>,
    pub eps: Option<f64>,
}

impl MethodOptions {
    pub fn npis_config(&self, n: usize, quasi: bool, bimodal: bool) -> NpisConfig {
        let mut c = if quasi { NpisConfig::quasi(n, bimodal) } else { NpisConfig::new(n) };
        if let Some(m) = self.m {
            c.m = m;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        if let Some(h) = self.bin_mult {
            c.bin_mult = h;
        }
        if let Some(e) = self.eps {
            c.eps = e;
        }
        c
    }

    pub fn lsis_config(&self, n: usize, quasi: bool) -> LsisConfig {
        let mut c = if quasi { LsisConfig::quasi(n) } else { LsisConfig::new(n) };
        if let Some(m) = self.m {
            c.m = m;
        }
        c
    }
}

/// Everything one run needs: both constructions of the scenario and the subspace.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ScenarioSpec,
    /// Crude-MC reference construction.
    pub reference: Scenario,
    pub scenario: Scenario,
    pub u: Subspace,
    pub options: MethodOptions,
}

impl Prepared {
    /// Crude MC uses the random-walk construction; every other method uses the scenario's.
    pub fn new(spec: &ScenarioSpec, options: MethodOptions, exec: Executor) -> Result<Self> {
        let reference = spec.build(ConstructionKind::RandomWalk)?;
        let scenario = spec.build(spec.construction)?;
        let k = spec.resolve_u_size(exec)?;
        let u = Subspace::leading(k, scenario.dim())?;
        Ok(Prepared {
            spec: spec.clone(),
            reference,
            scenario,
            u,
            options,
        })
    }

    /// One independent run at sample size `n`.
    pub fn run(&self, method: Method, n: usize, seed: u64) -> Result<Estimate> {
        if n == 0 {
            return Err(Error::InvalidParameter { name: "N", reason: "must be positive".into() });
        }
        let f = &self.scenario;
        let bimodal = self.spec.is_bimodal();
        match method {
            Method::Mc => plain(&self.reference, PointKind::Pseudo, n, mix_seed(seed, 10)),
            Method::Qmc => plain(f, PointKind::ShiftedSobol, n, mix_seed(seed, 11)),
            Method::Npis | Method::Qnpis => {
                let cfg = self.options.npis_config(n, method == Method::Qnpis, bimodal);
                Ok(npis(f, &self.u, &cfg, seed)?.estimate)
            }
            Method::Lsis | Method::Qlsis => {
                let cfg = self.options.lsis_config(n, method == Method::Qlsis);
                Ok(lsis(f, &self.u, &cfg, seed)?.estimate)
            }
        }
    }
}

/// Plain (quasi-)Monte Carlo average over the nominal density.
pub fn plain<F: Integrand>(f: &F, kind: PointKind, n: usize, seed: u64) -> Result<Estimate> {
    let d = f.dim();
    let mut stream = PointStream::new(kind, d, seed)?;
    let mut scratch = f.scratch();
    let mut v = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        stream.next_into(&mut v);
        for (o, &u) in x.iter_mut().zip(&v) {
            *o = inv_normal_open(u);
        }
        terms.push(f.eval(&x, &mut scratch));
    }
    Ok(Estimate::from_terms(&terms))
}

/// Across-run summary of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub method: Method,
    pub n: usize,
    pub runs: usize,
    /// Estimates of the successful runs, in seed order.
    pub estimates: Vec<f64>,
    pub mean: f64,
    pub var: f64,
    /// Mean wall time per run in seconds.
    pub time_s: f64,
    pub vr: Option<f64>,
    pub rce: Option<f64>,
    pub failures: usize,
}

/// Runs with more failures than this fraction are reported as missing.
pub const FAILURE_LIMIT: f64 = 0.2;

impl RunReport {
    pub fn is_missing(&self) -> bool {
        self.failures as f64 > FAILURE_LIMIT * self.runs as f64 || self.estimates.len() < 2
    }

    /// Standard error of the across-run mean.
    pub fn se(&self) -> f64 {
        (self.var / self.estimates.len() as f64).sqrt()
    }

    /// Fills VR and RCE relative to `reference`.
    pub fn compare(&mut self, reference: &RunReport) {
        if self.is_missing() || reference.is_missing() {
            self.vr = None;
            self.rce = None;
            return;
        }
        let vr = reference.var / self.var;
        self.vr = Some(vr);
        self.rce = Some(vr * reference.time_s / self.time_s);
    }
}

fn summarize(label: String, method: Method, n: usize, runs: usize, results: Vec<(Result<Estimate>, f64)>) -> Result<RunReport> {
    let mut estimates = Vec::with_capacity(runs);
    let mut failures = 0;
    let mut total_time = 0.0;
    for (res, t) in results {
        total_time += t;
        match res {
            Ok(e) => estimates.push(e.mean),
            Err(e) if e.is_trial_failure() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    let k = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / k;
    let var = if estimates.len() > 1 {
        estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (k - 1.0)
    } else {
        f64::NAN
    };
    Ok(RunReport {
        scenario: label,
        method,
        n,
        runs,
        estimates,
        mean,
        var,
        time_s: total_time / runs as f64,
        vr: None,
        rce: None,
        failures,
    })
}

/// `runs` independent runs with seeds `base_seed + i`, reduced in seed order.
pub fn run_method(prep: &Prepared, method: Method, n: usize, runs: usize, base_seed: u64, exec: Executor) -> Result<RunReport> {
    if runs < 2 {
        return Err(Error::InvalidParameter { name: "runs", reason: "need at least 2".into() });
    }
    let results = exec.map(runs, |i| {
        let start = Instant::now();
        let r = prep.run(method, n, base_seed.wrapping_add(i as u64));
        (r, start.elapsed().as_secs_f64())
    });
    summarize(prep.spec.label(), method, n, runs, results)
}

/// Runs every method (and a crude-MC reference) at sample size `n`, with
/// VR and RCE against the reference.
pub fn run_benchmark(
    prep: &Prepared,
    methods: &[Method],
    n: usize,
    runs: usize,
    base_seed: u64,
    exec: Executor,
) -> Result<Vec<RunReport>> {
    let reference = run_method(prep, Method::Mc, n, runs, base_seed, exec)?;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let mut rep = if m == Method::Mc {
            reference.clone()
        } else {
            run_method(prep, m, n, runs, base_seed, exec)?
        };
        rep.compare(&reference);
        out.push(rep);
    }
    Ok(out)
}

pub const MIN_CALIBRATION_N: usize = 1 << 6;
const PILOT_RUNS: usize = 4;
const PILOT_SEED: u64 = 1 << 40;

/// Median wall time of a few pilot runs at `n`, run sequentially after one
/// untimed warm-up run.
fn pilot_time(prep: &Prepared, method: Method, n: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(PILOT_RUNS);
    for i in 0..=PILOT_RUNS {
        let start = Instant::now();
        match prep.run(method, n, PILOT_SEED + i as u64) {
            Ok(_) => {}
            Err(e) if e.is_trial_failure() => {}
            Err(e) => return Err(e),
        }
        if i > 0 {
            times.push(start.elapsed().as_secs_f64());
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(0.5 * (times[(PILOT_RUNS - 1) / 2] + times[PILOT_RUNS / 2]))
}

/// Sample size whose mean run time is within 10% of `budget` seconds.
pub fn calibrate(prep: &Prepared, method: Method, budget: f64) -> Result<usize> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter {
            name: "budget",
            reason: format!("must be positive, got {budget}"),
        });
    }
    let mut n = MIN_CALIBRATION_N;
    let mut t = pilot_time(prep, method, n)?;
    if t > budget {
        return Err(Error::Calibration { budget, smallest: t });
    }
    while t < budget {
        n *= 2;
        t = pilot_time(prep, method, n)?;
    }
    // Time is close to affine in N; a few secant refinements suffice.
    let (mut n_lo, mut t_lo) = (n / 2, pilot_time(prep, method, n / 2)?);
    let (mut n_hi, mut t_hi) = (n, t);
    let mut best = if (t_lo - budget).abs() < (t_hi - budget).abs() { n_lo } else { n_hi };
    for _ in 0..6 {
        let frac = ((budget - t_lo) / (t_hi - t_lo)).clamp(0.0, 1.0);
        let guess = (n_lo as f64 + frac * (n_hi - n_lo) as f64).round().max(MIN_CALIBRATION_N as f64) as usize;
        let tg = pilot_time(prep, method, guess)?;
        best = guess;
        if (tg - budget).abs() <= 0.1 * budget {
            break;
        }
        if tg < budget {
            n_lo = guess;
            t_lo = tg;
        } else {
            n_hi = guess;
            t_hi = tg;
        }
    }
    Ok(best)
}

/// Calibrates each method to `budget` seconds per run, then runs the
/// standard protocol. VR and RCE are relative to crude MC at its own
/// calibrated size.
pub fn equal_time_benchmark(
    prep: &Prepared,
    methods: &[Method],
    budget: f64,
    runs: usize,
    base_seed: u64,
    exec: Executor,
) -> Result<Vec<RunReport>> {
    let n_mc = calibrate(prep, Method::Mc, budget)?;
    let reference = run_method(prep, Method::Mc, n_mc, runs, base_seed, exec)?;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let mut rep = if m == Method::Mc {
            reference.clone()
        } else {
            let n = calibrate(prep, m, budget)?;
            run_method(prep, m, n, runs, base_seed, exec)?
        };
        rep.compare(&reference);
        out.push(rep);
    }
    Ok(out)
}

/// A single priced run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceResult {
    pub estimate: Estimate,
    pub time_s: f64,
}

pub fn price(prep: &Prepared, method: Method, n: usize, seed: u64) -> Result<PriceResult> {
    let start = Instant::now();
    let estimate = prep.run(method, n, seed)?;
    Ok(PriceResult {
        estimate,
        time_s: start.elapsed().as_secs_f64(),
    })
}

pub const CSV_HEADER: &str = "scenario,method,N,R,mean,var,time_s,VR,RCE,failures";

/// Writes reports as CSV with LF line endings. Without timing, the
/// time-dependent columns are written as `-` so output is reproducible.
pub fn write_csv<W: Write>(mut w: W, reports: &[RunReport], timing: bool) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    for r in reports {
        let missing = r.is_missing();
        let (mean, var) = if missing {
            ("-".to_string(), "-".to_string())
        } else {
            (r.mean.to_string(), r.var.to_string())
        };
        let time = if timing { format!("{:.6}", r.time_s) } else { "-".to_string() };
        let rce = if timing { opt(r.rce) } else { "-".to_string() };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.method,
            r.n,
            r.runs,
            mean,
            var,
            time,
            opt(r.vr),
            rce,
            r.failures
        )?;
    }
    Ok(())
}
