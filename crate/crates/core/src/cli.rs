//! Config-driven command line: `simulate`, `sweep`, `compare-effective` and
//! `classify`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::harness::{
    classify_ray, compare_effective, run_sweep, HarnessError, Metric, Scenario, Status, SweepSpec, SystemError,
    SystemKind,
};
use crate::piston::{Particle, Side};
use crate::sampling::Sampling;

pub const DEFAULT_EPS_GRID: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("cannot build thread pool: {0}")]
    Pool(String),
}

impl CliError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adiabatic", version, about = "Adiabatic invariants of impact systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one exact simulation and write its series and event log.
    Simulate(CommonArgs),
    /// Sweep eps and fit the scaling of every requested deviation.
    Sweep(CommonArgs),
    /// Compare the exact run with its averaged counterpart.
    CompareEffective(CommonArgs),
    /// Classify the averaged motion of a waveguide ray.
    Classify(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for sweeps; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Seed for randomly generated piston gases.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub series: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub profile: Option<String>,
    pub eps: f64,
    pub initial: Value,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub metrics: Option<Vec<Metric>>,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Validated slow range of a waveguide.
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

fn default_grid() -> usize {
    10_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FermiInitial {
    x: f64,
    v: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RayInitial {
    x: f64,
    y: f64,
    px: f64,
    py: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PistonInitial {
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "X")]
    x: f64,
    #[serde(rename = "P", default)]
    p: Option<f64>,
    #[serde(rename = "eps_P", default)]
    eps_p: Option<f64>,
    #[serde(default)]
    particles: Vec<Particle>,
    #[serde(default)]
    random: Option<RandomGas>,
}

/// Particles placed uniformly in each chamber with speeds uniform in
/// `speed` and random direction.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomGas {
    #[serde(default)]
    left: usize,
    #[serde(default)]
    right: usize,
    speed: [f64; 2],
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn finite(field: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::invalid(field, "must be finite"))
    }
}

fn parse_initial<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T, CliError> {
    T::deserialize(v).map_err(|e| CliError::invalid("initial", e.to_string()))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        finite("eps", self.eps)?;
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(CliError::invalid("eps", format!("eps out of range (0, 0.5): {}", self.eps)));
        }
        finite("horizon", self.horizon)?;
        if self.horizon <= 0.0 {
            return Err(CliError::invalid("horizon", "must be positive"));
        }
        if self.sample_stride == 0 {
            return Err(CliError::invalid("sample_stride", "must be at least 1"));
        }
        match self.system {
            SystemKind::FermiUlam | SystemKind::Waveguide => {
                if self.profile.is_none() {
                    return Err(CliError::invalid(
                        "profile",
                        format!("missing profile, required for {}", self.system.name()),
                    ));
                }
            }
            SystemKind::Piston => {
                if self.profile.is_some() {
                    return Err(CliError::invalid("profile", "not used by the piston"));
                }
            }
        }
        if self.domain.is_some() && self.system != SystemKind::Waveguide {
            return Err(CliError::invalid("domain", "only meaningful for a waveguide"));
        }
        if let Some([lo, hi]) = self.domain {
            finite("domain", lo)?;
            finite("domain", hi)?;
            if lo >= hi {
                return Err(CliError::invalid("domain", "must be an increasing pair"));
            }
        }
        if let Some(g) = &self.eps_grid {
            for &e in g {
                finite("eps_grid", e)?;
            }
        }
        // Shape checks of the initial block; the seed does not matter here.
        self.scenario(0).map(|_| ())
    }

    pub fn sampling(&self) -> Sampling {
        Sampling {
            events: true,
            grid: self.grid,
            stride: self.sample_stride,
            keep_events: true,
        }
    }

    /// The eps-independent scenario; `seed` drives a random piston gas.
    pub fn scenario(&self, seed: u64) -> Result<Scenario, CliError> {
        let profile = || self.profile.clone().unwrap_or_default();
        Ok(match self.system {
            SystemKind::FermiUlam => {
                let i: FermiInitial = parse_initial(&self.initial)?;
                finite("initial.x", i.x)?;
                finite("initial.v", i.v)?;
                Scenario::FermiUlam {
                    profile: profile(),
                    x: i.x,
                    v: i.v,
                }
            }
            SystemKind::Waveguide => {
                let i: RayInitial = parse_initial(&self.initial)?;
                for (f, v) in [("initial.x", i.x), ("initial.y", i.y), ("initial.px", i.px), ("initial.py", i.py)] {
                    finite(f, v)?;
                }
                Scenario::Waveguide {
                    profile: profile(),
                    x: i.x,
                    y: i.y,
                    px: i.px,
                    py: i.py,
                    domain: self.domain,
                }
            }
            SystemKind::Piston => {
                let i: PistonInitial = parse_initial(&self.initial)?;
                finite("initial.L", i.length)?;
                finite("initial.X", i.x)?;
                let eps_p = match (i.p, i.eps_p) {
                    (Some(p), None) => self.eps * p,
                    (None, Some(e)) => e,
                    (None, None) => 0.0,
                    (Some(_), Some(_)) => {
                        return Err(CliError::invalid("initial", "give either P or eps_P, not both"))
                    }
                };
                finite("initial.P", eps_p)?;
                let mut particles = i.particles;
                for p in &particles {
                    finite("initial.particles", p.x)?;
                    finite("initial.particles", p.p)?;
                }
                if let Some(gas) = i.random {
                    particles.extend(random_gas(&gas, i.length, i.x, seed)?);
                }
                if particles.is_empty() {
                    return Err(CliError::invalid("initial.particles", "at least one particle is required"));
                }
                Scenario::Piston {
                    length: i.length,
                    x: i.x,
                    eps_p,
                    particles,
                }
            }
        })
    }
}

fn random_gas(gas: &RandomGas, length: f64, x: f64, seed: u64) -> Result<Vec<Particle>, CliError> {
    let [lo, hi] = gas.speed;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(CliError::invalid("initial.random.speed", "need 0 < min <= max"));
    }
    if !(x > 0.0 && x < length) {
        return Err(CliError::invalid("initial.X", "piston must lie inside (0, L)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(gas.left + gas.right);
    let draw = |side: Side, a: f64, b: f64, rng: &mut ChaCha8Rng| {
        let pos = a + (b - a) * rng.gen_range(0.05..0.95);
        let speed = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        Particle {
            side,
            x: pos,
            p: sign * speed,
        }
    };
    for _ in 0..gas.left {
        out.push(draw(Side::Left, 0.0, x, &mut rng));
    }
    for _ in 0..gas.right {
        out.push(draw(Side::Right, x, length, &mut rng));
    }
    Ok(out)
}

/// Files written and the one-line summary of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| CliError::Write {
                path: dir.into(),
                source,
            })?;
        }
    }
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.into(),
        source,
    })
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn json_lines<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("events serialize"));
        s.push('\n');
    }
    s
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn target(args: &CommonArgs, chosen: &Option<PathBuf>, default: &str) -> PathBuf {
    args.out.join(chosen.as_deref().unwrap_or(Path::new(default)))
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let (Command::Simulate(args)
    | Command::Sweep(args)
    | Command::CompareEffective(args)
    | Command::Classify(args)) = &cli.command;
    let cfg = load_config(&args.config)?;
    match &cli.command {
        Command::Simulate(_) => simulate(&cfg, args),
        Command::Sweep(_) => sweep(&cfg, args),
        Command::CompareEffective(_) => compare(&cfg, args),
        Command::Classify(_) => classify(&cfg, args),
    }
}

pub fn simulate(cfg: &ScenarioConfig, args: &CommonArgs) -> Result<Outcome, CliError> {
    let scenario = cfg.scenario(args.seed)?;
    let sampling = cfg.sampling();
    let (eps, horizon) = (cfg.eps, cfg.horizon);
    let mut csv = String::new();
    let (events, summary) = match scenario.kind() {
        SystemKind::FermiUlam => {
            let (sys, s0, t_end) = scenario.fermi(eps, horizon)?;
            let run = sys.simulate(s0, t_end, &sampling).map_err(SystemError::from)?;
            csv.push_str("t,x,v,I,I_hat,E,phi\n");
            for s in &run.samples {
                csv_row(&mut csv, [s.t, s.x, s.v, s.action, s.improved, s.energy, s.phi]);
            }
            let (a, b) = (run.samples[0], run.samples[run.samples.len() - 1]);
            (
                json_lines(&run.events),
                format!(
                    "fermi_ulam eps={eps} impacts={} dI={:e} dI_hat={:e}",
                    run.impacts,
                    b.action - a.action,
                    b.improved - a.improved
                ),
            )
        }
        SystemKind::Waveguide => {
            let (guide, r0, s_end) = scenario.waveguide(eps, horizon)?;
            let run = guide.simulate(r0, s_end, &sampling).map_err(SystemError::from)?;
            csv.push_str("s,x,y,px,py,I,I_tilde,H_residual\n");
            for s in &run.samples {
                csv_row(&mut csv, [s.s, s.x, s.y, s.px, s.py, s.action, s.improved, s.h_residual]);
            }
            let (a, b) = (run.samples[0], run.samples[run.samples.len() - 1]);
            (
                json_lines(&run.events),
                format!(
                    "waveguide eps={eps} bounces={} dI={:e} dI_tilde={:e}",
                    run.bounces,
                    b.action - a.action,
                    b.improved - a.improved
                ),
            )
        }
        SystemKind::Piston => {
            let (sys, t_end) = scenario.piston(eps, horizon);
            let run = sys.simulate(t_end, &sampling).map_err(SystemError::from)?;
            let n = sys.particles.len();
            csv.push_str("t,X,eps_P,E");
            for i in 0..n {
                let _ = write!(csv, ",I_{i}");
            }
            for i in 0..n {
                let _ = write!(csv, ",I_tilde_{i}");
            }
            csv.push('\n');
            for s in &run.samples {
                let head = [s.t, s.x, s.eps_p, s.energy];
                csv_row(
                    &mut csv,
                    head.into_iter()
                        .chain(s.actions.iter().copied())
                        .chain(s.improved.iter().copied()),
                );
            }
            (
                json_lines(&run.events),
                format!(
                    "piston eps={eps} collisions={} X_end={} energy_drift={:e}",
                    run.collisions, run.final_state.x, run.max_energy_drift
                ),
            )
        }
    };
    let series = target(args, &cfg.output.series, "series.csv");
    let log = target(args, &cfg.output.events, "events.jsonl");
    write_file(&series, &csv)?;
    write_file(&log, &events)?;
    Ok(Outcome {
        summary,
        files: vec![series, log],
    })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    let pool = b.build().map_err(|e| CliError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn sweep(cfg: &ScenarioConfig, args: &CommonArgs) -> Result<Outcome, CliError> {
    let scenario = cfg.scenario(args.seed)?;
    let system = scenario.kind();
    let spec = SweepSpec {
        scenario,
        eps_grid: cfg.eps_grid.clone().unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec()),
        horizon: cfg.horizon,
        metrics: cfg.metrics.clone().unwrap_or_else(|| Metric::defaults(system)),
        sampling: Sampling {
            stride: cfg.sample_stride,
            grid: cfg.grid,
            ..Sampling::default()
        },
    };
    let result = with_pool(args.jobs, || run_sweep(&spec))??;
    let mut csv = String::from("eps");
    for m in &result.metrics {
        csv.push(',');
        csv.push_str(m.metric.name());
    }
    csv.push('\n');
    for (k, run) in result.runs.iter().enumerate() {
        csv_row(
            &mut csv,
            std::iter::once(run.eps).chain(result.metrics.iter().map(|m| m.points[k].1)),
        );
    }
    let report = target(args, &cfg.output.report, "sweep.json");
    let points = target(args, &cfg.output.series, "sweep.csv");
    write_file(&report, &json(&result))?;
    write_file(&points, &csv)?;
    let mut summary = format!("sweep {}", system.name());
    for m in &result.metrics {
        let status = match m.status {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Exact => "exact",
        };
        match &m.fit {
            Some(f) => {
                let _ = write!(summary, " {}: slope={:.3} resid={:.3} {status};", m.metric.name(), f.slope, f.max_residual);
            }
            None => {
                let _ = write!(summary, " {}: {status};", m.metric.name());
            }
        }
    }
    Ok(Outcome {
        summary,
        files: vec![report, points],
    })
}

#[derive(Serialize)]
struct ComparisonReport<'a> {
    system: SystemKind,
    eps: f64,
    horizon: f64,
    quantity: &'a str,
    sup_dev: f64,
    samples: usize,
}

pub fn compare(cfg: &ScenarioConfig, args: &CommonArgs) -> Result<Outcome, CliError> {
    let scenario = cfg.scenario(args.seed)?;
    let cmp = compare_effective(&scenario, cfg.eps, cfg.horizon, &cfg.sampling())?;
    let mut csv = format!("{},{}_exact,{}_effective\n", cmp.abscissa, cmp.quantity, cmp.quantity);
    for &(a, e, f) in &cmp.series {
        csv_row(&mut csv, [a, e, f]);
    }
    let report = ComparisonReport {
        system: cmp.system,
        eps: cmp.eps,
        horizon: cfg.horizon,
        quantity: cmp.quantity,
        sup_dev: cmp.sup_dev,
        samples: cmp.series.len(),
    };
    let series = target(args, &cfg.output.series, "comparison.csv");
    let rep = target(args, &cfg.output.report, "comparison.json");
    write_file(&series, &csv)?;
    write_file(&rep, &json(&report))?;
    Ok(Outcome {
        summary: format!(
            "compare-effective {} eps={} sup|{} - effective|={:e}",
            cmp.system.name(),
            cmp.eps,
            cmp.quantity,
            cmp.sup_dev
        ),
        files: vec![series, rep],
    })
}

pub fn classify(cfg: &ScenarioConfig, args: &CommonArgs) -> Result<Outcome, CliError> {
    if cfg.system != SystemKind::Waveguide {
        return Err(CliError::invalid("system", "classify needs a waveguide scenario"));
    }
    let c = classify_ray(&cfg.scenario(args.seed)?, cfg.eps, cfg.horizon)?;
    let report = target(args, &cfg.output.report, "classification.json");
    write_file(&report, &json(&c))?;
    let case = serde_json::to_value(c.case).expect("regime serializes");
    Ok(Outcome {
        summary: format!(
            "classify case={} J={} F={} humps={}",
            case.as_str().unwrap_or_default(),
            c.action,
            c.level,
            c.humps.len()
        ),
        files: vec![report],
    })
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ScenarioConfig, CliError> {
        let cfg: ScenarioConfig = serde_json::from_str(s).map_err(|e| CliError::Parse {
            path: "inline".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(r#"{"system":"fermi_ulam","profile":"2","eps":0.01,"initial":{"x":0.5,"v":1}}"#).unwrap();
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.sample_stride, 1);
        assert_eq!(c.grid, 10_000);
        assert!(c.eps_grid.is_none());
    }

    #[test]
    fn eps_out_of_range() {
        let e = parse(r#"{"system":"fermi_ulam","profile":"2","eps":0.9,"initial":{"x":0.5,"v":1}}"#).unwrap_err();
        assert!(e.to_string().contains("eps out of range"), "{e}");
    }

    #[test]
    fn missing_profile_is_named() {
        let e = parse(r#"{"system":"waveguide","eps":0.01,"initial":{"x":0,"y":0.5,"px":0.8,"py":0.6}}"#).unwrap_err();
        assert!(e.to_string().contains("profile"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse(r#"{"system":"fermi_ulam","profile":"2","eps":0.01,"initial":{"x":0.5,"v":1},"epsilon":1}"#).unwrap_err();
        assert!(e.to_string().contains("epsilon"), "{e}");
        let e = parse(r#"{"system":"fermi_ulam","profile":"2","eps":0.01,"initial":{"x":0.5,"v":1,"y":2}}"#).unwrap_err();
        assert!(e.to_string().contains("initial"), "{e}");
    }

    #[test]
    fn piston_momentum_forms() {
        let base = r#"{"system":"piston","eps":0.1,"initial":{"L":2,"X":1,"#;
        let c = parse(&format!(r#"{base}"P":3,"particles":[{{"side":"left","x":0.5,"p":1}}]}}}}"#)).unwrap();
        let Scenario::Piston { eps_p, .. } = c.scenario(0).unwrap() else { panic!() };
        assert!((eps_p - 0.3).abs() < 1e-15);
        assert!(parse(&format!(r#"{base}"P":3,"eps_P":0.3,"particles":[{{"side":"left","x":0.5,"p":1}}]}}}}"#)).is_err());
        assert!(parse(&format!(r#"{base}"particles":[]}}}}"#)).is_err());
    }

    #[test]
    fn random_gas_is_seeded() {
        let c = parse(r#"{"system":"piston","eps":0.1,"initial":{"L":2,"X":1,"random":{"left":3,"right":2,"speed":[1,2]}}}"#).unwrap();
        let a = c.scenario(7).unwrap();
        assert_eq!(a, c.scenario(7).unwrap());
        assert_ne!(a, c.scenario(8).unwrap());
        let Scenario::Piston { particles, .. } = a else { panic!() };
        assert_eq!(particles.len(), 5);
        for p in &particles {
            let speed = p.p.abs();
            assert!((1.0..2.0).contains(&speed));
            match p.side {
                Side::Left => assert!(p.x > 0.0 && p.x < 1.0),
                Side::Right => assert!(p.x > 1.0 && p.x < 2.0),
            }
        }
    }

    #[test]
    fn csv_uses_shortest_round_trip() {
        let mut s = String::new();
        csv_row(&mut s, [0.1, 1.0, 1e-20, 2.0f64.sqrt()]);
        assert_eq!(s, "0.1,1,0.00000000000000000001,1.4142135623730951\n");
    }
}
