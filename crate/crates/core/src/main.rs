use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fogopt::central::check_feasibility;
use fogopt::dist::{run_protocol, Algorithm, InProcessTransport, Schedule};
use fogopt::scenario::{make_dublin_like, mm1_simulate, CoopPolicy, DensityProfile, Topology};
use fogopt::single::{linear_grid, optimal_alpha_numeric, tradeoff_curve};
use fogopt::solver::{Admm, Subgradient, SolverRegistry, SolverSettings};
use fogopt::trace::{relative_gap, SolveTrace};
use fogopt::{Allocation, FogError, NodeParams, PowerParams, Scenario};

#[derive(Parser)]
#[command(name = "fogopt", version, about = "Workload allocation for cooperative fog nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal local/cloud split for one node.
    SolveSingle {
        #[command(flatten)]
        node: NodeArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cooperative allocation for a scenario file.
    SolveCoop {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Central)]
        algorithm: AlgorithmArg,
        /// Overrides the cooperation policy stored in the file.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Run the distributed algorithm as message-passing agents and write
        /// the transcript as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Response time against the per-unit power budget for one node.
    Sweep {
        #[command(flatten)]
        node: NodeArgs,
        /// Watts per workload unit.
        #[arg(long)]
        eta_min: f64,
        #[arg(long)]
        eta_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Centralized optimum next to both distributed algorithms.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Relative gap at which iterations are counted.
        #[arg(long, default_value_t = 1e-2)]
        gap: f64,
        /// Add a wall-time column. Output is then no longer reproducible.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate an M/M/1 queue and compare with 1/(mu - lambda).
    ValidateQueue {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 100_000)]
        departures: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Synthetic city topology.
    GenScenario {
        #[arg(long, value_enum, default_value_t = ProfileArg::Urban)]
        profile: ProfileArg,
        #[arg(long, default_value_t = 20)]
        nodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct NodeArgs {
    /// Service rate, workload units/s.
    #[arg(long)]
    mu: f64,
    /// Arrival rate, workload units/s.
    #[arg(long)]
    lambda: f64,
    /// Fog-to-cloud round trip, seconds.
    #[arg(long)]
    tau_f: f64,
    /// User-to-fog round trip, seconds.
    #[arg(long, default_value_t = 0.0)]
    tau_u: f64,
    #[arg(long, default_value_t = 1.0)]
    pue: f64,
    /// Watts.
    #[arg(long, default_value_t = 1.0)]
    w_static: f64,
    /// Watts per workload unit.
    #[arg(long, default_value_t = 0.0)]
    w_dynamic: f64,
    /// Watts per workload unit. Defaults to the value at which the node may
    /// process up to `mu`.
    #[arg(long)]
    eta_cap: Option<f64>,
}

impl NodeArgs {
    fn node(&self) -> fogopt::Result<NodeParams> {
        if !(self.tau_f >= 0.0 && self.tau_f.is_finite()) {
            return Err(FogError::InvalidParams(format!("tau-f {} must be nonnegative", self.tau_f)));
        }
        let eta = self
            .eta_cap
            .unwrap_or(self.pue * (self.w_static / self.mu + self.w_dynamic));
        let power = PowerParams::new(self.pue, self.w_static, self.w_dynamic, eta)?;
        NodeParams::new("node", self.lambda, self.mu, self.tau_u, power)
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    step_base: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl SolverArgs {
    fn settings(&self) -> fogopt::Result<SolverSettings> {
        for (name, v) in [("rho", self.rho), ("step-base", self.step_base), ("tol", self.tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(FogError::InvalidParams(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(SolverSettings {
            max_iters: self.max_iters,
            tol: self.tol,
            rho: self.rho,
            step_base: self.step_base,
            ..SolverSettings::default()
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Central,
    Subgradient,
    Admm,
}

impl AlgorithmArg {
    fn name(self) -> &'static str {
        match self {
            Self::Central => "central",
            Self::Subgradient => "subgradient",
            Self::Admm => "admm",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Radius,
    Nearest,
    None,
}

impl From<PolicyArg> for CoopPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Radius => CoopPolicy::Radius,
            PolicyArg::Nearest => CoopPolicy::Nearest,
            PolicyArg::None => CoopPolicy::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Urban,
    Rural,
}

/// Write to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn load(path: &Path, policy: Option<PolicyArg>) -> fogopt::Result<(Topology, Scenario)> {
    let topo = Topology::load(path)?;
    let policy = policy.map_or(topo.policy, CoopPolicy::from);
    let s = topo.to_scenario(policy)?;
    Ok((topo, s))
}

fn allocation_json(a: &Allocation) -> serde_json::Value {
    let n = a.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| a.get(j, i)).collect()).collect();
    json!({ "phi": rows, "cloud": a.cloud_column() })
}

/// Where a failed run leaves its trace.
fn failure_trace_path(requested: Option<&Path>, output: Option<&Path>, solver: &str) -> PathBuf {
    if let Some(p) = requested {
        return p.to_path_buf();
    }
    match output {
        Some(o) => {
            let mut name = o.as_os_str().to_owned();
            name.push(".trace.csv");
            PathBuf::from(name)
        }
        None => std::env::temp_dir().join(format!("fogopt-{solver}-trace.csv")),
    }
}

fn write_trace(path: &Path, trace: &SolveTrace) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// A solver failure, carrying where its trace went.
#[derive(Debug)]
struct SolverFailure {
    source: FogError,
    trace_path: Option<PathBuf>,
}

impl std::fmt::Display for SolverFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(p) = &self.trace_path {
            write!(f, " (trace written to {})", p.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for SolverFailure {}

fn solve_single(node: &NodeArgs, output: Option<&Path>) -> anyhow::Result<()> {
    let n = node.node()?;
    let sol = optimal_alpha_numeric(&n, node.tau_f)?;
    let out = json!({
        "units": {
            "response_time": "seconds",
            "lambda": "workload-units/s",
            "mu": "workload-units/s",
            "efficiency_at_opt": "watts/unit",
        },
        "mu": n.service_rate(),
        "lambda": n.arrival_rate(),
        "chi": n.power().chi(),
        "alpha_star": sol.alpha_star,
        "response_time": sol.response_time,
        "efficiency_at_opt": sol.efficiency_at_opt,
        "binding": sol.binding,
    });
    emit(output, &pretty(&out)?)
}

#[allow(clippy::too_many_arguments)]
fn solve_coop(
    scenario: &Path,
    algorithm: AlgorithmArg,
    policy: Option<PolicyArg>,
    solver: &SolverArgs,
    output: Option<&Path>,
    trace_path: Option<&Path>,
    transcript: Option<&Path>,
) -> anyhow::Result<()> {
    let (topo, s) = load(scenario, policy)?;
    let settings = solver.settings()?;
    let result = match (transcript, algorithm) {
        (None, _) => SolverRegistry::with_builtin().get(algorithm.name())?.solve(&s, &settings),
        (Some(_), AlgorithmArg::Central) => {
            bail!(FogError::InvalidParams("--transcript needs a distributed algorithm".into()))
        }
        (Some(_), alg) => {
            let algo = match alg {
                AlgorithmArg::Subgradient => Algorithm::Subgradient(Subgradient::config(&settings)),
                _ => Algorithm::Admm(Admm::config(&settings)),
            };
            run_protocol(&mut InProcessTransport::new(), &s, &algo, &Schedule::in_order(s.len()))
        }
    };
    let (alloc, trace) = match result {
        Ok(v) => v,
        Err(e) => {
            let path = e.trace().map(|t| {
                let p = failure_trace_path(trace_path, output, algorithm.name());
                (p, t.clone())
            });
            let trace_path = match path {
                Some((p, t)) => {
                    write_trace(&p, &t)?;
                    Some(p)
                }
                None => None,
            };
            return Err(SolverFailure { source: e, trace_path }.into());
        }
    };
    if let Some(p) = trace_path {
        write_trace(p, &trace)?;
    }
    if let Some(p) = transcript {
        let mut buf = Vec::new();
        trace.write_transcript_jsonl(&mut buf)?;
        fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?;
    }
    let feas = check_feasibility(&alloc, &s);
    let ids: Vec<&str> = topo.nodes.iter().map(|n| n.id.as_str()).collect();
    let out = json!({
        "units": {
            "objective": "seconds",
            "phi": "workload-units/s",
            "cloud": "workload-units/s",
        },
        "solver": trace.solver,
        "iterations": trace.iterations(),
        "objective": fogopt::model::coop_objective(&alloc, &s)?,
        "feasible": feas.feasible,
        "ids": ids,
        "allocation": allocation_json(&alloc),
    });
    emit(output, &pretty(&out)?)
}

fn sweep(node: &NodeArgs, lo: f64, hi: f64, points: usize, output: Option<&Path>) -> anyhow::Result<()> {
    if !(lo > 0.0 && hi >= lo) {
        bail!(FogError::InvalidParams(format!("need 0 < eta-min <= eta-max, got {lo} and {hi}")));
    }
    let n = node.node()?;
    let curve = tradeoff_curve(&n, node.tau_f, &linear_grid(lo, hi, points))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eta_cap_w_per_unit", "alpha_star", "response_time_s", "binding"])?;
    for p in &curve.points {
        let binding = serde_json::to_value(p.binding)?;
        w.write_record([
            p.eta_cap.to_string(),
            p.alpha_star.to_string(),
            p.response_time.to_string(),
            binding.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    emit(output, &String::from_utf8(w.into_inner()?)?)
}

fn compare(
    scenario: &Path,
    policy: Option<PolicyArg>,
    solver: &SolverArgs,
    gap: f64,
    timing: bool,
    output: Option<&Path>,
) -> anyhow::Result<()> {
    if !(gap > 0.0) {
        bail!(FogError::InvalidParams(format!("gap must be positive, got {gap}")));
    }
    let (_, s) = load(scenario, policy)?;
    let registry = SolverRegistry::with_builtin();
    let mut settings = solver.settings()?;
    settings.record_timing = timing;
    let (_, central) = registry.get("central")?.solve(&s, &settings)?;
    let optimum = central.last_objective().context("central solver produced no iterations")?;
    settings.oracle = Some(optimum);
    settings.gap_tol = Some(gap);

    let mut header = vec!["algorithm", "objective_s", "relative_gap", "iterations", "iterations_to_gap"];
    if timing {
        header.push("wall_ms");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    let mut row = |name: &str, trace: &SolveTrace| -> anyhow::Result<()> {
        let best = trace.records.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
        let mut rec = vec![
            name.to_string(),
            best.to_string(),
            relative_gap(best, optimum).to_string(),
            trace.iterations().to_string(),
            trace.iterations_to_gap(optimum, gap).map(|k| k.to_string()).unwrap_or_default(),
        ];
        if timing {
            let ms = trace.records.last().and_then(|r| r.ms).unwrap_or(0.0);
            rec.push(format!("{ms:.3}"));
        }
        w.write_record(&rec)?;
        Ok(())
    };
    row("central", &central)?;
    for name in ["subgradient", "admm"] {
        let trace = match registry.get(name)?.solve(&s, &settings) {
            Ok((_, t)) => t,
            // not reaching the gap is a result here, not a failure
            Err(FogError::NonConvergence { trace, .. }) => *trace,
            Err(e) => return Err(e.into()),
        };
        log::info!("{name}: {} iterations", trace.iterations());
        row(name, &trace)?;
    }
    emit(output, &String::from_utf8(w.into_inner()?)?)
}

fn validate_queue(lambda: f64, mu: f64, departures: usize, seed: u64, output: Option<&Path>) -> anyhow::Result<()> {
    if departures == 0 {
        bail!(FogError::InvalidParams("departures must be positive".into()));
    }
    let simulated = mm1_simulate(lambda, mu, departures, seed)?;
    let analytic = 1.0 / (mu - lambda);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "lambda_units_per_s",
        "mu_units_per_s",
        "departures",
        "seed",
        "mean_sojourn_s",
        "analytic_sojourn_s",
        "relative_error",
    ])?;
    w.write_record([
        lambda.to_string(),
        mu.to_string(),
        departures.to_string(),
        seed.to_string(),
        simulated.to_string(),
        analytic.to_string(),
        ((simulated - analytic).abs() / analytic).to_string(),
    ])?;
    emit(output, &String::from_utf8(w.into_inner()?)?)
}

fn gen_scenario(
    profile: ProfileArg,
    nodes: usize,
    seed: u64,
    policy: Option<PolicyArg>,
    output: Option<&Path>,
) -> anyhow::Result<()> {
    let profile = match profile {
        ProfileArg::Urban => DensityProfile::Urban,
        ProfileArg::Rural => DensityProfile::Rural,
    };
    let mut topo = make_dublin_like(profile, nodes, seed)?;
    if let Some(p) = policy {
        topo.policy = p.into();
    }
    match output {
        Some(p) => topo.save(p)?,
        None => emit(None, &pretty(&topo)?)?,
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::SolveSingle { node, output } => solve_single(&node, output.as_deref()),
        Command::SolveCoop {
            scenario,
            algorithm,
            policy,
            solver,
            output,
            trace,
            transcript,
        } => solve_coop(
            &scenario,
            algorithm,
            policy,
            &solver,
            output.as_deref(),
            trace.as_deref(),
            transcript.as_deref(),
        ),
        Command::Sweep {
            node,
            eta_min,
            eta_max,
            points,
            output,
        } => sweep(&node, eta_min, eta_max, points, output.as_deref()),
        Command::Compare {
            scenario,
            policy,
            solver,
            gap,
            timing,
            output,
        } => compare(&scenario, policy, &solver, gap, timing, output.as_deref()),
        Command::ValidateQueue {
            lambda,
            mu,
            departures,
            seed,
            output,
        } => validate_queue(lambda, mu, departures, seed, output.as_deref()),
        Command::GenScenario {
            profile,
            nodes,
            seed,
            policy,
            output,
        } => gen_scenario(profile, nodes, seed, policy, output.as_deref()),
    }
}

/// Bad input exits 2, like a clap usage error; solver failures exit 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<SolverFailure>() {
        return 1;
    }
    match e.downcast_ref::<FogError>() {
        Some(FogError::InvalidParams(_) | FogError::Scenario { .. } | FogError::UnknownSolver(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOGOPT_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
