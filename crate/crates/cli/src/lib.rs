//! `bfmle`: all critical points and the global maximum likelihood estimate of
//! the common mean of several multivariate normal populations.
//!
//! ```text
//! bfmle solve problems/example1.problem
//! bfmle estimate --fixed-point problems/example1.problem
//! bfmle simulate --p 2 --trials 4482 --n-min 3 --n-max 15 --seed 1
//! bfmle mldegree 2 3 --verify
//! ```
//!
//! `--format machine` prints exactly one JSON document per run; the same
//! arguments and seed always give the same bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use bfmle::estimator::{estimate_fixed_point, estimate_global, EstimateReport};
use bfmle::homotopy::{CriticalPoint, CriticalPointSet};
use bfmle::mldegree::{ml_degree_breakdown, MlDegreeError};
use bfmle::problem::{problem_from_data, read_raw_csv};
use bfmle::simulation::{run_simulation, trial_problem, SimConfig, SimError, SimReport};
use bfmle::{
    build_system, critical_points, EstimateError, FixedPointInit, Problem, ProblemError, StartKind, TrackerConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

/// Exit code for bad input: unreadable files, invalid problems, bad flags.
pub const EXIT_INPUT: i32 = 1;
/// Exit code for a run that could not produce its result.
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bfmle", version, about = "Global maximum likelihood for the common mean of normal populations")]
struct Cli {
    /// Output style; `machine` prints a single JSON document.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,

    /// Seed for gamma and every other random choice.
    #[arg(long, env = "BF_SEED", default_value_t = 0, global = true)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Every complex critical point of the likelihood equations.
    Solve {
        /// Problem file (JSON) or raw observations (`.csv`, header `group,x1,...,xp`).
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Maximum likelihood estimate of the common mean.
    Estimate {
        problem: PathBuf,
        /// Run the alternating fixed-point iteration instead of the global search.
        #[arg(long)]
        fixed_point: bool,
        /// Iteration cap for `--fixed-point`.
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        /// Relative change in the mean at which `--fixed-point` stops.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Monte Carlo count of real critical points on random problems.
    Simulate {
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Number of populations.
        #[arg(long, default_value_t = 2)]
        groups: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 3)]
        n_min: usize,
        #[arg(long, default_value_t = 15)]
        n_max: usize,
        /// Strict lower triangle of the covariance factors is uniform on [-offdiag, offdiag].
        #[arg(long, default_value_t = 10.0)]
        offdiag: f64,
        /// Also write the table to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write failed and unusual trials as problem files into this directory.
        #[arg(long)]
        emit_failures: Option<PathBuf>,
    },
    /// Number of complex critical points for k + 1 populations in dimension p.
    Mldegree {
        k: u32,
        p: u32,
        /// Compute it three independent ways and compare.
        #[arg(long)]
        verify: bool,
    },
}

/// Solver flags shared by `solve` and `estimate`.
#[derive(Debug, Args)]
struct SolverArgs {
    /// Print the expanded polynomial system.
    #[arg(long)]
    dump_system: bool,
    #[arg(long, value_enum, default_value_t = Start::Parameter)]
    start: Start,
    #[arg(long)]
    tracker_initial_step: Option<f64>,
    #[arg(long)]
    tracker_min_step: Option<f64>,
    #[arg(long)]
    tracker_max_step: Option<f64>,
    #[arg(long)]
    tracker_corrector_tol: Option<f64>,
    #[arg(long)]
    tracker_max_corrector_iters: Option<usize>,
    #[arg(long)]
    tracker_divergence_norm: Option<f64>,
    #[arg(long)]
    tracker_endgame_start_t: Option<f64>,
    #[arg(long)]
    tracker_refine_tol: Option<f64>,
    #[arg(long)]
    tracker_dedup_tol: Option<f64>,
    #[arg(long)]
    tracker_real_imag_tol: Option<f64>,
    #[arg(long)]
    tracker_denom_zero_tol: Option<f64>,
    /// Angle of gamma on the unit circle, in radians; overrides the seed.
    #[arg(long)]
    tracker_gamma_angle: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Start {
    /// Generic solutions of the likelihood family, carried to the problem.
    Parameter,
    /// Total-degree start system.
    TotalDegree,
}

impl SolverArgs {
    fn tracker(&self, seed: u64) -> TrackerConfig {
        let mut cfg = TrackerConfig::with_seed(seed);
        let set = |field: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut cfg.initial_step, self.tracker_initial_step);
        set(&mut cfg.min_step, self.tracker_min_step);
        set(&mut cfg.max_step, self.tracker_max_step);
        set(&mut cfg.corrector_tol, self.tracker_corrector_tol);
        set(&mut cfg.divergence_norm, self.tracker_divergence_norm);
        set(&mut cfg.endgame_start_t, self.tracker_endgame_start_t);
        set(&mut cfg.refine_tol, self.tracker_refine_tol);
        set(&mut cfg.dedup_tol, self.tracker_dedup_tol);
        set(&mut cfg.real_imag_tol, self.tracker_real_imag_tol);
        set(&mut cfg.denom_zero_tol, self.tracker_denom_zero_tol);
        if let Some(n) = self.tracker_max_corrector_iters {
            cfg.max_corrector_iters = n;
        }
        if let Some(angle) = self.tracker_gamma_angle {
            cfg.gamma = Complex64::from_polar(1.0, angle);
        }
        cfg.start = match self.start {
            Start::Parameter => StartKind::Parameter,
            Start::TotalDegree => StartKind::TotalDegree,
        };
        cfg
    }
}

/// A failed run: exit code plus diagnostic.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self { code: EXIT_INTERNAL, message: message.into() }
    }
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::input(format!("file not found: {path}"))
            }
            e => Failure::input(e.to_string()),
        }
    }
}

impl From<EstimateError> for Failure {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Problem(e) => e.into(),
            EstimateError::Config(_) => Failure::input(e.to_string()),
            e => Failure::internal(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::input(e.to_string()),
            e => Failure::internal(e.to_string()),
        }
    }
}

/// Output of a successful run: human text and the machine document.
struct Output {
    human: String,
    machine: Value,
}

/// Runs the command line `argv` (program name first) against the process's
/// standard streams and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    // Unlocked handles: worker threads log to stderr while a command runs.
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INPUT,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let format = cli.format;
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(cli)))
        .unwrap_or_else(|_| Err(Failure::internal("internal error: solver panicked")));
    match result {
        Ok(output) => {
            let text = match format {
                Format::Human => output.human,
                Format::Machine => {
                    serde_json::to_string_pretty(&output.machine).expect("json values serialize") + "\n"
                }
            };
            match out.write_all(text.as_bytes()) {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(err, "error: cannot write output: {e}");
                    EXIT_INTERNAL
                }
            }
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<Output, Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Solve { problem, solver } => solve(&problem, &solver, seed),
        Command::Estimate { problem, fixed_point, max_iters, tol, solver } => {
            estimate(&problem, fixed_point, max_iters, tol, &solver, seed)
        }
        Command::Simulate { p, groups, trials, n_min, n_max, offdiag, report, emit_failures } => {
            let cfg = SimConfig { p, groups, trials, n_min, n_max, offdiag, seed, ..SimConfig::default() };
            simulate(&cfg, report.as_deref(), emit_failures.as_deref())
        }
        Command::Mldegree { k, p, verify } => mldegree(k, p, verify),
    }
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = std::fs::File::open(path).map_err(|source| {
            Failure::from(ProblemError::Io { path: path.display().to_string(), source })
        })?;
        Ok(problem_from_data(&read_raw_csv(file)?)?)
    } else {
        Ok(Problem::load(path)?)
    }
}

fn problem_value(problem: &Problem) -> Value {
    serde_json::from_str(&problem.to_json()).expect("problem json parses")
}

fn complex_value(z: &Complex64) -> Value {
    json!([z.re, z.im])
}

fn point_value(c: &CriticalPoint) -> Value {
    json!({
        "mu": c.mu.iter().map(complex_value).collect::<Vec<_>>(),
        "real": c.is_real,
        "residual": c.residual_norm,
        "denominators": c.denominator_values.iter().map(complex_value).collect::<Vec<_>>(),
        "multiplicity": c.multiplicity_estimate,
        "condition": c.condition,
    })
}

fn set_value(set: &CriticalPointSet) -> Value {
    json!({
        "points": set.points.iter().map(point_value).collect::<Vec<_>>(),
        "count": set.len(),
        "real_count": set.real_count(),
        "paths_tracked": set.paths_tracked,
        "discarded_denominator_zero": set.discarded_denominator_zero,
        "diverged_paths": set.diverged_paths,
        "failed_paths": set.failed_paths,
        "unpaired": set.unpaired,
        "ill_conditioned": set.ill_conditioned(),
    })
}

fn set_summary(set: &CriticalPointSet) -> String {
    let mut s = format!(
        "{} critical points ({} real, {} complex); {} paths, {} discarded on vanishing denominators, {} diverged, {} failed\n",
        set.len(),
        set.real_count(),
        set.len() - set.real_count(),
        set.paths_tracked,
        set.discarded_denominator_zero,
        set.diverged_paths,
        set.failed_paths
    );
    if set.ill_conditioned() {
        s.push_str("warning: ill-conditioned solve; counts may be unreliable\n");
    }
    s
}

fn system_lines(problem: &Problem) -> Result<String, Failure> {
    let sys = build_system(problem).map_err(|e| Failure::input(e.to_string()))?;
    Ok(sys.dump())
}

fn solve(path: &Path, solver: &SolverArgs, seed: u64) -> Result<Output, Failure> {
    let problem = load_problem(path)?;
    let cfg = solver.tracker(seed);
    let system = if solver.dump_system { Some(system_lines(&problem)?) } else { None };
    let set = critical_points(&problem, &cfg)?;
    let mut human = String::new();
    if let Some(lines) = &system {
        human.push_str(lines);
        human.push('\n');
    }
    human.push_str(&set_summary(&set));
    human.push_str(&set.dump());
    let mut machine = json!({
        "command": "solve",
        "seed": seed,
        "problem": problem_value(&problem),
        "critical_points": set_value(&set),
    });
    if let Some(lines) = system {
        machine["system"] = json!(lines.lines().collect::<Vec<_>>());
    }
    Ok(Output { human, machine })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("({})", parts.join(", "))
}

fn report_text(report: &EstimateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "method: {:?}", report.method);
    let _ = writeln!(s, "mle mu: {}", fmt_vec(&report.mle_mu));
    for (i, sigma) in report.mle_sigmas.iter().enumerate() {
        let rows: Vec<String> = sigma.rows().iter().map(|r| fmt_vec(r)).collect();
        let _ = writeln!(s, "sigma {}: [{}]", i + 1, rows.join(", "));
    }
    let _ = writeln!(s, "objective: {:.12e}", report.objective_at_mle);
    let _ = writeln!(s, "log-likelihood: {:.12e}", report.log_likelihood);
    let _ = writeln!(s, "real critical points (by objective):");
    for r in &report.all_real_critical_points {
        let _ = writeln!(s, "  {}  objective {:.12e}", fmt_vec(&r.mu), r.objective);
    }
    let _ = writeln!(s, "complex critical points: {}", report.complex_count);
    let _ = writeln!(s, "iterations or paths: {}", report.iterations_or_paths);
    if report.near_tie {
        let _ = writeln!(s, "warning: several real critical points share the best objective");
    }
    if !report.converged {
        let _ = writeln!(s, "warning: fixed-point iteration did not converge");
    }
    s
}

fn estimate(
    path: &Path,
    fixed_point: bool,
    max_iters: usize,
    tol: f64,
    solver: &SolverArgs,
    seed: u64,
) -> Result<Output, Failure> {
    let problem = load_problem(path)?;
    if !(tol > 0.0 && tol.is_finite()) || max_iters == 0 {
        return Err(Failure::input("need --tol > 0 and --max-iters >= 1"));
    }
    let system = if solver.dump_system { Some(system_lines(&problem)?) } else { None };
    let report = if fixed_point {
        estimate_fixed_point(&problem, &FixedPointInit::Scatter, max_iters, tol)?
    } else {
        estimate_global(&problem, &solver.tracker(seed))?
    };
    let mut human = String::new();
    if let Some(lines) = &system {
        human.push_str(lines);
        human.push('\n');
    }
    human.push_str(&report_text(&report));
    let mut machine = json!({
        "command": "estimate",
        "seed": seed,
        "problem": problem_value(&problem),
        "report": serde_json::to_value(&report).expect("report serializes"),
    });
    if let Some(set) = &report.critical_points {
        human.push_str(&set_summary(set));
        human.push_str(&set.dump());
        machine["critical_points"] = set_value(set);
    }
    if let Some(lines) = system {
        machine["system"] = json!(lines.lines().collect::<Vec<_>>());
    }
    Ok(Output { human, machine })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn simulate(cfg: &SimConfig, report_path: Option<&Path>, emit: Option<&Path>) -> Result<Output, Failure> {
    let report: SimReport = run_simulation(cfg)?;
    let table = report.table();
    if let Some(path) = report_path {
        write_file(path, &table)?;
    }
    let mut human = table;
    if !report.notable.is_empty() {
        let _ = writeln!(human, "trials with more than three real critical points: {:?}", report.notable);
    }
    for f in &report.failures {
        let _ = writeln!(
            human,
            "failed trial {}: {} (kept {}, real {}, failed paths {}, ill-conditioned {})",
            f.trial, f.reason, f.kept, f.real, f.failed_paths, f.ill_conditioned
        );
    }
    if let Some(dir) = emit {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
        for f in &report.failures {
            if !f.problem_json.is_empty() {
                write_file(&dir.join(format!("failed-{:06}.problem", f.trial)), &f.problem_json)?;
            }
        }
        for &trial in &report.notable {
            let problem = trial_problem(cfg, trial)?;
            write_file(&dir.join(format!("notable-{trial:06}.problem")), &problem.to_json())?;
        }
    }
    let machine = json!({
        "command": "simulate",
        "seed": cfg.seed,
        "report": serde_json::to_value(&report).expect("report serializes"),
        "percentages": report.counts.keys().map(|c| (c.to_string(), json!(report.percentage(*c)))).collect::<serde_json::Map<_, _>>(),
    });
    Ok(Output { human, machine })
}

fn mldegree(k: u32, p: u32, verify: bool) -> Result<Output, Failure> {
    let breakdown = ml_degree_breakdown(k, p).map_err(|e| match e {
        MlDegreeError::OutOfRange(_) => Failure::input(e.to_string()),
        e => Failure::internal(e.to_string()),
    })?;
    let value = breakdown.sum.to_string();
    let mut human = format!("{value}\n");
    let mut machine = json!({ "command": "mldegree", "k": k, "p": p, "degree": value });
    if verify {
        let _ = writeln!(
            human,
            "series {}\nsum {}\nrodrigues {}\nagree {}",
            breakdown.series,
            breakdown.sum,
            breakdown.rodrigues,
            breakdown.agree()
        );
        machine["series"] = json!(breakdown.series.to_string());
        machine["sum"] = json!(breakdown.sum.to_string());
        machine["rodrigues"] = json!(breakdown.rodrigues.to_string());
        machine["agree"] = json!(breakdown.agree());
        if !breakdown.agree() {
            return Err(Failure::internal(format!("the three ML degree computations disagree:\n{human}")));
        }
    }
    Ok(Output { human, machine })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("bfmle").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn mldegree_prints_the_count() {
        let (code, out, _) = run_capture(&["mldegree", "1", "3"]);
        assert_eq!(code, 0);
        assert_eq!(out, "7\n");
        let (code, out, _) = run_capture(&["mldegree", "2", "3", "--verify", "--format", "machine"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["degree"], "25");
        assert_eq!(v["agree"], true);
    }

    #[test]
    fn bad_arguments_are_input_errors() {
        assert_eq!(run_capture(&["mldegree", "99", "1"]).0, EXIT_INPUT);
        assert_eq!(run_capture(&["frobnicate"]).0, EXIT_INPUT);
        assert_eq!(run_capture(&["solve", "a.problem", "--no-such-flag"]).0, EXIT_INPUT);
        assert_eq!(run_capture(&["--help"]).0, 0);
        let (code, _, err) = run_capture(&["solve", "/nonexistent/missing.problem"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("file not found"), "{err}");
    }

    #[test]
    fn tracker_overrides_apply() {
        let cli = Cli::try_parse_from([
            "bfmle",
            "solve",
            "x.problem",
            "--tracker-dedup-tol",
            "1e-7",
            "--tracker-max-corrector-iters",
            "5",
            "--start",
            "total-degree",
        ])
        .unwrap();
        let Command::Solve { solver, .. } = cli.command else { panic!("wrong subcommand") };
        let cfg = solver.tracker(3);
        assert_eq!(cfg.dedup_tol, 1e-7);
        assert_eq!(cfg.max_corrector_iters, 5);
        assert_eq!(cfg.start, StartKind::TotalDegree);
        assert_eq!(cfg.gamma, TrackerConfig::with_seed(3).gamma);
    }

    #[test]
    fn invalid_tracker_values_are_input_errors() {
        let dir = std::env::temp_dir().join(format!("bfmle-cli-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sym.problem");
        std::fs::write(&path, r#"{"p":1,"groups":[{"n":2,"mean":[-1],"scatter":[[1]]},{"n":2,"mean":[1],"scatter":[[1]]}]}"#)
            .unwrap();
        let p = path.to_str().unwrap();
        assert_eq!(run_capture(&["solve", p, "--tracker-dedup-tol", "-1"]).0, EXIT_INPUT);
        assert_eq!(run_capture(&["solve", p]).0, 0);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
