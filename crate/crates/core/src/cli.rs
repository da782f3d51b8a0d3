//! `recourse-sim` command line: scenario runs, one-shot selection and recourse
//! queries, oracle verification and population generation.
//!
//! Exit codes: 0 success, 1 runtime failure (including failed verification),
//! 2 bad input (config, arguments, unreadable population, unknown id).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Termination, Tolerances, UpdateRule};
use crate::effort::EffortParams;
use crate::error::Error;
use crate::oracles::{self, VerifyScale};
use crate::population::{
    self, EffortRanges, FeatureDistribution, FeaturePartition, GeneratorSpec, PartitionSpec,
    PopulationState,
};
use crate::recourse;
use crate::selection::{self, SelectionConfig, SolverKind};
use crate::trace::{SnapshotWriter, TraceWriter};

#[derive(Debug, Parser)]
#[command(
    name = "recourse-sim",
    version,
    about = "Competitive recourse under CVaR selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PartitionArgs {
    /// Comma-separated actionable coordinates (default: all).
    #[arg(long, value_delimiter = ',')]
    pub actionable: Option<Vec<usize>>,
    /// Ceiling coordinate (default: first actionable).
    #[arg(long)]
    pub ceiling_index: Option<usize>,
    /// Ceiling value (default: unbounded).
    #[arg(long, default_value_t = f64::INFINITY)]
    pub ceiling_value: f64,
}

#[derive(Debug, Clone, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub population: PathBuf,
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub lambda: f64,
    /// Enumerate all subsets instead of alternating ascent.
    #[arg(long)]
    pub exhaustive: bool,
    /// Seed for the solver's random restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub partition: PartitionArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for output files (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the designer problem once and print the rule.
    Select(SolveArgs),
    /// Print the minimal recourse plan for one candidate.
    Recourse {
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long)]
        id: u64,
    },
    /// Check the solvers against brute-force references.
    Verify {
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw a population from a generator spec and save it as CSV.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } | Error::Io(_) => 1,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Scenario configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSource {
    /// CSV path, relative to the config file.
    File(PathBuf),
    Generate(GeneratorConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub features: Vec<FeatureDistribution>,
    /// Defaults to the fixed `effort_defaults`.
    #[serde(default)]
    pub effort: Option<EffortRanges>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub kind: SolverKind,
    pub restarts: usize,
    pub max_iters: usize,
    pub exhaustive_cap: u128,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SelectionConfig::new(0.5, 1.0);
        SolverSettings {
            kind: d.solver,
            restarts: d.restarts,
            max_iters: d.max_iters,
            exhaustive_cap: d.exhaustive_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub population_seed: u64,
    pub solver_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub trace: PathBuf,
    pub snapshots: Option<PathBuf>,
    pub snapshot_stride: u64,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            trace: PathBuf::from("trace.csv"),
            snapshots: None,
            snapshot_stride: 1,
        }
    }
}

fn default_effort() -> EffortParams {
    EffortParams::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub population: PopulationSource,
    pub partition: PartitionSpec,
    pub rho: f64,
    pub lambda: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    pub update_rule: UpdateRule,
    #[serde(default = "default_effort")]
    pub effort_defaults: EffortParams,
    pub horizon: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub output: OutputSettings,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub state: PopulationState,
    pub selection: SelectionConfig,
    pub rule: UpdateRule,
    pub horizon: usize,
    pub tolerances: Tolerances,
    pub output: OutputSettings,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> crate::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            rho: self.rho,
            lambda: self.lambda,
            solver: self.solver.kind,
            restarts: self.solver.restarts,
            max_iters: self.solver.max_iters,
            seed: self.seeds.solver_seed,
            exhaustive_cap: self.solver.exhaustive_cap,
        }
    }

    /// Validates every field and materializes the initial population.
    /// `base` anchors a relative population path.
    pub fn build(&self, base: &Path) -> crate::Result<Scenario> {
        let partition = FeaturePartition::try_from(self.partition.clone())?;
        let selection = self.selection_config();
        selection.validate()?;
        self.effort_defaults.validate()?;
        self.tolerances.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.output.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        let state = match &self.population {
            PopulationSource::Generate(g) => {
                let spec = GeneratorSpec {
                    n: g.n,
                    partition,
                    features: g.features.clone(),
                    effort: g
                        .effort
                        .clone()
                        .unwrap_or_else(|| self.effort_defaults.into()),
                };
                spec.validate()?;
                // Check rho against n before drawing anything.
                selection::tail_size(spec.n, self.rho)?;
                population::generate_population(&spec, self.seeds.population_seed)?
            }
            PopulationSource::File(path) => {
                let path = base.join(path);
                population::load_population(&path, partition, self.effort_defaults)?
            }
        };
        selection::tail_size(state.len(), self.rho)?;
        if self.rule_needs_finite_ceiling() && !state.partition().ceiling_value().is_finite() {
            return Err(Error::Config(
                "barrier_effort needs a finite ceiling_value".into(),
            ));
        }
        Ok(Scenario {
            state,
            selection,
            rule: self.update_rule,
            horizon: self.horizon,
            tolerances: self.tolerances,
            output: self.output.clone(),
        })
    }

    fn rule_needs_finite_ceiling(&self) -> bool {
        self.update_rule == UpdateRule::BarrierEffort
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> crate::Result<Scenario> {
    let cfg = ScenarioConfig::from_path(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.build(base)
}

// ---------------------------------------------------------------------------
// Commands

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn resolve_output(out: Option<&Path>, p: &Path) -> PathBuf {
    match out {
        Some(dir) => dir.join(p),
        None => p.to_path_buf(),
    }
}

pub fn cmd_run(config: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let scenario = load_scenario(config)?;
    let trace_path = resolve_output(out, &scenario.output.trace);
    let mut trace = TraceWriter::new(create(&trace_path)?)?;
    let mut snaps = match &scenario.output.snapshots {
        Some(p) => Some(SnapshotWriter::new(
            create(&resolve_output(out, p))?,
            scenario.output.snapshot_stride,
        )?),
        None => None,
    };
    let traj = dynamics::run_with(
        &scenario.state,
        &scenario.selection,
        scenario.rule,
        scenario.horizon,
        &scenario.tolerances,
        |state, record| {
            trace.write(record)?;
            if let Some(s) = snaps.as_mut() {
                s.observe(state, record)?;
            }
            Ok(())
        },
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;
    trace
        .finish()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    if let Some(s) = snaps {
        s.finish().map_err(|e| CliError::runtime(e.to_string()))?;
    }
    let last = traj.records.last().expect("horizon >= 1");
    let reason = match traj.terminated_by {
        Termination::Horizon => "horizon",
        Termination::Equilibrium => "equilibrium",
    };
    writeln!(
        stdout,
        "steps={} terminated_by={} equilibrium={} trace={}",
        traj.records.len(),
        reason,
        last.equilibrium.kind.as_str(),
        trace_path.display()
    )
    .map_err(|e| CliError::runtime(e.to_string()))
}

fn load_for_query(args: &SolveArgs) -> CliResult<PopulationState> {
    let dim = population::header_dim(&args.population)?;
    let actionable = args
        .partition
        .actionable
        .clone()
        .unwrap_or_else(|| (0..dim).collect());
    let ceiling_index = match args.partition.ceiling_index {
        Some(c) => c,
        None => *actionable
            .first()
            .ok_or_else(|| CliError::input("--actionable must name at least one coordinate"))?,
    };
    let partition = FeaturePartition::from_actionable(
        dim,
        actionable,
        ceiling_index,
        args.partition.ceiling_value,
    )?;
    Ok(population::load_population(
        &args.population,
        partition,
        EffortParams::default(),
    )?)
}

fn solve(args: &SolveArgs, state: &PopulationState) -> CliResult<selection::SelectionOutcome> {
    let mut cfg = SelectionConfig::new(args.rho, args.lambda);
    cfg.seed = args.seed;
    if args.exhaustive {
        cfg = cfg.exhaustive();
    }
    cfg.validate()?;
    selection::tail_size(state.len(), args.rho)?;
    Ok(selection::solve_designer(state, &cfg)?)
}

#[derive(Serialize)]
struct SelectReport {
    w: Vec<f64>,
    eta: f64,
    objective: f64,
    selected_ids: Vec<u64>,
    rejected_ids: Vec<u64>,
    /// Nonzero dual weights all equal `1 / (rho n)`.
    alpha_support: usize,
    alpha_value: f64,
    degenerate: bool,
}

fn print_json<T: Serialize>(stdout: &mut dyn Write, value: &T) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| CliError::runtime(e.to_string()))?;
    writeln!(stdout, "{text}").map_err(|e| CliError::runtime(e.to_string()))
}

pub fn cmd_select(args: &SolveArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let state = load_for_query(args)?;
    let out = solve(args, &state)?;
    let ids = |positions: &[usize]| {
        positions
            .iter()
            .map(|&i| state.candidates()[i].id)
            .collect()
    };
    let report = SelectReport {
        alpha_support: out.alpha.iter().filter(|a| **a > 0.0).count(),
        alpha_value: 1.0 / out.selected.len() as f64,
        selected_ids: ids(&out.selected),
        rejected_ids: ids(&out.rejected),
        w: out.w,
        eta: out.eta,
        objective: out.objective,
        degenerate: out.degenerate,
    };
    print_json(stdout, &report)
}

pub fn cmd_recourse(args: &SolveArgs, id: u64, stdout: &mut dyn Write) -> CliResult<()> {
    let state = load_for_query(args)?;
    let position = state
        .position_of(id)
        .ok_or_else(|| CliError::input(format!("unknown candidate id {id}")))?;
    let out = solve(args, &state)?;
    let plan = recourse::candidate_recourse(&state, &out, position)?;
    print_json(stdout, &plan)
}

pub fn cmd_verify(fast: bool, seed: u64, stdout: &mut dyn Write) -> CliResult<()> {
    let scale = if fast {
        VerifyScale::fast()
    } else {
        VerifyScale::full()
    };
    let reports = oracles::verify_all(scale, seed);
    for r in &reports {
        writeln!(stdout, "{}", r.summary()).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::runtime(format!(
            "{failed} oracle suite(s) failed"
        )));
    }
    Ok(())
}

pub fn cmd_generate(spec: &Path, seed: u64, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(spec)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", spec.display())))?;
    let spec: GeneratorSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", spec.display())))?;
    let state = population::generate_population(&spec, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    population::save_population(&state, out).map_err(|e| CliError::runtime(e.to_string()))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out.as_deref(), stdout),
        Command::Select(args) => cmd_select(args, stdout),
        Command::Recourse { solve, id } => cmd_recourse(solve, *id, stdout),
        Command::Verify { fast, seed } => cmd_verify(*fast, *seed, stdout),
        Command::Generate { spec, seed, out } => cmd_generate(spec, *seed, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with_args(
            std::iter::once("recourse-sim").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn scenario_json_rejects_unknown_keys() {
        let text = r#"{
            "population": {"file": "x.csv"},
            "partition": {"dim": 2, "actionable": [1], "ceiling_index": 1, "ceiling_value": 10},
            "rho": 0.5, "lambda": 1.0, "update_rule": "barrier_effort", "horizon": 3,
            "horizn": 4
        }"#;
        let err = serde_json::from_str::<ScenarioConfig>(text).unwrap_err();
        assert!(err.to_string().contains("horizn"), "{err}");
    }

    #[test]
    fn scenario_defaults() {
        let text = r#"{
            "population": {"generate": {"n": 10, "features": [
                {"kind": "uniform", "min": 0, "max": 1},
                {"kind": "uniform", "min": 0, "max": 5}]}},
            "partition": {"dim": 2, "actionable": [1], "ceiling_index": 1, "ceiling_value": 10},
            "rho": 0.2, "lambda": 1.0, "update_rule": "barrier_effort", "horizon": 3
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert_eq!(cfg.solver.restarts, 32);
        assert_eq!(cfg.output.trace, PathBuf::from("trace.csv"));
        let sc = cfg.build(Path::new(".")).unwrap();
        assert_eq!(sc.state.len(), 10);
        assert!(sc
            .state
            .candidates()
            .iter()
            .all(|c| c.effort == EffortParams::default()));

        let mut bad = cfg.clone();
        bad.rho = 0.15;
        let err = bad.build(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("rho"));
        let mut bad = cfg.clone();
        bad.lambda = 0.0;
        assert!(bad.build(Path::new(".")).is_err());
        let mut bad = cfg;
        bad.horizon = 0;
        assert!(bad.build(Path::new(".")).is_err());
    }

    #[test]
    fn bundled_scenarios_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
        for name in ["gre_case_study.json", "structural_equilibrium.json"] {
            load_scenario(&dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn verify_fast_passes() {
        let (code, out, _) = run_args(&["verify", "--fast"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), 4);
        assert!(out.lines().all(|l| l.starts_with("[PASS]")));
    }

    #[test]
    fn bad_arguments_exit_2() {
        assert_eq!(run_args(&["select", "--rho", "0.5"]).0, 2);
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        assert_eq!(run_args(&["--help"]).0, 0);
    }
}
