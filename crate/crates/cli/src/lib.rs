//! Config-driven experiment runner for the `paramlearn` library.
//!
//! A config is a flat `key = value` file with `#` comments. Each command
//! writes CSV artifacts plus a `run_manifest.txt` into the output
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use paramlearn::closed_form::{case_solution, write_policy_curves, CaseSolution};
use paramlearn::gibbs::{gibbs_density, gibbs_density_auto, hamiltonian_fn, GibbsDensity};
use paramlearn::learner::{estimate_beta, policy_iteration, two_step_estimate, IterationSettings};
use paramlearn::sim::{path_equivalence, simulate, ControlLaw};
use paramlearn::verification::{
    dirac_limit, hjb_residual, moment_match, optimality_perturbation, probe_nodes, write_reports_csv, Criterion,
    PolicyPerturbation, VerificationReport, MIN_MOMENT_PATHS, MIN_PERTURBATION_PATHS,
};
use paramlearn::{CaseTag, CoefficientModel, CostSpec, GeneralStep, ParamCurve, ParamSet, TimeGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Steps of the fine grid used for HJB residuals.
const HJB_STEPS: usize = 1000;
const HJB_NODES: usize = 50;
const DIRAC_LAMBDAS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Diffusion,
    Drift,
    General,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Self::Diffusion => "diffusion",
            Self::Drift => "drift",
            Self::General => "general",
        }
    }

    /// Model tags exercised by this case, one per step.
    fn tags(self) -> Vec<CaseTag> {
        match self {
            Self::Diffusion => vec![CaseTag::DiffusionParam],
            Self::Drift => vec![CaseTag::DriftParam],
            Self::General => {
                vec![CaseTag::General(GeneralStep::DiffusionStep), CaseTag::General(GeneralStep::DriftStep)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Policy,
    Verify,
    Learn,
    TwoStep,
    PolicyIter,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Policy => "policy",
            Self::Verify => "verify",
            Self::Learn => "learn",
            Self::TwoStep => "two-step",
            Self::PolicyIter => "policy-iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: Case,
    pub command: Command,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub episodes: usize,
    pub n_iters: usize,
    pub lambda: f64,
    pub x0: f64,
    pub seed: u64,
    pub beta_knots: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub alpha_knots: Vec<f64>,
    pub alpha_values: Vec<f64>,
    /// Explicit Gibbs grid; `None` centers it on the policy mean.
    pub rho_range: Option<(f64, f64)>,
    pub rho_grid_points: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn grid(&self) -> paramlearn::Result<TimeGrid> {
        TimeGrid::new(self.t0, self.t_end, self.n_steps)
    }

    pub fn beta_curve(&self) -> paramlearn::Result<ParamCurve> {
        ParamCurve::new(self.beta_knots.clone(), self.beta_values.clone(), self.t_end)
    }

    pub fn alpha_curve(&self) -> paramlearn::Result<ParamCurve> {
        ParamCurve::new(self.alpha_knots.clone(), self.alpha_values.clone(), self.t_end)
    }

    pub fn params(&self) -> paramlearn::Result<ParamSet> {
        Ok(match self.case {
            Case::General => ParamSet::general(self.alpha_curve()?, self.beta_curve()?),
            _ => ParamSet::beta(self.beta_curve()?),
        })
    }

    /// Normalized `key = value` listing, used in the run manifest.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("case", self.case.name().into());
        line("command", self.command.name().into());
        line("t0", self.t0.to_string());
        line("T", self.t_end.to_string());
        line("n_steps", self.n_steps.to_string());
        line("n_paths", self.n_paths.to_string());
        line("episodes", self.episodes.to_string());
        line("n_iters", self.n_iters.to_string());
        line("lambda", self.lambda.to_string());
        line("x0", self.x0.to_string());
        line("seed", self.seed.to_string());
        line("beta_knots", list(&self.beta_knots));
        line("beta_values", list(&self.beta_values));
        if self.case == Case::General {
            line("alpha_knots", list(&self.alpha_knots));
            line("alpha_values", list(&self.alpha_values));
        }
        if let Some((lo, hi)) = self.rho_range {
            line("rho_grid_min", lo.to_string());
            line("rho_grid_max", hi.to_string());
        }
        line("rho_grid_points", self.rho_grid_points.to_string());
        line("out_dir", self.out_dir.display().to_string());
        s
    }
}

/// Problem in a config file, with the 1-based line when one applies.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}, key `{}`: {}", self.key, self.message),
            None => write!(f, "config key `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

const KEYS: [&str; 19] = [
    "case",
    "command",
    "t0",
    "T",
    "n_steps",
    "n_paths",
    "episodes",
    "n_iters",
    "lambda",
    "x0",
    "seed",
    "beta_knots",
    "beta_values",
    "alpha_knots",
    "alpha_values",
    "rho_grid_min",
    "rho_grid_max",
    "rho_grid_points",
    "out_dir",
];

struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.entries.get(key).map(|e| e.0), key: key.into(), message: message.into() }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.1.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.err(key, format!("cannot parse `{v}`"))),
        }
    }

    fn parse_optional(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| self.err(key, format!("cannot parse `{v}` as a number"))))
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        v.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(key, format!("`{item}` is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

/// Parses and validates a config. Every numeric precondition is checked
/// here so that no computation starts on a bad config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError { line: Some(lineno), key: line.into(), message: "expected `key = value`".into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError { line: Some(lineno), key: key.into(), message: "unknown key".into() });
        }
        if entries.insert(key.to_string(), (lineno, value.to_string())).is_some() {
            return Err(ConfigError { line: Some(lineno), key: key.into(), message: "duplicate key".into() });
        }
    }
    let raw = RawConfig { entries };

    let case = match raw.get("case") {
        Some("diffusion") => Case::Diffusion,
        Some("drift") => Case::Drift,
        Some("general") => Case::General,
        Some("custom") => {
            return Err(raw.err("case", "custom dynamics cannot be expressed in a config file; use the library API"))
        }
        Some(other) => return Err(raw.err("case", format!("unknown case `{other}`"))),
        None => return Err(raw.err("case", "missing required key")),
    };
    let command = match raw.get("command") {
        Some("simulate") => Command::Simulate,
        Some("policy") => Command::Policy,
        Some("verify") => Command::Verify,
        Some("learn") => Command::Learn,
        Some("two-step") => Command::TwoStep,
        Some("policy-iter") => Command::PolicyIter,
        Some(other) => return Err(raw.err("command", format!("unknown command `{other}`"))),
        None => return Err(raw.err("command", "missing required key")),
    };

    let t0: f64 = raw.parse("t0", 0.0)?;
    let t_end: f64 = raw.parse("T", 1.0)?;
    if !(t0.is_finite() && t_end.is_finite() && t0 < t_end) {
        return Err(raw.err("T", format!("need finite t0 < T, got t0 = {t0}, T = {t_end}")));
    }
    let n_steps: usize = raw.parse("n_steps", 100)?;
    if n_steps == 0 {
        return Err(raw.err("n_steps", "must be at least 1"));
    }
    let n_paths: usize = raw.parse("n_paths", 10_000)?;
    if n_paths == 0 {
        return Err(raw.err("n_paths", "must be at least 1"));
    }
    let episodes: usize = raw.parse("episodes", 1000)?;
    let n_iters: usize = raw.parse("n_iters", 3)?;
    let lambda: f64 = raw.parse("lambda", 0.1)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(raw.err("lambda", format!("temperature must satisfy lambda > 0, got {lambda}")));
    }
    let x0: f64 = raw.parse("x0", 1.0)?;
    if !x0.is_finite() {
        return Err(raw.err("x0", "must be finite"));
    }
    let seed: u64 = raw.parse("seed", 42)?;

    let curve = |knots_key: &str, values_key: &str| -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        let values = raw.list(values_key)?.ok_or_else(|| raw.err(values_key, "missing required key"))?;
        let knots = raw.list(knots_key)?.unwrap_or_else(|| vec![t0]);
        if knots.len() != values.len() {
            return Err(raw.err(values_key, format!("{} values for {} knots", values.len(), knots.len())));
        }
        if knots[0] != t0 {
            return Err(raw.err(knots_key, format!("first knot must equal t0 = {t0}")));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) || knots.iter().any(|&k| k >= t_end) {
            return Err(raw.err(knots_key, "knots must be strictly ascending and below T"));
        }
        Ok((knots, values))
    };
    let (beta_knots, beta_values) = curve("beta_knots", "beta_values")?;
    let (alpha_knots, alpha_values) = if case == Case::General {
        curve("alpha_knots", "alpha_values")?
    } else {
        if raw.get("alpha_values").is_some() || raw.get("alpha_knots").is_some() {
            return Err(raw.err("alpha_values", "only the general case takes an alpha curve"));
        }
        (Vec::new(), Vec::new())
    };

    let rho_range = match (raw.parse_optional("rho_grid_min")?, raw.parse_optional("rho_grid_max")?) {
        (None, None) => None,
        (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() && lo < hi => Some((lo, hi)),
        (Some(_), Some(_)) => return Err(raw.err("rho_grid_max", "need finite rho_grid_min < rho_grid_max")),
        _ => return Err(raw.err("rho_grid_min", "rho_grid_min and rho_grid_max must be given together")),
    };
    let rho_grid_points: usize = raw.parse("rho_grid_points", 2001)?;
    if rho_grid_points < 3 {
        return Err(raw.err("rho_grid_points", "must be at least 3"));
    }

    match command {
        Command::Learn | Command::TwoStep if episodes < paramlearn::learner::MIN_EPISODES => {
            return Err(raw
                .err("episodes", format!("estimation needs at least {} episodes", paramlearn::learner::MIN_EPISODES)))
        }
        Command::PolicyIter if episodes < 2 => return Err(raw.err("episodes", "must be at least 2")),
        Command::TwoStep if case != Case::General => {
            return Err(raw.err("command", "two-step estimation needs case = general"))
        }
        Command::Verify | Command::Learn | Command::TwoStep | Command::PolicyIter if n_steps < 6 => {
            return Err(raw.err("n_steps", "this command needs at least 6 steps"))
        }
        _ => {}
    }
    let out_dir = PathBuf::from(raw.get("out_dir").unwrap_or("out"));

    Ok(ExperimentConfig {
        case,
        command,
        t0,
        t_end,
        n_steps,
        n_paths,
        episodes,
        n_iters,
        lambda,
        x0,
        seed,
        beta_knots,
        beta_values,
        alpha_knots,
        alpha_values,
        rho_range,
        rho_grid_points,
        out_dir,
    })
}

/// Failure while running a parsed config.
#[derive(Debug)]
pub enum RunError {
    Io { path: PathBuf, source: std::io::Error },
    Module(paramlearn::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => EXIT_USAGE,
            Self::Module(paramlearn::Error::Io(_)) => EXIT_USAGE,
            Self::Module(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::Module(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<paramlearn::Error> for RunError {
    fn from(e: paramlearn::Error) -> Self {
        Self::Module(e)
    }
}

/// What a successful run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// `Some` for `verify`.
    pub verification_passed: Option<bool>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.verification_passed {
            Some(false) => EXIT_VERIFY_FAILED,
            _ => EXIT_OK,
        }
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> paramlearn::Result<()>,
    ) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io { path: path.clone(), source };
        let mut out = BufWriter::new(File::create(&path).map_err(io_err)?);
        match f(&mut out) {
            Ok(()) => {}
            Err(paramlearn::Error::Io(source)) => return Err(RunError::Io { path, source }),
            Err(e) => return Err(e.into()),
        }
        out.flush().map_err(|source| RunError::Io { path: path.clone(), source })?;
        info!("wrote {}", path.display());
        self.files.push(path);
        Ok(())
    }
}

/// Runs the configured command, writing artifacts into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io { path: out_dir.to_path_buf(), source })?;
    let mut artifacts = Artifacts { dir: out_dir, files: Vec::new() };
    let grid = config.grid()?;
    let params = config.params()?;
    let mut verification_passed = None;

    match config.command {
        Command::Simulate => {
            let tag = config.case.tags()[0];
            let model = CoefficientModel::from_tag(tag)?;
            let policy = case_solution(tag, &params, config.lambda, &grid)?.policy;
            let law = ControlLaw::Randomized(policy);
            let bundle = simulate(&model, &law, &params, config.x0, &grid, config.n_paths, config.seed)?;
            artifacts.write("paths.csv", |out| bundle.write_csv(out))?;
        }
        Command::Policy => {
            for (i, tag) in config.case.tags().into_iter().enumerate() {
                let suffix = if i == 0 { "" } else { "_step2" };
                let sol = case_solution(tag, &params, config.lambda, &grid)?;
                artifacts.write(&format!("policy_curves{suffix}.csv"), |out| write_policy_curves(&sol, &grid, out))?;
                let density = policy_density(config, tag, &params, &sol)?;
                artifacts.write(&format!("gibbs_density{suffix}.csv"), |out| density.write_csv(out))?;
            }
        }
        Command::Verify => {
            let reports = verify_reports(config, &params, &grid)?;
            for r in &reports {
                info!("{r}");
            }
            let passed = reports.iter().all(VerificationReport::passed);
            artifacts.write("verification.csv", |out| write_reports_csv(&reports, out))?;
            verification_passed = Some(passed);
        }
        Command::Learn => {
            let tag = config.case.tags()[0];
            let est = estimate_beta(
                tag,
                &params,
                config.lambda,
                config.x0,
                &grid,
                &config.beta_knots,
                config.episodes,
                config.seed,
            )?;
            artifacts.write("estimates.csv", |out| est.write_csv(out))?;
        }
        Command::TwoStep => {
            let mut knots: Vec<f64> = config.beta_knots.iter().chain(&config.alpha_knots).copied().collect();
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            let (alpha_hat, beta_hat) = two_step_estimate(
                params.alpha_curve()?,
                &params.beta,
                config.lambda,
                config.x0,
                &grid,
                &knots,
                config.episodes,
                config.seed,
            )?;
            artifacts.write("estimates_beta.csv", |out| beta_hat.write_csv(out))?;
            artifacts.write("estimates_alpha.csv", |out| alpha_hat.write_csv(out))?;
        }
        Command::PolicyIter => {
            let stride = (config.n_steps / 10).max(1);
            for (i, tag) in config.case.tags().into_iter().enumerate() {
                let suffix = if i == 0 { "" } else { "_step2" };
                let init = case_solution(tag, &params, config.lambda, &grid)?;
                let settings = IterationSettings {
                    lambda: config.lambda,
                    episodes: config.episodes,
                    n_iters: config.n_iters,
                    knot_stride: stride,
                    seed: config.seed,
                };
                let outcome = policy_iteration(tag, &params, &grid, init, settings)?;
                artifacts.write(&format!("policy_iteration{suffix}.csv"), |out| outcome.write_trace_csv(out))?;
                let sol = CaseSolution { value: outcome.value, policy: outcome.policy };
                artifacts.write(&format!("policy_curves{suffix}.csv"), |out| write_policy_curves(&sol, &grid, out))?;
            }
        }
    }

    let manifest = manifest_text(config);
    artifacts.write("run_manifest.txt", |out| Ok(out.write_all(manifest.as_bytes())?))?;
    Ok(RunOutcome { files: artifacts.files, verification_passed })
}

fn manifest_text(config: &ExperimentConfig) -> String {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!(
        "paramlearn {}\nseed = {}\ntimestamp_unix = {timestamp}\n\n[config]\n{}",
        env!("CARGO_PKG_VERSION"),
        config.seed,
        config.to_text()
    )
}

/// Gibbs density of the closed-form Hamiltonian at `(t0, x0)`.
fn policy_density(
    config: &ExperimentConfig,
    tag: CaseTag,
    params: &ParamSet,
    sol: &CaseSolution,
) -> paramlearn::Result<GibbsDensity> {
    let model = CoefficientModel::from_tag(tag)?;
    let spec = CostSpec::for_case(tag, params, config.lambda)?;
    let l = hamiltonian_fn(&model, &sol.value, &spec, params, config.t0, config.x0)?;
    match config.rho_range {
        Some(range) => gibbs_density(l, config.lambda, range, config.rho_grid_points),
        None => gibbs_density_auto(l, config.lambda, config.rho_grid_points),
    }
}

/// HJB residuals, moment matching, temperature limit, perturbation
/// optimality and path equivalence for every step of the case.
fn verify_reports(
    config: &ExperimentConfig,
    params: &ParamSet,
    grid: &TimeGrid,
) -> paramlearn::Result<Vec<VerificationReport>> {
    let fine = TimeGrid::new(config.t0, config.t_end, HJB_STEPS)?;
    let nodes = probe_nodes(&fine, HJB_NODES);
    let xs: Vec<f64> = (0..HJB_NODES).map(|i| -2.0 + 4.0 * i as f64 / (HJB_NODES - 1) as f64).collect();
    let moment_paths = config.n_paths.max(MIN_MOMENT_PATHS);
    let perturbation_paths = config.n_paths.max(MIN_PERTURBATION_PATHS);
    let lambdas = DIRAC_LAMBDAS;
    let mut reports = Vec::new();
    for tag in config.case.tags() {
        let model = CoefficientModel::from_tag(tag)?;
        let spec = CostSpec::for_case(tag, params, config.lambda)?;
        let fine_sol = case_solution(tag, params, config.lambda, &fine)?;
        reports.push(hjb_residual(&model, &fine_sol.value, &fine_sol.policy, params, &spec, &fine, &nodes, &xs)?);

        let sol = case_solution(tag, params, config.lambda, grid)?;
        reports.push(moment_match(&model, params, &sol.policy, config.x0, grid, moment_paths, config.seed)?);
        reports.push(dirac_limit(tag, params, &lambdas, config.x0, config.t0, grid)?);
        reports.push(optimality_perturbation(
            tag,
            params,
            config.lambda,
            config.x0,
            grid,
            perturbation_paths,
            config.seed,
            &PolicyPerturbation::standard_set(),
        )?);

        let gap = path_equivalence(&model, params, config.x0, grid, 100, config.seed)?;
        let mut eq = VerificationReport::new(format!("path_equivalence/{}", tag.name()), format!("100 paths, {grid}"));
        eq.push("max_abs_state_gap", gap, 0.0, Criterion::Within);
        reports.push(eq);
    }
    Ok(reports)
}
