//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The machine this runs on may have a single core, so every criterion runs
//! sequentially inside one test and the timings are wall-clock.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use paramlearn::closed_form::{case_solution, general_case};
use paramlearn::gibbs::{gibbs_density, hamiltonian_fn};
use paramlearn::learner::{estimate_beta, two_step_estimate};
use paramlearn::sim::path_equivalence;
use paramlearn::verification::{
    dirac_limit, hjb_perturbation, hjb_residual, moment_match, optimality_perturbation, probe_nodes,
    PolicyPerturbation, VerificationReport,
};
use paramlearn::{CaseTag, CoefficientModel, CostSpec, GeneralStep, ParamCurve, ParamSet, TimeGrid};

const LAMBDA: f64 = 0.1;
const X0: f64 = 1.0;
const SEED: u64 = 20_240_601;

const GIBBS_SUP_TOL: f64 = 1e-6;
const GIBBS_BUDGET: Duration = Duration::from_secs(1);
const HJB_BUDGET: Duration = Duration::from_secs(5);
const MOMENT_BUDGET: Duration = Duration::from_secs(30);
const RECOVERY_BUDGET: Duration = Duration::from_secs(60);
const RECOVERY_ABS_TOL: f64 = 0.02;
const Z_BOUND: f64 = 3.0;
/// Accepted band for the observed convergence order of the `theta1` ODE.
const ORDER_BAND: (f64, f64) = (1.9, 2.1);
const SAMPLES_PER_KNOT: usize = 50_000;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn constant(v: f64) -> ParamCurve {
    ParamCurve::constant(v, 0.0, 1.0).unwrap()
}

fn unit_grid(n: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, n).unwrap()
}

/// The named cases with their parameters; the general case contributes
/// both of its steps.
fn named_cases() -> Vec<(CaseTag, ParamSet)> {
    vec![
        (CaseTag::DiffusionParam, ParamSet::beta(constant(0.3))),
        (CaseTag::DriftParam, ParamSet::beta(ParamCurve::new(vec![0.0, 0.5], vec![0.2, 0.5], 1.0).unwrap())),
        (CaseTag::General(GeneralStep::DiffusionStep), ParamSet::general(constant(0.2), constant(0.4))),
        (CaseTag::General(GeneralStep::DriftStep), ParamSet::general(constant(0.2), constant(0.4))),
    ]
}

fn failed_rows(reports: &[VerificationReport]) -> String {
    let bad: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.rows()
                .iter()
                .filter(|row| !row.pass)
                .map(move |row| format!("{}:{}={:.3e}", r.check(), row.statistic, row.value))
        })
        .collect();
    if bad.is_empty() {
        "all rows within tolerance".into()
    } else {
        bad.join("; ")
    }
}

fn normal_pdf(mean: f64, var: f64, r: f64) -> f64 {
    (-(r - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn gibbs_agreement() -> Outcome {
    let start = Instant::now();
    let g = unit_grid(100);
    let params = ParamSet::beta(constant(0.3));
    let tag = CaseTag::DiffusionParam;
    let sol = case_solution(tag, &params, LAMBDA, &g).unwrap();
    let model = CoefficientModel::from_tag(tag).unwrap();
    let spec = CostSpec::for_case(tag, &params, LAMBDA).unwrap();
    let l = hamiltonian_fn(&model, &sol.value, &spec, &params, 0.0, X0).unwrap();
    // a1(0) = exp((1 - 2 beta) T) for a constant beta.
    let var = LAMBDA / (2.0 * (0.4f64).exp());
    let mean = 0.3 * X0;
    let sd = var.sqrt();
    let d = gibbs_density(l, LAMBDA, (mean - 8.0 * sd, mean + 8.0 * sd), 2001).unwrap();
    let err = d.rho().iter().zip(d.density()).map(|(&r, &p)| (p - normal_pdf(mean, var, r)).abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome {
        name: "closed-form/Gibbs agreement",
        passed: err < GIBBS_SUP_TOL && elapsed < GIBBS_BUDGET,
        detail: format!("sup error {err:.3e} (< {GIBBS_SUP_TOL:.0e}), {elapsed:.2?} (< {GIBBS_BUDGET:?})"),
    }
}

fn hjb_residuals() -> Outcome {
    let start = Instant::now();
    let g = unit_grid(1000);
    let nodes = probe_nodes(&g, 50);
    let xs: Vec<f64> = (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect();
    let mut reports = Vec::new();
    for (tag, params) in named_cases() {
        let model = CoefficientModel::from_tag(tag).unwrap();
        let spec = CostSpec::for_case(tag, &params, LAMBDA).unwrap();
        let sol = case_solution(tag, &params, LAMBDA, &g).unwrap();
        reports.push(hjb_residual(&model, &sol.value, &sol.policy, &params, &spec, &g, &nodes, &xs).unwrap());
    }
    let (tag, params) = named_cases().swap_remove(0);
    let model = CoefficientModel::from_tag(tag).unwrap();
    let spec = CostSpec::for_case(tag, &params, LAMBDA).unwrap();
    let sol = case_solution(tag, &params, LAMBDA, &g).unwrap();
    let detection = hjb_perturbation(&model, &sol.value, &sol.policy, &params, &spec, &g, &nodes, &xs, 1.1).unwrap();
    let detected = detection.rows()[0].value;
    reports.push(detection);
    let elapsed = start.elapsed();
    Outcome {
        name: "HJB residual",
        passed: reports.iter().all(VerificationReport::passed) && elapsed < HJB_BUDGET,
        detail: format!(
            "{}; perturbed residual {detected:.3e}; {elapsed:.2?} (< {HJB_BUDGET:?})",
            failed_rows(&reports)
        ),
    }
}

fn equivalence() -> Outcome {
    let g = unit_grid(100);
    let mut worst = 0.0f64;
    for (tag, params) in named_cases() {
        let model = CoefficientModel::from_tag(tag).unwrap();
        worst = worst.max(path_equivalence(&model, &params, X0, &g, 100, SEED).unwrap());
    }
    Outcome { name: "path equivalence", passed: worst == 0.0, detail: format!("max state gap {worst:e} (== 0)") }
}

fn moments() -> Outcome {
    let start = Instant::now();
    let g = unit_grid(100);
    let mut reports = Vec::new();
    for (tag, params) in named_cases() {
        let model = CoefficientModel::from_tag(tag).unwrap();
        let sol = case_solution(tag, &params, LAMBDA, &g).unwrap();
        reports.push(moment_match(&model, &params, &sol.policy, X0, &g, 100_000, SEED).unwrap());
    }
    let worst = reports.iter().flat_map(|r| r.rows()).map(|row| row.value.abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome {
        name: "moment matching",
        passed: reports.iter().all(VerificationReport::passed) && elapsed < MOMENT_BUDGET,
        detail: format!("max |z| {worst:.3} (<= {Z_BOUND}), {elapsed:.2?} (< {MOMENT_BUDGET:?})"),
    }
}

fn dirac() -> Outcome {
    let g = unit_grid(100);
    let lambdas = [1e-1, 1e-2, 1e-3, 1e-4];
    let reports: Vec<_> = named_cases()
        .into_iter()
        .map(|(tag, params)| dirac_limit(tag, &params, &lambdas, X0, 0.0, &g).unwrap())
        .collect();
    Outcome {
        name: "Dirac limit",
        passed: reports.iter().all(VerificationReport::passed),
        detail: failed_rows(&reports),
    }
}

fn recovery() -> Outcome {
    let start = Instant::now();
    let g = unit_grid(100);
    let lambda = 0.05;
    let tag = CaseTag::DiffusionParam;
    // One knot collects episodes * n_steps pairs.
    let flat = estimate_beta(tag, &ParamSet::beta(constant(0.3)), lambda, X0, &g, &[0.0], SAMPLES_PER_KNOT / 100, SEED)
        .unwrap();
    let (b, se) = (flat.estimates()[0], flat.std_errors[0]);
    let flat_ok = (b - 0.3).abs() <= RECOVERY_ABS_TOL && (b - 0.3).abs() <= Z_BOUND * se;
    let steps = ParamCurve::new(vec![0.0, 0.5], vec![0.2, 0.5], 1.0).unwrap();
    let piecewise =
        estimate_beta(tag, &ParamSet::beta(steps), lambda, X0, &g, &[0.0, 0.5], SAMPLES_PER_KNOT / 50, SEED + 1)
            .unwrap();
    let z = piecewise.max_abs_z().unwrap();
    let elapsed = start.elapsed();
    Outcome {
        name: "parameter recovery",
        passed: flat_ok && z <= Z_BOUND && piecewise.n_samples.iter().all(|&n| n >= SAMPLES_PER_KNOT) && elapsed < RECOVERY_BUDGET,
        detail: format!(
            "beta_hat {b:.5} (se {se:.1e}, n {}), piecewise max |z| {z:.3} at n {:?}, {elapsed:.2?} (< {RECOVERY_BUDGET:?})",
            flat.n_samples[0], piecewise.n_samples
        ),
    }
}

/// Largest central-difference residual of `theta1' = -(2(alpha - beta) - 1) theta1`
/// over interior nodes.
fn theta1_residual(n: usize, alpha: f64, beta: f64) -> f64 {
    let g = unit_grid(n);
    let sol = general_case(&constant(alpha), &constant(beta), LAMBDA, &g).unwrap();
    let a1 = |k: usize| sol.step1.value.a1.eval(g.time(k)).unwrap();
    let rate = 2.0 * (alpha - beta) - 1.0;
    (1..n).map(|k| ((a1(k + 1) - a1(k - 1)) / (2.0 * g.step()) + rate * a1(k)).abs()).fold(0.0, f64::max)
}

fn two_step() -> Outcome {
    let g = unit_grid(100);
    let (alpha, beta) = (0.2, 0.4);
    let (alpha_hat, beta_hat) =
        two_step_estimate(&constant(alpha), &constant(beta), LAMBDA, X0, &g, &[0.0], SAMPLES_PER_KNOT / 100, SEED)
            .unwrap();
    let (za, zb) = (alpha_hat.max_abs_z().unwrap(), beta_hat.max_abs_z().unwrap());
    let (coarse, fine) = (theta1_residual(100, alpha, beta), theta1_residual(200, alpha, beta));
    let order = (coarse / fine).log2();
    Outcome {
        name: "two-step general case",
        passed: za <= Z_BOUND && zb <= Z_BOUND && (ORDER_BAND.0..=ORDER_BAND.1).contains(&order),
        detail: format!(
            "alpha_hat {:.5} (|z| {za:.3}), beta_hat {:.5} (|z| {zb:.3}), theta1 ODE order {order:.3}",
            alpha_hat.estimates()[0],
            beta_hat.estimates()[0]
        ),
    }
}

fn optimality() -> Outcome {
    let g = unit_grid(100);
    let params = ParamSet::beta(constant(0.3));
    let report = optimality_perturbation(
        CaseTag::DriftParam,
        &params,
        LAMBDA,
        X0,
        &g,
        100_000,
        SEED,
        &PolicyPerturbation::standard_set(),
    )
    .unwrap();
    let least = report.rows().iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    Outcome {
        name: "optimality perturbation",
        passed: report.passed() && report.rows().len() == 6,
        detail: format!("smallest cost gap {least:.3e}; {}", failed_rows(std::slice::from_ref(&report))),
    }
}

fn run_verify(config: &Path, out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_paramlearn"))
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.code().is_some_and(|c| c <= 1), "verify exited with {status}");
    std::fs::read(out.join("verification.csv")).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("verify.cfg");
    std::fs::write(
        &config,
        "case = general\ncommand = verify\nalpha_values = 0.2\nbeta_values = 0.4\nn_paths = 10000\nseed = 7\n",
    )
    .unwrap();
    let first = run_verify(&config, &dir.path().join("a"));
    let second = run_verify(&config, &dir.path().join("b"));
    Outcome {
        name: "determinism",
        passed: !first.is_empty() && first == second,
        detail: format!("{} bytes, identical: {}", first.len(), first == second),
    }
}

#[test]
fn acceptance() {
    let criteria: [fn() -> Outcome; 9] =
        [gibbs_agreement, hjb_residuals, equivalence, moments, dirac, recovery, two_step, optimality, determinism];
    let mut failed = Vec::new();
    println!();
    for (i, run) in criteria.iter().enumerate() {
        let o = run();
        println!("{} {}. {}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.name, o.detail);
        if !o.passed {
            failed.push(format!("{}. {}", i + 1, o.name));
        }
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
