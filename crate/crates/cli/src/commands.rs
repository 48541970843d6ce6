use std::time::Instant;

use rayon::prelude::*;

use extsource_core::consistency::{coefficient_checks, kernel_checks, MAX_COEFFICIENT_DEGREE};
use extsource_core::fredholm::lmax_cdf_detailed;
use extsource_core::orthopoly::quadrature_recurrence;
use extsource_core::source_kernel::MomentMethod;
use extsource_core::{sample_spectra, FredholmConfig, GramOracle, IdentityCheck, KernelModel, ModelOptions, PhiBasis};

use crate::config::RunConfig;
use crate::output::num;
use crate::{CliError, Command};

/// Relative tolerance of the kernel against the Gram-matrix construction.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct QuadratureInfo {
    pub recurrence_size: usize,
    pub rule_size: Option<usize>,
    pub doubling_change: Option<f64>,
    pub moment_method: Option<&'static str>,
    pub oracle_rule_size: Option<usize>,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ConditionInfo {
    pub b: Option<f64>,
    pub gram: Option<f64>,
}

/// Everything a subcommand produces before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub quadrature: Option<QuadratureInfo>,
    pub condition: ConditionInfo,
    pub warnings: Vec<String>,
    /// Human-readable report printed to stdout (verify).
    pub report: Option<String>,
    pub passed: Option<bool>,
    pub setup_seconds: f64,
    pub evaluate_seconds: f64,
}

fn build_model(cfg: &RunConfig) -> Result<KernelModel, CliError> {
    let options = ModelOptions { rule_size: cfg.quadrature, ..ModelOptions::default() };
    Ok(KernelModel::build_with(cfg.source_spec()?, cfg.weight.clone(), options)?)
}

fn model_info(model: &KernelModel) -> QuadratureInfo {
    QuadratureInfo {
        recurrence_size: model.table().size(),
        rule_size: Some(model.rule_size()),
        doubling_change: Some(model.doubling_change()),
        moment_method: Some(match model.moment_method() {
            MomentMethod::Series => "series",
            MomentMethod::Quadrature => "quadrature",
        }),
        oracle_rule_size: None,
    }
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Recurrence => recurrence(cfg),
        Command::Kernel => kernel(cfg),
        Command::Verify { .. } => verify(cfg),
        Command::Lmax => lmax(cfg),
        Command::Sample => sample(cfg),
    }
}

fn recurrence(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let table = quadrature_recurrence(&cfg.weight, cfg.n)?;
    let setup = t.elapsed().as_secs_f64();
    let rows = (0..=cfg.n)
        .map(|k| {
            vec![k.to_string(), num(table.alpha()[k]), num(table.beta()[k]), num(table.h(k)), num(table.kappa(k))]
        })
        .collect();
    Ok(Outcome {
        columns: columns(&["k", "alpha", "beta", "h", "kappa"]),
        rows,
        quadrature: Some(QuadratureInfo { recurrence_size: table.size(), ..Default::default() }),
        setup_seconds: setup,
        ..Default::default()
    })
}

fn kernel(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let model = build_model(cfg)?;
    let setup = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let points = cfg.grid.points();
    let pairs: Vec<(f64, f64)> = points.iter().flat_map(|&x| points.iter().map(move |&y| (x, y))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(x, y)| {
            let density = model.weight().density(x);
            let k0 = density * model.kernel_k0_scaled(x, y);
            let diff = density * model.correction_scaled(x, y)?;
            let k = model.kernel_k(x, y)?;
            Ok(vec![num(x), num(y), num(k0), num(k), num(diff)])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Outcome {
        columns: columns(&["x", "y", "K0", "K", "K_minus_K0"]),
        rows,
        quadrature: Some(model_info(&model)),
        condition: ConditionInfo { b: Some(model.condition()), gram: None },
        warnings: model.warnings().to_vec(),
        setup_seconds: setup,
        evaluate_seconds: t.elapsed().as_secs_f64(),
        ..Default::default()
    })
}

/// `sup |K - K_gram| / max(1, sup |K_gram|)` on the grid.
fn oracle_check(model: &KernelModel, oracle: &GramOracle, points: &[f64]) -> Result<IdentityCheck, CliError> {
    let per_row = points
        .par_iter()
        .map(|&x| {
            let (mut diff, mut sup): (f64, f64) = (0.0, 0.0);
            for &y in points {
                let g = oracle.kernel(x, y)?;
                diff = diff.max((model.kernel_k(x, y)? - g).abs());
                sup = sup.max(g.abs());
            }
            Ok((diff, sup))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let diff = per_row.iter().map(|p| p.0).fold(0.0, f64::max);
    let sup = per_row.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(IdentityCheck {
        name: "kernel agrees with Gram-matrix construction".into(),
        error: diff / sup.max(1.0),
        tolerance: ORACLE_TOLERANCE,
    })
}

fn report(checks: &[IdentityCheck], notes: &[String]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  result\n", "check", "error", "tolerance");
    for c in checks {
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        out += &format!("{:<width$}  {:>10.3e}  {:>10.1e}  {verdict}\n", c.name, c.error, c.tolerance);
    }
    for note in notes {
        out += &format!("note: {note}\n");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed == 0 {
        out += &format!("all {} checks passed\n", checks.len());
    } else {
        out += &format!("{failed} of {} checks FAILED\n", checks.len());
    }
    out
}

fn verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let model = build_model(cfg)?;
    let oracle = if cfg.oracle { Some(GramOracle::new(model.spec(), model.weight(), PhiBasis::Monic)?) } else { None };
    let setup = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    if model.n() <= MAX_COEFFICIENT_DEGREE {
        checks.extend(coefficient_checks(&model)?);
    } else {
        notes.push(format!(
            "coefficient identities skipped: limited to n <= {MAX_COEFFICIENT_DEGREE} (got n = {})",
            model.n()
        ));
    }
    checks.extend(kernel_checks(&model)?);
    if model.condition() > 1e8 {
        notes.push(format!("cond(B) = {:.2e}: the determinant-form comparison was not run", model.condition()));
    }
    if let Some(oracle) = &oracle {
        checks.push(oracle_check(&model, oracle, &cfg.grid.points())?);
    }
    let evaluate = t.elapsed().as_secs_f64();

    let passed = checks.iter().all(IdentityCheck::passed);
    let rows = checks
        .iter()
        .map(|c| vec![c.name.clone(), num(c.error), num(c.tolerance), c.passed().to_string()])
        .collect();
    let mut info = model_info(&model);
    info.oracle_rule_size = oracle.as_ref().map(|o| o.rule().len());
    let mut warnings = model.warnings().to_vec();
    warnings.extend(notes.iter().cloned());
    Ok(Outcome {
        columns: columns(&["check", "error", "tolerance", "passed"]),
        rows,
        quadrature: Some(info),
        condition: ConditionInfo { b: Some(model.condition()), gram: oracle.as_ref().map(GramOracle::condition) },
        warnings,
        report: Some(report(&checks, &notes)),
        passed: Some(passed),
        setup_seconds: setup,
        evaluate_seconds: evaluate,
    })
}

fn lmax(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let model = build_model(cfg)?;
    let setup = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let fredholm = FredholmConfig::default();
    let rows = cfg
        .s_grid
        .points()
        .par_iter()
        .map(|&s| {
            let v = lmax_cdf_detailed(&model, s, &fredholm)?;
            Ok(vec![num(s), num(v.cdf), v.nodes.to_string(), num(v.truncation)])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Outcome {
        columns: columns(&["s", "cdf", "nystrom_m", "truncation_T"]),
        rows,
        quadrature: Some(model_info(&model)),
        condition: ConditionInfo { b: Some(model.condition()), gram: None },
        warnings: model.warnings().to_vec(),
        setup_seconds: setup,
        evaluate_seconds: t.elapsed().as_secs_f64(),
        ..Default::default()
    })
}

fn sample(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.source_spec()?;
    let t = Instant::now();
    let batch = sample_spectra(&spec, &cfg.weight, cfg.count, cfg.seed)?;
    let mut names = vec!["sample".to_string()];
    names.extend((1..=cfg.n).map(|i| format!("lambda_{i}")));
    let rows = batch
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, ev)| std::iter::once(i.to_string()).chain(ev.iter().map(|&v| num(v))).collect())
        .collect();
    Ok(Outcome { columns: names, rows, evaluate_seconds: t.elapsed().as_secs_f64(), ..Default::default() })
}
