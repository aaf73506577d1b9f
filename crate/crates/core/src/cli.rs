//! Command-line front end: subcommand dispatch, report files and exit codes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use serde::Serialize;

use crate::config::{RunConfig, TestMode};
use crate::effects::{EffectKind, Model, ModelSpec, Statistic};
use crate::error::{Error, Result};
use crate::estimation::{
    estimate, fit, phase3, ConvergenceReport, EstimationResult, MonteCarloSummaries,
};
use crate::inference::{
    composite_score_test, gof, psc, psc_archive, reparametrize_to_sd, score_test,
    shared_statistics, standard_errors, CovarianceReport, GofReport, OrthogonalizedTest, PscInput,
    PscReport,
};
use crate::network::PanelData;
use crate::rng::{stream, Stage};
use crate::simulation::{simulate_period, ParameterPoint, VarianceParams};

#[derive(Debug, Parser)]
#[command(
    name = "saom",
    version,
    about = "Actor-oriented network models with random effects"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one period from wave 1 at `algorithm.parameters`.
    Simulate(CommonArgs),
    /// Estimate the model and report estimates, standard errors and convergence.
    Estimate(CommonArgs),
    /// Score-type test of the configured statistics under the model.
    Test(CommonArgs),
    /// Goodness of fit on the out-degree distribution.
    Gof(CommonArgs),
    /// Parameter selection criterion over the configured models.
    Psc(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `algorithm.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `algorithm.workers`.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Estimate(a)
            | Command::Test(a)
            | Command::Gof(a)
            | Command::Psc(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Test(_) => "test",
            Command::Gof(_) => "gof",
            Command::Psc(_) => "psc",
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    command: String,
    error: String,
    exit_code: i32,
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.args();
    let name = cli.command.name();
    let mut out_dir = args.out.clone();
    let result = (|| -> Result<i32> {
        let mut cfg = RunConfig::from_file(&args.config)?;
        if let Some(s) = args.seed {
            cfg.algorithm.seed = s;
        }
        if let Some(w) = args.workers {
            cfg.algorithm.workers = Some(w);
        }
        if let Some(o) = &args.out {
            cfg.output.dir = o.clone();
        }
        out_dir = Some(cfg.output.dir.clone());
        if cfg.algorithm.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::io(&cfg.output.dir, e))?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.algorithm.workers {
            pool = pool.num_threads(w);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
        pool.install(|| dispatch(&cli.command, &cfg))
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            let code = e.exit_code();
            error!("{e}");
            eprintln!("error: {e}");
            if let Some(dir) = out_dir.filter(|d| d.is_dir()) {
                if let Error::Diverged { trace, .. } = &e {
                    if let Ok(cfg) = RunConfig::from_file(&args.config) {
                        let _ =
                            write_chain(&dir.join("chain.csv"), &cfg.model.param_labels(), trace);
                    }
                }
                let report = ErrorReport {
                    command: name.into(),
                    error: e.to_string(),
                    exit_code: code,
                };
                let _ = write_json(&dir.join("error.json"), &report);
            }
            code
        }
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<i32> {
    let panel = cfg.load_panel()?;
    let model = cfg.compile(&panel)?;
    match cmd {
        Command::Simulate(_) => run_simulate(cfg, &panel, &model),
        Command::Estimate(_) => run_estimate(cfg, &panel, &model),
        Command::Test(_) => run_test(cfg, &panel, &model),
        Command::Gof(_) => run_gof(cfg, &panel, &model),
        Command::Psc(_) => run_psc(cfg, &panel),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One header line of parameter labels and one line per phase-2 iteration.
pub fn write_chain(path: &Path, labels: &[String], chain: &[Vec<f64>]) -> Result<()> {
    let mut s = String::new();
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain(labels.iter().map(|l| format!("\"{l}\"")))
        .collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for (i, row) in chain.iter().enumerate() {
        let _ = write!(s, "{}", i + 1);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    write_text(path, &s)
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    parameters: ParameterPoint,
    n_ministeps: usize,
    statistics: Vec<Statistic>,
    g_hat: Vec<f64>,
    observed: Vec<f64>,
    random_effects: Vec<Vec<f64>>,
}

fn run_simulate(cfg: &RunConfig, panel: &PanelData, model: &Model) -> Result<i32> {
    let pp = cfg
        .algorithm
        .parameters
        .clone()
        .ok_or_else(|| Error::InvalidConfig("`simulate` needs algorithm.parameters".into()))?;
    let mut rng = stream(cfg.algorithm.seed, Stage::Simulate, 0);
    let out = simulate_period(&panel.wave1, &pp, model, &mut rng)?;
    let dir = &cfg.output.dir;
    write_text(
        &dir.join("simulated_network.txt"),
        &out.end_network.to_matrix_string(),
    )?;
    let report = SimulateReport {
        seed: cfg.algorithm.seed,
        parameters: pp,
        n_ministeps: out.n_ministeps,
        statistics: model.statistics().to_vec(),
        g_hat: out.g_hat,
        observed: model.observed(panel),
        random_effects: (0..out.draw.b.nrows())
            .map(|i| out.draw.b.row(i).iter().copied().collect())
            .collect(),
    };
    write_json(&dir.join("simulate.json"), &report)?;
    info!("simulated {} ministeps", report.n_ministeps);
    Ok(0)
}

#[derive(Serialize)]
struct EstimateReport {
    model: ModelSpec,
    n_actors: usize,
    seed: u64,
    param_labels: Vec<String>,
    theta_hat: ParameterPoint,
    estimates: Vec<f64>,
    standard_errors: Option<CovarianceReport>,
    standard_deviation_scale: Option<CovarianceReport>,
    standard_error_failure: Option<String>,
    convergence: ConvergenceReport,
    start: ParameterPoint,
    phase1: crate::estimation::Phase1Result,
    phase2_gains: Vec<f64>,
    initial_gain_sigma: Option<f64>,
    phase2_iterations: usize,
    phase3: MonteCarloSummaries,
}

fn variances(theta: &ParameterPoint) -> Vec<f64> {
    match &theta.sigma {
        VarianceParams::Scalar(s) => vec![*s],
        VarianceParams::Diagonal(d) => d.clone(),
        _ => Vec::new(),
    }
}

fn covariance_reports(
    s: &MonteCarloSummaries,
) -> (
    Option<CovarianceReport>,
    Option<CovarianceReport>,
    Option<String>,
) {
    match standard_errors(s) {
        Ok(c) => {
            let v = variances(&s.theta);
            let sd = if v.is_empty() {
                None
            } else {
                match reparametrize_to_sd(&c, &v) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        warn!("no standard-deviation scale: {e}");
                        None
                    }
                }
            };
            (Some(c), sd, None)
        }
        Err(e) => {
            warn!("no standard errors: {e}");
            (None, None, Some(e.to_string()))
        }
    }
}

/// Plain-text table: one row per parameter with estimate and standard error.
pub fn parameter_table(
    labels: &[String],
    estimates: &[f64],
    ses: Option<&CovarianceReport>,
    sd: Option<&CovarianceReport>,
    convergence: Option<&ConvergenceReport>,
) -> String {
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(10).max(26) + 2;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}{:>10} {:>9}",
        "effects / parameters", "est.", "(s.e.)"
    );
    let _ = writeln!(s, "{}", "-".repeat(width + 20));
    for (i, (l, e)) in labels.iter().zip(estimates).enumerate() {
        let se = ses
            .and_then(|c| c.standard_errors.get(i))
            .map_or("-".to_string(), |v| format!("({v:.2})"));
        let _ = writeln!(s, "{l:<width$}{e:>10.2} {se:>9}");
    }
    if let Some(sd) = sd {
        for (i, l) in sd
            .param_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.starts_with("std.dev."))
        {
            let se = format!("({:.2})", sd.standard_errors[i]);
            let _ = writeln!(s, "{l:<width$}{:>10.2} {se:>9}", sd.estimates[i]);
        }
    }
    if let Some(c) = convergence {
        let _ = writeln!(s);
        let _ = writeln!(s, "convergence t-ratios:");
        for (l, t) in labels.iter().zip(&c.t_ratios) {
            let _ = writeln!(s, "  {l:<width$}{t:>8.3}");
        }
        let _ = writeln!(
            s,
            "overall maximum convergence ratio: {:.3}",
            c.overall_max_ratio
        );
        let _ = writeln!(s, "converged: {}", if c.converged { "yes" } else { "no" });
        if let Some(msg) = &c.collinearity {
            let _ = writeln!(s, "collinearity: {msg}");
        }
    }
    s
}

fn run_estimate(cfg: &RunConfig, panel: &PanelData, model: &Model) -> Result<i32> {
    let settings = cfg.algorithm.settings();
    let r: EstimationResult = estimate(model, panel, &settings, cfg.algorithm.start.as_ref())?;
    let dir = &cfg.output.dir;
    write_chain(&dir.join("chain.csv"), &r.param_labels, &r.chain)?;
    let (ses, sd, se_fail) = covariance_reports(&r.summaries);
    let table = parameter_table(
        &r.param_labels,
        &r.theta_hat.to_vec(),
        ses.as_ref(),
        sd.as_ref(),
        Some(&r.convergence),
    );
    write_text(&dir.join("estimate.txt"), &table)?;
    if cfg.output.archive {
        write_json(&dir.join("phase3_archive.json"), &r.summaries)?;
    }
    let collinear = r.convergence.collinearity.clone();
    let report = EstimateReport {
        model: cfg.model.clone(),
        n_actors: panel.n_actors(),
        seed: settings.seed,
        param_labels: r.param_labels.clone(),
        estimates: r.theta_hat.to_vec(),
        theta_hat: r.theta_hat.clone(),
        standard_errors: ses,
        standard_deviation_scale: sd,
        standard_error_failure: se_fail,
        convergence: r.convergence.clone(),
        start: r.start.clone(),
        phase1: r.phase1.clone(),
        phase2_gains: r.phase2_gains.clone(),
        initial_gain_sigma: r.initial_gain_sigma,
        phase2_iterations: r.chain.len(),
        phase3: r.summaries.without_archive(),
    };
    write_json(&dir.join("estimate.json"), &report)?;
    print!("{table}");
    if let Some(msg) = collinear {
        let e = Error::Collinear(msg);
        write_json(
            &dir.join("error.json"),
            &ErrorReport {
                command: "estimate".into(),
                error: e.to_string(),
                exit_code: e.exit_code(),
            },
        )?;
        eprintln!("error: {e}");
        return Ok(e.exit_code());
    }
    if !r.converged {
        warn!("estimation did not converge; consider a longer schedule or better starting values");
    }
    Ok(0)
}

/// Parameter point for evaluation: configured, or estimated by phases 1–2.
fn parameters_for(
    cfg: &RunConfig,
    panel: &PanelData,
    model: &Model,
    given: Option<&ParameterPoint>,
    seed: u64,
) -> Result<ParameterPoint> {
    if let Some(p) = given {
        p.validate(model)?;
        return Ok(p.clone());
    }
    let mut settings = cfg.algorithm.settings();
    settings.seed = seed;
    let f = fit(model, panel, &settings, cfg.algorithm.start.as_ref())?;
    Ok(f.phase2.theta_hat)
}

#[derive(Serialize)]
struct TestReport {
    null_model: ModelSpec,
    parameters: ParameterPoint,
    seed: u64,
    statistic: String,
    z: f64,
    p_asymptotic: f64,
    p_empirical: f64,
    p_empirical_se: f64,
    t: usize,
    test: OrthogonalizedTest,
    convergence: Option<ConvergenceReport>,
}

fn run_test(cfg: &RunConfig, panel: &PanelData, model: &Model) -> Result<i32> {
    let tested = if cfg.test.statistics.is_empty() {
        vec![Statistic::Dispersion(EffectKind::OutDegree)]
    } else {
        cfg.test.statistics.clone()
    };
    let seed = cfg.algorithm.seed;
    let theta = parameters_for(cfg, panel, model, cfg.algorithm.parameters.as_ref(), seed)?;
    let extended = model.with_extra_statistics(tested.iter().cloned())?;
    let s = phase3(
        &extended,
        panel,
        &theta,
        cfg.algorithm.phase3_replicates,
        seed,
    )?;
    let convergence = crate::estimation::convergence_check(&s).ok();
    let simple = match cfg.test.mode {
        TestMode::Simple => true,
        TestMode::Composite => false,
        TestMode::Auto => tested.len() == 1 && matches!(tested[0], Statistic::Dispersion(_)),
    };
    let test = if simple {
        if tested.len() != 1 {
            return Err(Error::InvalidConfig(
                "a simple test takes exactly one statistic".into(),
            ));
        }
        score_test(&s, &tested[0])?
    } else {
        composite_score_test(&s, &tested)?
    };
    let report = TestReport {
        null_model: cfg.model.clone(),
        parameters: theta,
        seed,
        statistic: tested
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        z: test.z_obs,
        p_asymptotic: test.p_asymptotic,
        p_empirical: test.p_empirical,
        p_empirical_se: test.p_empirical_se,
        t: test.t,
        convergence,
        test: OrthogonalizedTest {
            replicate_y: Vec::new(),
            replicate_z: Vec::new(),
            ..test
        },
    };
    let dir = &cfg.output.dir;
    write_json(&dir.join("test.json"), &report)?;
    let mut txt = String::new();
    let _ = writeln!(txt, "tested: {}", report.statistic);
    let _ = writeln!(
        txt,
        "{} = {:.4}",
        if simple { "z" } else { "z^2" },
        report.z
    );
    let _ = writeln!(txt, "asymptotic p-value: {:.4e}", report.p_asymptotic);
    let _ = writeln!(
        txt,
        "empirical p-value:  {:.4e} (s.e. {:.1e}, T = {})",
        report.p_empirical, report.p_empirical_se, report.t
    );
    write_text(&dir.join("test.txt"), &txt)?;
    print!("{txt}");
    Ok(0)
}

#[derive(Serialize)]
struct GofFileReport {
    model: ModelSpec,
    parameters: ParameterPoint,
    seed: u64,
    max_bin: usize,
    gof: GofReport,
}

fn run_gof(cfg: &RunConfig, panel: &PanelData, model: &Model) -> Result<i32> {
    let seed = cfg.algorithm.seed;
    let theta = parameters_for(cfg, panel, model, cfg.algorithm.parameters.as_ref(), seed)?;
    let s = phase3(model, panel, &theta, cfg.algorithm.phase3_replicates, seed)?;
    let g = gof(&s, cfg.gof.max_bin, cfg.gof.ridge)?;
    let txt = format!(
        "out-degree distribution goodness of fit: distance {:.4}, p-value {:.4} (T = {}, ridge {})\n",
        g.distance_obs, g.p_value, g.t, g.ridge
    );
    let report = GofFileReport {
        model: cfg.model.clone(),
        parameters: theta,
        seed,
        max_bin: cfg.gof.max_bin,
        gof: GofReport {
            replicate_distances: Vec::new(),
            ..g
        },
    };
    write_json(&cfg.output.dir.join("gof.json"), &report)?;
    write_text(&cfg.output.dir.join("gof.txt"), &txt)?;
    print!("{txt}");
    Ok(0)
}

#[derive(Serialize)]
struct PscFileReport {
    seed: u64,
    models: Vec<(String, ParameterPoint)>,
    psc: PscReport,
}

fn run_psc(cfg: &RunConfig, panel: &PanelData) -> Result<i32> {
    let seed = cfg.algorithm.seed;
    let entries: Vec<(String, ModelSpec, Option<ParameterPoint>)> = if cfg.psc.models.is_empty() {
        vec![(
            "model".into(),
            cfg.model.clone(),
            cfg.algorithm.parameters.clone(),
        )]
    } else {
        cfg.psc
            .models
            .iter()
            .map(|m| (m.label.clone(), m.model.clone(), m.parameters.clone()))
            .collect()
    };
    let specs: Vec<ModelSpec> = entries.iter().map(|e| e.1.clone()).collect();
    let g0 = shared_statistics(&specs);
    let mut inputs: Vec<PscInput> = Vec::new();
    let mut points = Vec::new();
    for (label, spec, given) in &entries {
        let model = Model::new(spec.clone(), panel)?;
        info!("psc: fitting `{label}`");
        let theta = parameters_for(cfg, panel, &model, given.as_ref(), seed)?;
        inputs.push(psc_archive(
            label,
            &model,
            panel,
            &theta,
            &g0,
            cfg.algorithm.phase3_replicates,
            seed,
        )?);
        points.push((label.clone(), theta));
    }
    let report = psc(&inputs, &g0, panel.n_actors(), cfg.psc.penalty, cfg.psc.df)?;
    let mut txt = String::new();
    let _ = writeln!(
        txt,
        "{:<28}{:>4}{:>4}{:>12}{:>10}{:>12}",
        "model", "p", "q", "fit", "penalty", "psc"
    );
    for e in &report.entries {
        let _ = writeln!(
            txt,
            "{:<28}{:>4}{:>4}{:>12.2}{:>10.2}{:>12.2}",
            e.label, e.p, e.q, e.fit_term, e.penalty_term, e.psc
        );
    }
    write_json(
        &cfg.output.dir.join("psc.json"),
        &PscFileReport {
            seed,
            models: points,
            psc: report,
        },
    )?;
    write_text(&cfg.output.dir.join("psc.txt"), &txt)?;
    print!("{txt}");
    Ok(0)
}
