//! `sitstab` — command-line front end for the sterile-release stabilization
//! study: gain thresholds, closed-loop simulation, comparison tables,
//! robustness Monte Carlo, basin-of-attraction evidence, and certificate
//! verification.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use sitstab::certificates::{boundary_functions, in_invariant_set, kappa_bar};
use sitstab::certify::{certify_all, CertifyGains};
use sitstab::controller::{theta_min, total_male_gain_interval, wild_male_gain_min};
use sitstab::experiments::{
    backstepping_ratio_table, global_stability_evidence, robustness_study, run_scenario,
    wild_male_gain_table, ExperimentError, InvariantSummary, RunOutcome, ScenarioReport,
};
use sitstab::integrate::{
    control_cost, intervention_time, simulate_mismatched, IntegrateError, Trajectory,
};
use sitstab::model::{basic_offspring_number, constant_release_threshold, ModelError, ModelParams};
use sitstab_cli::config::{
    self, parse_document, preset, CertifyDoc, ComparisonKind, RunDocument, PRESET_NAMES,
};
use sitstab_cli::output;

#[derive(Parser)]
#[command(name = "sitstab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Run document (TOML) to execute.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name (see `--preset help`).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory for result files.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override the document's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the integrator step (days).
    #[arg(long, value_name = "H")]
    step: Option<f64>,
    /// Override the integration horizon (days).
    #[arg(long, value_name = "T")]
    t_final: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stabilizing-gain thresholds for a parameter set.
    Thresholds {
        #[command(flatten)]
        source: Source,
    },
    /// Integrate one closed-loop scenario and write its trajectory CSV.
    Simulate(RunArgs),
    /// Sweep a gain grid and write the intervention-time/cost table.
    Compare(RunArgs),
    /// Run the mismatched-parameter Monte Carlo protocol.
    Robustness(RunArgs),
    /// Integrate many random initial conditions as global-stability evidence.
    Evidence(RunArgs),
    /// Run the Lyapunov/invariance verification suites.
    Certify {
        #[command(flatten)]
        source: Source,
        /// Samples per check (overrides the document).
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    fn config(err: impl Into<anyhow::Error>) -> Self {
        Failure::Config(err.into())
    }
}

fn classify_experiment(err: ExperimentError) -> Failure {
    match err {
        ExperimentError::Integrate(IntegrateError::NonFinite { .. }) => {
            Failure::Numeric(anyhow!(err))
        }
        _ => Failure::Config(anyhow!(err)),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SITSTAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: SITSTAB_THREADS must be a positive integer (got {threads:?})");
                return ExitCode::from(2);
            }
        }
    }
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn load(source: &Source) -> Result<RunDocument, Failure> {
    match (&source.config, &source.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::Config)?;
            parse_document(&text).map_err(Failure::Config)
        }
        (None, Some(name)) => preset(name).ok_or_else(|| {
            Failure::Config(anyhow!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            ))
        }),
        _ => Err(Failure::Config(anyhow!(
            "pass exactly one of --config or --preset"
        ))),
    }
}

fn apply_overrides(doc: &mut RunDocument, args: &RunArgs) {
    let integrator = doc
        .scenario
        .as_mut()
        .map(|s| &mut s.integrator)
        .or_else(|| doc.robustness.as_mut().map(|r| &mut r.integrator))
        .or_else(|| doc.evidence.as_mut().map(|e| &mut e.integrator));
    if let Some(integrator) = integrator {
        if let Some(step) = args.step {
            integrator.step = step;
        }
        if let Some(t_final) = args.t_final {
            integrator.t_final = t_final;
        }
    }
    if let Some(seed) = args.seed {
        if let Some(s) = doc.scenario.as_mut() {
            s.seed = seed;
        }
        if let Some(r) = doc.robustness.as_mut() {
            r.seed = seed;
        }
        if let Some(e) = doc.evidence.as_mut() {
            e.seed = seed;
        }
        if let Some(c) = doc.certify.as_mut() {
            c.seed = seed;
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Thresholds { source } => thresholds(&source),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Compare(args) => compare_cmd(args),
        Command::Robustness(args) => robustness_cmd(args),
        Command::Evidence(args) => evidence_cmd(args),
        Command::Certify {
            source,
            samples,
            seed,
        } => certify_cmd(&source, samples, seed),
    }
}

/// Parameter set a document talks about (design parameters take precedence:
/// gains are designed against them).
fn document_params(doc: &RunDocument) -> Result<ModelParams> {
    if let Some(s) = &doc.scenario {
        return Ok(s.design_params.unwrap_or(s.params));
    }
    if let Some(c) = &doc.comparison {
        return Ok(c.params);
    }
    if let Some(r) = &doc.robustness {
        return Ok(r.design_params);
    }
    if let Some(e) = &doc.evidence {
        return Ok(e.params);
    }
    if let Some(c) = &doc.certify {
        return Ok(c.params);
    }
    Err(anyhow!("document has no parameter block"))
}

fn thresholds(source: &Source) -> Result<(), Failure> {
    let p = if source.config.is_none() && source.preset.is_none() {
        ModelParams::baseline(22200.0)
    } else {
        document_params(&load(source)?).map_err(Failure::Config)?
    };
    let p = p.validated_exploratory().map_err(Failure::config)?;

    let r0 = basic_offspring_number(&p);
    println!("basic offspring number R0      = {r0}");
    println!("ratio threshold theta_min      = {}", theta_min(&p));
    let (lo, hi) = total_male_gain_interval(&p);
    println!("total-male gain interval       = ({lo}, {hi})");
    println!(
        "wild-male gain minimum         = {}",
        wild_male_gain_min(&p)
    );
    match kappa_bar(&p) {
        Ok(bar) => println!("trap-region kappa_bar          = {bar}"),
        Err(_) => println!("trap-region kappa_bar          = n/a (R0 <= 1)"),
    }
    println!(
        "constant-release threshold U*  = {}",
        constant_release_threshold(&p)
    );
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(Failure::Config)
}

fn simulate_cmd(args: RunArgs) -> Result<(), Failure> {
    let mut doc = load(&args.source)?;
    apply_overrides(&mut doc, &args);
    let sc = doc
        .scenario
        .ok_or_else(|| Failure::Config(anyhow!("this command needs a [scenario] block")))?;
    ensure_out_dir(&args.out)?;

    let (report, traj) = match sc.design_params {
        None => run_scenario(&sc.scenario_config()).map_err(classify_experiment)?,
        Some(design) => run_mismatched_scenario(&sc, design)?,
    };

    let path = args.out.join("trajectory.csv");
    output::write_trajectory_csv(&path, &traj).map_err(Failure::Numeric)?;

    println!("samples recorded   : {}", traj.len());
    match report.intervention_time {
        Some(t) => println!("intervention time  : {t:.1} days (aquatic phase at K/100)"),
        None => println!("intervention time  : not reached within the horizon"),
    }
    println!("release integral   : {:.6e}", report.cost);
    let z = report.final_state;
    println!(
        "final state        : E={:.4e} M={:.4e} F={:.4e} Ms={:.4e}",
        z.eggs, z.males, z.females, z.sterile
    );
    if traj.clamped_steps > 0 {
        println!(
            "positivity clamp   : fired on {} step(s)",
            traj.clamped_steps
        );
    }
    if let Some(flags) = report.invariant_flags {
        println!(
            "trap region        : {}/{} samples inside (max excursion {:.3e})",
            flags.inside, flags.total, flags.max_excursion
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Simulation with distinct plant and design parameters. The feedback and a
/// symbolic persistence initial condition resolve against the design set.
fn run_mismatched_scenario(
    sc: &config::ScenarioDoc,
    design: ModelParams,
) -> Result<(ScenarioReport, Trajectory), Failure> {
    let truth = sc.params.validated_exploratory().map_err(Failure::config)?;
    let design = design.validated_exploratory().map_err(Failure::config)?;
    sc.controller.check_basic().map_err(Failure::config)?;
    let z0 = sc.initial.resolve(&design).map_err(Failure::config)?;
    let traj =
        simulate_mismatched(&truth, &design, &sc.controller, z0, &sc.integrator).map_err(|e| {
            match e {
                IntegrateError::NonFinite { .. } => Failure::Numeric(anyhow!(e)),
                _ => Failure::Config(anyhow!(e)),
            }
        })?;
    let invariant_flags = kappa_bar(&truth).ok().map(|bar| {
        let tol = 1e-7 * truth.capacity;
        let mut inside = 0;
        let mut max_excursion = f64::NEG_INFINITY;
        for z in &traj.states {
            if in_invariant_set(&truth, bar, z, tol) {
                inside += 1;
            }
            for h in boundary_functions(&truth, bar, z) {
                max_excursion = max_excursion.max(h);
            }
        }
        InvariantSummary {
            inside,
            total: traj.len(),
            max_excursion,
        }
    });
    let report = ScenarioReport {
        intervention_time: intervention_time(&traj, &truth),
        cost: control_cost(&traj),
        final_state: traj.final_state(),
        lyapunov_trace: None,
        invariant_flags,
    };
    Ok((report, traj))
}

fn compare_cmd(args: RunArgs) -> Result<(), Failure> {
    let mut doc = load(&args.source)?;
    apply_overrides(&mut doc, &args);
    let cmp = doc
        .comparison
        .ok_or_else(|| Failure::Config(anyhow!("this command needs a [comparison] block")))?;
    let p = cmp
        .params
        .validated_exploratory()
        .map_err(Failure::config)?;
    ensure_out_dir(&args.out)?;

    let rows = match cmp.kind {
        ComparisonKind::WildMales => wild_male_gain_table(&p, &cmp.gains),
        ComparisonKind::Backstepping => backstepping_ratio_table(
            &p,
            &cmp.gains,
            cmp.alpha.unwrap_or(80.0),
            cmp.beta_s.unwrap_or(1.0),
        ),
    }
    .map_err(classify_experiment)?;

    println!("{:>10} {:>12} {:>14}", "gain", "T_days", "cost");
    for row in &rows {
        let t = row
            .intervention_time
            .map(|t| format!("{t:.1}"))
            .unwrap_or_else(|| "-".into());
        let c = row
            .cost
            .map(|c| format!("{c:.4e}"))
            .unwrap_or_else(|| "-".into());
        println!("{:>10} {t:>12} {c:>14}", row.gain);
    }
    let path = args.out.join("comparison.csv");
    output::write_comparison_csv(&path, &rows).map_err(Failure::Numeric)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn robustness_cmd(args: RunArgs) -> Result<(), Failure> {
    let mut doc = load(&args.source)?;
    apply_overrides(&mut doc, &args);
    let rb = doc
        .robustness
        .ok_or_else(|| Failure::Config(anyhow!("this command needs a [robustness] block")))?;
    rb.design_params
        .validated_exploratory()
        .map_err(Failure::config)?;
    rb.controller.check_basic().map_err(Failure::config)?;
    rb.integrator.validate().map_err(Failure::config)?;
    if !rb.truth.is_within_published() {
        println!("note: sampling intervals extend beyond the published parameter ranges");
    }
    ensure_out_dir(&args.out)?;

    let runs = robustness_study(&rb.spec(), &rb.controller);
    let converged = runs
        .iter()
        .filter(|r| matches!(r.outcome, RunOutcome::Converged))
        .count();
    let failed = runs
        .iter()
        .filter(|r| matches!(r.outcome, RunOutcome::Failed(_)))
        .count();
    println!(
        "{} runs: {} converged, {} diverged, {} failed",
        runs.len(),
        converged,
        runs.len() - converged - failed,
        failed
    );
    output::write_robustness(&args.out, &runs).map_err(Failure::Numeric)?;
    println!(
        "wrote per-run traces and summary.csv under {}",
        args.out.display()
    );
    Ok(())
}

fn evidence_cmd(args: RunArgs) -> Result<(), Failure> {
    let mut doc = load(&args.source)?;
    apply_overrides(&mut doc, &args);
    let ev = doc
        .evidence
        .ok_or_else(|| Failure::Config(anyhow!("this command needs an [evidence] block")))?;
    let p = ev.params.validated_exploratory().map_err(Failure::config)?;
    ev.controller.check_basic().map_err(Failure::config)?;
    ev.integrator.validate().map_err(Failure::config)?;
    ensure_out_dir(&args.out)?;

    let runs = global_stability_evidence(
        &p,
        &ev.controller,
        ev.n_runs,
        ev.ic_box_upper,
        ev.seed,
        &ev.integrator,
    );
    let converged = runs.iter().filter(|r| r.converged).count();
    println!("{} runs: {} converged", runs.len(), converged);
    if converged < runs.len() {
        println!(
            "{} run(s) did not reach the extinction threshold: counterexample candidates",
            runs.len() - converged
        );
    }
    output::write_evidence(&args.out, &runs).map_err(Failure::Numeric)?;
    println!(
        "wrote per-run traces and summary.csv under {}",
        args.out.display()
    );
    Ok(())
}

fn certify_cmd(source: &Source, samples: Option<usize>, seed: Option<u64>) -> Result<(), Failure> {
    let doc = if source.config.is_none() && source.preset.is_none() {
        CertifyDoc {
            params: ModelParams::baseline(22200.0),
            samples: 1000,
            seed: 0,
            theta: None,
            alpha: None,
            beta_s: None,
            k: None,
            lambda: None,
        }
    } else {
        load(source)?
            .certify
            .ok_or_else(|| Failure::Config(anyhow!("this command needs a [certify] block")))?
    };
    let p: ModelParams = doc
        .params
        .validated_exploratory()
        .map_err(Failure::config)?;
    let defaults = CertifyGains::default();
    let gains = CertifyGains {
        theta: doc.theta.unwrap_or(defaults.theta),
        alpha: doc.alpha.unwrap_or(defaults.alpha),
        beta_s: doc.beta_s.unwrap_or(defaults.beta_s),
        k: doc.k.unwrap_or(defaults.k),
        lambda: doc.lambda.unwrap_or(defaults.lambda),
    };
    let samples = samples.unwrap_or(doc.samples);
    let seed = seed.unwrap_or(doc.seed);

    let results = certify_all(&p, &gains, seed, samples);
    let mut failures = 0;
    for r in &results {
        println!(
            "{}: {} — {}",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failures += usize::from(!r.pass);
    }
    if failures > 0 {
        return Err(Failure::Numeric(anyhow!(
            "{failures} certificate check(s) failed"
        )));
    }
    println!("all {} checks passed", results.len());
    Ok(())
}

// A validated-parameters error is a configuration problem, reused in a few
// places above through Failure::config.
impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Config(anyhow!(e))
    }
}
