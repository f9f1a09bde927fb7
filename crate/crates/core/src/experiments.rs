//! Experiment harness: single scenarios, gain sweeps for the comparison
//! tables, the mismatched-parameter robustness protocol, and basin-of-
//! attraction evidence runs.
//!
//! Every stochastic study draws from the counter-based generator in
//! [`crate::rng`]; run `i` of a study seeded with `s` uses the stream keyed
//! by `s ^ i`, so results are independent of execution order and thread
//! count. Runs execute in parallel through rayon.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{
    backstepping_tracking_value, in_invariant_set, kappa_bar, sit_uncontrolled_value,
};
use crate::controller::{Controller, GainError};
use crate::integrate::{
    control_cost, control_cost_until, intervention_time, simulate, simulate_mismatched,
    IntegrateError, IntegratorConfig, Trajectory,
};
use crate::model::{
    basic_offspring_number, offspring_number_for_ratio, persistence_equilibrium, ModelError,
    ModelParams, State,
};
use crate::rng::CounterRng;

/// Wild population (E+M+F) below this fraction of the carrying capacity
/// counts as converged to extinction.
pub const CONVERGENCE_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Initial state of a scenario: either the positive steady state of the
/// uncontrolled system (sterile pool empty) or an explicit state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    Persistence,
    Explicit {
        eggs: f64,
        males: f64,
        females: f64,
        sterile: f64,
    },
}

impl InitialCondition {
    pub fn resolve(&self, p: &ModelParams) -> Result<State, ModelError> {
        match *self {
            InitialCondition::Persistence => Ok(persistence_equilibrium(p)?.state),
            InitialCondition::Explicit {
                eggs,
                males,
                females,
                sterile,
            } => Ok(State {
                eggs,
                males,
                females,
                sterile,
            }),
        }
    }
}

/// One fully specified run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: ModelParams,
    pub controller: Controller,
    pub initial: InitialCondition,
    pub integrator: IntegratorConfig,
    /// Carried for reproducibility bookkeeping; single scenarios are
    /// deterministic and do not draw from it.
    pub seed: u64,
}

/// Per-sample membership summary for the trapping region `M(kappa_bar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub inside: usize,
    pub total: usize,
    /// Largest positive boundary-function excursion seen over the samples.
    pub max_excursion: f64,
}

/// Metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    /// First time the aquatic compartment reaches K/100, if it does.
    pub intervention_time: Option<f64>,
    /// Release integral over the full recorded span.
    pub cost: f64,
    pub final_state: State,
    /// Trace of the natural certificate for the law, when one applies.
    pub lyapunov_trace: Option<Vec<f64>>,
    /// Membership summary for `M(kappa_bar)`, when the region is defined.
    pub invariant_flags: Option<InvariantSummary>,
}

pub fn run_scenario(sc: &ScenarioConfig) -> Result<(ScenarioReport, Trajectory), ExperimentError> {
    let p = sc.params.validated_exploratory()?;
    sc.controller.check_basic()?;
    let z0 = sc.initial.resolve(&p)?;
    let traj = simulate(&p, &sc.controller, z0, &sc.integrator)?;

    let lyapunov_trace = match sc.controller {
        Controller::Backstepping { theta, alpha, .. }
            if offspring_number_for_ratio(&p, theta) < 1.0 =>
        {
            Some(
                traj.states
                    .iter()
                    .map(|z| backstepping_tracking_value(&p, theta, alpha, z).expect("checked"))
                    .collect(),
            )
        }
        Controller::Constant { rate } if rate == 0.0 && basic_offspring_number(&p) < 1.0 => Some(
            traj.states
                .iter()
                .map(|z| sit_uncontrolled_value(&p, z).expect("checked"))
                .collect(),
        ),
        _ => None,
    };

    let invariant_flags = kappa_bar(&p).ok().map(|bar| {
        let tol = 1e-7 * p.capacity;
        let mut inside = 0;
        let mut max_excursion = f64::NEG_INFINITY;
        for z in &traj.states {
            if in_invariant_set(&p, bar, z, tol) {
                inside += 1;
            }
            for h in crate::certificates::boundary_functions(&p, bar, z) {
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
        intervention_time: intervention_time(&traj, &p),
        cost: control_cost(&traj),
        final_state: traj.final_state(),
        lyapunov_trace,
        invariant_flags,
    };
    Ok((report, traj))
}

/// Per-parameter uniform sampling intervals for the robustness protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRanges {
    pub beta_e: (f64, f64),
    pub nu_e: (f64, f64),
    pub delta_e: (f64, f64),
    pub delta_f: (f64, f64),
    pub delta_m: (f64, f64),
    pub delta_s: (f64, f64),
    pub gamma_s: (f64, f64),
}

impl ParamRanges {
    /// The published field ranges the study perturbs over.
    pub fn published() -> Self {
        Self {
            beta_e: (7.46, 14.85),
            nu_e: (0.005, 0.25),
            delta_e: (0.023, 0.046),
            delta_f: (0.033, 0.046),
            delta_m: (0.077, 0.139),
            delta_s: (0.077, 0.139),
            gamma_s: (0.5, 1.0),
        }
    }

    pub fn is_within_published(&self) -> bool {
        let pb = Self::published();
        let inside = |(lo, hi): (f64, f64), (plo, phi): (f64, f64)| lo >= plo && hi <= phi;
        inside(self.beta_e, pb.beta_e)
            && inside(self.nu_e, pb.nu_e)
            && inside(self.delta_e, pb.delta_e)
            && inside(self.delta_f, pb.delta_f)
            && inside(self.delta_m, pb.delta_m)
            && inside(self.delta_s, pb.delta_s)
            && inside(self.gamma_s, pb.gamma_s)
    }

    /// Draw order is fixed (beta_e, nu_e, delta_e, delta_f, delta_m,
    /// delta_s, gamma_s) so streams replay across implementations.
    pub fn sample(&self, base: &ModelParams, rng: &mut CounterRng) -> ModelParams {
        ModelParams {
            beta_e: rng.uniform_in(self.beta_e.0, self.beta_e.1),
            nu_e: rng.uniform_in(self.nu_e.0, self.nu_e.1),
            delta_e: rng.uniform_in(self.delta_e.0, self.delta_e.1),
            delta_f: rng.uniform_in(self.delta_f.0, self.delta_f.1),
            delta_m: rng.uniform_in(self.delta_m.0, self.delta_m.1),
            delta_s: rng.uniform_in(self.delta_s.0, self.delta_s.1),
            gamma_s: rng.uniform_in(self.gamma_s.0, self.gamma_s.1),
            nu: base.nu,
            capacity: base.capacity,
        }
    }
}

/// Monte-Carlo robustness protocol: the controller keeps the gains it was
/// designed with, the plant runs under parameters drawn per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSpec {
    pub design_params: ModelParams,
    pub truth: ParamRanges,
    pub n_runs: usize,
    /// Initial conditions are drawn uniformly from [0, upper * K]^4.
    pub ic_box_upper: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    Converged,
    Diverged,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRun {
    pub index: usize,
    pub truth_params: ModelParams,
    pub initial: State,
    /// (t, log10(E+M+F)) at the recorded samples.
    pub log_total_trace: Vec<(f64, f64)>,
    pub final_wild_total: f64,
    pub outcome: RunOutcome,
}

pub fn robustness_study(spec: &RobustnessSpec, controller: &Controller) -> Vec<RobustnessRun> {
    (0..spec.n_runs)
        .into_par_iter()
        .map(|index| {
            let mut rng = CounterRng::for_run(spec.seed, index as u64);
            let truth = spec.truth.sample(&spec.design_params, &mut rng);
            let upper = spec.ic_box_upper * spec.design_params.capacity;
            let initial = State {
                eggs: rng.uniform_in(0.0, upper),
                males: rng.uniform_in(0.0, upper),
                females: rng.uniform_in(0.0, upper),
                sterile: rng.uniform_in(0.0, upper),
            };
            match simulate_mismatched(
                &truth,
                &spec.design_params,
                controller,
                initial,
                &spec.integrator,
            ) {
                Ok(traj) => {
                    let final_wild_total = traj.final_state().wild_total();
                    let threshold = CONVERGENCE_FRACTION * spec.design_params.capacity;
                    RobustnessRun {
                        index,
                        truth_params: truth,
                        initial,
                        log_total_trace: log_total_trace(&traj),
                        final_wild_total,
                        outcome: if final_wild_total < threshold {
                            RunOutcome::Converged
                        } else {
                            RunOutcome::Diverged
                        },
                    }
                }
                Err(err) => RobustnessRun {
                    index,
                    truth_params: truth,
                    initial,
                    log_total_trace: Vec::new(),
                    final_wild_total: f64::NAN,
                    outcome: RunOutcome::Failed(err.to_string()),
                },
            }
        })
        .collect()
}

fn log_total_trace(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, z)| (t, z.wild_total().max(1e-300).log10()))
        .collect()
}

/// The hand-picked parameter shift that destabilizes the total-male law:
/// returns (design parameters, shifted plant parameters). The gain interval
/// of the design admits k = 0.119, but the shifted plant's closed-loop
/// offspring number at that gain is far above 1.
pub fn destabilizing_shift(capacity: f64) -> (ModelParams, ModelParams) {
    let design = ModelParams {
        beta_e: 8.0,
        ..ModelParams::baseline(capacity)
    };
    let truth = ModelParams {
        beta_e: 11.0,
        nu_e: 0.08,
        delta_e: 0.046,
        delta_f: 0.033,
        delta_m: 0.12,
        delta_s: 0.139,
        ..design
    };
    (design, truth)
}

/// One row of a gain-sweep comparison table. Times are reported at 0.1-day
/// resolution; the cost integrates the release only up to the intervention
/// time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub gain: f64,
    pub intervention_time: Option<f64>,
    pub cost: Option<f64>,
}

fn sweep_rows(
    p: &ModelParams,
    gains: &[f64],
    make: impl Fn(f64) -> Controller + Sync,
    cfg: &IntegratorConfig,
) -> Result<Vec<ComparisonRow>, ExperimentError> {
    let z0 = persistence_equilibrium(p)?.state;
    gains
        .par_iter()
        .map(|&gain| {
            let controller = make(gain);
            controller.check_basic()?;
            let traj = simulate(p, &controller, z0, cfg)?;
            let t = intervention_time(&traj, p);
            Ok(ComparisonRow {
                gain,
                intervention_time: t.map(|t| (t * 10.0).round() / 10.0),
                cost: t.map(|t| control_cost_until(&traj, t)),
            })
        })
        .collect()
}

/// Intervention time and cost-to-intervention for each wild-male gain,
/// starting from the persistence equilibrium.
pub fn wild_male_gain_table(
    p: &ModelParams,
    gains: &[f64],
) -> Result<Vec<ComparisonRow>, ExperimentError> {
    // The horizon covers the slow near-critical gains of the study grid.
    let cfg = IntegratorConfig::with_stride(3400.0, 10);
    sweep_rows(p, gains, |gain| Controller::LinearWildMales { gain }, &cfg)
}

/// Intervention time and cost-to-intervention for each backstepping ratio
/// at fixed `alpha` and `beta_s`.
pub fn backstepping_ratio_table(
    p: &ModelParams,
    thetas: &[f64],
    alpha: f64,
    beta_s: f64,
) -> Result<Vec<ComparisonRow>, ExperimentError> {
    let cfg = IntegratorConfig::with_stride(900.0, 10);
    sweep_rows(
        p,
        thetas,
        |theta| Controller::Backstepping {
            theta,
            alpha,
            beta_s,
        },
        &cfg,
    )
}

/// Basin-of-attraction evidence run: trajectory of the total population
/// 1-norm from one random initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRun {
    pub index: usize,
    pub initial: State,
    /// (t, |z|_1) at the recorded samples.
    pub trace: Vec<(f64, f64)>,
    pub final_wild_total: f64,
    /// Wild population reached the extinction threshold by the horizon.
    /// A `false` here is a counterexample candidate for global stability.
    pub converged: bool,
}

pub fn global_stability_evidence(
    p: &ModelParams,
    controller: &Controller,
    n_runs: usize,
    ic_box_upper: f64,
    seed: u64,
    cfg: &IntegratorConfig,
) -> Vec<EvidenceRun> {
    (0..n_runs)
        .into_par_iter()
        .map(|index| {
            let mut rng = CounterRng::for_run(seed, index as u64);
            let upper = ic_box_upper * p.capacity;
            let initial = State {
                eggs: rng.uniform_in(0.0, upper),
                males: rng.uniform_in(0.0, upper),
                females: rng.uniform_in(0.0, upper),
                sterile: rng.uniform_in(0.0, upper),
            };
            match simulate(p, controller, initial, cfg) {
                Ok(traj) => {
                    let final_wild_total = traj.final_state().wild_total();
                    EvidenceRun {
                        index,
                        initial,
                        trace: traj
                            .times
                            .iter()
                            .zip(&traj.states)
                            .map(|(&t, z)| (t, z.norm_l1()))
                            .collect(),
                        final_wild_total,
                        converged: final_wild_total < CONVERGENCE_FRACTION * p.capacity,
                    }
                }
                Err(_) => EvidenceRun {
                    index,
                    initial,
                    trace: Vec::new(),
                    final_wild_total: f64::NAN,
                    converged: false,
                },
            }
        })
        .collect()
}
