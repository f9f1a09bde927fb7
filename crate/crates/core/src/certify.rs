//! Numerical verification suites for the certificates.
//!
//! Each check samples states (or integrates trajectories), compares against
//! the analytic claims, and returns a structured pass/fail result. The same
//! suite backs the command-line `certify` run and the acceptance tests.

use crate::certificates::{
    backstepping_tracking_derivative, backstepping_tracking_value, boundary_functions,
    decay_rate_c0, in_invariant_set, kappa_admissible, kappa_bar, ratio_proxy_derivative,
    ratio_proxy_value, sample_invariant_set, select_epsilon, sit_uncontrolled_derivative,
    sit_uncontrolled_value, weighted_linear_derivative, weighted_linear_value,
};
use crate::controller::{
    backstepping_raw, theta_min, total_male_gain_interval, wild_male_gain_min, Controller,
};
use crate::integrate::{simulate, IntegratorConfig};
use crate::model::{
    offspring_number_for_ratio, offspring_number_total_male_law, offspring_number_wild_male_law,
    ratio_proxy_vector_field, sit_rhs, ModelParams, State, WildState,
};
use crate::rng::CounterRng;

/// Outcome of one verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// Gains the suite verifies. Defaults are the headline study gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyGains {
    pub theta: f64,
    pub alpha: f64,
    pub beta_s: f64,
    pub k: f64,
    pub lambda: f64,
}

impl Default for CertifyGains {
    fn default() -> Self {
        Self {
            theta: 220.0,
            alpha: 13.0,
            beta_s: 1.0,
            k: 0.119,
            lambda: 22.0,
        }
    }
}

/// Runs every certificate check at `samples` random states per check.
pub fn certify_all(
    p: &ModelParams,
    gains: &CertifyGains,
    seed: u64,
    samples: usize,
) -> Vec<CheckResult> {
    vec![
        check_threshold_boundaries(p),
        check_gradient_sit_uncontrolled(p, seed ^ 0x11, samples),
        check_gradient_ratio_proxy(p, gains.theta, seed ^ 0x22, samples),
        check_gradient_backstepping(p, gains, seed ^ 0x33, samples),
        check_gradient_weighted_linear(p, gains.k, seed ^ 0x44, samples),
        check_decay_sit_uncontrolled(p, seed ^ 0x55, samples),
        check_decay_ratio_proxy(p, gains.theta, seed ^ 0x66, samples),
        check_decay_backstepping(p, gains, seed ^ 0x77, samples),
        check_decay_weighted_linear(p, gains.k, seed ^ 0x88, samples),
        check_invariance(
            p,
            &Controller::LinearTotalMales { gain: gains.k },
            seed ^ 0x99,
        ),
        check_invariance(
            p,
            &Controller::LinearWildMales { gain: gains.lambda },
            seed ^ 0xAA,
        ),
        check_region_nesting(p, seed ^ 0xBB, samples),
        check_backstepping_growth_bound(p, gains, seed ^ 0xCC),
    ]
}

/// Baseline rates with fecundity scaled to halve the basic offspring number;
/// the uncontrolled certificates require a subcritical population.
pub fn subcritical_variant(p: &ModelParams) -> ModelParams {
    let mut q = *p;
    q.beta_e = 0.5 * q.delta_f * (q.nu_e + q.delta_e) / (q.nu * q.nu_e);
    q
}

const GRADIENT_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;

fn rk4_step(f: &dyn Fn(&State) -> State, z: &State, h: f64) -> State {
    let k1 = f(z);
    let s2 = z.add_scaled(0.5 * h, &k1);
    let k2 = f(&s2);
    let s3 = z.add_scaled(0.5 * h, &k2);
    let k3 = f(&s3);
    let s4 = z.add_scaled(h, &k3);
    let k4 = f(&s4);
    State {
        eggs: z.eggs + h / 6.0 * (k1.eggs + 2.0 * k2.eggs + 2.0 * k3.eggs + k4.eggs),
        males: z.males + h / 6.0 * (k1.males + 2.0 * k2.males + 2.0 * k3.males + k4.males),
        females: z.females
            + h / 6.0 * (k1.females + 2.0 * k2.females + 2.0 * k3.females + k4.females),
        sterile: z.sterile
            + h / 6.0 * (k1.sterile + 2.0 * k2.sterile + 2.0 * k3.sterile + k4.sterile),
    }
}

fn rk4_step_wild(f: &dyn Fn(&WildState) -> WildState, x: &WildState, h: f64) -> WildState {
    let k1 = f(x);
    let s2 = x.add_scaled(0.5 * h, &k1);
    let k2 = f(&s2);
    let s3 = x.add_scaled(0.5 * h, &k2);
    let k3 = f(&s3);
    let s4 = x.add_scaled(h, &k3);
    let k4 = f(&s4);
    WildState {
        eggs: x.eggs + h / 6.0 * (k1.eggs + 2.0 * k2.eggs + 2.0 * k3.eggs + k4.eggs),
        males: x.males + h / 6.0 * (k1.males + 2.0 * k2.males + 2.0 * k3.males + k4.males),
        females: x.females
            + h / 6.0 * (k1.females + 2.0 * k2.females + 2.0 * k3.females + k4.females),
    }
}

/// Relative gap between an analytic derivative and the central difference of
/// the value composed with a short flow step.
fn relative_gap(analytic: f64, fd: f64, value_scale: f64) -> f64 {
    let floor = 1e-12 * (1.0 + value_scale.abs());
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor)
}

/// Fourth-order central difference of `value` along the flow. The linear
/// certificates combine large cancelling terms, so the second-order stencil
/// is not accurate enough at study scale.
fn flow_derivative_fd(
    value: &dyn Fn(&State) -> f64,
    flow: &dyn Fn(&State) -> State,
    z: &State,
    h: f64,
) -> f64 {
    let v_p1 = value(&rk4_step(flow, z, h));
    let v_m1 = value(&rk4_step(flow, z, -h));
    let v_p2 = value(&rk4_step(flow, z, 2.0 * h));
    let v_m2 = value(&rk4_step(flow, z, -2.0 * h));
    (8.0 * (v_p1 - v_m1) - (v_p2 - v_m2)) / (12.0 * h)
}

fn flow_derivative_fd_wild(
    value: &dyn Fn(&WildState) -> f64,
    flow: &dyn Fn(&WildState) -> WildState,
    x: &WildState,
    h: f64,
) -> f64 {
    let v_p1 = value(&rk4_step_wild(flow, x, h));
    let v_m1 = value(&rk4_step_wild(flow, x, -h));
    let v_p2 = value(&rk4_step_wild(flow, x, 2.0 * h));
    let v_m2 = value(&rk4_step_wild(flow, x, -2.0 * h));
    (8.0 * (v_p1 - v_m1) - (v_p2 - v_m2)) / (12.0 * h)
}

fn sample_state(rng: &mut CounterRng, scale: f64) -> State {
    // Alternate study-scale and small-scale states to exercise both regimes.
    let magnitude = if rng.uniform() < 0.5 {
        scale
    } else {
        scale * 10f64.powf(rng.uniform_in(-6.0, 0.0))
    };
    State {
        eggs: rng.uniform_in(0.0, magnitude),
        males: rng.uniform_in(0.0, magnitude),
        females: rng.uniform_in(0.0, magnitude),
        sterile: rng.uniform_in(0.0, magnitude),
    }
}

fn check_threshold_boundaries(p: &ModelParams) -> CheckResult {
    let name = "boundary-thresholds";
    let r_at_theta = offspring_number_for_ratio(p, theta_min(p));
    let (k_lo, _) = total_male_gain_interval(p);
    let r1 = offspring_number_total_male_law(p, k_lo);
    let r2 = offspring_number_wild_male_law(p, wild_male_gain_min(p));
    let worst = (r_at_theta - 1.0)
        .abs()
        .max((r1 - 1.0).abs())
        .max((r2 - 1.0).abs());
    CheckResult::new(
        name,
        worst <= 1e-9,
        format!("offspring numbers at the three gain thresholds deviate from 1 by {worst:.3e}"),
    )
}

fn check_gradient_sit_uncontrolled(p: &ModelParams, seed: u64, samples: usize) -> CheckResult {
    let q = subcritical_variant(p);
    let flow = |z: &State| sit_rhs(&q, z, 0.0);
    let mut rng = CounterRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = sample_state(&mut rng, 10.0 * q.capacity);
        let analytic = sit_uncontrolled_derivative(&q, &z).unwrap();
        let value = |s: &State| sit_uncontrolled_value(&q, s).unwrap();
        let fd = flow_derivative_fd(&value, &flow, &z, FD_STEP);
        worst = worst.max(relative_gap(analytic, fd, value(&z)));
    }
    CheckResult::new(
        "gradient-sit-uncontrolled",
        worst <= GRADIENT_TOL,
        format!("max relative analytic/finite-difference gap {worst:.3e} over {samples} states"),
    )
}

fn check_gradient_ratio_proxy(
    p: &ModelParams,
    theta: f64,
    seed: u64,
    samples: usize,
) -> CheckResult {
    let flow = |x: &WildState| ratio_proxy_vector_field(p, theta, x);
    let mut rng = CounterRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = sample_state(&mut rng, 10.0 * p.capacity);
        let x = z.wild();
        let analytic = ratio_proxy_derivative(p, theta, &x).unwrap();
        let value = |s: &WildState| ratio_proxy_value(p, theta, s).unwrap();
        let fd = flow_derivative_fd_wild(&value, &flow, &x, FD_STEP);
        worst = worst.max(relative_gap(analytic, fd, value(&x)));
    }
    CheckResult::new(
        "gradient-ratio-proxy",
        worst <= GRADIENT_TOL,
        format!("max relative analytic/finite-difference gap {worst:.3e} over {samples} states"),
    )
}

fn check_gradient_backstepping(
    p: &ModelParams,
    gains: &CertifyGains,
    seed: u64,
    samples: usize,
) -> CheckResult {
    let (theta, alpha, beta_s) = (gains.theta, gains.alpha, gains.beta_s);
    let controller = Controller::Backstepping {
        theta,
        alpha,
        beta_s,
    };
    let flow = move |z: &State| sit_rhs(p, z, controller.evaluate(p, z));
    let mut rng = CounterRng::new(seed);
    let mut worst = 0.0f64;
    let mut taken = 0;
    while taken < samples {
        let z = sample_state(&mut rng, 10.0 * p.capacity);
        if z.males + z.sterile <= 0.0 {
            continue;
        }
        // The release is clipped at zero; skip states close enough to the
        // switching surface for the stencil to straddle it.
        let raw = backstepping_raw(p, theta, alpha, beta_s, &z);
        if raw.abs() <= 0.01 * (1.0 + z.norm_max()) {
            continue;
        }
        taken += 1;
        let analytic = backstepping_tracking_derivative(p, theta, alpha, beta_s, &z).unwrap();
        let value = |s: &State| backstepping_tracking_value(p, theta, alpha, s).unwrap();
        let fd = flow_derivative_fd(&value, &flow, &z, FD_STEP);
        worst = worst.max(relative_gap(analytic, fd, value(&z)));
    }
    CheckResult::new(
        "gradient-backstepping-tracking",
        worst <= GRADIENT_TOL,
        format!("max relative analytic/finite-difference gap {worst:.3e} over {samples} states"),
    )
}

fn check_gradient_weighted_linear(
    p: &ModelParams,
    k: f64,
    seed: u64,
    samples: usize,
) -> CheckResult {
    let name = "gradient-weighted-linear";
    let bar = match kappa_bar(p) {
        Ok(bar) => bar,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    let epsilon = 0.5;
    let flow = move |z: &State| sit_rhs(p, z, k * (z.males + z.sterile));
    let mut rng = CounterRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = sample_invariant_set(p, bar, &mut rng);
        let analytic = weighted_linear_derivative(p, k, epsilon, &z).unwrap();
        let value = |s: &State| weighted_linear_value(p, epsilon, s).unwrap();
        let fd = flow_derivative_fd(&value, &flow, &z, FD_STEP);
        worst = worst.max(relative_gap(analytic, fd, value(&z)));
    }
    CheckResult::new(
        name,
        worst <= GRADIENT_TOL,
        format!("max relative analytic/finite-difference gap {worst:.3e} over {samples} states"),
    )
}

fn check_decay_sit_uncontrolled(p: &ModelParams, seed: u64, samples: usize) -> CheckResult {
    let q = subcritical_variant(p);
    let c0 = decay_rate_c0(&q).unwrap();
    let mut rng = CounterRng::new(seed);
    let mut inf_rate = f64::INFINITY;
    let mut pass = true;
    for _ in 0..samples {
        let mut z = sample_state(&mut rng, 10.0 * q.capacity);
        if z.males + z.sterile <= 0.0 {
            z.males = 1.0;
        }
        let v = sit_uncontrolled_value(&q, &z).unwrap();
        if v == 0.0 {
            continue;
        }
        let dv = sit_uncontrolled_derivative(&q, &z).unwrap();
        pass &= dv <= -c0 * v * (1.0 - 1e-12);
        inf_rate = inf_rate.min(-dv / v);
    }
    CheckResult::new(
        "decay-sit-uncontrolled",
        pass,
        format!("inf -dV/V = {inf_rate:.6} against guaranteed rate {c0:.6}"),
    )
}

fn check_decay_ratio_proxy(p: &ModelParams, theta: f64, seed: u64, samples: usize) -> CheckResult {
    let mut rng = CounterRng::new(seed);
    let mut pass = offspring_number_for_ratio(p, theta) < 1.0;
    let mut inf_rate = f64::INFINITY;
    for _ in 0..samples {
        let z = sample_state(&mut rng, 10.0 * p.capacity);
        let x = z.wild();
        if x.norm_max() == 0.0 {
            continue;
        }
        let v = ratio_proxy_value(p, theta, &x).unwrap();
        let dv = ratio_proxy_derivative(p, theta, &x).unwrap();
        pass &= dv < 0.0;
        inf_rate = inf_rate.min(-dv / v);
    }
    CheckResult::new(
        "decay-ratio-proxy",
        pass,
        format!("derivative negative off extinction; inf -dV/V = {inf_rate:.6}"),
    )
}

fn check_decay_backstepping(
    p: &ModelParams,
    gains: &CertifyGains,
    seed: u64,
    samples: usize,
) -> CheckResult {
    let mut rng = CounterRng::new(seed);
    let mut pass = offspring_number_for_ratio(p, gains.theta) < 1.0;
    let mut inf_rate = f64::INFINITY;
    let mut taken = 0;
    while taken < samples {
        let z = sample_state(&mut rng, 10.0 * p.capacity);
        if z.males + z.sterile <= 0.0 {
            continue;
        }
        taken += 1;
        let w = backstepping_tracking_value(p, gains.theta, gains.alpha, &z).unwrap();
        let dw = backstepping_tracking_derivative(p, gains.theta, gains.alpha, gains.beta_s, &z)
            .unwrap();
        pass &= dw < 0.0;
        inf_rate = inf_rate.min(-dw / w);
    }
    CheckResult::new(
        "decay-backstepping-tracking",
        pass,
        format!("derivative negative off extinction; inf -dW/W = {inf_rate:.6}"),
    )
}

fn check_decay_weighted_linear(p: &ModelParams, k: f64, seed: u64, samples: usize) -> CheckResult {
    let name = "decay-weighted-linear";
    let bar = match kappa_bar(p) {
        Ok(bar) => bar,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    // Strictly inside the admissible kappa window, as the decay lemma needs.
    let kappa = 0.5 * ((p.delta_s - k) / k + bar);
    if !kappa_admissible(p, k, kappa) {
        return CheckResult::new(
            name,
            false,
            format!("kappa {kappa} inadmissible for gain {k}"),
        );
    }
    let (epsilon, margin) = match select_epsilon(p, k, kappa, seed, 400) {
        Ok(found) => found,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    let mut rng = CounterRng::new(seed ^ 0x5A5A);
    let mut pass = true;
    let mut inf_rate = f64::INFINITY;
    for _ in 0..samples {
        let z = sample_invariant_set(p, kappa, &mut rng);
        let u = weighted_linear_value(p, epsilon, &z).unwrap();
        if u <= 1e-12 * p.capacity {
            continue;
        }
        let du = weighted_linear_derivative(p, k, epsilon, &z).unwrap();
        pass &= du < 0.0;
        inf_rate = inf_rate.min(-du / u);
    }
    CheckResult::new(
        name,
        pass && inf_rate > 0.0,
        format!(
            "epsilon {epsilon:.4} decays at rate >= {inf_rate:.3e} (search margin {margin:.3e})"
        ),
    )
}

/// Trajectory-level positive invariance of `M(kappa_bar)` under a feedback
/// law: 100 runs from random interior points must stay inside up to
/// `1e-7 * K`.
fn check_invariance(p: &ModelParams, controller: &Controller, seed: u64) -> CheckResult {
    let label = match controller {
        Controller::LinearTotalMales { .. } => "invariance-total-male-law",
        Controller::LinearWildMales { .. } => "invariance-wild-male-law",
        _ => "invariance",
    };
    match invariance_excursion(p, controller, seed, 100, 150.0) {
        Ok(max_excursion) => {
            let tol = 1e-7 * p.capacity;
            CheckResult::new(
                label,
                max_excursion <= tol,
                format!("max boundary excursion {max_excursion:.3e} (tolerance {tol:.3e}) over 100 runs"),
            )
        }
        Err(detail) => CheckResult::new(label, false, detail),
    }
}

/// Worst positive excursion of the three boundary functions along sampled
/// closed-loop trajectories started inside `M(kappa_bar)`.
pub fn invariance_excursion(
    p: &ModelParams,
    controller: &Controller,
    seed: u64,
    runs: usize,
    t_final: f64,
) -> Result<f64, String> {
    let bar = kappa_bar(p).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig::with_stride(t_final, 10);
    let mut rng = CounterRng::new(seed);
    let mut max_excursion = f64::NEG_INFINITY;
    for _ in 0..runs {
        let z0 = sample_invariant_set(p, bar, &mut rng);
        let traj = simulate(p, controller, z0, &cfg).map_err(|e| e.to_string())?;
        for z in &traj.states {
            for h in boundary_functions(p, bar, z) {
                max_excursion = max_excursion.max(h);
            }
        }
    }
    Ok(max_excursion)
}

fn check_region_nesting(p: &ModelParams, seed: u64, samples: usize) -> CheckResult {
    let name = "trap-region-nesting";
    let bar = match kappa_bar(p) {
        Ok(bar) => bar,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    let mut rng = CounterRng::new(seed);
    let mut pass = true;
    for _ in 0..samples {
        let small = rng.uniform_in(0.2 * bar, bar);
        let large = rng.uniform_in(small, bar);
        let z = sample_invariant_set(p, small, &mut rng);
        pass &= in_invariant_set(p, small, &z, 0.0);
        pass &= in_invariant_set(p, large.max(small), &z, 0.0);
    }
    CheckResult::new(
        name,
        pass,
        format!("membership monotone in kappa over {samples} draws"),
    )
}

fn check_backstepping_growth_bound(
    p: &ModelParams,
    gains: &CertifyGains,
    seed: u64,
) -> CheckResult {
    let c = Controller::Backstepping {
        theta: gains.theta,
        alpha: gains.alpha,
        beta_s: gains.beta_s,
    };
    let mut rng = CounterRng::new(seed);
    let mut pass = true;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let z = sample_state(&mut rng, p.capacity);
        if z.males + z.sterile <= 0.0 {
            continue;
        }
        let u1 = c.evaluate(p, &z);
        for exp in [-40, -20, -10, -4, 2] {
            let t = (2.0f64).powi(exp);
            let zt = State::new(t * z.eggs, t * z.males, t * z.females, t * z.sterile);
            let ratio = c.evaluate(p, &zt) / t;
            let gap = (ratio - u1).abs() / u1.abs().max(1e-300);
            worst = worst.max(gap);
            pass &= gap <= 1e-9;
        }
    }
    CheckResult::new(
        "growth-bound-backstepping",
        pass,
        format!("release scales linearly along rays; max relative drift {worst:.3e}"),
    )
}
