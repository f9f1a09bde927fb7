//! Lyapunov certificates and positively invariant sets.
//!
//! Each certificate is a non-negative function that vanishes only at
//! extinction and decreases along the flow it certifies:
//!
//! * `SitUncontrolled` — linear certificate for the released-free system,
//!   valid when the basic offspring number is below 1, with explicit decay
//!   rate [`decay_rate_c0`].
//! * `WildUncontrolled` — same weights restricted to (E, M, F).
//! * `RatioProxy` — linear certificate for the system in which the sterile
//!   pool is slaved to `Ms = theta * M`.
//! * `BacksteppingTracking` — the ratio-proxy certificate plus the penalty
//!   `alpha (theta M - Ms)^2 / (theta M + Ms)` that the backstepping law is
//!   built to dissipate.
//! * `WeightedLinear` / `EggFemalePair` — weighted-linear certificates for
//!   the total-male feedback loop, decreasing on the trapping region
//!   `M(kappa)` (below).
//!
//! The trapping region `M(kappa)` is the intersection of three half-space
//! style conditions with boundary functions [`boundary_functions`]:
//! egg production at most egg outflow, `M <= kappa * Ms`, and male
//! recruitment at most male mortality. For admissible `kappa` it is
//! positively invariant under `u = k (M + Ms)` and, via the gain/death-rate
//! substitution, under `u = lambda * M` as well.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::backstepping_raw;
use crate::model::{
    basic_offspring_number, mating_fraction, offspring_number_for_ratio, ModelParams, State,
    WildState,
};
use crate::rng::CounterRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("certificate requires a subcritical basic offspring number (got {0})")]
    SupercriticalOffspring(f64),
    #[error("certificate requires a supercritical basic offspring number (got {0})")]
    SubcriticalOffspring(f64),
    #[error("certificate requires a suppressing ratio: offspring number at theta={theta} is {r}")]
    RatioNotSuppressing { theta: f64, r: f64 },
    #[error("epsilon must lie in (0, 1] (got {0})")]
    EpsilonOutOfRange(f64),
    #[error("state outside the trapping region: boundary values ({0:.3e}, {1:.3e}, {2:.3e})")]
    OffDomain(f64, f64, f64),
    #[error("derivative context does not match the certificate kind")]
    ContextMismatch,
    #[error("no decaying epsilon found (best margin {margin} at epsilon {epsilon})")]
    NoDecayMargin { epsilon: f64, margin: f64 },
}

/// Which certificate to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LyapunovKind {
    SitUncontrolled,
    WildUncontrolled,
    RatioProxy { theta: f64 },
    BacksteppingTracking { theta: f64, alpha: f64 },
    WeightedLinear { epsilon: f64 },
    EggFemalePair,
}

/// Which closed-loop flow a derivative is taken along.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowContext {
    /// The four-compartment system with `u = 0`.
    SitUncontrolled,
    /// The three-compartment system with `u` absent.
    WildUncontrolled,
    /// The ratio-proxy system (sterile pool slaved to `theta * M`).
    RatioProxy,
    /// The backstepping closed loop; `beta_s` completes the gain set.
    Backstepping { beta_s: f64 },
    /// The total-male feedback loop restricted to the region `M(kappa)`.
    TotalMaleLaw { k: f64, kappa: f64 },
}

fn subcritical_weights(p: &ModelParams) -> Result<(f64, f64), CertificateError> {
    let r0 = basic_offspring_number(p);
    if r0 >= 1.0 {
        return Err(CertificateError::SupercriticalOffspring(r0));
    }
    Ok((
        (1.0 + r0) / (1.0 - r0),
        2.0 * p.beta_e / (p.delta_f * (1.0 - r0)),
    ))
}

fn ratio_weights(p: &ModelParams, theta: f64) -> Result<(f64, f64), CertificateError> {
    let r = offspring_number_for_ratio(p, theta);
    if r >= 1.0 {
        return Err(CertificateError::RatioNotSuppressing { theta, r });
    }
    Ok((
        (1.0 + r) / (1.0 - r),
        2.0 * p.beta_e / (p.delta_f * (1.0 - r)),
    ))
}

/// Certificate for the uncontrolled four-compartment system
/// (`(1+R0)/(1-R0) E + 2 beta_e/(delta_f (1-R0)) F + M + Ms`).
pub fn sit_uncontrolled_value(p: &ModelParams, z: &State) -> Result<f64, CertificateError> {
    let (a, b) = subcritical_weights(p)?;
    Ok(a * z.eggs + b * z.females + z.males + z.sterile)
}

/// Its derivative along the `u = 0` flow. The sterile-pressure term uses
/// `1 - mating_fraction`, which extends continuously to 1 on the no-males
/// face where the fraction is defined as 0.
pub fn sit_uncontrolled_derivative(p: &ModelParams, z: &State) -> Result<f64, CertificateError> {
    let (a, b) = subcritical_weights(p)?;
    let sterile_share = 1.0 - mating_fraction(p, z.males, z.sterile);
    Ok(-(p.nu * p.nu_e + p.delta_e) * z.eggs
        - p.beta_e / p.capacity * a * z.females * z.eggs
        - p.delta_m * z.males
        - p.beta_e * z.females
        - p.delta_s * z.sterile
        - b * p.nu * p.nu_e * sterile_share * z.eggs)
}

/// Restriction of the uncontrolled certificate to the wild system.
pub fn wild_uncontrolled_value(p: &ModelParams, x: &WildState) -> Result<f64, CertificateError> {
    let (a, b) = subcritical_weights(p)?;
    Ok(a * x.eggs + b * x.females + x.males)
}

pub fn wild_uncontrolled_derivative(
    p: &ModelParams,
    x: &WildState,
) -> Result<f64, CertificateError> {
    let (a, _) = subcritical_weights(p)?;
    Ok(-(p.nu * p.nu_e + p.delta_e) * x.eggs
        - p.beta_e / p.capacity * a * x.females * x.eggs
        - p.delta_m * x.males
        - p.beta_e * x.females)
}

/// Certificate for the ratio-proxy system.
pub fn ratio_proxy_value(
    p: &ModelParams,
    theta: f64,
    x: &WildState,
) -> Result<f64, CertificateError> {
    let (a, b) = ratio_weights(p, theta)?;
    Ok(a * x.eggs + x.males + b * x.females)
}

/// Its derivative along the ratio-proxy flow: a sum of non-positive terms
/// that vanishes only at extinction.
pub fn ratio_proxy_derivative(
    p: &ModelParams,
    theta: f64,
    x: &WildState,
) -> Result<f64, CertificateError> {
    let (a, _) = ratio_weights(p, theta)?;
    Ok(-p.beta_e * x.females
        - p.delta_m * x.males
        - a * p.beta_e / p.capacity * x.females * x.eggs
        - (p.nu * p.nu_e + p.delta_e) * x.eggs)
}

/// Ratio-proxy certificate plus the sterile-tracking penalty
/// `alpha (theta M - Ms)^2 / (theta M + Ms)`, extended by continuity with
/// penalty 0 on the no-males face.
pub fn backstepping_tracking_value(
    p: &ModelParams,
    theta: f64,
    alpha: f64,
    z: &State,
) -> Result<f64, CertificateError> {
    let base = ratio_proxy_value(p, theta, &z.wild())?;
    if z.males + z.sterile <= 0.0 {
        return Ok(base);
    }
    let mismatch = theta * z.males - z.sterile;
    Ok(base + alpha * mismatch * mismatch / (theta * z.males + z.sterile))
}

/// Derivative of the tracking certificate along the backstepping closed
/// loop (release clipped at zero).
pub fn backstepping_tracking_derivative(
    p: &ModelParams,
    theta: f64,
    alpha: f64,
    beta_s: f64,
    z: &State,
) -> Result<f64, CertificateError> {
    let (a, b) = ratio_weights(p, theta)?;
    if z.males + z.sterile <= 0.0 {
        // On the face the penalty vanishes identically and fertilization
        // stops, so only the linear part moves.
        return Ok(a
            * (p.beta_e * z.females * (1.0 - z.eggs / p.capacity)
                - (p.nu_e + p.delta_e) * z.eggs)
            + ((1.0 - p.nu) * p.nu_e * z.eggs - p.delta_m * z.males)
            + b * (-p.delta_f * z.females));
    }
    let proxy = ratio_proxy_derivative(p, theta, &z.wild())?;
    let psi = 2.0 * p.beta_e * p.nu * p.nu_e
        / (p.delta_f * (1.0 - offspring_number_for_ratio(p, theta)) * (1.0 + p.gamma_s * theta));
    let u = backstepping_raw(p, theta, alpha, beta_s, z).max(0.0);
    let tracked = theta * z.males + z.sterile;
    let weight = 3.0 * theta * z.males + z.sterile;
    let bracket = psi * p.gamma_s * z.eggs * tracked * tracked
        / (alpha * (z.males + p.gamma_s * z.sterile))
        + ((1.0 - p.nu) * p.nu_e * theta * z.eggs - theta * p.delta_m * z.males)
            * (theta * z.males + 3.0 * z.sterile)
        - u * weight
        + p.delta_s * z.sterile * weight;
    Ok(proxy + alpha * (theta * z.males - z.sterile) / (tracked * tracked) * bracket)
}

/// Weighted-linear certificate for the total-male feedback loop,
/// `delta_f E + eps M + beta_e (1 + eps) F + eps^2 Ms` with `eps` in (0, 1].
pub fn weighted_linear_value(
    p: &ModelParams,
    epsilon: f64,
    z: &State,
) -> Result<f64, CertificateError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(CertificateError::EpsilonOutOfRange(epsilon));
    }
    Ok(p.delta_f * z.eggs
        + epsilon * z.males
        + p.beta_e * (1.0 + epsilon) * z.females
        + epsilon * epsilon * z.sterile)
}

/// Its derivative along `u = k (M + Ms)` (plain chain rule; the loop is
/// smooth wherever males are present).
pub fn weighted_linear_derivative(
    p: &ModelParams,
    k: f64,
    epsilon: f64,
    z: &State,
) -> Result<f64, CertificateError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(CertificateError::EpsilonOutOfRange(epsilon));
    }
    Ok(weighted_derivative_inner(p, k, epsilon, z))
}

fn weighted_derivative_inner(p: &ModelParams, k: f64, epsilon: f64, z: &State) -> f64 {
    let frac = mating_fraction(p, z.males, z.sterile);
    p.delta_f * (p.beta_e * z.females * (1.0 - z.eggs / p.capacity) - (p.nu_e + p.delta_e) * z.eggs)
        + epsilon * ((1.0 - p.nu) * p.nu_e * z.eggs - p.delta_m * z.males)
        + p.beta_e * (1.0 + epsilon) * (p.nu * p.nu_e * z.eggs * frac - p.delta_f * z.females)
        + epsilon * epsilon * (k * z.males - (p.delta_s - k) * z.sterile)
}

/// The `eps = 0` limit, `delta_f E + beta_e F`, used for the stability half
/// of the total-male argument.
pub fn egg_female_pair_value(p: &ModelParams, z: &State) -> f64 {
    p.delta_f * z.eggs + p.beta_e * z.females
}

pub fn egg_female_pair_derivative(p: &ModelParams, z: &State) -> f64 {
    weighted_derivative_inner(p, 0.0, 0.0, z)
}

/// Uniform entry point over [`LyapunovKind`].
pub fn lyapunov_value(
    p: &ModelParams,
    kind: &LyapunovKind,
    z: &State,
) -> Result<f64, CertificateError> {
    match *kind {
        LyapunovKind::SitUncontrolled => sit_uncontrolled_value(p, z),
        LyapunovKind::WildUncontrolled => wild_uncontrolled_value(p, &z.wild()),
        LyapunovKind::RatioProxy { theta } => ratio_proxy_value(p, theta, &z.wild()),
        LyapunovKind::BacksteppingTracking { theta, alpha } => {
            backstepping_tracking_value(p, theta, alpha, z)
        }
        LyapunovKind::WeightedLinear { epsilon } => weighted_linear_value(p, epsilon, z),
        LyapunovKind::EggFemalePair => Ok(egg_female_pair_value(p, z)),
    }
}

/// Uniform derivative entry point. The context must match the kind; the
/// weighted kinds are certified only on the trapping region, so states
/// outside `M(kappa)` are reported as off-domain.
pub fn lyapunov_derivative(
    p: &ModelParams,
    kind: &LyapunovKind,
    ctx: &FlowContext,
    z: &State,
) -> Result<f64, CertificateError> {
    match (*kind, *ctx) {
        (LyapunovKind::SitUncontrolled, FlowContext::SitUncontrolled) => {
            sit_uncontrolled_derivative(p, z)
        }
        (LyapunovKind::WildUncontrolled, FlowContext::WildUncontrolled) => {
            wild_uncontrolled_derivative(p, &z.wild())
        }
        (LyapunovKind::RatioProxy { theta }, FlowContext::RatioProxy) => {
            ratio_proxy_derivative(p, theta, &z.wild())
        }
        (
            LyapunovKind::BacksteppingTracking { theta, alpha },
            FlowContext::Backstepping { beta_s },
        ) => backstepping_tracking_derivative(p, theta, alpha, beta_s, z),
        (LyapunovKind::WeightedLinear { epsilon }, FlowContext::TotalMaleLaw { k, kappa }) => {
            require_in_region(p, kappa, z)?;
            weighted_linear_derivative(p, k, epsilon, z)
        }
        (LyapunovKind::EggFemalePair, FlowContext::TotalMaleLaw { k, kappa }) => {
            require_in_region(p, kappa, z)?;
            Ok(weighted_derivative_inner(p, k, 0.0, z))
        }
        _ => Err(CertificateError::ContextMismatch),
    }
}

fn require_in_region(p: &ModelParams, kappa: f64, z: &State) -> Result<(), CertificateError> {
    let tol = 1e-12 * p.capacity.max(1.0);
    let [h1, h2, h3] = boundary_functions(p, kappa, z);
    if h1 <= tol && h2 <= tol && h3 <= tol {
        Ok(())
    } else {
        Err(CertificateError::OffDomain(h1, h2, h3))
    }
}

/// Explicit decay rate of the uncontrolled certificate:
/// `min{(nu nu_e + delta_e)(1-R0)/(1+R0), delta_f (1-R0)/2, delta_m, delta_s}`.
pub fn decay_rate_c0(p: &ModelParams) -> Result<f64, CertificateError> {
    let r0 = basic_offspring_number(p);
    if r0 >= 1.0 {
        return Err(CertificateError::SupercriticalOffspring(r0));
    }
    let egg = (p.nu * p.nu_e + p.delta_e) * (1.0 - r0) / (1.0 + r0);
    let female = p.delta_f * (1.0 - r0) / 2.0;
    Ok(egg.min(female).min(p.delta_m).min(p.delta_s))
}

/// Boundary functions of the trapping region `M(kappa)`:
/// `h1 = beta_e F (1 - E/K) - (nu_e + delta_e) E`, `h2 = M - kappa Ms`,
/// `h3 = (1-nu) nu_e E - delta_m M`. Membership is `h_i <= 0` for all three.
pub fn boundary_functions(p: &ModelParams, kappa: f64, z: &State) -> [f64; 3] {
    [
        p.beta_e * z.females * (1.0 - z.eggs / p.capacity) - (p.nu_e + p.delta_e) * z.eggs,
        z.males - kappa * z.sterile,
        (1.0 - p.nu) * p.nu_e * z.eggs - p.delta_m * z.males,
    ]
}

/// Membership in `M(kappa)` up to a non-negative slack `tol` (used to absorb
/// integrator drift in trajectory-level checks).
pub fn in_invariant_set(p: &ModelParams, kappa: f64, z: &State, tol: f64) -> bool {
    boundary_functions(p, kappa, z).iter().all(|&h| h <= tol)
}

/// Largest admissible `kappa`,
/// `gamma_s delta_f (nu_e+delta_e) / (beta_e nu nu_e - delta_f (nu_e+delta_e))`,
/// defined for a supercritical basic offspring number.
pub fn kappa_bar(p: &ModelParams) -> Result<f64, CertificateError> {
    let r0 = basic_offspring_number(p);
    if r0 <= 1.0 {
        return Err(CertificateError::SubcriticalOffspring(r0));
    }
    let d = p.delta_f * (p.nu_e + p.delta_e);
    Ok(p.gamma_s * d / (p.beta_e * p.nu * p.nu_e - d))
}

/// Both conditions a trapping `kappa` must satisfy for gain `k`:
/// `kappa <= kappa_bar` and `kappa >= (delta_s - k)/k`.
pub fn kappa_admissible(p: &ModelParams, k: f64, kappa: f64) -> bool {
    match kappa_bar(p) {
        Ok(bar) => kappa > 0.0 && kappa <= bar && kappa >= (p.delta_s - k) / k,
        Err(_) => false,
    }
}

/// Draws a state of `M(kappa)` with component scales set by the carrying
/// capacity. The construction walks the chain of constraints (eggs free,
/// males above recruitment balance, sterile above `M/kappa`, females below
/// the egg-inflow bound), so every returned state is a member by
/// construction.
pub fn sample_invariant_set(p: &ModelParams, kappa: f64, rng: &mut CounterRng) -> State {
    let eggs = rng.uniform_in(0.0, 1.2 * p.capacity);
    let males = (1.0 - p.nu) * p.nu_e * eggs / p.delta_m * (1.0 + rng.uniform_in(0.05, 1.0));
    let sterile = if males > 0.0 {
        males / kappa * (1.0 + rng.uniform_in(0.05, 1.0))
    } else {
        rng.uniform_in(0.0, p.capacity)
    };
    let females = if eggs < p.capacity {
        let cap = (p.nu_e + p.delta_e) * eggs / (p.beta_e * (1.0 - eggs / p.capacity));
        rng.uniform_in(0.0, 0.95 * cap.min(3.0 * p.capacity))
    } else {
        rng.uniform_in(0.0, 3.0 * p.capacity)
    };
    State {
        eggs,
        males,
        females,
        sterile,
    }
}

/// Scans `(0, 1]` for the epsilon whose weighted-linear certificate has the
/// best verified decay margin `inf -dU/U` over `samples` random states of
/// `M(kappa)`. Returns the epsilon and its margin.
pub fn select_epsilon(
    p: &ModelParams,
    k: f64,
    kappa: f64,
    seed: u64,
    samples: usize,
) -> Result<(f64, f64), CertificateError> {
    let mut rng = CounterRng::new(seed);
    let states: Vec<State> = (0..samples)
        .map(|_| sample_invariant_set(p, kappa, &mut rng))
        .collect();
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let grid = 60;
    for i in 0..=grid {
        // Log-spaced sweep from 1e-3 to 1.
        let epsilon = 10f64.powf(-3.0 + 3.0 * i as f64 / grid as f64);
        let mut margin = f64::INFINITY;
        for z in &states {
            let value = weighted_linear_value(p, epsilon, z)?;
            if value <= 1e-12 * p.capacity {
                continue;
            }
            let rate = -weighted_linear_derivative(p, k, epsilon, z)? / value;
            margin = margin.min(rate);
        }
        if margin > best.1 {
            best = (epsilon, margin);
        }
    }
    if best.1 > 0.0 {
        Ok(best)
    } else {
        Err(CertificateError::NoDecayMargin {
            epsilon: best.0,
            margin: best.1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::persistence_equilibrium;

    const CAP: f64 = 22200.0;

    fn p() -> ModelParams {
        ModelParams::baseline(CAP)
    }

    /// Baseline rates with the fecundity scaled so that R0 = 1/2.
    fn p_subcritical() -> ModelParams {
        let mut q = p();
        q.beta_e = 0.5 * q.delta_f * (q.nu_e + q.delta_e) / (q.nu * q.nu_e);
        q
    }

    #[test]
    fn values_vanish_exactly_at_extinction() {
        let q = p();
        let qc = p_subcritical();
        let z = State::ZERO;
        assert_eq!(sit_uncontrolled_value(&qc, &z).unwrap(), 0.0);
        assert_eq!(wild_uncontrolled_value(&qc, &z.wild()).unwrap(), 0.0);
        assert_eq!(ratio_proxy_value(&q, 220.0, &z.wild()).unwrap(), 0.0);
        assert_eq!(
            backstepping_tracking_value(&q, 220.0, 13.0, &z).unwrap(),
            0.0
        );
        assert_eq!(weighted_linear_value(&q, 0.5, &z).unwrap(), 0.0);
        assert_eq!(egg_female_pair_value(&q, &z), 0.0);
    }

    #[test]
    fn derivatives_vanish_at_extinction() {
        let q = p();
        let qc = p_subcritical();
        assert_eq!(sit_uncontrolled_derivative(&qc, &State::ZERO).unwrap(), 0.0);
        assert_eq!(
            ratio_proxy_derivative(&q, 220.0, &WildState::default()).unwrap(),
            0.0
        );
        assert_eq!(
            backstepping_tracking_derivative(&q, 220.0, 13.0, 1.0, &State::ZERO).unwrap(),
            0.0
        );
        assert_eq!(
            weighted_linear_derivative(&q, 0.119, 0.5, &State::ZERO).unwrap(),
            0.0
        );
    }

    #[test]
    fn values_are_positive_off_extinction() {
        let q = p();
        for z in [
            State::new(1.0, 0.0, 0.0, 0.0),
            State::new(0.0, 1.0, 0.0, 0.0),
            State::new(0.0, 0.0, 1.0, 0.0),
            State::new(0.0, 0.0, 0.0, 1.0),
        ] {
            assert!(backstepping_tracking_value(&q, 220.0, 13.0, &z).unwrap() > 0.0);
            assert!(weighted_linear_value(&q, 0.5, &z).unwrap() > 0.0);
        }
    }

    #[test]
    fn applicability_conditions_are_enforced() {
        let q = p(); // R0 >> 1
        assert!(matches!(
            sit_uncontrolled_value(&q, &State::ZERO),
            Err(CertificateError::SupercriticalOffspring(_))
        ));
        assert!(matches!(
            ratio_proxy_value(&q, 10.0, &WildState::default()),
            Err(CertificateError::RatioNotSuppressing { .. })
        ));
        assert!(matches!(
            weighted_linear_value(&q, 0.0, &State::ZERO),
            Err(CertificateError::EpsilonOutOfRange(_))
        ));
        assert!(matches!(
            weighted_linear_value(&q, 1.5, &State::ZERO),
            Err(CertificateError::EpsilonOutOfRange(_))
        ));
    }

    #[test]
    fn tracking_penalty_vanishes_on_the_tracking_manifold() {
        let q = p();
        let theta = 220.0;
        let x = State::new(900.0, 40.0, 200.0, theta * 40.0);
        let with_penalty = backstepping_tracking_value(&q, theta, 13.0, &x).unwrap();
        let proxy_only = ratio_proxy_value(&q, theta, &x.wild()).unwrap();
        assert!((with_penalty - proxy_only).abs() <= 1e-12 * proxy_only);
    }

    #[test]
    fn tracking_value_is_continuous_at_the_no_males_face() {
        let q = p();
        let limit =
            backstepping_tracking_value(&q, 220.0, 13.0, &State::new(700.0, 0.0, 50.0, 0.0))
                .unwrap();
        let mut previous = f64::INFINITY;
        for exp in 1..=12 {
            let t = 10f64.powi(-exp);
            let z = State::new(700.0, 3.0 * t, 50.0, 8.0 * t);
            let gap = (backstepping_tracking_value(&q, 220.0, 13.0, &z).unwrap() - limit).abs();
            assert!(gap <= previous + 1e-12);
            previous = gap;
        }
        assert!(previous <= 1e-9 * limit);
    }

    #[test]
    fn weighted_linear_value_at_unit_state() {
        // delta_f + 1 + 2 beta_e + 1 with epsilon = 1.
        let v = weighted_linear_value(&p(), 1.0, &State::new(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((v - 22.04).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_reference_value_and_bounds() {
        let q = p_subcritical();
        let c0 = decay_rate_c0(&q).unwrap();
        // min{0.0545/3, 0.01, 0.1, 0.12}
        assert!((c0 - 0.01).abs() < 1e-12);
        assert!(c0 <= q.delta_m);
        assert!(matches!(
            decay_rate_c0(&p()),
            Err(CertificateError::SupercriticalOffspring(_))
        ));

        // The rate collapses as the offspring number approaches 1.
        let mut near = p_subcritical();
        near.beta_e *= 1.9999998;
        assert!(decay_rate_c0(&near).unwrap() < 1e-6);
    }

    #[test]
    fn uncontrolled_certificate_decays_at_rate_c0() {
        let q = p_subcritical();
        let c0 = decay_rate_c0(&q).unwrap();
        let mut rng = CounterRng::new(11);
        for _ in 0..1000 {
            let z = State::new(
                rng.uniform_in(0.0, 2.0 * CAP),
                rng.uniform_in(1e-9, 2.0 * CAP),
                rng.uniform_in(0.0, 2.0 * CAP),
                rng.uniform_in(0.0, 2.0 * CAP),
            );
            let v = sit_uncontrolled_value(&q, &z).unwrap();
            let dv = sit_uncontrolled_derivative(&q, &z).unwrap();
            assert!(
                dv <= -c0 * v * (1.0 - 1e-12),
                "dV = {dv}, -c0 V = {}",
                -c0 * v
            );
        }
    }

    #[test]
    fn boundary_functions_at_reference_points() {
        let q = p();
        let bar = kappa_bar(&q).unwrap();

        let origin = boundary_functions(&q, bar, &State::ZERO);
        assert_eq!(origin, [0.0, 0.0, 0.0]);
        assert!(in_invariant_set(&q, bar, &State::ZERO, 0.0));

        // The persistence equilibrium has no sterile males, so the ratio
        // condition fails by exactly M*.
        let eq = persistence_equilibrium(&q).unwrap().state;
        let [h1, h2, h3] = boundary_functions(&q, bar, &eq);
        assert!(h1.abs() < 1e-9 && h3.abs() < 1e-9);
        assert!((h2 - eq.males).abs() < 1e-12);
        assert!(!in_invariant_set(&q, bar, &eq, 1e-7 * CAP));

        // A state sitting exactly on the male-balance and ratio boundaries.
        let males = (1.0 - q.nu) * q.nu_e / q.delta_m;
        let z = State::new(1.0, males, 0.0, males / bar);
        let [h1, h2, h3] = boundary_functions(&q, bar, &z);
        assert!(h1 < 0.0);
        assert!(h2.abs() < 1e-15 && h3.abs() < 1e-15);
        assert!(in_invariant_set(&q, bar, &z, 1e-12));
    }

    #[test]
    fn kappa_bar_matches_the_inverse_critical_ratio() {
        let q = p();
        let bar = kappa_bar(&q).unwrap();
        assert!((bar - 0.013_234_077_750_206_782).abs() < 1e-15);
        // Algebraic identity: kappa_bar = gamma_s / (R0 - 1).
        let alt = q.gamma_s / (basic_offspring_number(&q) - 1.0);
        assert!((bar - alt).abs() <= 1e-15);

        let mut sub = q;
        sub.beta_e = 0.1;
        assert!(kappa_bar(&sub).is_err());

        // The admissible window collapses as fecundity grows.
        let mut fertile = q;
        fertile.beta_e = 1.0e9;
        assert!(kappa_bar(&fertile).unwrap() < 1e-6);
    }

    #[test]
    fn kappa_admissibility_window_matches_the_gain_interval() {
        let q = p();
        let bar = kappa_bar(&q).unwrap();
        // k = 0.119 admits kappa in [(delta_s-k)/k, kappa_bar].
        assert!(kappa_admissible(&q, 0.119, bar));
        assert!(kappa_admissible(&q, 0.119, (q.delta_s - 0.119) / 0.119));
        assert!(!kappa_admissible(&q, 0.119, 1.01 * bar));
        // Below the admissible gain interval no kappa fits.
        assert!(!kappa_admissible(&q, 0.118, bar));
    }

    #[test]
    fn trapping_regions_are_nested_in_kappa() {
        let q = p();
        let mut rng = CounterRng::new(5);
        let (small, large) = (0.009, 0.0132);
        for _ in 0..200 {
            let z = sample_invariant_set(&q, small, &mut rng);
            assert!(in_invariant_set(&q, small, &z, 0.0));
            assert!(in_invariant_set(&q, large, &z, 0.0));
        }
    }

    #[test]
    fn sampled_states_are_members_and_nontrivial() {
        let q = p();
        let bar = kappa_bar(&q).unwrap();
        let mut rng = CounterRng::new(77);
        let mut saw_positive_females = false;
        for _ in 0..500 {
            let z = sample_invariant_set(&q, bar, &mut rng);
            assert!(z.is_non_negative());
            assert!(in_invariant_set(&q, bar, &z, 0.0), "{z:?}");
            saw_positive_females |= z.females > 0.0;
        }
        assert!(saw_positive_females);
    }

    #[test]
    fn epsilon_search_finds_a_positive_margin_for_the_study_gain() {
        let q = p();
        let bar = kappa_bar(&q).unwrap();
        let lo = (q.delta_s - 0.119) / 0.119;
        let kappa = 0.5 * (lo + bar); // strictly inside the admissible window
        let (epsilon, margin) = select_epsilon(&q, 0.119, kappa, 2024, 400).unwrap();
        assert!(epsilon > 0.0 && epsilon <= 1.0);
        assert!(margin > 0.0, "margin {margin}");
    }

    #[test]
    fn weighted_derivative_reports_off_domain_states() {
        let q = p();
        let bar = kappa_bar(&q).unwrap();
        let eq = persistence_equilibrium(&q).unwrap().state;
        let err = lyapunov_derivative(
            &q,
            &LyapunovKind::WeightedLinear { epsilon: 0.5 },
            &FlowContext::TotalMaleLaw {
                k: 0.119,
                kappa: bar,
            },
            &eq,
        );
        assert!(matches!(err, Err(CertificateError::OffDomain(..))));
    }

    #[test]
    fn dispatcher_rejects_mismatched_contexts() {
        let q = p_subcritical();
        let err = lyapunov_derivative(
            &q,
            &LyapunovKind::SitUncontrolled,
            &FlowContext::RatioProxy,
            &State::ZERO,
        );
        assert!(matches!(err, Err(CertificateError::ContextMismatch)));
    }
}
