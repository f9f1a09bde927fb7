//! Compartment model of a wild insect population under sterile-male release.
//!
//! State compartments (densities per hectare):
//!
//! ```text
//! E   aquatic phase (eggs/larvae/pupae)
//! M   wild adult males
//! F   fertilized females
//! Ms  sterile adult males
//! ```
//!
//! Dynamics, with release rate `u >= 0`:
//!
//! ```text
//! dE/dt  = beta_e * F * (1 - E/K) - (nu_e + delta_e) * E
//! dM/dt  = (1 - nu) * nu_e * E - delta_m * M
//! dF/dt  = nu * nu_e * E * M / (M + gamma_s * Ms) - delta_f * F
//! dMs/dt = u - delta_s * Ms
//! ```
//!
//! The mating fraction `M / (M + gamma_s * Ms)` is defined as 0 when its
//! denominator vanishes (no males means no fertilization), which keeps the
//! field total on the non-negative orthant.
//!
//! This module holds the parameter set, the states, both vector fields, the
//! offspring numbers of the open- and closed-loop systems, equilibria, and
//! the linearization at extinction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be {requirement} (got {value})")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("sterile death rate {delta_s} is below the wild male death rate {delta_m}")]
    SterileDeathBelowWild { delta_s: f64, delta_m: f64 },
    #[error("state component `{name}` is negative ({value})")]
    NegativeComponent { name: &'static str, value: f64 },
    #[error("release rate must be non-negative (got {0})")]
    NegativeRelease(f64),
    #[error("no persistence equilibrium: basic offspring number {offspring_number} <= 1")]
    NoPersistenceEquilibrium { offspring_number: f64 },
    #[error("equilibrium residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
}

/// Biological and environmental constants of the model.
///
/// All rates are per day, densities per hectare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Oviposition (effective fecundity) rate.
    pub beta_e: f64,
    /// Mating competitiveness of sterile males, in (0, 1].
    pub gamma_s: f64,
    /// Egg hatching rate.
    pub nu_e: f64,
    /// Death rate of the aquatic phase.
    pub delta_e: f64,
    /// Death rate of wild adult males.
    pub delta_m: f64,
    /// Death rate of fertilized females.
    pub delta_f: f64,
    /// Death rate of sterile males.
    pub delta_s: f64,
    /// Probability that an emerging pupa is female, in (0, 1).
    pub nu: f64,
    /// Egg carrying capacity of the environment.
    pub capacity: f64,
}

impl ModelParams {
    /// Baseline field parameter set used throughout the experiments.
    pub fn baseline(capacity: f64) -> Self {
        Self {
            beta_e: 10.0,
            gamma_s: 1.0,
            nu_e: 0.05,
            delta_e: 0.03,
            delta_m: 0.1,
            delta_f: 0.04,
            delta_s: 0.12,
            nu: 0.49,
            capacity,
        }
    }

    /// Validates positivity/range constraints and `delta_s >= delta_m`.
    pub fn validated(self) -> Result<Self, ModelError> {
        self.check_ranges()?;
        if self.delta_s < self.delta_m {
            return Err(ModelError::SterileDeathBelowWild {
                delta_s: self.delta_s,
                delta_m: self.delta_m,
            });
        }
        Ok(self)
    }

    /// Range validation only. Robustness sweeps sample sterile death rates
    /// below the wild rate, so the mortality-ordering check is skipped.
    pub fn validated_exploratory(self) -> Result<Self, ModelError> {
        self.check_ranges()?;
        Ok(self)
    }

    fn check_ranges(&self) -> Result<(), ModelError> {
        let positive: [(&'static str, f64); 6] = [
            ("beta_e", self.beta_e),
            ("nu_e", self.nu_e),
            ("delta_e", self.delta_e),
            ("delta_m", self.delta_m),
            ("delta_f", self.delta_f),
            ("delta_s", self.delta_s),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::InvalidParameter {
                    name,
                    requirement: "strictly positive",
                    value,
                });
            }
        }
        if !self.gamma_s.is_finite() || self.gamma_s <= 0.0 || self.gamma_s > 1.0 {
            return Err(ModelError::InvalidParameter {
                name: "gamma_s",
                requirement: "in (0, 1]",
                value: self.gamma_s,
            });
        }
        if !self.nu.is_finite() || self.nu <= 0.0 || self.nu >= 1.0 {
            return Err(ModelError::InvalidParameter {
                name: "nu",
                requirement: "in (0, 1)",
                value: self.nu,
            });
        }
        if !self.capacity.is_finite() || self.capacity <= 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "capacity",
                requirement: "strictly positive",
                value: self.capacity,
            });
        }
        Ok(())
    }

    /// Absolute tolerance for equilibrium residuals, `1e-9 * max(1, K)`.
    pub fn residual_tolerance(&self) -> f64 {
        1e-9 * self.capacity.max(1.0)
    }
}

/// Full state (E, M, F, Ms) of the controlled system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub eggs: f64,
    pub males: f64,
    pub females: f64,
    pub sterile: f64,
}

impl State {
    pub const ZERO: State = State {
        eggs: 0.0,
        males: 0.0,
        females: 0.0,
        sterile: 0.0,
    };

    pub fn new(eggs: f64, males: f64, females: f64, sterile: f64) -> Self {
        Self {
            eggs,
            males,
            females,
            sterile,
        }
    }

    pub fn from_wild(x: WildState, sterile: f64) -> Self {
        Self {
            eggs: x.eggs,
            males: x.males,
            females: x.females,
            sterile,
        }
    }

    pub fn wild(&self) -> WildState {
        WildState {
            eggs: self.eggs,
            males: self.males,
            females: self.females,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.eggs, self.males, self.females, self.sterile]
    }

    pub fn is_non_negative(&self) -> bool {
        self.as_array().iter().all(|&v| v >= 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Sup norm.
    pub fn norm_max(&self) -> f64 {
        self.as_array().iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// 1-norm (total population including sterile males).
    pub fn norm_l1(&self) -> f64 {
        self.as_array().iter().map(|v| v.abs()).sum()
    }

    /// Wild population total E + M + F.
    pub fn wild_total(&self) -> f64 {
        self.eggs + self.males + self.females
    }

    /// `self + h * d`, the basic Runge-Kutta stage update.
    pub fn add_scaled(&self, h: f64, d: &State) -> State {
        State {
            eggs: self.eggs + h * d.eggs,
            males: self.males + h * d.males,
            females: self.females + h * d.females,
            sterile: self.sterile + h * d.sterile,
        }
    }

    pub fn clamped_non_negative(&self) -> State {
        State {
            eggs: self.eggs.max(0.0),
            males: self.males.max(0.0),
            females: self.females.max(0.0),
            sterile: self.sterile.max(0.0),
        }
    }

    fn check_non_negative(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("eggs", self.eggs),
            ("males", self.males),
            ("females", self.females),
            ("sterile", self.sterile),
        ] {
            if value < 0.0 {
                return Err(ModelError::NegativeComponent { name, value });
            }
        }
        Ok(())
    }
}

/// State (E, M, F) of the sterile-free wild system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WildState {
    pub eggs: f64,
    pub males: f64,
    pub females: f64,
}

impl WildState {
    pub fn new(eggs: f64, males: f64, females: f64) -> Self {
        Self {
            eggs,
            males,
            females,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.eggs, self.males, self.females]
    }

    pub fn norm_max(&self) -> f64 {
        self.as_array().iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    pub fn add_scaled(&self, h: f64, d: &WildState) -> WildState {
        WildState {
            eggs: self.eggs + h * d.eggs,
            males: self.males + h * d.males,
            females: self.females + h * d.females,
        }
    }

    fn check_non_negative(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("eggs", self.eggs),
            ("males", self.males),
            ("females", self.females),
        ] {
            if value < 0.0 {
                return Err(ModelError::NegativeComponent { name, value });
            }
        }
        Ok(())
    }
}

/// Fraction of matings that involve a fertile male, `M / (M + gamma_s*Ms)`,
/// defined as 0 at `M + gamma_s*Ms = 0`.
pub fn mating_fraction(p: &ModelParams, males: f64, sterile: f64) -> f64 {
    let den = males + p.gamma_s * sterile;
    if den > 0.0 {
        males / den
    } else {
        0.0
    }
}

pub(crate) fn wild_rhs(p: &ModelParams, x: &WildState) -> WildState {
    WildState {
        eggs: p.beta_e * x.females * (1.0 - x.eggs / p.capacity) - (p.nu_e + p.delta_e) * x.eggs,
        males: (1.0 - p.nu) * p.nu_e * x.eggs - p.delta_m * x.males,
        females: p.nu * p.nu_e * x.eggs - p.delta_f * x.females,
    }
}

pub(crate) fn sit_rhs(p: &ModelParams, z: &State, u: f64) -> State {
    let frac = mating_fraction(p, z.males, z.sterile);
    State {
        eggs: p.beta_e * z.females * (1.0 - z.eggs / p.capacity) - (p.nu_e + p.delta_e) * z.eggs,
        males: (1.0 - p.nu) * p.nu_e * z.eggs - p.delta_m * z.males,
        females: p.nu * p.nu_e * z.eggs * frac - p.delta_f * z.females,
        sterile: u - p.delta_s * z.sterile,
    }
}

/// Time derivative of the sterile-free system. Rejects states outside the
/// non-negative orthant.
pub fn wild_vector_field(p: &ModelParams, x: &WildState) -> Result<WildState, ModelError> {
    x.check_non_negative()?;
    Ok(wild_rhs(p, x))
}

/// Time derivative of the controlled system under release rate `u`.
/// Rejects states outside the non-negative orthant and negative `u`.
pub fn sit_vector_field(p: &ModelParams, z: &State, u: f64) -> Result<State, ModelError> {
    z.check_non_negative()?;
    if u < 0.0 {
        return Err(ModelError::NegativeRelease(u));
    }
    Ok(sit_rhs(p, z, u))
}

/// Time derivative of the wild system when the sterile pool is slaved to a
/// fixed sterile-to-wild male ratio `theta` (`Ms = theta * M`), which scales
/// the fertilization term by `1 / (1 + gamma_s * theta)`.
pub fn ratio_proxy_vector_field(p: &ModelParams, theta: f64, x: &WildState) -> WildState {
    WildState {
        eggs: p.beta_e * x.females * (1.0 - x.eggs / p.capacity) - (p.nu_e + p.delta_e) * x.eggs,
        males: (1.0 - p.nu) * p.nu_e * x.eggs - p.delta_m * x.males,
        females: p.nu * p.nu_e / (1.0 + p.gamma_s * theta) * x.eggs - p.delta_f * x.females,
    }
}

/// Basic offspring number of the uncontrolled population,
/// `beta_e*nu*nu_e / (delta_f*(nu_e + delta_e))`. Extinction loses local
/// stability exactly when this exceeds 1.
pub fn basic_offspring_number(p: &ModelParams) -> f64 {
    p.beta_e * p.nu * p.nu_e / (p.delta_f * (p.nu_e + p.delta_e))
}

/// Offspring number when the sterile pool holds a fixed ratio
/// `theta = Ms/M`: the basic number divided by `1 + gamma_s*theta`.
pub fn offspring_number_for_ratio(p: &ModelParams, theta: f64) -> f64 {
    basic_offspring_number(p) / (1.0 + p.gamma_s * theta)
}

/// Offspring number of the closed loop under `u = k (M + Ms)`, valid for
/// `k` in `[0, delta_s)`.
pub fn offspring_number_total_male_law(p: &ModelParams, k: f64) -> f64 {
    (p.delta_s - k) * p.beta_e * p.nu * p.nu_e
        / (p.delta_f * (p.nu_e + p.delta_e) * (p.delta_s - (1.0 - p.gamma_s) * k))
}

/// Offspring number of the closed loop under `u = lambda * M`.
pub fn offspring_number_wild_male_law(p: &ModelParams, lambda: f64) -> f64 {
    p.delta_s * p.beta_e * p.nu * p.nu_e
        / (p.delta_f * (p.nu_e + p.delta_e) * (p.delta_s + p.gamma_s * lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Extinction,
    Persistence,
}

/// A steady state together with the offspring number that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub kind: EquilibriumKind,
    pub state: State,
    pub offspring_number: f64,
}

impl Equilibrium {
    /// Sup norm of the closed-loop vector field at the stored state.
    pub fn residual(&self, p: &ModelParams, u: f64) -> f64 {
        sit_rhs(p, &self.state, u).norm_max()
    }
}

pub fn extinction_equilibrium(p: &ModelParams) -> Equilibrium {
    Equilibrium {
        kind: EquilibriumKind::Extinction,
        state: State::ZERO,
        offspring_number: basic_offspring_number(p),
    }
}

/// Positive steady state of the uncontrolled system (sterile pool empty):
/// `E* = K (1 - 1/R)`, `M* = (1-nu) nu_e E* / delta_m`,
/// `F* = nu nu_e E* / delta_f`. Exists only when the basic offspring number
/// exceeds 1.
pub fn persistence_equilibrium(p: &ModelParams) -> Result<Equilibrium, ModelError> {
    let r0 = basic_offspring_number(p);
    if r0 <= 1.0 {
        return Err(ModelError::NoPersistenceEquilibrium {
            offspring_number: r0,
        });
    }
    let eggs = p.capacity * (1.0 - 1.0 / r0);
    let state = State {
        eggs,
        males: (1.0 - p.nu) * p.nu_e / p.delta_m * eggs,
        females: p.nu * p.nu_e / p.delta_f * eggs,
        sterile: 0.0,
    };
    let eq = Equilibrium {
        kind: EquilibriumKind::Persistence,
        state,
        offspring_number: r0,
    };
    let residual = eq.residual(p, 0.0);
    let tolerance = p.residual_tolerance();
    if residual > tolerance {
        return Err(ModelError::ResidualTooLarge {
            residual,
            tolerance,
        });
    }
    Ok(eq)
}

/// Nontrivial steady state of the closed loop under `u = k (M + Ms)`, or
/// `None` when only extinction remains (offspring number at or below 1).
pub fn total_male_law_equilibrium(
    p: &ModelParams,
    k: f64,
) -> Result<Option<Equilibrium>, ModelError> {
    if !(0.0..p.delta_s).contains(&k) {
        return Err(ModelError::InvalidParameter {
            name: "k",
            requirement: "in [0, delta_s)",
            value: k,
        });
    }
    let r1 = offspring_number_total_male_law(p, k);
    if r1 <= 1.0 {
        return Ok(None);
    }
    let eggs = p.capacity * (1.0 - 1.0 / r1);
    let surviving = p.delta_s - k;
    let state = State {
        eggs,
        males: (1.0 - p.nu) * p.nu_e / p.delta_m * eggs,
        females: surviving * p.nu * p.nu_e / (p.delta_f * (surviving + p.gamma_s * k)) * eggs,
        sterile: (1.0 - p.nu) * p.nu_e * k / (surviving * p.delta_m) * eggs,
    };
    let eq = Equilibrium {
        kind: EquilibriumKind::Persistence,
        state,
        offspring_number: r1,
    };
    let u = k * (state.males + state.sterile);
    let residual = eq.residual(p, u);
    let tolerance = p.residual_tolerance();
    if residual > tolerance {
        return Err(ModelError::ResidualTooLarge {
            residual,
            tolerance,
        });
    }
    Ok(Some(eq))
}

/// Jacobian of the wild system at extinction, rows/columns ordered (E, M, F).
pub fn jacobian_at_extinction(p: &ModelParams) -> [[f64; 3]; 3] {
    [
        [-(p.nu_e + p.delta_e), 0.0, p.beta_e],
        [(1.0 - p.nu) * p.nu_e, -p.delta_m, 0.0],
        [p.nu * p.nu_e, 0.0, -p.delta_f],
    ]
}

/// Characteristic polynomial of the extinction Jacobian,
/// `(x + delta_m) * (x^2 + (nu_e+delta_e+delta_f) x + delta_f (nu_e+delta_e) - beta_e nu nu_e)`,
/// in expanded form.
pub fn characteristic_polynomial(p: &ModelParams, x: f64) -> f64 {
    let a = p.nu_e + p.delta_e;
    let c = p.delta_f * a - p.beta_e * p.nu * p.nu_e;
    x.powi(3)
        + (a + p.delta_f + p.delta_m) * x.powi(2)
        + (c + p.delta_m * (a + p.delta_f)) * x
        + p.delta_m * c
}

/// Eigenstructure of the extinction Jacobian. `lambda_male = -delta_m` is
/// the decoupled male-axis eigenvalue; `lambda_plus`/`lambda_minus` are the
/// roots of the egg-female quadratic, with eigenvectors in (E, M, F)
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenData {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub lambda_male: f64,
    pub v_plus: [f64; 3],
    pub v_minus: [f64; 3],
}

pub fn eigen_data(p: &ModelParams) -> EigenData {
    let a = p.nu_e + p.delta_e;
    // Discriminant of x^2 + (a + delta_f) x + delta_f a (1 - R0).
    let disc = (a - p.delta_f).powi(2) + 4.0 * p.beta_e * p.nu * p.nu_e;
    let root = disc.sqrt();
    let lambda_plus = (-(a + p.delta_f) + root) / 2.0;
    let lambda_minus = (-(a + p.delta_f) - root) / 2.0;
    EigenData {
        lambda_plus,
        lambda_minus,
        lambda_male: -p.delta_m,
        v_plus: eigenvector(p, lambda_plus),
        v_minus: eigenvector(p, lambda_minus),
    }
}

fn eigenvector(p: &ModelParams, lambda: f64) -> [f64; 3] {
    // With E-component normalized to 1 the M and F components follow from
    // the second and third Jacobian rows. If lambda collides with the male
    // eigenvalue the male axis itself is an eigenvector.
    let male_gap = lambda + p.delta_m;
    if male_gap.abs() <= 1e-12 * (lambda.abs() + p.delta_m) {
        return [0.0, 1.0, 0.0];
    }
    [
        1.0,
        (1.0 - p.nu) * p.nu_e / male_gap,
        (lambda + p.nu_e + p.delta_e) / p.beta_e,
    ]
}

/// Release rate above which a constant release drives the population to
/// extinction from anywhere:
/// `U* = R0 K (1-nu) nu_e delta_s / (4 gamma_s delta_m) * (1 - 1/R0)^2`.
pub fn constant_release_threshold(p: &ModelParams) -> f64 {
    let r0 = basic_offspring_number(p);
    r0 * p.capacity * (1.0 - p.nu) * p.nu_e * p.delta_s / (4.0 * p.gamma_s * p.delta_m)
        * (1.0 - 1.0 / r0).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CAP: f64 = 22200.0;

    fn p() -> ModelParams {
        ModelParams::baseline(CAP)
    }

    /// Parameter sets spanning the published field ranges (and a bit more),
    /// always range-valid for the exploratory mode.
    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (
            1.0f64..20.0,
            0.05f64..1.0,
            0.005f64..0.3,
            0.01f64..0.06,
            0.05f64..0.2,
            0.02f64..0.06,
            0.05f64..0.2,
            0.2f64..0.8,
        )
            .prop_map(
                |(beta_e, gamma_s, nu_e, delta_e, delta_m, delta_f, delta_s, nu)| {
                    ModelParams {
                        beta_e,
                        gamma_s,
                        nu_e,
                        delta_e,
                        delta_m,
                        delta_f,
                        delta_s,
                        nu,
                        capacity: CAP,
                    }
                    .validated_exploratory()
                    .unwrap()
                },
            )
    }

    #[test]
    fn baseline_passes_strict_validation() {
        p().validated().unwrap();
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut bad = p();
        bad.nu = 1.0;
        assert!(matches!(
            bad.validated(),
            Err(ModelError::InvalidParameter { name: "nu", .. })
        ));
        let mut bad = p();
        bad.delta_f = 0.0;
        assert!(bad.validated().is_err());
        let mut bad = p();
        bad.gamma_s = 0.0;
        assert!(bad.validated().is_err());
    }

    #[test]
    fn mortality_ordering_enforced_only_in_strict_mode() {
        let mut q = p();
        q.delta_s = 0.08; // below delta_m = 0.1
        assert!(matches!(
            q.validated(),
            Err(ModelError::SterileDeathBelowWild { .. })
        ));
        q.validated_exploratory().unwrap();
    }

    #[test]
    fn basic_offspring_number_matches_baseline_value() {
        // beta_e nu nu_e / (delta_f (nu_e + delta_e)) = 0.245 / 0.0032
        assert!((basic_offspring_number(&p()) - 76.5625).abs() < 1e-12);
    }

    #[test]
    fn offspring_number_is_linear_in_fecundity() {
        let mut q = p();
        q.beta_e /= 2.0;
        assert!((basic_offspring_number(&q) - 38.28125).abs() < 1e-12);
    }

    #[test]
    fn offspring_number_is_one_when_rates_balance() {
        let mut q = p();
        q.beta_e = q.delta_f * (q.nu_e + q.delta_e) / (q.nu * q.nu_e);
        assert!((basic_offspring_number(&q) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ratio_offspring_number_examples() {
        assert_eq!(
            offspring_number_for_ratio(&p(), 0.0),
            basic_offspring_number(&p())
        );
        assert!((offspring_number_for_ratio(&p(), 75.5625) - 1.0).abs() < 1e-12);
        // 76.5625 / 221
        assert!((offspring_number_for_ratio(&p(), 220.0) - 0.346_436_651_583_710_4).abs() < 1e-12);
    }

    #[test]
    fn ratio_offspring_number_identity_holds_to_machine_precision() {
        for theta in [0.3, 1.0, 75.5625, 220.0, 1.0e4] {
            let r = offspring_number_for_ratio(&p(), theta);
            let back = r * (1.0 + p().gamma_s * theta);
            assert!((back - basic_offspring_number(&p())).abs() <= 1e-14 * back.abs());
        }
    }

    #[test]
    fn total_male_law_offspring_number_examples() {
        assert_eq!(
            offspring_number_total_male_law(&p(), 0.0),
            basic_offspring_number(&p())
        );
        // The offspring number is steep in k near the threshold
        // (dR1/dk ~ -637 here), so the 5-digit bound 0.11843 sits visibly
        // above 1: (0.12 - 0.11843) * 0.245 / (0.0032 * 0.12).
        let near = offspring_number_total_male_law(&p(), 0.11843);
        assert!((near - 1.001_692_708_333_333).abs() < 1e-12);
        assert!((near - 1.0).abs() < 2e-3);
        assert!(offspring_number_total_male_law(&p(), 0.119) < 1.0);
    }

    #[test]
    fn wild_male_law_offspring_number_examples() {
        assert_eq!(
            offspring_number_wild_male_law(&p(), 0.0),
            basic_offspring_number(&p())
        );
        assert!((offspring_number_wild_male_law(&p(), 9.0675) - 1.0).abs() < 1e-3);
        // 0.0294 / (0.0032 * 22.12)
        assert!(
            (offspring_number_wild_male_law(&p(), 22.0) - 0.415_348_101_265_822_8).abs() < 1e-12
        );
    }

    #[test]
    fn wild_field_vanishes_at_origin_and_rejects_negatives() {
        let zero = WildState::default();
        assert_eq!(wild_vector_field(&p(), &zero).unwrap().norm_max(), 0.0);
        let bad = WildState::new(-1.0, 0.0, 0.0);
        assert!(wild_vector_field(&p(), &bad).is_err());
    }

    #[test]
    fn wild_field_at_capacity_with_no_adults_drains_eggs() {
        let x = WildState::new(CAP, 0.0, 0.0);
        let d = wild_vector_field(&p(), &x).unwrap();
        assert!((d.eggs - (-(0.05 + 0.03) * CAP)).abs() < 1e-9);
        assert!(d.eggs < 0.0);
    }

    #[test]
    fn sit_field_reduces_to_wild_field_when_sterile_pool_empty() {
        let z = State::new(1000.0, 200.0, 300.0, 0.0);
        let d4 = sit_vector_field(&p(), &z, 0.0).unwrap();
        let d3 = wild_vector_field(&p(), &z.wild()).unwrap();
        assert_eq!(d4.eggs, d3.eggs);
        assert_eq!(d4.males, d3.males);
        assert_eq!(d4.females, d3.females);
    }

    #[test]
    fn sit_field_rejects_negative_release() {
        let z = State::ZERO;
        assert!(matches!(
            sit_vector_field(&p(), &z, -1.0),
            Err(ModelError::NegativeRelease(_))
        ));
    }

    #[test]
    fn mating_fraction_is_defined_at_the_singular_corner() {
        assert_eq!(mating_fraction(&p(), 0.0, 0.0), 0.0);
        assert_eq!(mating_fraction(&p(), 5.0, 0.0), 1.0);
        assert_eq!(mating_fraction(&p(), 0.0, 5.0), 0.0);
    }

    #[test]
    fn persistence_equilibrium_matches_reference_densities() {
        let eq = persistence_equilibrium(&p()).unwrap();
        // Integer parts of the reference equilibrium at K = 22200.
        assert_eq!(eq.state.eggs.floor(), 21910.0);
        assert_eq!(eq.state.males.floor(), 5587.0);
        assert_eq!(eq.state.females.floor(), 13419.0);
        assert_eq!(eq.state.sterile, 0.0);
        assert!(eq.residual(&p(), 0.0) < 1e-6 * CAP);
        assert!(eq.residual(&p(), 0.0) < p().residual_tolerance());
    }

    #[test]
    fn persistence_equilibrium_scales_linearly_with_capacity() {
        let eq = persistence_equilibrium(&p()).unwrap();
        let eq2 = persistence_equilibrium(&ModelParams::baseline(2.0 * CAP)).unwrap();
        assert_eq!(eq2.state.eggs, 2.0 * eq.state.eggs);
    }

    #[test]
    fn persistence_equilibrium_requires_supercritical_offspring_number() {
        let mut q = p();
        q.beta_e = 0.1; // R0 well below 1
        assert!(matches!(
            persistence_equilibrium(&q),
            Err(ModelError::NoPersistenceEquilibrium { .. })
        ));
    }

    #[test]
    fn total_male_law_equilibrium_cases() {
        // k = 0 reduces to the uncontrolled persistence equilibrium.
        let eq0 = total_male_law_equilibrium(&p(), 0.0).unwrap().unwrap();
        let reference = persistence_equilibrium(&p()).unwrap();
        assert!((eq0.state.eggs - reference.state.eggs).abs() < 1e-9);
        assert_eq!(eq0.state.sterile, 0.0);

        // Stabilizing gain: extinction is the only equilibrium.
        assert!(total_male_law_equilibrium(&p(), 0.119).unwrap().is_none());

        // Sub-threshold gain: all four components positive, residual small.
        let eq = total_male_law_equilibrium(&p(), 0.05).unwrap().unwrap();
        assert!(eq.state.as_array().iter().all(|&v| v > 0.0));

        // Out-of-range gains are rejected.
        assert!(total_male_law_equilibrium(&p(), -0.01).is_err());
        assert!(total_male_law_equilibrium(&p(), 0.12).is_err());
    }

    #[test]
    fn eigen_data_satisfies_characteristic_polynomial() {
        let e = eigen_data(&p());
        for lambda in [e.lambda_plus, e.lambda_minus, e.lambda_male] {
            let scale = lambda.abs().max(1.0).powi(3);
            assert!(characteristic_polynomial(&p(), lambda).abs() <= 1e-10 * scale);
        }
        assert!(
            e.lambda_plus > 0.0,
            "extinction must be unstable at baseline"
        );
        assert!(e.lambda_minus < 0.0);
    }

    #[test]
    fn eigen_vectors_satisfy_the_eigen_equation() {
        let j = jacobian_at_extinction(&p());
        let e = eigen_data(&p());
        for (lambda, v) in [(e.lambda_plus, e.v_plus), (e.lambda_minus, e.v_minus)] {
            for row in 0..3 {
                let jv: f64 = (0..3).map(|col| j[row][col] * v[col]).sum();
                let scale = lambda.abs().max(1.0) * v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
                assert!((jv - lambda * v[row]).abs() <= 1e-9 * scale.max(1e-300));
            }
        }
    }

    #[test]
    fn dominant_eigenvector_is_strictly_positive_when_supercritical() {
        let e = eigen_data(&p());
        assert!(e.v_plus.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn critical_offspring_number_gives_zero_dominant_eigenvalue() {
        let mut q = p();
        q.beta_e = q.delta_f * (q.nu_e + q.delta_e) / (q.nu * q.nu_e);
        let e = eigen_data(&q);
        assert!(e.lambda_plus.abs() < 1e-12);
        assert!((e.lambda_minus + (q.nu_e + q.delta_e + q.delta_f)).abs() < 1e-12);
        assert_eq!(e.lambda_male, -q.delta_m);
    }

    #[test]
    fn constant_release_threshold_reference_value() {
        // Independent route: R0 (1 - 1/R0)^2 = (R0 - 1)^2 / R0.
        let q = p();
        let r0 = basic_offspring_number(&q);
        let alt = (r0 - 1.0).powi(2) / r0 * q.capacity * (1.0 - q.nu) * q.nu_e * q.delta_s
            / (4.0 * q.gamma_s * q.delta_m);
        let u = constant_release_threshold(&q);
        assert!((u - alt).abs() <= 1e-12 * u);
        assert!((u - 12_665.167_562_755_1).abs() < 1e-6);
    }

    #[test]
    fn constant_release_threshold_scales_with_capacity_and_criticality() {
        let u = constant_release_threshold(&p());
        let u2 = constant_release_threshold(&ModelParams::baseline(2.0 * CAP));
        assert!((u2 - 2.0 * u).abs() < 1e-9 * u);

        // As R0 -> 1+ the threshold collapses.
        let mut q = p();
        q.beta_e = 1.0000001 * q.delta_f * (q.nu_e + q.delta_e) / (q.nu * q.nu_e);
        assert!(constant_release_threshold(&q) < 1e-3);
    }

    #[test]
    fn wild_male_loop_equals_total_male_loop_with_shifted_sterile_death() {
        // u = lambda*M with sterile death delta_s is the same closed loop
        // as u = k*(M+Ms) with k = lambda and sterile death delta_s+lambda.
        let q = p();
        for lambda in [9.06, 12.0, 22.0] {
            let shifted = ModelParams {
                delta_s: q.delta_s + lambda,
                ..q
            };
            let r2 = offspring_number_wild_male_law(&q, lambda);
            let r1 = offspring_number_total_male_law(&shifted, lambda);
            assert!(
                (r1 - r2).abs() <= 1e-14 * r2,
                "lambda={lambda}: {r1} vs {r2}"
            );

            for z in [
                State::new(21910.0, 5587.0, 13419.0, 0.0),
                State::new(100.0, 40.0, 7.0, 900.0),
                State::new(0.0, 3.0, 0.0, 11.0),
            ] {
                let via_wild = sit_rhs(&q, &z, lambda * z.males);
                let via_total = sit_rhs(&shifted, &z, lambda * (z.males + z.sterile));
                for (a, b) in via_wild.as_array().iter().zip(via_total.as_array()) {
                    assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn extinction_equilibrium_is_exact() {
        let eq = extinction_equilibrium(&p());
        assert_eq!(eq.kind, EquilibriumKind::Extinction);
        assert_eq!(eq.residual(&p(), 0.0), 0.0);
        assert_eq!(eq.offspring_number, basic_offspring_number(&p()));
    }

    proptest! {
        /// The total-male-law offspring number strictly decreases in the
        /// gain, and the wild-male-law one strictly decreases in lambda.
        #[test]
        fn closed_loop_offspring_numbers_decrease_in_their_gains(
            q in arb_params(),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
            l1 in 0.0f64..50.0,
            dl in 1e-6f64..50.0,
        ) {
            let (k1, k2) = {
                let lo = a.min(b) * 0.999 * q.delta_s;
                let hi = a.max(b) * 0.999 * q.delta_s;
                (lo, hi)
            };
            prop_assume!(k2 > k1);
            prop_assert!(
                offspring_number_total_male_law(&q, k1)
                    > offspring_number_total_male_law(&q, k2)
            );
            prop_assert!(
                offspring_number_wild_male_law(&q, l1)
                    > offspring_number_wild_male_law(&q, l1 + dl)
            );
        }

        /// On each face of the orthant the outward component of the field
        /// is non-negative, so the domain is forward invariant.
        #[test]
        fn vector_field_points_inward_on_the_orthant_faces(
            q in arb_params(),
            eggs in 0.0f64..3.0e5,
            males in 0.0f64..3.0e5,
            females in 0.0f64..3.0e5,
            sterile in 0.0f64..3.0e5,
            u in 0.0f64..1.0e5,
            face in 0usize..4,
        ) {
            let mut z = State { eggs, males, females, sterile };
            match face {
                0 => z.eggs = 0.0,
                1 => z.males = 0.0,
                2 => z.females = 0.0,
                _ => z.sterile = 0.0,
            }
            let d = sit_vector_field(&q, &z, u).unwrap();
            let outward = match face {
                0 => d.eggs,
                1 => d.males,
                2 => d.females,
                _ => d.sterile,
            };
            prop_assert!(outward >= 0.0, "face {face}: {outward}");
        }
    }
}
