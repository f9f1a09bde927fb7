//! Release policies `u(z)` and their admissible-gain conditions.
//!
//! Four laws are implemented:
//!
//! * a constant release rate,
//! * a backstepping law that steers the sterile pool toward `theta * M` and
//!   is clipped at zero to stay a physical release rate,
//! * a law linear in the measurable total male count, `u = k (M + Ms)`,
//! * a law linear in the wild male count, `u = lambda * M`.
//!
//! Each non-constant law stabilizes extinction when its gain drives the
//! corresponding closed-loop offspring number below 1; `check_strict`
//! enforces exactly those conditions, while `check_basic` only demands
//! positivity so that mismatched-parameter studies can run inadmissible
//! gains on purpose.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{basic_offspring_number, offspring_number_for_ratio, ModelParams, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("gain `{name}` must be strictly positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("constant release rate must be non-negative (got {0})")]
    NegativeRate(f64),
    #[error("sterile ratio {theta} does not suppress offspring: requires theta > {theta_min}")]
    RatioBelowMinimum { theta: f64, theta_min: f64 },
    #[error("total-male gain {gain} outside the stabilizing interval ({lo}, {hi})")]
    GainOutsideInterval { gain: f64, lo: f64, hi: f64 },
    #[error("wild-male gain {gain} at or below the stabilizing minimum {min}")]
    GainBelowMinimum { gain: f64, min: f64 },
    #[error("backstepping coefficient undefined: offspring number at ratio {theta} is {r} >= 1")]
    RatioNotSuppressing { theta: f64, r: f64 },
}

/// A feedback release policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Controller {
    /// Fixed release rate, independent of the state.
    Constant { rate: f64 },
    /// Backstepping law tracking `Ms = theta * M` with tuning constants
    /// `alpha` (dimensionless) and `beta_s` (a rate).
    Backstepping { theta: f64, alpha: f64, beta_s: f64 },
    /// `u = gain * (M + Ms)`.
    LinearTotalMales { gain: f64 },
    /// `u = gain * M`.
    LinearWildMales { gain: f64 },
}

impl Controller {
    /// Positivity of gains only. Does not check stabilization conditions.
    pub fn check_basic(&self) -> Result<(), GainError> {
        match *self {
            Controller::Constant { rate } => {
                if rate < 0.0 || !rate.is_finite() {
                    return Err(GainError::NegativeRate(rate));
                }
            }
            Controller::Backstepping {
                theta,
                alpha,
                beta_s,
            } => {
                for (name, value) in [("theta", theta), ("alpha", alpha), ("beta_s", beta_s)] {
                    if !value.is_finite() || value <= 0.0 {
                        return Err(GainError::NonPositive { name, value });
                    }
                }
            }
            Controller::LinearTotalMales { gain } => {
                if !gain.is_finite() || gain <= 0.0 {
                    return Err(GainError::NonPositive {
                        name: "gain",
                        value: gain,
                    });
                }
            }
            Controller::LinearWildMales { gain } => {
                if !gain.is_finite() || gain <= 0.0 {
                    return Err(GainError::NonPositive {
                        name: "gain",
                        value: gain,
                    });
                }
            }
        }
        Ok(())
    }

    /// Full admissibility under parameters `p`: positivity plus the
    /// stabilization condition of the corresponding closed loop.
    pub fn check_strict(&self, p: &ModelParams) -> Result<(), GainError> {
        self.check_basic()?;
        match *self {
            Controller::Constant { .. } => Ok(()),
            Controller::Backstepping { theta, .. } => {
                if offspring_number_for_ratio(p, theta) < 1.0 {
                    Ok(())
                } else {
                    Err(GainError::RatioBelowMinimum {
                        theta,
                        theta_min: theta_min(p),
                    })
                }
            }
            Controller::LinearTotalMales { gain } => {
                let (lo, hi) = total_male_gain_interval(p);
                if gain > lo && gain < hi {
                    Ok(())
                } else {
                    Err(GainError::GainOutsideInterval { gain, lo, hi })
                }
            }
            Controller::LinearWildMales { gain } => {
                let min = wild_male_gain_min(p);
                if gain > min {
                    Ok(())
                } else {
                    Err(GainError::GainBelowMinimum { gain, min })
                }
            }
        }
    }

    /// Release rate prescribed at state `z`. Always non-negative; `p` are
    /// the parameters the law was designed against, which need not be the
    /// parameters driving the plant.
    pub fn evaluate(&self, p: &ModelParams, z: &State) -> f64 {
        match *self {
            Controller::Constant { rate } => rate,
            Controller::LinearTotalMales { gain } => gain * (z.males + z.sterile),
            Controller::LinearWildMales { gain } => gain * z.males,
            Controller::Backstepping {
                theta,
                alpha,
                beta_s,
            } => backstepping_raw(p, theta, alpha, beta_s, z).max(0.0),
        }
    }
}

/// The unclipped backstepping expression. Zero on the no-males face, where
/// both of its denominators would vanish.
pub(crate) fn backstepping_raw(
    p: &ModelParams,
    theta: f64,
    alpha: f64,
    beta_s: f64,
    z: &State,
) -> f64 {
    if z.males + z.sterile <= 0.0 {
        return 0.0;
    }
    let psi = backstepping_psi_unchecked(p, theta);
    let tracked = theta * z.males + z.sterile;
    let mix = z.males + p.gamma_s * z.sterile;
    let weight = 3.0 * theta * z.males + z.sterile;
    p.gamma_s * psi * z.eggs * tracked * tracked / (alpha * mix * weight)
        + ((1.0 - p.nu) * p.nu_e * theta * z.eggs - theta * p.delta_m * z.males)
            * (theta * z.males + 3.0 * z.sterile)
            / weight
        + p.delta_s * z.sterile
        + beta_s / alpha * (theta * z.males - z.sterile)
}

fn backstepping_psi_unchecked(p: &ModelParams, theta: f64) -> f64 {
    let r = offspring_number_for_ratio(p, theta);
    2.0 * p.beta_e * p.nu * p.nu_e / (p.delta_f * (1.0 - r) * (1.0 + p.gamma_s * theta))
}

/// Coefficient `psi` of the backstepping law,
/// `2 beta_e nu nu_e / (delta_f (1 - R(theta)) (1 + gamma_s theta))`.
/// Requires the ratio to be suppressing (`R(theta) < 1`).
pub fn backstepping_psi(p: &ModelParams, theta: f64) -> Result<f64, GainError> {
    let r = offspring_number_for_ratio(p, theta);
    if r >= 1.0 {
        return Err(GainError::RatioNotSuppressing { theta, r });
    }
    Ok(backstepping_psi_unchecked(p, theta))
}

/// Smallest sterile-to-wild ratio whose proxy system no longer sustains the
/// population: `R(theta) = 1` at `theta = (R0 - 1) / gamma_s`.
pub fn theta_min(p: &ModelParams) -> f64 {
    (basic_offspring_number(p) - 1.0) / p.gamma_s
}

/// Stabilizing gain interval `(lo, delta_s)` for `u = k (M + Ms)`. The lower
/// bound solves `R1(k) = 1`; it is only meaningful when the basic offspring
/// number exceeds 1 (otherwise it is non-positive and any `k` in
/// `[0, delta_s)` stabilizes).
pub fn total_male_gain_interval(p: &ModelParams) -> (f64, f64) {
    let b = p.beta_e * p.nu * p.nu_e;
    let d = (p.nu_e + p.delta_e) * p.delta_f;
    let lo = (b - d) * p.delta_s / (b - (1.0 - p.gamma_s) * d);
    (lo, p.delta_s)
}

/// Stabilizing minimum for `u = lambda * M`: solves `R2(lambda) = 1`.
pub fn wild_male_gain_min(p: &ModelParams) -> f64 {
    let b = p.beta_e * p.nu * p.nu_e;
    let d = (p.nu_e + p.delta_e) * p.delta_f;
    (b - d) * p.delta_s / (p.gamma_s * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        offspring_number_total_male_law, offspring_number_wild_male_law, persistence_equilibrium,
    };

    const CAP: f64 = 22200.0;

    fn p() -> ModelParams {
        ModelParams::baseline(CAP)
    }

    #[test]
    fn thresholds_match_reference_values() {
        assert!((theta_min(&p()) - 75.5625).abs() < 1e-12);
        let (lo, hi) = total_male_gain_interval(&p());
        assert!((lo - 0.118_432_653_061_224_48).abs() < 1e-15);
        assert_eq!(hi, 0.12);
        assert!((wild_male_gain_min(&p()) - 9.0675).abs() < 1e-12);
    }

    #[test]
    fn thresholds_sit_exactly_on_the_unit_offspring_boundary() {
        let q = p();
        assert!((offspring_number_for_ratio(&q, theta_min(&q)) - 1.0).abs() < 1e-9);
        let (lo, _) = total_male_gain_interval(&q);
        assert!((offspring_number_total_male_law(&q, lo) - 1.0).abs() < 1e-9);
        assert!((offspring_number_wild_male_law(&q, wild_male_gain_min(&q)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strict_checks_accept_the_study_gains_and_reject_weak_ones() {
        let q = p();
        Controller::Backstepping {
            theta: 220.0,
            alpha: 13.0,
            beta_s: 1.0,
        }
        .check_strict(&q)
        .unwrap();
        Controller::LinearTotalMales { gain: 0.119 }
            .check_strict(&q)
            .unwrap();
        Controller::LinearWildMales { gain: 22.0 }
            .check_strict(&q)
            .unwrap();

        assert!(Controller::Backstepping {
            theta: 75.0,
            alpha: 13.0,
            beta_s: 1.0
        }
        .check_strict(&q)
        .is_err());
        assert!(Controller::LinearTotalMales { gain: 0.118 }
            .check_strict(&q)
            .is_err());
        assert!(Controller::LinearTotalMales { gain: 0.12 }
            .check_strict(&q)
            .is_err());
        assert!(Controller::LinearWildMales { gain: 9.06 }
            .check_strict(&q)
            .is_err());
    }

    #[test]
    fn basic_check_permits_inadmissible_but_positive_gains() {
        Controller::LinearWildMales { gain: 9.06 }
            .check_basic()
            .unwrap();
        assert!(Controller::LinearWildMales { gain: 0.0 }
            .check_basic()
            .is_err());
        assert!(Controller::Constant { rate: -1.0 }.check_basic().is_err());
        Controller::Constant { rate: 0.0 }.check_basic().unwrap();
    }

    #[test]
    fn evaluate_at_origin() {
        let q = p();
        let origin = State::ZERO;
        for c in [
            Controller::Backstepping {
                theta: 220.0,
                alpha: 13.0,
                beta_s: 1.0,
            },
            Controller::LinearTotalMales { gain: 0.119 },
            Controller::LinearWildMales { gain: 22.0 },
        ] {
            assert_eq!(c.evaluate(&q, &origin), 0.0);
        }
        assert_eq!(
            Controller::Constant { rate: 5.0 }.evaluate(&q, &origin),
            5.0
        );
    }

    #[test]
    fn linear_total_males_reference_rate() {
        let z = State::new(0.0, 5587.0, 0.0, 0.0);
        let u = Controller::LinearTotalMales { gain: 0.119 }.evaluate(&p(), &z);
        assert!((u - 664.853).abs() < 1e-9);
    }

    #[test]
    fn backstepping_rate_on_the_tracking_manifold() {
        // With Ms = theta*M the beta_s correction vanishes and the remaining
        // terms collapse to an expression free of the weight quotients.
        let q = p();
        let (theta, alpha, beta_s) = (220.0, 13.0, 1.0);
        let m = 37.0;
        let z = State::new(1500.0, m, 10.0, theta * m);
        let psi = backstepping_psi(&q, theta).unwrap();
        let expected = (q.gamma_s * psi * z.eggs * theta * m
            / (alpha * (m + q.gamma_s * theta * m))
            + ((1.0 - q.nu) * q.nu_e * theta * z.eggs - theta * q.delta_m * m)
            + q.delta_s * theta * m)
            .max(0.0);
        let got = Controller::Backstepping {
            theta,
            alpha,
            beta_s,
        }
        .evaluate(&q, &z);
        assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }

    #[test]
    fn backstepping_psi_reference_value_and_limits() {
        let q = p();
        let psi = backstepping_psi(&q, 220.0).unwrap();
        assert!((psi - 0.084_811_769_796_624_83).abs() < 1e-15);
        // Grows without bound as the ratio approaches the critical one.
        assert!(backstepping_psi(&q, 75.5626).unwrap() > 1e4);
        // Decays like 1/theta for large ratios.
        assert!(backstepping_psi(&q, 1.0e9).unwrap() < 1e-6);
        assert!(backstepping_psi(&q, 10.0).is_err());
    }

    #[test]
    fn backstepping_is_positively_homogeneous_of_degree_one() {
        // Scaling by powers of two is exact in floating point, so the growth
        // bound u(t z) = t u(z) can be checked tightly along rays.
        let q = p();
        let c = Controller::Backstepping {
            theta: 220.0,
            alpha: 13.0,
            beta_s: 1.0,
        };
        let z0 = State::new(20000.0, 5000.0, 12000.0, 800.0);
        let u0 = c.evaluate(&q, &z0);
        assert!(u0 > 0.0);
        for exp in [-30, -20, -10, -2, 3, 8] {
            let t = (2.0f64).powi(exp);
            let zt = State::new(t * z0.eggs, t * z0.males, t * z0.females, t * z0.sterile);
            let ut = c.evaluate(&q, &zt);
            assert!(
                (ut / t - u0).abs() <= 1e-12 * u0,
                "scaling {t}: {ut} vs {u0}"
            );
        }
    }

    #[test]
    fn linear_laws_are_exactly_homogeneous() {
        // Power-of-two scalings are exact in floating point.
        let q = p();
        let z = State::new(123.0, 456.0, 789.0, 1011.0);
        for exp in [-12, -3, 0, 7, 20] {
            let t = (2.0f64).powi(exp);
            let zt = State::new(t * z.eggs, t * z.males, t * z.females, t * z.sterile);
            let wild = Controller::LinearWildMales { gain: 22.0 };
            assert_eq!(wild.evaluate(&q, &zt), t * wild.evaluate(&q, &z));
            let total = Controller::LinearTotalMales { gain: 0.119 };
            assert_eq!(total.evaluate(&q, &zt), t * total.evaluate(&q, &z));
        }
    }

    #[test]
    fn evaluate_is_finite_and_non_negative_at_awkward_states() {
        let q = p();
        let eq = persistence_equilibrium(&q).unwrap().state;
        let laws = [
            Controller::Backstepping {
                theta: 220.0,
                alpha: 80.0,
                beta_s: 1.0,
            },
            Controller::LinearTotalMales { gain: 0.119 },
            Controller::LinearWildMales { gain: 22.0 },
            Controller::Constant { rate: 1.0e4 },
        ];
        let states = [
            State::ZERO,
            State::new(0.0, 0.0, 0.0, 123.0),
            State::new(0.0, 1e-300, 0.0, 0.0),
            State::new(5.0e5, 0.0, 1.0e5, 7.0e5),
            eq,
        ];
        for c in laws {
            for z in &states {
                let u = c.evaluate(&q, z);
                assert!(u.is_finite() && u >= 0.0, "{c:?} at {z:?} gave {u}");
            }
        }
    }
}
