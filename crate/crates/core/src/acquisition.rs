//! PI, EI and UCB acquisition values and the UCB exploration schedules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Prediction;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

fn check_inputs(mean: f64, std: f64, incumbent: f64) -> Result<()> {
    if !(mean.is_finite() && std.is_finite() && incumbent.is_finite()) {
        return Err(Error::NonFinite("acquisition input"));
    }
    if std < 0.0 {
        return Err(Error::InvalidParameter(format!("negative standard deviation {std}")));
    }
    Ok(())
}

/// Probability of improving on `incumbent`. At zero spread this is the
/// indicator `mean > incumbent`.
pub fn pi_value(mean: f64, std: f64, incumbent: f64) -> Result<f64> {
    check_inputs(mean, std, incumbent)?;
    if std == 0.0 {
        return Ok(if mean > incumbent { 1.0 } else { 0.0 });
    }
    Ok(std_normal_cdf((mean - incumbent) / std))
}

/// Expected improvement over `incumbent`; zero at zero spread.
pub fn ei_value(mean: f64, std: f64, incumbent: f64) -> Result<f64> {
    check_inputs(mean, std, incumbent)?;
    if std == 0.0 {
        return Ok(0.0);
    }
    let improvement = mean - incumbent;
    let z = improvement / std;
    Ok((improvement * std_normal_cdf(z) + std * std_normal_pdf(z)).max(0.0))
}

pub fn ucb_value(mean: f64, std: f64, beta: f64) -> f64 {
    mean + beta.sqrt() * std
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcquisitionKind {
    Pi,
    Ei,
    Ucb,
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcquisitionKind::Pi => "pi",
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Ucb => "ucb",
        })
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pi" => Ok(AcquisitionKind::Pi),
            "ei" => Ok(AcquisitionKind::Ei),
            "ucb" => Ok(AcquisitionKind::Ucb),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// An acquisition bound to its per-iteration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Best value so far, used by PI and EI.
    pub incumbent: f64,
    /// Exploration weight β_t, used by UCB.
    pub beta: f64,
}

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind, incumbent: f64, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be finite and non-negative, got {beta}")));
        }
        if kind != AcquisitionKind::Ucb && !incumbent.is_finite() {
            return Err(Error::NonFinite("incumbent"));
        }
        Ok(AcquisitionSpec { kind, incumbent, beta })
    }

    pub fn evaluate(&self, pred: Prediction) -> Result<f64> {
        let std = pred.std();
        match self.kind {
            AcquisitionKind::Pi => pi_value(pred.mean, std, self.incumbent),
            AcquisitionKind::Ei => ei_value(pred.mean, std, self.incumbent),
            AcquisitionKind::Ucb => Ok(ucb_value(pred.mean, std, self.beta)),
        }
    }
}

/// How β_t is chosen for UCB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BetaSchedule {
    /// `2 log(t^{d/2+2} π² / (3δ))`.
    Experiment,
    /// `2 log(t^{d/2+2} π² δ / 3)`, the other reading of the same expression.
    ExperimentAlternate,
    /// `2 log(2π²t²/(3δ)) + 2d log(t² d b r √log(4da/δ))`.
    Bound { a: f64, b: f64, r: f64 },
    Constant { beta: f64 },
}

/// β_t at iteration `t ≥ 1` in dimension `d` with confidence `delta`.
pub fn beta_schedule(t: usize, d: usize, delta: f64, schedule: BetaSchedule) -> Result<f64> {
    if t == 0 || d == 0 {
        return Err(Error::InvalidParameter("beta schedule needs t >= 1 and d >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let t = t as f64;
    let d = d as f64;
    let pi2 = PI * PI;
    let value = match schedule {
        BetaSchedule::Experiment => 2.0 * ((d / 2.0 + 2.0) * t.ln() + (pi2 / (3.0 * delta)).ln()),
        BetaSchedule::ExperimentAlternate => 2.0 * ((d / 2.0 + 2.0) * t.ln() + (pi2 * delta / 3.0).ln()),
        BetaSchedule::Bound { a, b, r } => {
            if !(a > 0.0 && b > 0.0 && r > 0.0) {
                return Err(Error::InvalidParameter("bound constants a, b, r must be positive".into()));
            }
            let inner = (4.0 * d * a / delta).ln();
            if inner <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "log(4da/delta) = {inner} must be positive"
                )));
            }
            2.0 * (2.0 * pi2 * t * t / (3.0 * delta)).ln() + 2.0 * d * (t * t * d * b * r * inner.sqrt()).ln()
        }
        BetaSchedule::Constant { beta } => beta,
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from a 40-digit evaluation of Φ.
    const CDF_REFERENCE: [(f64, f64); 6] = [
        (0.0, 0.5),
        (1.0, 0.841_344_746_068_542_9),
        (1.644_853_6, 0.949_999_997_220_342_5),
        (-3.0, 0.001_349_898_031_630_094_5),
        (2.5, 0.993_790_334_674_223_9),
        (-8.0, 6.220_960_574_271_784e-16),
    ];

    #[test]
    fn normal_cdf_reference_values() {
        for (z, expected) in CDF_REFERENCE {
            assert!((std_normal_cdf(z) - expected).abs() <= 1e-12, "z = {z}");
        }
        assert!((std_normal_cdf(1.644_853_6) - 0.95).abs() < 1e-6);
        assert!((std_normal_pdf(0.0) - 0.398_942).abs() < 1e-6);
        assert_eq!(std_normal_pdf(0.0), 1.0 / (2.0 * PI).sqrt());
    }

    #[test]
    fn pi_cases() {
        assert_eq!(pi_value(0.3, 1.0, 0.3).unwrap(), 0.5);
        assert_eq!(pi_value(0.4, 0.0, 0.3).unwrap(), 1.0);
        assert_eq!(pi_value(0.3, 0.0, 0.3).unwrap(), 0.0);
        assert!((pi_value(1.5, 1.0, 0.5).unwrap() - 0.841_345).abs() < 1e-6);
        assert!(pi_value(f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn ei_cases() {
        assert_eq!(ei_value(2.0, 0.0, 0.0).unwrap(), 0.0);
        assert!((ei_value(0.7, 1.0, 0.7).unwrap() - 0.398_942).abs() < 1e-6);
        assert!((ei_value(3.0, 1e-9, 0.0).unwrap() - 3.0).abs() < 1e-9);
        assert!(ei_value(0.0, -1.0, 0.0).is_err());
        assert!(ei_value(0.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn ucb_cases() {
        assert_eq!(ucb_value(0.25, 3.0, 0.0), 0.25);
        assert_eq!(ucb_value(0.0, 1.0, 4.0), 2.0);
    }

    #[test]
    fn experiment_beta() {
        let b = beta_schedule(1, 2, 0.1, BetaSchedule::Experiment).unwrap();
        assert!((b - 6.986_865_152_049_473).abs() < 1e-12);
        let mut prev = b;
        for t in 2..200 {
            let next = beta_schedule(t, 2, 0.1, BetaSchedule::Experiment).unwrap();
            assert!(next > prev);
            prev = next;
        }
    }

    #[test]
    fn bound_beta_direct_evaluation() {
        let b = beta_schedule(1, 1, 0.1, BetaSchedule::Bound { a: 1.0, b: 1.0, r: 1.0 }).unwrap();
        let direct = 2.0 * (2.0 * PI * PI / 0.3).ln() + 2.0 * (40f64.ln().sqrt()).ln();
        assert!(b > 0.0);
        assert!((b - direct).abs() < 1e-12);
    }

    #[test]
    fn beta_rejects_bad_delta() {
        assert!(beta_schedule(1, 2, 0.0, BetaSchedule::Experiment).is_err());
        assert!(beta_schedule(1, 2, 1.0, BetaSchedule::Experiment).is_err());
        assert!(beta_schedule(0, 2, 0.5, BetaSchedule::Experiment).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(AcquisitionSpec::new(AcquisitionKind::Ucb, f64::NAN, 1.0).is_ok());
        assert!(AcquisitionSpec::new(AcquisitionKind::Ei, f64::NAN, 1.0).is_err());
        assert!(AcquisitionSpec::new(AcquisitionKind::Ucb, 0.0, -1.0).is_err());
    }
}
