//! Lead-vehicle speed profiles.
//!
//! The model lives in deviation coordinates around the nominal speed `v0`.
//! A reference speed `v_ref` different from `v0` is injected through the
//! lead integrator, which accumulates `v1 + (v0 - v_ref)`; integral action
//! then drives the lead speed to `v_ref`, and the followers track it through
//! the time-gap cost.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearPlatoonModel;

pub fn kmh_to_mps(v: f64) -> f64 {
    v / 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePoint {
    pub time_s: f64,
    pub speed_mps: f64,
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of simulated steps.
    pub horizon: usize,
    pub seed: u64,
    /// Reference speed changes; before the first point the reference is `v0`.
    #[serde(default)]
    pub profile: Vec<ProfilePoint>,
    /// Multiplies the noise and initial-state draws.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    /// Augment the lead vehicle with an integrator before synthesis.
    #[serde(default)]
    pub integral_action: bool,
}

impl Scenario {
    pub fn flat(horizon: usize, seed: u64) -> Self {
        Self { horizon, seed, profile: Vec::new(), noise_scale: 1.0, integral_action: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Scenario("horizon must be positive".into()));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::Scenario(format!("noise scale must be finite and >= 0, got {}", self.noise_scale)));
        }
        for p in &self.profile {
            if !p.time_s.is_finite() || p.time_s < 0.0 || !(p.speed_mps >= 0.0) || !p.speed_mps.is_finite() {
                return Err(Error::Scenario(format!("invalid profile point {p:?}")));
            }
        }
        if self.profile.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
            return Err(Error::Scenario("profile times must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Reference speed at time `t`.
    pub fn reference_speed(&self, t: f64, v0: f64) -> f64 {
        self.profile
            .iter()
            .take_while(|p| p.time_s <= t + 1e-9)
            .last()
            .map_or(v0, |p| p.speed_mps)
    }

    pub fn is_flat(&self, v0: f64) -> bool {
        self.profile.iter().all(|p| p.speed_mps == v0)
    }

    /// `v0 - v_ref` at step `k`: the amount by which the lead vehicle is too
    /// fast when it sits at the nominal speed.
    pub fn lead_offset(&self, k: usize, ts: f64, v0: f64) -> f64 {
        v0 - self.reference_speed(k as f64 * ts, v0)
    }
}

/// Known input `c(k)` entering `x(k+1)`: `Ts (v0 - v_ref(k))` on the lead
/// integrator, zero elsewhere.
pub fn scenario_injection(
    model: &LinearPlatoonModel,
    scenario: &Scenario,
    v0: f64,
    k: usize,
) -> Result<DVector<f64>> {
    let mut c = DVector::zeros(model.n());
    let offset = scenario.lead_offset(k, model.ts, v0);
    if offset != 0.0 {
        let z = model.integrator.ok_or_else(|| {
            Error::Scenario(
                "a non-flat speed profile needs integral action on the lead vehicle".into(),
            )
        })?;
        c[z] = model.ts * offset;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> Scenario {
        Scenario {
            horizon: 1000,
            seed: 0,
            profile: vec![
                ProfilePoint { time_s: 10.0, speed_mps: kmh_to_mps(60.0) },
                ProfilePoint { time_s: 40.0, speed_mps: kmh_to_mps(70.0) },
                ProfilePoint { time_s: 70.0, speed_mps: kmh_to_mps(80.0) },
            ],
            noise_scale: 0.0,
            integral_action: true,
        }
    }

    #[test]
    fn flat_profile_has_no_offset() {
        let s = Scenario::flat(10, 0);
        assert!(s.is_flat(19.44));
        assert_eq!(s.lead_offset(5, 0.1, 19.44), 0.0);
    }

    #[test]
    fn step_down_gives_positive_offset() {
        let s = fig2();
        let v0 = kmh_to_mps(70.0);
        assert_eq!(s.lead_offset(99, 0.1, v0), 0.0);
        assert!((s.lead_offset(100, 0.1, v0) - 2.7778).abs() < 1e-4);
        assert!(s.lead_offset(450, 0.1, v0).abs() < 1e-12);
        assert!((s.lead_offset(800, 0.1, v0) + 2.7778).abs() < 1e-4);
    }

    #[test]
    fn non_increasing_times_are_rejected() {
        let mut s = fig2();
        s.profile[1].time_s = 10.0;
        assert!(matches!(s.validate(), Err(Error::Scenario(_))));
        s.profile[1].time_s = 40.0;
        assert!(s.validate().is_ok());
        s.horizon = 0;
        assert!(s.validate().is_err());
    }
}
