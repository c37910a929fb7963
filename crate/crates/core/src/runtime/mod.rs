//! Controller execution.
//!
//! [`Realization`] runs the optimal controller on the full state using the
//! one-step predictor `zeta` and the two-step conditional mean `xi`:
//!
//! ```text
//! u(k)      = F (x(k) - zeta(k)) + M (x(k-1) - zeta(k-1)) + L xi(k)
//! zeta(k+1) = A x(k) + B u(k) + c(k)
//! xi(k+1)   = A zeta(k) + B M (x(k-1) - zeta(k-1)) + B L xi(k) + c(k)
//! ```
//!
//! where `c(k)` is a known deterministic input (reference injection, zero by
//! default). Pre-history is `x(-1) = zeta(-1) = zeta(0) = xi(0) = 0`, so
//! `u(0) = F x(0)`.
//!
//! [`vehicle`] and [`bus`] run the same law split across vehicles that only
//! see their own information sets.

pub mod bus;
pub mod vehicle;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::model::LinearPlatoonModel;
use crate::synthesis::DelayedGains;

pub use bus::{DistributedPlatoon, Message, MessageBus, Withhold};
pub use vehicle::{vehicle_step, VehicleController, VehicleInbox};

/// Internal state of the monolithic realization before step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// `zeta(k) = A x(k-1) + B u(k-1)`.
    pub zeta: DVector<f64>,
    pub zeta_prev: DVector<f64>,
    /// `xi(k) = E{x(k) | x(0:k-2)}`.
    pub xi: DVector<f64>,
    pub x_prev: DVector<f64>,
    pub k: usize,
}

impl ControllerState {
    pub fn new(n: usize) -> Self {
        Self {
            zeta: DVector::zeros(n),
            zeta_prev: DVector::zeros(n),
            xi: DVector::zeros(n),
            x_prev: DVector::zeros(n),
            k: 0,
        }
    }

    /// `x(k-1) - zeta(k-1)`.
    pub fn innovation_prev(&self) -> DVector<f64> {
        &self.x_prev - &self.zeta_prev
    }
}

/// System and gain matrices needed to run the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl Realization {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        m: DMatrix<f64>,
        l: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, mm) = (a.nrows(), b.ncols());
        check_dims("A", (n, n), a.shape())?;
        check_dims("B", (n, mm), b.shape())?;
        check_dims("F", (mm, n), f.shape())?;
        check_dims("M", (mm, n), m.shape())?;
        check_dims("L", (mm, n), l.shape())?;
        Ok(Self { a, b, f, m, l })
    }

    /// The optimal structured controller.
    pub fn distributed(model: &LinearPlatoonModel, gains: &DelayedGains) -> Result<Self> {
        Self::new(model.a.clone(), model.b.clone(), gains.f.clone(), gains.m.clone(), gains.l.clone())
    }

    /// `u(k) = L xi(k)`: centralized control with two-step-old information.
    pub fn delayed_centralized(model: &LinearPlatoonModel, l: &DMatrix<f64>) -> Result<Self> {
        let zero = DMatrix::zeros(l.nrows(), l.ncols());
        Self::new(model.a.clone(), model.b.clone(), zero.clone(), zero, l.clone())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `u(k)` for the current state without advancing it.
    pub fn control(&self, state: &ControllerState, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dims("x", (self.n(), 1), x.shape())?;
        Ok(&self.f * (x - &state.zeta) + &self.m * state.innovation_prev() + &self.l * &state.xi)
    }

    /// `xi(k+1)` from the state before step `k`; depends only on `x(0:k-1)`.
    pub fn next_xi(&self, state: &ControllerState, c: &DVector<f64>) -> DVector<f64> {
        &self.a * &state.zeta + &self.b * (&self.m * state.innovation_prev()) + &self.b * (&self.l * &state.xi) + c
    }

    /// One step without a known input offset.
    pub fn step(&self, state: &mut ControllerState, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.step_with_offset(state, x, &DVector::zeros(self.n()))
    }

    /// Compute `u(k)` and advance the state with the offset `c(k)` that will
    /// enter `x(k+1)`.
    pub fn step_with_offset(
        &self,
        state: &mut ControllerState,
        x: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dims("c", (self.n(), 1), c.shape())?;
        let u = self.control(state, x)?;
        let xi_next = self.next_xi(state, c);
        let zeta_next = &self.a * x + &self.b * &u + c;
        state.zeta_prev = std::mem::replace(&mut state.zeta, zeta_next);
        state.xi = xi_next;
        state.x_prev = x.clone();
        state.k += 1;
        Ok(u)
    }
}

/// One step of the monolithic realization.
pub fn monolithic_step(
    state: &mut ControllerState,
    realization: &Realization,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    realization.step(state, x)
}

/// Which controller a simulation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Optimal structured controller, run monolithically.
    Distributed,
    /// Optimal structured controller, run as per-vehicle controllers over the
    /// message bus.
    DistributedPerVehicle,
    /// `u = L x`.
    Centralized,
    /// `u = L xi`.
    DelayedCentralized,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Distributed => "distributed",
            ControllerKind::DistributedPerVehicle => "distributed-per-vehicle",
            ControllerKind::Centralized => "centralized",
            ControllerKind::DelayedCentralized => "delayed-centralized",
        }
    }
}

/// A running controller of any kind.
#[derive(Debug, Clone)]
pub enum ActiveController {
    Monolithic { realization: Realization, state: ControllerState },
    PerVehicle(Box<DistributedPlatoon>),
    Centralized { l: DMatrix<f64> },
}

impl ActiveController {
    pub fn new(kind: ControllerKind, model: &LinearPlatoonModel, gains: &DelayedGains) -> Result<Self> {
        let n = model.n();
        Ok(match kind {
            ControllerKind::Distributed => ActiveController::Monolithic {
                realization: Realization::distributed(model, gains)?,
                state: ControllerState::new(n),
            },
            ControllerKind::DelayedCentralized => ActiveController::Monolithic {
                realization: Realization::delayed_centralized(model, &gains.l)?,
                state: ControllerState::new(n),
            },
            ControllerKind::DistributedPerVehicle => ActiveController::PerVehicle(Box::new(
                DistributedPlatoon::new(Realization::distributed(model, gains)?, gains, &model.partition)?,
            )),
            ControllerKind::Centralized => {
                if gains.l.shape() != (model.m(), n) {
                    return Err(Error::Dimension {
                        context: "L",
                        expected: format!("{}x{}", model.m(), n),
                        got: format!("{}x{}", gains.l.nrows(), gains.l.ncols()),
                    });
                }
                ActiveController::Centralized { l: gains.l.clone() }
            }
        })
    }

    /// `u(k)` given `x(k)` and the known offset `c(k)` entering `x(k+1)`.
    pub fn step(&mut self, x: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            ActiveController::Monolithic { realization, state } => {
                realization.step_with_offset(state, x, c)
            }
            ActiveController::PerVehicle(platoon) => platoon.step(x, c),
            ActiveController::Centralized { l } => Ok(&*l * x),
        }
    }

    /// `(zeta(k), xi(k))` before the next step, for monolithic controllers.
    pub fn estimates(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        match self {
            ActiveController::Monolithic { state, .. } => Some((&state.zeta, &state.xi)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Realization {
        Realization::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[0.3, -0.4]),
            DMatrix::from_row_slice(1, 2, &[0.1, 0.05]),
            DMatrix::from_row_slice(1, 2, &[-0.2, -0.5]),
        )
        .unwrap()
    }

    #[test]
    fn first_input_is_f_times_x0() {
        let r = toy();
        let mut s = ControllerState::new(2);
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let u = r.step(&mut s, &x0).unwrap();
        assert_eq!(u, &r.f * &x0);
        assert_eq!(s.xi, DVector::zeros(2));
        assert_eq!(s.zeta, &r.a * &x0 + &r.b * &u);
    }

    #[test]
    fn equilibrium_stays_at_rest() {
        let r = toy();
        let mut s = ControllerState::new(2);
        let zero = DVector::zeros(2);
        for _ in 0..20 {
            assert_eq!(r.step(&mut s, &zero).unwrap(), DVector::zeros(1));
        }
    }

    #[test]
    fn estimator_identities_on_a_short_run() {
        let r = toy();
        let mut s = ControllerState::new(2);
        let noise: Vec<DVector<f64>> =
            (0..30).map(|k| DVector::from_vec(vec![(k as f64 * 0.7).sin(), (k as f64 * 1.3).cos()])).collect();
        let closed = &r.a + &r.b * &r.f;
        // x(0) plays the role of w(-1)
        let mut x = noise[0].clone();
        for k in 0..29 {
            if k >= 1 {
                assert!((&x - &s.zeta - &noise[k]).amax() < 1e-12);
                let w2 = &noise[k - 1];
                assert!((&x - &s.xi - &noise[k] - &closed * w2).amax() < 1e-12);
            }
            let u = r.step(&mut s, &x).unwrap();
            x = &r.a * &x + &r.b * u + &noise[k + 1];
        }
    }

    #[test]
    fn rejects_wrong_state_length() {
        let r = toy();
        let mut s = ControllerState::new(2);
        assert!(r.step(&mut s, &DVector::zeros(3)).is_err());
    }
}
