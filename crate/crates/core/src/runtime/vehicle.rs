//! Per-vehicle execution of the structured controller.
//!
//! Vehicle `i` at step `k` knows its own state history, its neighbors'
//! states up to `k-1`, and the full platoon state up to `k-2`. It keeps a
//! replica of the monolithic controller state advanced over the common
//! history `x(0:k-2)`; every vehicle's replica is identical. From the replica
//! it obtains `zeta(k-1)`, `xi(k)` and, through the control law itself, the
//! inputs of the other vehicles, which are never transmitted.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{check_dims, Error, Result};
use crate::model::SubsystemPartition;
use crate::runtime::{ControllerState, Realization};
use crate::structured::SparsityMask;

/// Everything vehicle `i` receives at step `k` from outside itself.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleInbox {
    pub vehicle: usize,
    pub step: usize,
    /// `x_i(k)`, measured locally.
    pub own_state: DVector<f64>,
    /// `x_j(k-1)` from direct neighbors.
    pub neighbor_prev: BTreeMap<usize, DVector<f64>>,
    /// Full `x(k-2)`, completed this step; `None` when `k < 2` or when some
    /// part of it never arrived.
    pub common: Option<DVector<f64>>,
}

/// Local controller of one vehicle.
#[derive(Debug, Clone)]
pub struct VehicleController {
    id: usize,
    partition: SubsystemPartition,
    realization: Realization,
    /// Vehicles whose `k-1` state this one reads.
    required: Vec<usize>,
    replica: ControllerState,
    common_history: Vec<DVector<f64>>,
    own_prev_state: Option<DVector<f64>>,
    own_prev_input: Option<DVector<f64>>,
    k: usize,
}

impl VehicleController {
    /// `mask_m` decides which neighbor states enter the `M` term; the rows of
    /// `A` decide which enter the local one-step prediction.
    pub fn new(
        id: usize,
        realization: Realization,
        partition: &SubsystemPartition,
        mask_m: &SparsityMask,
    ) -> Result<Self> {
        if id >= partition.len() {
            return Err(Error::IndexOutOfRange { index: id, limit: partition.len() });
        }
        check_dims("A", (partition.n(), partition.n()), realization.a.shape())?;
        check_dims("B", (partition.n(), partition.m()), realization.b.shape())?;
        let own_rows = partition.state_range(id);
        let own_inputs = partition.input_range(id);
        let mut required = Vec::new();
        for j in 0..partition.len() {
            if j == id {
                continue;
            }
            let cols = partition.state_range(j);
            let in_a = own_rows
                .clone()
                .any(|r| cols.clone().any(|c| realization.a[(r, c)] != 0.0));
            let in_m = own_inputs.clone().any(|r| cols.clone().any(|c| mask_m.allows(r, c)));
            if in_a || in_m {
                if !partition.neighbors(id).contains(&j) {
                    return Err(Error::UnsupportedStructure(format!(
                        "vehicle {} would need the one-step-old state of non-neighbor {}",
                        id + 1,
                        j + 1
                    )));
                }
                required.push(j);
            }
        }
        // B must not couple this vehicle's states to other vehicles' inputs.
        for r in own_rows {
            for c in 0..partition.m() {
                if !own_inputs.contains(&c) && realization.b[(r, c)] != 0.0 {
                    return Err(Error::UnsupportedStructure(
                        "per-vehicle execution needs a block-diagonal B".into(),
                    ));
                }
            }
        }
        Ok(Self {
            id,
            partition: partition.clone(),
            replica: ControllerState::new(partition.n()),
            realization,
            required,
            common_history: Vec::new(),
            own_prev_state: None,
            own_prev_input: None,
            k: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn required_neighbors(&self) -> &[usize] {
        &self.required
    }

    /// `x(0:k-2)` as assembled by this vehicle.
    pub fn common_history(&self) -> &[DVector<f64>] {
        &self.common_history
    }

    /// Replica of the monolithic state after the common history.
    pub fn replica(&self) -> &ControllerState {
        &self.replica
    }
}

fn violation(vehicle: usize, step: usize, missing: String) -> Error {
    Error::InformationViolation { vehicle: vehicle + 1, step, missing }
}

/// Compute `u_i(k)` from the inbox.
///
/// `offsets[j]` is the known offset `c(j)` for `j < k`.
pub fn vehicle_step(
    ctrl: &mut VehicleController,
    inbox: &VehicleInbox,
    offsets: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let (i, k) = (ctrl.id, ctrl.k);
    if inbox.vehicle != i || inbox.step != k {
        return Err(Error::Parameter(format!(
            "inbox for vehicle {} step {} handed to vehicle {} at step {}",
            inbox.vehicle + 1,
            inbox.step,
            i + 1,
            k
        )));
    }
    if offsets.len() < k {
        return Err(violation(i, k, format!("reference offsets up to step {}", k.saturating_sub(1))));
    }
    let p = &ctrl.partition;
    let n = p.n();
    let rows = p.state_range(i);
    let inputs = p.input_range(i);
    check_dims("own state", (rows.len(), 1), inbox.own_state.shape())?;
    let allowed = p.neighbors(i);
    if let Some(&j) = inbox.neighbor_prev.keys().find(|j| !allowed.contains(j)) {
        return Err(violation(i, k, format!("unexpected state of non-neighbor vehicle {}", j + 1)));
    }

    if k >= 2 {
        let common = inbox
            .common
            .as_ref()
            .ok_or_else(|| violation(i, k, format!("common history x({})", k - 2)))?;
        check_dims("common state", (n, 1), common.shape())?;
        ctrl.realization.step_with_offset(&mut ctrl.replica, common, &offsets[k - 2])?;
        ctrl.common_history.push(common.clone());
    } else if inbox.common.is_some() {
        return Err(violation(i, k, "common history before step 2".into()));
    }

    let r = &ctrl.realization;
    let f_ii = r.f.view((inputs.start, rows.start), (inputs.len(), rows.len()));
    let u_i = if k == 0 {
        f_ii * &inbox.own_state
    } else {
        let mut x_prev = DVector::zeros(n);
        let own_prev = ctrl.own_prev_state.as_ref().expect("own history is recorded every step");
        x_prev.rows_mut(rows.start, rows.len()).copy_from(own_prev);
        for &j in &ctrl.required {
            let xj = inbox
                .neighbor_prev
                .get(&j)
                .ok_or_else(|| violation(i, k, format!("x{}({})", j + 1, k - 1)))?;
            let rj = p.state_range(j);
            check_dims("neighbor state", (rj.len(), 1), xj.shape())?;
            x_prev.rows_mut(rj.start, rj.len()).copy_from(xj);
        }
        let c_prev = &offsets[k - 1];
        let u_prev = ctrl.own_prev_input.as_ref().expect("own input is recorded every step");
        let zeta_i = r.a.rows(rows.start, rows.len()) * &x_prev
            + r.b.view((rows.start, inputs.start), (rows.len(), inputs.len())) * u_prev
            + c_prev.rows(rows.start, rows.len());
        let xi = r.next_xi(&ctrl.replica, c_prev);
        // Entries of x_prev outside the required blocks are zero, and so is M there.
        let innovation_prev = &x_prev - &ctrl.replica.zeta;
        f_ii * (&inbox.own_state - zeta_i)
            + r.m.rows(inputs.start, inputs.len()) * innovation_prev
            + r.l.rows(inputs.start, inputs.len()) * xi
    };

    ctrl.own_prev_state = Some(inbox.own_state.clone());
    ctrl.own_prev_input = Some(u_i.clone());
    ctrl.k += 1;
    Ok(u_i)
}
