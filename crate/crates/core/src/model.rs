//! Linearized platoon dynamics and the quadratic platooning cost.
//!
//! State ordering for `M` vehicles is `[v1, d12, v2, d23, v3, ...]`: the lead
//! vehicle owns its speed deviation, every follower owns the gap to its
//! predecessor and its own speed deviation. Inputs are engine torque deviations
//! in kNm, one per vehicle, and `k_u` converts kNm of engine torque to newtons
//! of traction force.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Validity range of the preceding-vehicle drag reduction.
pub const PRECEDING_RANGE_M: f64 = 60.0;
/// Validity range of the following-vehicle drag reduction.
pub const FOLLOWING_RANGE_M: f64 = 15.0;

/// Affine air-drag reduction percentages `alpha1*d + alpha2` (from a
/// preceding vehicle) and `beta1*d + beta2` (from a following vehicle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragModel {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Which neighbors shield a vehicle from the air stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DragExposure {
    None,
    Preceding,
    Following,
    Both,
}

impl DragExposure {
    /// Exposure of vehicle `index` (0-based) in a chain of `count` vehicles.
    pub fn in_chain(index: usize, count: usize) -> Self {
        match (index > 0, index + 1 < count) {
            (false, false) => DragExposure::None,
            (true, false) => DragExposure::Preceding,
            (false, true) => DragExposure::Following,
            (true, true) => DragExposure::Both,
        }
    }

    fn preceding(self) -> bool {
        matches!(self, DragExposure::Preceding | DragExposure::Both)
    }

    fn following(self) -> bool {
        matches!(self, DragExposure::Following | DragExposure::Both)
    }
}

/// Multiplier on the free-stream drag coefficient at gap `d`.
///
/// Each reduction term is dropped outside its validity range, so the map is
/// piecewise constant beyond 60 m (preceding) and 15 m (following).
pub fn air_drag_factor(d: f64, exposure: DragExposure, drag: &DragModel) -> Result<f64> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::Domain(format!("inter-vehicle distance must be >= 0, got {d}")));
    }
    let mut factor = 1.0;
    if exposure.preceding() && d <= PRECEDING_RANGE_M {
        factor -= (drag.alpha1 * d + drag.alpha2) / 100.0;
    }
    if exposure.following() && d <= FOLLOWING_RANGE_M {
        factor -= (drag.beta1 * d + drag.beta2) / 100.0;
    }
    Ok(factor)
}

/// Physical coefficients of one heavy-duty vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub mass_kg: f64,
    /// Traction force per kNm of engine torque (N/kNm).
    pub k_u: f64,
    /// Free-stream air-drag coefficient (N s^2/m^2).
    pub k_d: f64,
    pub k_b: f64,
    /// Rolling resistance force on a flat road (N).
    pub k_fr: f64,
    pub k_g: f64,
    /// Largest engine torque, kNm.
    pub max_engine_input: f64,
    /// Largest braking effort expressed in engine-torque units, kNm.
    pub max_brake_input: f64,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mass_kg,
            self.k_u,
            self.k_d,
            self.k_b,
            self.k_fr,
            self.k_g,
            self.max_engine_input,
            self.max_brake_input,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("vehicle coefficients must be finite".into()));
        }
        if self.mass_kg <= 0.0 {
            return Err(Error::Parameter(format!("mass must be positive, got {}", self.mass_kg)));
        }
        if self.max_engine_input <= 0.0 || self.max_brake_input <= 0.0 {
            return Err(Error::Parameter("actuator bounds must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Linearization point of the platoon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub v0: f64,
    pub tau: f64,
    pub d0: f64,
    pub ts: f64,
    pub drag: DragModel,
}

impl OperatingPoint {
    /// Builds an operating point with `d0 = tau * v0`.
    pub fn new(v0: f64, tau: f64, ts: f64, drag: DragModel) -> Result<Self> {
        let op = Self { v0, tau, d0: tau * v0, ts, drag };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.v0, self.tau, self.d0, self.ts];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("operating point values must be finite".into()));
        }
        if self.v0 <= 0.0 {
            return Err(Error::Parameter(format!("v0 must be positive, got {}", self.v0)));
        }
        if self.tau < 0.0 {
            return Err(Error::Parameter(format!("time gap must be >= 0, got {}", self.tau)));
        }
        // Ts = 0 is accepted: it freezes the dynamics and is useful as a degenerate case.
        if self.ts < 0.0 {
            return Err(Error::Parameter(format!("sampling time must be >= 0, got {}", self.ts)));
        }
        if (self.d0 - self.tau * self.v0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "d0 = {} is inconsistent with tau * v0 = {}",
                self.d0,
                self.tau * self.v0
            )));
        }
        Ok(())
    }
}

/// Discretized coefficients of one vehicle's speed row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedRowCoefficients {
    /// Self coefficient on the speed deviation.
    pub theta: f64,
    /// Coupling to the gap in front (preceding-vehicle drag slope).
    pub delta: f64,
    /// Coupling to the gap behind (following-vehicle drag slope).
    pub gamma: f64,
}

/// Coefficients of the linearized speed rows for each vehicle.
pub fn linearized_coefficients(
    params: &[VehicleParams],
    op: &OperatingPoint,
) -> Result<Vec<SpeedRowCoefficients>> {
    if params.len() < 2 {
        return Err(Error::Parameter(format!(
            "a platoon needs at least two vehicles, got {}",
            params.len()
        )));
    }
    op.validate()?;
    let count = params.len();
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.validate()?;
            let factor = air_drag_factor(op.d0, DragExposure::in_chain(i, count), &op.drag)?;
            let k_eff = p.k_d * factor;
            let v2 = op.v0 * op.v0;
            Ok(SpeedRowCoefficients {
                theta: 1.0 - op.ts * 2.0 * k_eff * op.v0 / p.mass_kg,
                delta: -op.ts * op.drag.alpha1 * p.k_d * v2 / p.mass_kg,
                gamma: -op.ts * op.drag.beta1 * p.k_d * v2 / p.mass_kg,
            })
        })
        .collect()
}

/// Per-subsystem state and input dimensions of a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct SubsystemPartition {
    state_dims: Vec<usize>,
    input_dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    state_dims: Vec<usize>,
    input_dims: Vec<usize>,
}

impl TryFrom<PartitionRepr> for SubsystemPartition {
    type Error = Error;
    fn try_from(r: PartitionRepr) -> Result<Self> {
        SubsystemPartition::new(r.state_dims, r.input_dims)
    }
}

impl From<SubsystemPartition> for PartitionRepr {
    fn from(p: SubsystemPartition) -> Self {
        PartitionRepr { state_dims: p.state_dims, input_dims: p.input_dims }
    }
}

impl SubsystemPartition {
    pub fn new(state_dims: Vec<usize>, input_dims: Vec<usize>) -> Result<Self> {
        if state_dims.len() != input_dims.len() || state_dims.is_empty() {
            return Err(Error::Parameter(
                "partition needs the same non-zero number of state and input blocks".into(),
            ));
        }
        if state_dims.iter().chain(&input_dims).any(|&d| d == 0) {
            return Err(Error::Parameter("partition blocks must be non-empty".into()));
        }
        Ok(Self { state_dims, input_dims })
    }

    /// Lead vehicle owns one state, followers two; one input each.
    pub fn platoon(vehicles: usize) -> Result<Self> {
        if vehicles < 2 {
            return Err(Error::Parameter("a platoon needs at least two vehicles".into()));
        }
        let mut states = vec![2; vehicles];
        states[0] = 1;
        Self::new(states, vec![1; vehicles])
    }

    pub fn len(&self) -> usize {
        self.state_dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state_dims.is_empty()
    }

    pub fn n(&self) -> usize {
        self.state_dims.iter().sum()
    }

    pub fn m(&self) -> usize {
        self.input_dims.iter().sum()
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn state_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.state_dims[..i].iter().sum();
        start..start + self.state_dims[i]
    }

    pub fn input_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.input_dims[..i].iter().sum();
        start..start + self.input_dims[i]
    }

    /// Subsystem owning state index `s`.
    pub fn state_owner(&self, s: usize) -> usize {
        (0..self.len()).find(|&i| self.state_range(i).contains(&s)).expect("state index in range")
    }

    /// Chain neighbors of subsystem `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        if i > 0 {
            out.push(i - 1);
        }
        if i + 1 < self.len() {
            out.push(i + 1);
        }
        out
    }

    /// Copy of the partition with one extra state appended to subsystem `i`.
    pub fn with_extra_state(&self, i: usize) -> Self {
        let mut states = self.state_dims.clone();
        states[i] += 1;
        Self { state_dims: states, input_dims: self.input_dims.clone() }
    }

    /// Keep entries whose row and column subsystems satisfy `keep`.
    pub fn mask_blocks(
        &self,
        a: &DMatrix<f64>,
        keep: impl Fn(usize, usize) -> bool,
    ) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| {
            if keep(self.state_owner(r), self.state_owner(c)) {
                a[(r, c)]
            } else {
                0.0
            }
        })
    }
}

/// Linear stochastic model `x(k+1) = A x(k) + B u(k) + w(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlatoonModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    pub partition: SubsystemPartition,
    pub labels: Vec<String>,
    pub ts: f64,
    /// Index of the lead-vehicle integrator state, when augmented.
    pub integrator: Option<usize>,
}

impl LinearPlatoonModel {
    /// Assemble a model from raw matrices, validating shapes and covariances.
    pub fn from_parts(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        w: DMatrix<f64>,
        p0: DMatrix<f64>,
        partition: SubsystemPartition,
        ts: f64,
    ) -> Result<Self> {
        let (n, m) = (partition.n(), partition.m());
        check_dims("A", (n, n), a.shape())?;
        check_dims("B", (n, m), b.shape())?;
        check_dims("W", (n, n), w.shape())?;
        check_dims("P0", (n, n), p0.shape())?;
        validate_covariances(&w, &p0)?;
        let labels = (0..n).map(|i| format!("x{}", i + 1)).collect();
        Ok(Self { a, b, w, p0, partition, labels, ts, integrator: None })
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    /// Index of vehicle 1's speed deviation.
    pub fn lead_speed_index(&self) -> usize {
        0
    }

    /// Augment the lead vehicle with a discrete integrator of its speed error,
    /// `z(k+1) = z(k) + Ts * v1(k)`, stored directly after `v1`.
    ///
    /// The integrator receives independent noise of variance `noise_variance`
    /// so that the augmented covariance stays positive definite.
    pub fn with_lead_integrator(&self, noise_variance: f64) -> Result<Self> {
        if self.integrator.is_some() {
            return Err(Error::Model("model already carries an integrator".into()));
        }
        if !(noise_variance > 0.0) {
            return Err(Error::Parameter(format!(
                "integrator noise variance must be positive, got {noise_variance}"
            )));
        }
        let at = self.partition.state_range(0).end;
        let mut a = insert_state(&self.a, at);
        a[(at, self.lead_speed_index())] = self.ts;
        a[(at, at)] = 1.0;
        let b = self.b.clone().insert_row(at, 0.0);
        let mut w = insert_state(&self.w, at);
        w[(at, at)] = noise_variance;
        let mut p0 = insert_state(&self.p0, at);
        p0[(at, at)] = noise_variance;
        let mut labels = self.labels.clone();
        labels.insert(at, "z1".into());
        validate_covariances(&w, &p0)?;
        Ok(Self {
            a,
            b,
            w,
            p0,
            partition: self.partition.with_extra_state(0),
            labels,
            ts: self.ts,
            integrator: Some(at),
        })
    }

    /// Zero every off-block-diagonal entry of A, W and P0.
    pub fn decoupled(&self) -> Result<Self> {
        let p = &self.partition;
        let same = |i: usize, j: usize| i == j;
        let out = Self {
            a: p.mask_blocks(&self.a, same),
            w: p.mask_blocks(&self.w, same),
            p0: p.mask_blocks(&self.p0, same),
            ..self.clone()
        };
        validate_covariances(&out.w, &out.p0)?;
        Ok(out)
    }
}

/// Build the linearized platoon model from vehicle and operating-point data.
///
/// Gap rows integrate the relative speed over one sample:
/// `d(k+1) = d(k) + Ts (v_prev(k) - v(k))`. Speed rows carry `theta` on the
/// diagonal, `delta` on the gap in front and `gamma` on the gap behind.
/// Inputs enter speed rows through `Ts * k_u / m`.
pub fn build_platoon_model(
    params: &[VehicleParams],
    op: &OperatingPoint,
    w: DMatrix<f64>,
    p0: DMatrix<f64>,
) -> Result<LinearPlatoonModel> {
    let coeffs = linearized_coefficients(params, op)?;
    let count = params.len();
    let partition = SubsystemPartition::platoon(count)?;
    let (n, m) = (partition.n(), partition.m());
    check_dims("W", (n, n), w.shape())?;
    check_dims("P0", (n, n), p0.shape())?;

    let speed = |i: usize| if i == 0 { 0 } else { 2 * i };
    let gap = |i: usize| 2 * i - 1; // gap in front of follower i
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for (i, c) in coeffs.iter().enumerate() {
        let v = speed(i);
        a[(v, v)] = c.theta;
        if i > 0 {
            a[(v, gap(i))] = c.delta;
            let g = gap(i);
            a[(g, speed(i - 1))] = op.ts;
            a[(g, g)] = 1.0;
            a[(g, v)] = -op.ts;
        }
        if i + 1 < count {
            a[(v, gap(i + 1))] = c.gamma;
        }
        b[(v, i)] = op.ts * params[i].k_u / params[i].mass_kg;
    }

    let mut model = LinearPlatoonModel::from_parts(a, b, w, p0, partition, op.ts)
        .map_err(|e| match e {
            Error::Factorization(msg) => Error::Model(msg),
            other => other,
        })?;
    model.labels = (0..count)
        .flat_map(|i| {
            if i == 0 {
                vec!["v1".to_string()]
            } else {
                vec![format!("d{}{}", i, i + 1), format!("v{}", i + 1)]
            }
        })
        .collect();
    Ok(model)
}

/// Engine torque (kNm) that holds each vehicle at `v0` on a flat road.
pub fn nominal_inputs(params: &[VehicleParams], op: &OperatingPoint) -> Result<Vec<f64>> {
    let count = params.len();
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let factor = air_drag_factor(op.d0, DragExposure::in_chain(i, count), &op.drag)?;
            Ok((p.k_d * factor * op.v0 * op.v0 + p.k_fr) / p.k_u)
        })
        .collect()
}

fn validate_covariances(w: &DMatrix<f64>, p0: &DMatrix<f64>) -> Result<()> {
    let sym_tol = 1e-12 * w.amax().max(1.0);
    if (w - w.transpose()).amax() > sym_tol {
        return Err(Error::Model("noise covariance W must be symmetric".into()));
    }
    if w.clone().cholesky().is_none() {
        return Err(Error::Model("noise covariance W must be positive definite".into()));
    }
    if (p0 - p0.transpose()).amax() > 1e-12 * p0.amax().max(1.0) {
        return Err(Error::Model("initial covariance P0 must be symmetric".into()));
    }
    if min_eigenvalue(p0) < -1e-12 * p0.amax().max(1.0) {
        return Err(Error::Model("initial covariance P0 must be positive semi-definite".into()));
    }
    Ok(())
}

pub(crate) fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.min()
}

/// Insert a zero row and column at index `at` of a square matrix.
pub(crate) fn insert_state(a: &DMatrix<f64>, at: usize) -> DMatrix<f64> {
    a.clone().insert_row(at, 0.0).insert_column(at, 0.0)
}

/// Weights of the lead vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadWeights {
    pub w_v: f64,
    pub w_u: f64,
}

/// Weights of one follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerWeights {
    /// Time-gap tracking, `(d - tau v)^2`.
    pub w_tau: f64,
    /// Relative speed, `(v_prev - v)^2`.
    pub w_dv: f64,
    pub w_d: f64,
    pub w_v: f64,
    pub w_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub lead: LeadWeights,
    pub followers: Vec<FollowerWeights>,
}

impl CostWeights {
    /// Input weight of every vehicle, lead first.
    pub fn input_weights(&self) -> Vec<f64> {
        std::iter::once(self.lead.w_u)
            .chain(self.followers.iter().map(|f| f.w_u))
            .collect()
    }

    /// The stage cost written term by term, without any matrix assembly.
    pub fn evaluate_state_terms(&self, tau: f64, x: &[f64]) -> f64 {
        let mut total = self.lead.w_v * x[0] * x[0];
        for (j, f) in self.followers.iter().enumerate() {
            let (v_prev, d, v) = (x[2 * j], x[2 * j + 1], x[2 * j + 2]);
            total += f.w_tau * (d - tau * v).powi(2)
                + f.w_dv * (v_prev - v).powi(2)
                + f.w_d * d * d
                + f.w_v * v * v;
        }
        total
    }
}

/// Quadratic stage and terminal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q0: DMatrix<f64>,
    pub weights: CostWeights,
}

impl CostSpec {
    /// Weight `weight` on the lead integrator state inserted at `at`.
    pub fn with_lead_integrator(&self, at: usize, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::Parameter(format!("integrator weight must be >= 0, got {weight}")));
        }
        let mut q = insert_state(&self.q, at);
        q[(at, at)] = weight;
        let mut q0 = insert_state(&self.q0, at);
        q0[(at, at)] = weight;
        Ok(Self { q, r: self.r.clone(), q0, weights: self.weights.clone() })
    }

    /// Zero the off-block-diagonal entries of Q, Q0 and R.
    pub fn decoupled(&self, partition: &SubsystemPartition) -> Self {
        let same = |i: usize, j: usize| i == j;
        let input_owner = |j: usize| (0..partition.len()).find(|&i| partition.input_range(i).contains(&j));
        let r = DMatrix::from_fn(self.r.nrows(), self.r.ncols(), |i, j| {
            if input_owner(i) == input_owner(j) {
                self.r[(i, j)]
            } else {
                0.0
            }
        });
        Self {
            q: partition.mask_blocks(&self.q, same),
            q0: partition.mask_blocks(&self.q0, same),
            r,
            weights: self.weights.clone(),
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        check_dims("Q", (n, n), self.q.shape())?;
        check_dims("Q0", (n, n), self.q0.shape())?;
        check_dims("R", (m, m), self.r.shape())?;
        for (name, mat) in [("Q", &self.q), ("Q0", &self.q0)] {
            let scale = mat.amax().max(1.0);
            if (mat - mat.transpose()).amax() > 1e-12 * scale {
                return Err(Error::Parameter(format!("{name} must be symmetric")));
            }
            if min_eigenvalue(mat) < -1e-10 * scale {
                return Err(Error::Parameter(format!("{name} must be positive semi-definite")));
            }
        }
        if self.r.clone().cholesky().is_none() || (&self.r - self.r.transpose()).amax() > 0.0 {
            return Err(Error::Parameter("R must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

/// Assemble Q, R and Q0 = Q from the platooning weights.
pub fn build_cost(weights: &CostWeights, tau: f64, partition: &SubsystemPartition) -> Result<CostSpec> {
    let count = partition.len();
    if *partition != SubsystemPartition::platoon(count)? {
        return Err(Error::UnsupportedStructure(
            "cost weights need the plain platoon partition".into(),
        ));
    }
    if weights.followers.len() + 1 != count {
        return Err(Error::Parameter(format!(
            "expected {} follower weight sets, got {}",
            count - 1,
            weights.followers.len()
        )));
    }
    let state_weights = std::iter::once(weights.lead.w_v).chain(weights.followers.iter().flat_map(
        |f| [f.w_tau, f.w_dv, f.w_d, f.w_v],
    ));
    if state_weights.into_iter().any(|w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Parameter("state weights must be finite and >= 0".into()));
    }
    let input_weights = weights.input_weights();
    if input_weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::Parameter(
            "every input weight must be strictly positive so that R is positive definite".into(),
        ));
    }

    let n = partition.n();
    let mut q = DMatrix::zeros(n, n);
    q[(0, 0)] = weights.lead.w_v;
    for (j, f) in weights.followers.iter().enumerate() {
        let block = DMatrix::from_row_slice(
            3,
            3,
            &[
                f.w_dv,
                0.0,
                -f.w_dv,
                0.0,
                f.w_d + f.w_tau,
                -tau * f.w_tau,
                -f.w_dv,
                -tau * f.w_tau,
                tau * tau * f.w_tau + f.w_dv + f.w_v,
            ],
        );
        let start = 2 * j; // (v_prev, d, v)
        let mut view = q.view_mut((start, start), (3, 3));
        view += block;
    }
    let r = DMatrix::from_diagonal(&DVector::from_vec(input_weights));
    let cost = CostSpec { q0: q.clone(), q, r, weights: weights.clone() };
    cost.validate(n, partition.m())?;
    Ok(cost)
}
