//! Optimal structured gains under two-step delayed information sharing.
//!
//! The controller is parameterized by `F` (acts on the freshest local state,
//! block diagonal) and `M` (acts on the one-step-old innovation, block
//! tridiagonal). Stacking `D = [F M]`, the delay penalty is a strictly convex
//! quadratic in the free entries of `vec(D)`:
//!
//! ```text
//! minimize 1/2 d' [Y]_SS d - d' [b]_S,   d = vec*(D)
//! ```
//!
//! whose minimizer is `[Y]_SS^{-1} [b]_S`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::exec::{try_map_indices, ExecMode};
use crate::lqr::{riccati_recursion, solve_dare_from, trace_product, DareOptions, RiccatiSolution};
use crate::model::{CostSpec, LinearPlatoonModel, SubsystemPartition};
use crate::structured::{
    chain_masks, is_positive_definite, kron, scatter, submatrix, subvector, symmetrize_checked,
    vec, IndexSet, SparsityMask,
};

/// `1/2 d'Y d - d'b` over the full `vec(D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub y: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QuadraticForm {
    /// `([Y]_SS, [b]_S)`.
    pub fn reduce(&self, set: &IndexSet) -> Result<(DMatrix<f64>, DVector<f64>)> {
        Ok((submatrix(&self.y, set)?, subvector(&self.b, set)?))
    }

    /// Gradient `[Y]_SS d - [b]_S` of the reduced objective.
    pub fn reduced_gradient(&self, set: &IndexSet, d_star: &DVector<f64>) -> Result<DVector<f64>> {
        let (ys, bs) = self.reduce(set)?;
        Ok(ys * d_star - bs)
    }
}

fn check_quadratic_inputs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<()> {
    let (n, m) = (a.nrows(), b.ncols());
    check_dims("A", (n, n), a.shape())?;
    check_dims("B", (n, m), b.shape())?;
    check_dims("W", (n, n), w.shape())?;
    check_dims("H", (m, m), h.shape())?;
    check_dims("L", (m, n), l.shape())
}

fn assemble(
    y11: DMatrix<f64>,
    y12: DMatrix<f64>,
    y21: DMatrix<f64>,
    y22: DMatrix<f64>,
    b_top: DVector<f64>,
    b_bottom: DVector<f64>,
) -> Result<QuadraticForm> {
    let k = y11.nrows();
    let mut y = DMatrix::zeros(2 * k, 2 * k);
    y.view_mut((0, 0), (k, k)).copy_from(&y11);
    y.view_mut((0, k), (k, k)).copy_from(&y12);
    y.view_mut((k, 0), (k, k)).copy_from(&y21);
    y.view_mut((k, k), (k, k)).copy_from(&y22);
    let y = symmetrize_checked(&y, 1e-10, "delay-penalty Hessian")?;
    let check = is_positive_definite(&y)?;
    if !check.positive_definite {
        return Err(Error::Synthesis(format!(
            "delay-penalty Hessian is not positive definite (min eigenvalue {:e})",
            check.min_eigenvalue
        )));
    }
    let mut b = DVector::zeros(2 * k);
    b.rows_mut(0, k).copy_from(&b_top);
    b.rows_mut(k, k).copy_from(&b_bottom);
    Ok(QuadraticForm { y, b })
}

/// Steady-state quadratic:
///
/// ```text
/// Y = [ W(x)(H + B'L'HLB)   -W(x)B'L'H ]     b = [ W(x)H ] vec(L) + [ -W(x)B'L'H ] vec(LA)
///     [ -W(x)HLB             W(x)H     ]         [   0   ]          [   W(x)H    ]
/// ```
pub fn build_quadratic_steady(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<QuadraticForm> {
    check_quadratic_inputs(a, b, w, h, l)?;
    let lb = l * b;
    let w_h = kron(w, h);
    let w_lbh = kron(w, &(lb.transpose() * h));
    let w_hlb = kron(w, &(h * &lb));
    let y11 = kron(w, &(h + lb.transpose() * h * &lb));
    let vec_l = vec(l);
    let vec_la = vec(&(l * a));
    let b_top = &w_h * &vec_l - &w_lbh * &vec_la;
    let b_bottom = &w_h * &vec_la;
    assemble(y11, -w_lbh, -w_hlb, w_h, b_top, b_bottom)
}

/// Per-step quadratic for `D(k) = [F(k-1) M(k)]`, `1 <= k <= N-1`.
///
/// `h_prev`, `l_prev` are `H(k-1)`, `L(k-1)`; `h_cur`, `l_cur` are `H(k)`, `L(k)`.
pub fn build_quadratic_step(
    h_prev: &DMatrix<f64>,
    l_prev: &DMatrix<f64>,
    h_cur: &DMatrix<f64>,
    l_cur: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<QuadraticForm> {
    check_quadratic_inputs(a, b, w, h_cur, l_cur)?;
    check_quadratic_inputs(a, b, w, h_prev, l_prev)?;
    let lb = l_cur * b;
    let y11 = kron(w, &(h_prev + lb.transpose() * h_cur * &lb));
    let y12 = -kron(w, &(lb.transpose() * h_cur));
    let y22 = kron(w, h_cur);
    let y22_prev = kron(w, h_prev);
    let vec_la = vec(&(l_cur * a));
    let b_top = &y22_prev * vec(l_prev) + &y12 * &vec_la;
    let b_bottom = &y22 * &vec_la;
    let y21 = y12.transpose();
    assemble(y11, y12, y21, y22, b_top, b_bottom)
}

/// Terminal quadratic for `D(N) = F(N-1)`: `Y = W(x)H(N-1)`, `b = Y vec(L(N-1))`.
pub fn build_quadratic_terminal(
    h_last: &DMatrix<f64>,
    l_last: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<QuadraticForm> {
    let (m, n) = l_last.shape();
    check_dims("W", (n, n), w.shape())?;
    check_dims("H", (m, m), h_last.shape())?;
    let y = symmetrize_checked(&kron(w, h_last), 1e-10, "terminal Hessian")?;
    let b = &y * vec(l_last);
    Ok(QuadraticForm { y, b })
}

/// Solve the reduced system on the mask and scatter the result.
///
/// Returns the structured matrix and its `vec*`.
pub fn solve_masked(q: &QuadraticForm, mask: &SparsityMask) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (rows, cols) = mask.shape();
    if q.y.nrows() != rows * cols || q.b.len() != rows * cols {
        return Err(Error::Dimension {
            context: "reduced solve",
            expected: format!("{}", rows * cols),
            got: format!("{}", q.y.nrows()),
        });
    }
    let set = mask.index_set();
    let (ys, bs) = q.reduce(&set)?;
    let chol = ys.cholesky().ok_or_else(|| {
        Error::Synthesis("reduced Hessian [Y]_SS is not positive definite".into())
    })?;
    let d_star = chol.solve(&bs);
    Ok((scatter(&d_star, mask)?, d_star))
}

/// Split the solution of a `[F M]` quadratic into `F` and `M`.
pub fn solve_gains(
    q: &QuadraticForm,
    mask_f: &SparsityMask,
    mask_m: &SparsityMask,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mask_d = mask_f.hconcat(mask_m)?;
    let (d, _) = solve_masked(q, &mask_d)?;
    let n = mask_f.shape().1;
    Ok((d.columns(0, n).clone_owned(), d.columns(n, n).clone_owned()))
}

/// `Tr{H(F-L)W(F-L)'} + Tr{H(M - L(A+BF))W(M - L(A+BF))'}`.
pub fn delay_penalty(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    l: &DMatrix<f64>,
    f: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> f64 {
    let e1 = f - l;
    let e2 = m - l * (a + b * f);
    trace_product(&(h * &e1 * w), &e1.transpose()) + trace_product(&(h * &e2 * w), &e2.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SynthesisOptions {
    pub dare: DareOptions,
    /// Allow partitions other than the three-subsystem chain. The quadratic is
    /// still solved, but the information structure it assumes only holds for
    /// three subsystems, so optimality is not claimed.
    pub experimental: bool,
}

fn check_structure(partition: &SubsystemPartition, opts: &SynthesisOptions) -> Result<()> {
    if partition.len() != 3 && !opts.experimental {
        return Err(Error::UnsupportedStructure(format!(
            "optimal synthesis covers three-subsystem chains, got {} subsystems \
             (enable the experimental flag to proceed without optimality guarantees)",
            partition.len()
        )));
    }
    Ok(())
}

/// Steady-state structured gains together with the data they came from.
#[derive(Debug, Clone)]
pub struct DelayedGains {
    pub f: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// `G = M - F(A + BF)`.
    pub g: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub mask_f: SparsityMask,
    pub mask_m: SparsityMask,
    pub partition: SubsystemPartition,
    /// `Tr{X W}`, the full-information rate.
    pub noise_rate: f64,
    /// Penalty of the optimal `(F, M)`.
    pub delay_penalty_rate: f64,
    /// Penalty of `F = M = 0` (two-step delayed centralized control).
    pub delayed_baseline_rate: f64,
    pub min_hessian_eigenvalue: f64,
}

impl DelayedGains {
    /// Index set of `vec([F M])`, 1-based.
    pub fn index_set(&self) -> IndexSet {
        self.mask_f.hconcat(&self.mask_m).expect("masks share rows").index_set()
    }
}

/// Structured gains from a given `(H, L)`; the building block of
/// [`synthesize_steady`].
pub fn structured_gains(
    model: &LinearPlatoonModel,
    x: &DMatrix<f64>,
    h: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<DelayedGains> {
    let (a, b, w) = (&model.a, &model.b, &model.w);
    let (mask_f, mask_m) = chain_masks(&model.partition)?;
    let quad = build_quadratic_steady(a, b, w, h, l)?;
    let (f, m) = solve_gains(&quad, &mask_f, &mask_m)?;
    let g = &m - &f * (a + b * &f);
    let delay_penalty_rate = delay_penalty(a, b, w, h, l, &f, &m);
    let zero = DMatrix::zeros(l.nrows(), l.ncols());
    let delayed_baseline_rate = delay_penalty(a, b, w, h, l, &zero, &zero);
    let min_hessian_eigenvalue = is_positive_definite(&quad.y)?.min_eigenvalue;
    Ok(DelayedGains {
        f,
        m,
        g,
        l: l.clone(),
        h: h.clone(),
        x: x.clone(),
        mask_f,
        mask_m,
        partition: model.partition.clone(),
        noise_rate: trace_product(x, w),
        delay_penalty_rate,
        delayed_baseline_rate,
        min_hessian_eigenvalue,
    })
}

/// Steady-state synthesis: DARE, quadratic assembly, reduced solve.
pub fn synthesize_steady(
    model: &LinearPlatoonModel,
    cost: &CostSpec,
    opts: SynthesisOptions,
) -> Result<(DelayedGains, RiccatiSolution)> {
    check_structure(&model.partition, &opts)?;
    cost.validate(model.n(), model.m())?;
    let sol = solve_dare_from(&model.a, &model.b, &cost.q, &cost.r, &cost.q0, opts.dare)?;
    let gains = structured_gains(model, &sol.x, &sol.h, &sol.l)?;
    Ok((gains, sol))
}

/// Time-varying gains over a horizon of `N` steps.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    /// `F(0), ..., F(N-1)`.
    pub f: Vec<DMatrix<f64>>,
    /// `M(1), ..., M(N-1)`, stored at offset `k - 1`.
    pub m: Vec<DMatrix<f64>>,
    /// `L(0), ..., L(N-1)`.
    pub l: Vec<DMatrix<f64>>,
    /// `H(0), ..., H(N-1)`.
    pub h: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.f.len()
    }

    /// `M(k)` for `1 <= k <= N-1`.
    pub fn m_at(&self, k: usize) -> Option<&DMatrix<f64>> {
        k.checked_sub(1).and_then(|i| self.m.get(i))
    }
}

/// Finite-horizon synthesis. The per-step reduced problems are independent
/// once the Riccati sweep is done and run under `exec`.
pub fn synthesize_finite(
    model: &LinearPlatoonModel,
    cost: &CostSpec,
    horizon: usize,
    opts: SynthesisOptions,
    exec: ExecMode,
) -> Result<GainSchedule> {
    if horizon < 2 {
        return Err(Error::Parameter(format!("horizon must be at least 2, got {horizon}")));
    }
    check_structure(&model.partition, &opts)?;
    cost.validate(model.n(), model.m())?;
    let (a, b, w) = (&model.a, &model.b, &model.w);
    let fh = riccati_recursion(a, b, &cost.q, &cost.r, &cost.q0, horizon)?;
    let (mask_f, mask_m) = chain_masks(&model.partition)?;
    let n = model.n();

    // index j solves D(j + 1)
    let solved = try_map_indices(horizon, exec, |j| -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        let k = j + 1;
        if k < horizon {
            let quad = build_quadratic_step(&fh.h[k - 1], &fh.l[k - 1], &fh.h[k], &fh.l[k], a, b, w)?;
            let (f, m) = solve_gains(&quad, &mask_f, &mask_m)?;
            Ok((f, Some(m)))
        } else {
            let quad = build_quadratic_terminal(&fh.h[k - 1], &fh.l[k - 1], w)?;
            let (f, _) = solve_masked(&quad, &mask_f)?;
            debug_assert_eq!(f.ncols(), n);
            Ok((f, None))
        }
    })?;

    let mut f = Vec::with_capacity(horizon);
    let mut m = Vec::with_capacity(horizon - 1);
    for (fk, mk) in solved {
        f.push(fk);
        if let Some(mk) = mk {
            m.push(mk);
        }
    }
    Ok(GainSchedule { f, m, l: fh.l, h: fh.h })
}

fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

/// JSON form of [`DelayedGains`]. Matrices are dense, row-major; index sets
/// are 1-based column-major positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsDocument {
    pub n: usize,
    pub m: usize,
    pub partition: SubsystemPartition,
    pub index_set_f: IndexSet,
    pub index_set_m: IndexSet,
    /// Index set of `vec([F M])`.
    pub index_set: IndexSet,
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m_gain: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub noise_rate: f64,
    pub delay_penalty_rate: f64,
    pub delayed_baseline_rate: f64,
}

impl From<&DelayedGains> for GainsDocument {
    fn from(g: &DelayedGains) -> Self {
        Self {
            n: g.partition.n(),
            m: g.partition.m(),
            partition: g.partition.clone(),
            index_set_f: g.mask_f.index_set(),
            index_set_m: g.mask_m.index_set(),
            index_set: g.index_set(),
            f: rows_of(&g.f),
            m_gain: rows_of(&g.m),
            g: rows_of(&g.g),
            l: rows_of(&g.l),
            h: rows_of(&g.h),
            x: rows_of(&g.x),
            noise_rate: g.noise_rate,
            delay_penalty_rate: g.delay_penalty_rate,
            delayed_baseline_rate: g.delayed_baseline_rate,
        }
    }
}

impl GainsDocument {
    pub fn into_gains(self) -> Result<DelayedGains> {
        let (n, m) = (self.n, self.m);
        if self.partition.n() != n || self.partition.m() != m {
            return Err(Error::Config("partition does not match n and m".into()));
        }
        let mask_f = SparsityMask::from_index_set(m, n, &self.index_set_f)?;
        let mask_m = SparsityMask::from_index_set(m, n, &self.index_set_m)?;
        if mask_f.hconcat(&mask_m)?.index_set() != self.index_set {
            return Err(Error::Config("index_set disagrees with index_set_f/index_set_m".into()));
        }
        let f = from_rows(&self.f, m, n, "F")?;
        let mg = from_rows(&self.m_gain, m, n, "M")?;
        if !mask_f.conforms(&f) || !mask_m.conforms(&mg) {
            return Err(Error::Structure("gain entries outside their index sets".into()));
        }
        Ok(DelayedGains {
            f,
            m: mg,
            g: from_rows(&self.g, m, n, "G")?,
            l: from_rows(&self.l, m, n, "L")?,
            h: from_rows(&self.h, m, m, "H")?,
            x: from_rows(&self.x, n, n, "X")?,
            mask_f,
            mask_m,
            partition: self.partition,
            noise_rate: self.noise_rate,
            delay_penalty_rate: self.delay_penalty_rate,
            delayed_baseline_rate: self.delayed_baseline_rate,
            min_hessian_eigenvalue: f64::NAN,
        })
    }
}
