//! Riccati recursion, steady-state DARE solution and the noise part of the cost.
//!
//! Sign convention: `L` is the gain for which `u = L x` is the optimal
//! full-information law, i.e. `L = -(B'X B + R)^{-1} B'X A`. Everything
//! downstream (structured synthesis, estimator, baselines) uses this `L`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_dims, Error, Result};

/// One backward step of the Riccati recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiStep {
    pub x: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

/// Steady-state solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub x: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub stabilizing: bool,
    pub spectral_radius: f64,
    pub iterations: usize,
    /// `|X - f(X)|_inf` at the returned solution.
    pub residual: f64,
    /// Step sizes `|X_{k+1} - X_k|_inf` of the final iterations, oldest first.
    pub tail_steps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions {
    /// Relative step tolerance: stop when `|dX|_inf <= tol * max(1, |X|_inf)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 1_000_000 }
    }
}

fn check_problem(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let (n, m) = (a.nrows(), b.ncols());
    check_dims("A", (n, n), a.shape())?;
    check_dims("B", (n, m), b.shape())?;
    check_dims("Q", (n, n), q.shape())?;
    check_dims("R", (m, m), r.shape())
}

fn factor(h: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    h.clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("B'XB + R is not positive definite".into()))
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `X = A'X+A + Q - A'X+B (B'X+B + R)^{-1} B'X+A`, `H = B'X+B + R`,
/// `L = -(B'X+B + R)^{-1} B'X+A`.
///
/// `X` is evaluated in the equivalent closed-loop form
/// `(A+BL)'X+(A+BL) + Q + L'RL`, which keeps it positive semi-definite in
/// floating point.
pub fn riccati_step(
    x_next: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiStep> {
    check_problem(a, b, q, r)?;
    check_dims("X+", a.shape(), x_next.shape())?;
    let xb = x_next * b;
    let h = symmetrize(&(b.transpose() * &xb + r));
    let chol = factor(&h)?;
    let l = -chol.solve(&(xb.transpose() * a));
    let closed = a + b * &l;
    let x = closed.transpose() * x_next * &closed + q + l.transpose() * r * &l;
    Ok(RiccatiStep { x: symmetrize(&x), h, l })
}

/// Value iteration on the Riccati map starting from `Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<RiccatiSolution> {
    solve_dare_from(a, b, q, r, q, opts)
}

/// Value iteration on the Riccati map from an arbitrary PSD start.
pub fn solve_dare_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x_init: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<RiccatiSolution> {
    check_problem(a, b, q, r)?;
    check_dims("X0", a.shape(), x_init.shape())?;
    if !(opts.tol > 0.0) {
        return Err(Error::Parameter("DARE tolerance must be positive".into()));
    }
    const TAIL: usize = 16;
    let mut x = symmetrize(x_init);
    let mut tail = std::collections::VecDeque::with_capacity(TAIL);
    let mut last_step = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let step = riccati_step(&x, a, b, q, r)?;
        last_step = (&step.x - &x).amax();
        if tail.len() == TAIL {
            tail.pop_front();
        }
        tail.push_back(last_step);
        x = step.x;
        if !last_step.is_finite() {
            break;
        }
        if last_step <= opts.tol * x.amax().max(1.0) {
            let fin = riccati_step(&x, a, b, q, r)?;
            let residual = (&fin.x - &x).amax();
            let rho = spectral_radius(&(a + b * &fin.l));
            log::debug!("DARE converged in {iter} iterations, residual {residual:e}, rho {rho}");
            if rho >= 1.0 {
                return Err(Error::NotStabilizing { spectral_radius: rho });
            }
            return Ok(RiccatiSolution {
                x,
                h: fin.h,
                l: fin.l,
                stabilizing: true,
                spectral_radius: rho,
                iterations: iter,
                residual,
                tail_steps: tail.into_iter().collect(),
            });
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, last_step })
}

/// Backward recursion over a horizon of `N` steps.
#[derive(Debug, Clone)]
pub struct FiniteHorizonRiccati {
    /// `X(0), ..., X(N)` with `X(N) = Q0`.
    pub x: Vec<DMatrix<f64>>,
    /// `H(0), ..., H(N-1)`.
    pub h: Vec<DMatrix<f64>>,
    /// `L(0), ..., L(N-1)`.
    pub l: Vec<DMatrix<f64>>,
}

impl FiniteHorizonRiccati {
    pub fn horizon(&self) -> usize {
        self.h.len()
    }
}

pub fn riccati_recursion(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q0: &DMatrix<f64>,
    horizon: usize,
) -> Result<FiniteHorizonRiccati> {
    check_problem(a, b, q, r)?;
    check_dims("Q0", a.shape(), q0.shape())?;
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least one step".into()));
    }
    let mut x = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut h = vec![DMatrix::zeros(0, 0); horizon];
    let mut l = vec![DMatrix::zeros(0, 0); horizon];
    x[horizon] = symmetrize(q0);
    for k in (0..horizon).rev() {
        let step = riccati_step(&x[k + 1], a, b, q, r)?;
        x[k] = step.x;
        h[k] = step.h;
        l[k] = step.l;
    }
    Ok(FiniteHorizonRiccati { x, h, l })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// The control-independent part of the cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// Per-step rate `Tr{X W}`.
    pub noise_rate: f64,
    /// `Tr{X(0) P0} + sum_k Tr{X(k+1) W}` when a horizon is given.
    pub finite_horizon: Option<f64>,
    /// Delay penalty rate of a structured controller, when known.
    pub delay_penalty_rate: Option<f64>,
}

impl CostReport {
    pub fn total_rate(&self) -> f64 {
        self.noise_rate + self.delay_penalty_rate.unwrap_or(0.0)
    }
}

pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// Steady-state rate `Tr{X W}`, plus the finite-horizon value when the
/// recursion is supplied.
pub fn cost_rates(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    horizon: Option<&FiniteHorizonRiccati>,
) -> Result<CostReport> {
    check_dims("W", x.shape(), w.shape())?;
    check_dims("P0", x.shape(), p0.shape())?;
    let finite_horizon = horizon.map(|fh| {
        trace_product(&fh.x[0], p0) + fh.x[1..].iter().map(|xk| trace_product(xk, w)).sum::<f64>()
    });
    Ok(CostReport {
        noise_rate: trace_product(x, w),
        finite_horizon,
        delay_penalty_rate: None,
    })
}
