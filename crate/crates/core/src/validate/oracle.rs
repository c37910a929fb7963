//! Brute-force reference for the structured gains.
//!
//! The delay penalty is written directly as an expectation over the noise
//! terms it depends on,
//!
//! ```text
//! u(k) - L x(k) = (F - L) w(k-1) + (M - L(A + BF)) w(k-2),
//! E{e' H e} = Tr{H K Sigma K'},
//! ```
//!
//! and minimized over the allowed entries with a Hessian and gradient built
//! from function values only. Nothing here uses Kronecker products or the
//! assembled quadratic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LinearPlatoonModel, SubsystemPartition};

/// `E{e' H e}` for `e = K w` with `w ~ N(0, cov)`.
fn expected_quadratic(h: &DMatrix<f64>, k: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
    (h * k * cov * k.transpose()).trace()
}

/// Steady-state delay penalty of `(F, M)`.
pub fn steady_objective(
    model: &LinearPlatoonModel,
    h: &DMatrix<f64>,
    l: &DMatrix<f64>,
    f: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> f64 {
    let (a, b, w) = (&model.a, &model.b, &model.w);
    let k1 = f - l;
    let k2 = m - l * (a + b * f);
    expected_quadratic(h, &k1, w) + expected_quadratic(h, &k2, w)
}

/// Sum of the delay penalties over `k = 0..N-1`.
///
/// `f[k] = F(k)` for `k = 0..N-1` and `m[k-1] = M(k)` for `k = 1..N-1`.
/// `x(0)` plays the role of `w(-1)` and has covariance `P0`.
pub fn finite_objective(
    model: &LinearPlatoonModel,
    h: &[DMatrix<f64>],
    l: &[DMatrix<f64>],
    f: &[DMatrix<f64>],
    m: &[DMatrix<f64>],
) -> f64 {
    let (a, b, w, p0) = (&model.a, &model.b, &model.w, &model.p0);
    let mut total = 0.0;
    for k in 0..f.len() {
        let recent = if k == 0 { p0 } else { w };
        total += expected_quadratic(&h[k], &(&f[k] - &l[k]), recent);
        if k >= 1 {
            let older = if k == 1 { p0 } else { w };
            let k2 = &m[k - 1] - &l[k] * (a + b * &f[k - 1]);
            total += expected_quadratic(&h[k], &k2, older);
        }
    }
    total
}

fn input_owner(p: &SubsystemPartition, j: usize) -> usize {
    (0..p.len()).find(|&i| p.input_range(i).contains(&j)).expect("input index in range")
}

/// Allowed `(row, col)` entries of `F`: own state only.
pub fn local_entries(p: &SubsystemPartition) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c in 0..p.n() {
        for r in 0..p.m() {
            if input_owner(p, r) == p.state_owner(c) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Allowed `(row, col)` entries of `M`: own and adjacent states.
pub fn neighbor_entries(p: &SubsystemPartition) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c in 0..p.n() {
        for r in 0..p.m() {
            if input_owner(p, r).abs_diff(p.state_owner(c)) <= 1 {
                out.push((r, c));
            }
        }
    }
    out
}

/// Minimizer of a quadratic given only as a function.
///
/// Hessian entries come from second differences with unit step around the
/// origin, the gradient from central differences; both are exact for a
/// quadratic up to rounding. The stationarity system is solved by LU.
pub fn minimize_quadratic(dim: usize, objective: impl Fn(&DVector<f64>) -> f64) -> Result<DVector<f64>> {
    let unit = |i: usize| DVector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 });
    let j0 = objective(&DVector::zeros(dim));
    let plus: Vec<f64> = (0..dim).map(|i| objective(&unit(i))).collect();
    let minus: Vec<f64> = (0..dim).map(|i| objective(&(-unit(i)))).collect();
    let mut hess = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        hess[(i, i)] = plus[i] - 2.0 * j0 + minus[i];
        for j in 0..i {
            let v = objective(&(unit(i) + unit(j))) - plus[i] - plus[j] + j0;
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let grad = DVector::from_fn(dim, |i, _| (plus[i] - minus[i]) / 2.0);
    hess.lu()
        .solve(&(-grad))
        .ok_or_else(|| Error::Synthesis("finite-difference Hessian is singular".into()))
}

fn scatter_entries(values: &[f64], entries: &[(usize, usize)], rows: usize, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for (v, &(r, c)) in values.iter().zip(entries) {
        out[(r, c)] = *v;
    }
    out
}

/// Reference steady-state `(F, M)` for the given `(H, L)`.
pub fn steady_gains(
    model: &LinearPlatoonModel,
    h: &DMatrix<f64>,
    l: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = &model.partition;
    let (m, n) = (p.m(), p.n());
    let fe = local_entries(p);
    let me = neighbor_entries(p);
    let split = |theta: &DVector<f64>| {
        let f = scatter_entries(&theta.as_slice()[..fe.len()], &fe, m, n);
        let g = scatter_entries(&theta.as_slice()[fe.len()..], &me, m, n);
        (f, g)
    };
    let theta = minimize_quadratic(fe.len() + me.len(), |theta| {
        let (f, mm) = split(theta);
        steady_objective(model, h, l, &f, &mm)
    })?;
    Ok(split(&theta))
}

/// Reference schedule `(F(0..N-1), M(1..N-1))` for the given `H(k), L(k)`.
pub fn finite_gains(
    model: &LinearPlatoonModel,
    h: &[DMatrix<f64>],
    l: &[DMatrix<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let horizon = h.len();
    if horizon < 2 || l.len() != horizon {
        return Err(Error::Parameter("oracle needs matching H and L over at least 2 steps".into()));
    }
    let p = &model.partition;
    let (m, n) = (p.m(), p.n());
    let fe = local_entries(p);
    let me = neighbor_entries(p);
    let split = |theta: &DVector<f64>| {
        let s = theta.as_slice();
        let mut f = Vec::with_capacity(horizon);
        let mut mm = Vec::with_capacity(horizon - 1);
        let mut at = 0;
        for _ in 0..horizon {
            f.push(scatter_entries(&s[at..at + fe.len()], &fe, m, n));
            at += fe.len();
        }
        for _ in 1..horizon {
            mm.push(scatter_entries(&s[at..at + me.len()], &me, m, n));
            at += me.len();
        }
        (f, mm)
    };
    let dim = horizon * fe.len() + (horizon - 1) * me.len();
    let theta = minimize_quadratic(dim, |theta| {
        let (f, mm) = split(theta);
        finite_objective(model, h, l, &f, &mm)
    })?;
    Ok(split(&theta))
}
