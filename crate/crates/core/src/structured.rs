//! Vectorization and sparsity helpers.
//!
//! `vec` stacks columns. Index sets are 1-based column-major positions into
//! `vec(D)`, so a diagonal 3x3 matrix has index set `{1, 5, 9}`. The 0/1
//! embedding matrix between `vec*` and `vec` is never formed; gather and
//! scatter by index list do the same job.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SubsystemPartition;

/// Kronecker product: block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    let mut out = DMatrix::zeros(p * r, q * s);
    for j in 0..q {
        for i in 0..p {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * r, j * s), (r, s)).copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a `rows x cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension {
            context: "unvec",
            expected: format!("{}", rows * cols),
            got: format!("{}", v.len()),
        });
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Maps matrix entries to 1-based positions in `vec` and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VecIndexMap {
    pub rows: usize,
    pub cols: usize,
}

impl VecIndexMap {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    /// 1-based vec position of the 0-based entry `(r, c)`.
    pub fn position(&self, r: usize, c: usize) -> Result<usize> {
        if r >= self.rows {
            return Err(Error::IndexOutOfRange { index: r, limit: self.rows });
        }
        if c >= self.cols {
            return Err(Error::IndexOutOfRange { index: c, limit: self.cols });
        }
        Ok(c * self.rows + r + 1)
    }

    /// 0-based entry for a 1-based vec position.
    pub fn entry(&self, position: usize) -> Result<(usize, usize)> {
        let len = self.rows * self.cols;
        if position == 0 || position > len {
            return Err(Error::IndexOutOfRange { index: position, limit: len });
        }
        let p = position - 1;
        Ok((p % self.rows, p / self.rows))
    }
}

/// Strictly increasing set of 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.first() == Some(&0) {
            return Err(Error::Structure("index sets are 1-based; found 0".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Structure("index set must be strictly increasing".into()));
        }
        Ok(Self(indices))
    }

    pub fn all(len: usize) -> Self {
        Self((1..=len).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    fn check_range(&self, limit: usize) -> Result<()> {
        match self.max() {
            Some(m) if m > limit => Err(Error::IndexOutOfRange { index: m, limit }),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        IndexSet::new(v)
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

/// Boolean pattern of allowed entries for a structured gain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityMask {
    rows: usize,
    cols: usize,
    // column-major, same order as `vec`
    allowed: Vec<bool>,
}

impl SparsityMask {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                allowed.push(f(r, c));
            }
        }
        Self { rows, cols, allowed }
    }

    pub fn dense(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| true)
    }

    /// Recover the pattern from a 1-based index set.
    pub fn from_index_set(rows: usize, cols: usize, set: &IndexSet) -> Result<Self> {
        set.check_range(rows * cols)?;
        let mut allowed = vec![false; rows * cols];
        for &i in set.as_slice() {
            allowed[i - 1] = true;
        }
        Ok(Self { rows, cols, allowed })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.allowed[c * self.rows + r]
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    pub fn index_set(&self) -> IndexSet {
        IndexSet(
            self.allowed
                .iter()
                .enumerate()
                .filter_map(|(i, &a)| a.then_some(i + 1))
                .collect(),
        )
    }

    /// Mask of `[self other]` (horizontal concatenation).
    pub fn hconcat(&self, other: &SparsityMask) -> Result<SparsityMask> {
        if self.rows != other.rows {
            return Err(Error::Dimension {
                context: "mask concatenation",
                expected: format!("{} rows", self.rows),
                got: format!("{} rows", other.rows),
            });
        }
        let mut allowed = self.allowed.clone();
        allowed.extend_from_slice(&other.allowed);
        Ok(SparsityMask {
            rows: self.rows,
            cols: self.cols + other.cols,
            allowed,
        })
    }

    /// Zero every entry outside the mask.
    pub fn project(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| {
            if self.allows(r, c) {
                a[(r, c)]
            } else {
                0.0
            }
        })
    }

    pub fn conforms(&self, a: &DMatrix<f64>) -> bool {
        a.shape() == self.shape()
            && (0..self.cols).all(|c| (0..self.rows).all(|r| self.allows(r, c) || a[(r, c)] == 0.0))
    }
}

/// Entries of `vec(a)` at the mask's index set, in increasing order.
pub fn vec_star(a: &DMatrix<f64>, mask: &SparsityMask) -> Result<DVector<f64>> {
    if a.shape() != mask.shape() {
        return Err(Error::Dimension {
            context: "vec_star",
            expected: format!("{:?}", mask.shape()),
            got: format!("{:?}", a.shape()),
        });
    }
    let mut out = Vec::with_capacity(mask.count());
    for (i, (&v, &allowed)) in a.as_slice().iter().zip(&mask.allowed).enumerate() {
        if allowed {
            out.push(v);
        } else if v != 0.0 {
            let (r, c) = (i % mask.rows, i / mask.rows);
            return Err(Error::Structure(format!(
                "entry ({r}, {c}) = {v} lies outside the sparsity mask"
            )));
        }
    }
    Ok(DVector::from_vec(out))
}

/// Full `vec` with `v_star` placed at the index set and zeros elsewhere.
pub fn embed(v_star: &DVector<f64>, mask: &SparsityMask) -> Result<DVector<f64>> {
    let count = mask.count();
    if v_star.len() != count {
        return Err(Error::Dimension {
            context: "embed",
            expected: format!("{count}"),
            got: format!("{}", v_star.len()),
        });
    }
    let mut out = DVector::zeros(mask.rows * mask.cols);
    let mut src = v_star.iter();
    for (dst, &allowed) in out.iter_mut().zip(&mask.allowed) {
        if allowed {
            *dst = *src.next().expect("count checked above");
        }
    }
    Ok(out)
}

/// Inverse of [`vec_star`]: rebuild the masked matrix.
pub fn scatter(v_star: &DVector<f64>, mask: &SparsityMask) -> Result<DMatrix<f64>> {
    let full = embed(v_star, mask)?;
    unvec(&full, mask.rows, mask.cols)
}

/// `[y]_SS`: rows and columns of `y` at the (1-based) index set.
pub fn submatrix(y: &DMatrix<f64>, set: &IndexSet) -> Result<DMatrix<f64>> {
    if !y.is_square() {
        return Err(Error::Dimension {
            context: "submatrix",
            expected: "square matrix".into(),
            got: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    set.check_range(y.nrows())?;
    let idx = set.as_slice();
    Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| {
        y[(idx[i] - 1, idx[j] - 1)]
    }))
}

/// `[b]_S`.
pub fn subvector(b: &DVector<f64>, set: &IndexSet) -> Result<DVector<f64>> {
    set.check_range(b.len())?;
    Ok(DVector::from_iterator(
        set.len(),
        set.as_slice().iter().map(|&i| b[i - 1]),
    ))
}

/// Allowed patterns of `F` (block diagonal) and `M` (block tridiagonal) for a
/// chain of subsystems.
pub fn chain_masks(partition: &SubsystemPartition) -> Result<(SparsityMask, SparsityMask)> {
    let count = partition.len();
    if count == 0 {
        return Err(Error::UnsupportedStructure("empty partition".into()));
    }
    let (m, n) = (partition.m(), partition.n());
    let row_owner: Vec<usize> = (0..count)
        .flat_map(|i| std::iter::repeat_n(i, partition.input_dims()[i]))
        .collect();
    let col_owner: Vec<usize> = (0..count)
        .flat_map(|i| std::iter::repeat_n(i, partition.state_dims()[i]))
        .collect();
    let f = SparsityMask::from_fn(m, n, |r, c| row_owner[r] == col_owner[c]);
    let g = SparsityMask::from_fn(m, n, |r, c| row_owner[r].abs_diff(col_owner[c]) <= 1);
    Ok((f, g))
}

/// Outcome of a positive-definiteness test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefinitenessCheck {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
}

/// Symmetric positive-definiteness test.
///
/// Inputs with asymmetry above `1e-8` (relative to the largest entry) are
/// rejected; smaller asymmetry is removed by symmetrizing.
pub fn is_positive_definite(y: &DMatrix<f64>) -> Result<DefinitenessCheck> {
    let sym = symmetrize_checked(y, 1e-8, "positive definiteness check")?;
    let chol_ok = sym.clone().cholesky().is_some();
    let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
    Ok(DefinitenessCheck {
        positive_definite: chol_ok && min_eigenvalue > 0.0,
        min_eigenvalue,
    })
}

/// `(y + y^T) / 2`, failing when the relative asymmetry exceeds `tol`.
pub fn symmetrize_checked(y: &DMatrix<f64>, tol: f64, context: &'static str) -> Result<DMatrix<f64>> {
    if !y.is_square() {
        return Err(Error::Dimension {
            context,
            expected: "square matrix".into(),
            got: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    let scale = y.amax().max(1.0);
    let asymmetry = (y - y.transpose()).amax();
    if asymmetry > tol * scale {
        return Err(Error::Asymmetric { context, asymmetry });
    }
    Ok((y + y.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kron_by_index(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (p, q) = a.shape();
        let (r, s) = b.shape();
        DMatrix::from_fn(p * r, q * s, |row, col| a[(row / r, col / s)] * b[(row % r, col % s)])
    }

    #[test]
    fn kron_identity_and_zero() {
        assert_eq!(kron(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)), DMatrix::identity(6, 6));
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(kron(&DMatrix::zeros(2, 2), &b), DMatrix::zeros(4, 6));
    }

    #[test]
    fn kron_small_against_index_loop() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 2.0, //
                1.0, 0.0, 2.0, 0.0, //
                0.0, 3.0, 0.0, 4.0, //
                3.0, 0.0, 4.0, 0.0,
            ],
        );
        assert_eq!(kron(&a, &b), expected);
        assert_eq!(kron_by_index(&a, &b), expected);
    }

    #[test]
    fn diagonal_vec_star_matches_worked_example() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![7.0, 8.0, 9.0]));
        let mask = SparsityMask::from_fn(3, 3, |r, c| r == c);
        assert_eq!(mask.index_set().as_slice(), &[1, 5, 9]);
        assert_eq!(vec_star(&d, &mask).unwrap().as_slice(), &[7.0, 8.0, 9.0]);
        assert_eq!(
            vec_star(&DMatrix::zeros(3, 3), &mask).unwrap(),
            DVector::zeros(3)
        );
    }

    #[test]
    fn vec_star_rejects_entries_outside_mask() {
        let mask = SparsityMask::from_fn(2, 2, |r, c| r == c);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(vec_star(&a, &mask), Err(Error::Structure(_))));
    }

    #[test]
    fn index_map_round_trip() {
        let map = VecIndexMap::new(3, 5);
        for c in 0..5 {
            for r in 0..3 {
                let p = map.position(r, c).unwrap();
                assert_eq!(map.entry(p).unwrap(), (r, c));
            }
        }
        assert!(map.entry(0).is_err());
        assert!(map.entry(16).is_err());
        assert!(map.position(3, 0).is_err());
    }

    #[test]
    fn submatrix_edge_cases() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(submatrix(&y, &IndexSet::all(2)).unwrap(), y);
        let one = IndexSet::new(vec![1]).unwrap();
        assert_eq!(submatrix(&y, &one).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let bad = IndexSet::new(vec![3]).unwrap();
        assert!(matches!(submatrix(&y, &bad), Err(Error::IndexOutOfRange { .. })));
        assert!(subvector(&DVector::zeros(2), &bad).is_err());
    }

    #[test]
    fn index_set_validation() {
        assert!(IndexSet::new(vec![0, 1]).is_err());
        assert!(IndexSet::new(vec![2, 2]).is_err());
        assert!(IndexSet::new(vec![3, 1]).is_err());
        let parsed: IndexSet = serde_json::from_str("[1,5,9]").unwrap();
        assert_eq!(parsed.as_slice(), &[1, 5, 9]);
        assert!(serde_json::from_str::<IndexSet>("[5,1]").is_err());
    }

    #[test]
    fn platoon_chain_masks() {
        let partition = SubsystemPartition::platoon(3).unwrap();
        let (f, g) = chain_masks(&partition).unwrap();
        let f_rows: Vec<Vec<usize>> = (0..3)
            .map(|r| (0..5).filter(|&c| f.allows(r, c)).map(|c| c + 1).collect())
            .collect();
        assert_eq!(f_rows, vec![vec![1], vec![2, 3], vec![4, 5]]);
        let g_rows: Vec<Vec<usize>> = (0..3)
            .map(|r| (0..5).filter(|&c| g.allows(r, c)).map(|c| c + 1).collect())
            .collect();
        assert_eq!(g_rows, vec![vec![1, 2, 3], vec![1, 2, 3, 4, 5], vec![2, 3, 4, 5]]);
        assert_eq!(f.count(), 5);
        assert_eq!(g.count(), 12);
        assert_eq!(f.hconcat(&g).unwrap().count(), 17);
    }

    #[test]
    fn single_subsystem_masks_are_dense() {
        let partition = SubsystemPartition::new(vec![3], vec![2]).unwrap();
        let (f, g) = chain_masks(&partition).unwrap();
        assert_eq!(f, SparsityMask::dense(2, 3));
        assert_eq!(g, SparsityMask::dense(2, 3));
    }

    #[test]
    fn definiteness_checks() {
        assert!(is_positive_definite(&DMatrix::identity(3, 3)).unwrap().positive_definite);
        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let check = is_positive_definite(&indefinite).unwrap();
        assert!(!check.positive_definite);
        assert_eq!(check.min_eigenvalue, -1.0);
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(is_positive_definite(&skew), Err(Error::Asymmetric { .. })));
    }

    fn masked_matrix() -> impl Strategy<Value = (DMatrix<f64>, SparsityMask)> {
        (
            proptest::collection::vec(-10.0f64..10.0, 15),
            proptest::collection::vec(any::<bool>(), 15),
        )
            .prop_map(|(vals, pattern)| {
                let mask = SparsityMask::from_fn(3, 5, |r, c| pattern[c * 3 + r]);
                let a = mask.project(&DMatrix::from_column_slice(3, 5, &vals));
                (a, mask)
            })
    }

    proptest! {
        #[test]
        fn scatter_inverts_vec_star((a, mask) in masked_matrix()) {
            let v = vec_star(&a, &mask).unwrap();
            prop_assert_eq!(v.len(), mask.count());
            prop_assert_eq!(scatter(&v, &mask).unwrap(), a);
        }

        #[test]
        fn embedded_quadratic_matches_reduced(
            (a, mask) in masked_matrix(),
            y_vals in proptest::collection::vec(-1.0f64..1.0, 225),
        ) {
            let y = DMatrix::from_column_slice(15, 15, &y_vals);
            let vs = vec_star(&a, &mask).unwrap();
            let full = embed(&vs, &mask).unwrap();
            prop_assert_eq!(&full, &vec(&a));
            let set = mask.index_set();
            let reduced = (vs.transpose() * submatrix(&y, &set).unwrap() * &vs)[(0, 0)];
            let dense = (full.transpose() * &y * &full)[(0, 0)];
            prop_assert!((reduced - dense).abs() <= 1e-12 * (1.0 + dense.abs()));
        }
    }
}
