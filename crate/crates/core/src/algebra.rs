//! Dense complex operator algebra on qubit registers.
//!
//! Matrices are stored row-major. Multi-qubit operators follow the convention
//! that qubit 0 is the leftmost tensor factor, i.e. the most significant bit of
//! a basis index. Vectorization is row-major as well: `|O>> = sum_ij o_ij |i,j>`,
//! so that `<<A|B>> = Tr[A^dagger B]`.

use std::ops::{Deref, Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Rejection threshold for asymmetry when building Hermitian operators.
pub const HERMITIAN_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Number of qubits if this is a square operator of dimension `2^n`.
    pub fn num_qubits(&self) -> Option<usize> {
        if self.is_square() && self.rows.is_power_of_two() {
            Some(self.rows.trailing_zeros() as usize)
        } else {
            None
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: C64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = ZERO;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += self.data[i * self.cols + j] * other.data[j * other.cols + i];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut data = vec![ZERO; rows * cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    let base = (i * other.rows + k) * cols + j * other.cols;
                    for l in 0..other.cols {
                        data[base + l] = a * other.data[k * other.cols + l];
                    }
                }
            }
        }
        Self { rows, cols, data }
    }

    pub fn vectorize(&self) -> Result<VectorizedOperator> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "cannot vectorize a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok(VectorizedOperator(self.data.clone()))
    }

    /// Largest entrywise deviation from Hermiticity, `max |A - A^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Partial trace keeping the listed qubits, returned in ascending qubit order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let n = self
            .num_qubits()
            .ok_or_else(|| Error::Dimension("partial trace needs a 2^n x 2^n operator".into()))?;
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&q) = keep.iter().find(|&&q| q >= n) {
            return Err(Error::QubitOutOfRange { index: q, n });
        }
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let kd = 1usize << keep.len();
        let td = 1usize << traced.len();
        let embed_keep: Vec<usize> = (0..kd).map(|a| scatter_bits(a, &keep, n)).collect();
        let embed_traced: Vec<usize> = (0..td).map(|t| scatter_bits(t, &traced, n)).collect();
        let dim = self.rows;
        let mut out = Self::zeros(kd, kd);
        for a in 0..kd {
            for b in 0..kd {
                let mut acc = ZERO;
                for &t in &embed_traced {
                    acc += self.data[(embed_keep[a] | t) * dim + (embed_keep[b] | t)];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(out)
    }

    /// Reorders tensor factors. Factor `j` of `self` acts on qubit `order[j]`
    /// of the result.
    pub fn permute_qubits(&self, order: &[usize]) -> Result<Self> {
        let n = self
            .num_qubits()
            .ok_or_else(|| Error::Dimension("qubit permutation needs a 2^n operator".into()))?;
        if order.len() != n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {n} qubits",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &q in order {
            if q >= n || seen[q] {
                return Err(Error::InvalidPartition(format!(
                    "{order:?} is not a permutation"
                )));
            }
            seen[q] = true;
        }
        let dim = self.rows;
        let map: Vec<usize> = (0..dim).map(|i| scatter_bits(i, order, n)).collect();
        let mut out = Self::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                out.data[map[i] * dim + map[j]] = self.data[i * dim + j];
            }
        }
        Ok(out)
    }
}

/// Spreads the bits of `value` (|positions| bits, first position most
/// significant) onto the qubit positions of an `n`-qubit basis index.
pub fn scatter_bits(value: usize, positions: &[usize], n: usize) -> usize {
    let k = positions.len();
    let mut out = 0;
    for (j, &q) in positions.iter().enumerate() {
        let bit = (value >> (k - 1 - j)) & 1;
        out |= bit << (n - 1 - q);
    }
    out
}

/// Inverse of [`scatter_bits`].
pub fn gather_bits(index: usize, positions: &[usize], n: usize) -> usize {
    let mut out = 0;
    for &q in positions {
        out = (out << 1) | ((index >> (n - 1 - q)) & 1);
    }
    out
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major vectorization of a square operator.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedOperator(pub Vec<C64>);

impl VectorizedOperator {
    /// `<<self|other>>`, antilinear in the first slot.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn devectorize(&self) -> Result<ComplexMatrix> {
        let dim = (self.0.len() as f64).sqrt().round() as usize;
        if dim * dim != self.0.len() {
            return Err(Error::Dimension(format!(
                "vector of length {} is not a flattened square matrix",
                self.0.len()
            )));
        }
        ComplexMatrix::from_vec(dim, dim, self.0.clone())
    }
}

/// Dim^2 x dim^2 matrix acting on vectorized operators.
pub type SuperOperator = ComplexMatrix;

/// Square Hermitian matrix; symmetrized as `(A + A^dagger)/2` on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "Hermitian operator must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if m.as_slice()
            .iter()
            .any(|x| !x.re.is_finite() || !x.im.is_finite())
        {
            return Err(Error::InvalidState("non-finite matrix entry".into()));
        }
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOLERANCE * m.max_abs().max(1.0) {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self::symmetrize(m))
    }

    /// `(A + A^dag) / 2` without the asymmetry check, for results that are
    /// Hermitian algebraically but carry conditioning-amplified rounding.
    pub fn symmetrized(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "Hermitian operator must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(Self::symmetrize(m))
    }

    fn symmetrize(m: ComplexMatrix) -> Self {
        let adj = m.adjoint();
        Self(m.add(&adj).scale_real(0.5))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_real_diagonal(diag))
    }

    /// Rank-one projector-like operator `|v><v|`.
    pub fn projector(v: &[C64]) -> Self {
        Self::symmetrize(ComplexMatrix::outer(v, v))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kron(&other.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale_real(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.add(&other.0))
    }

    /// `Tr[self * other]` for Hermitian pairs (real up to rounding).
    pub fn trace_with(&self, other: &Self) -> f64 {
        self.0.trace_product(&other.0).re
    }

    pub fn real_trace(&self) -> f64 {
        self.0.trace().re
    }
}

impl Deref for HermitianOperator {
    type Target = ComplexMatrix;
    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

impl TryFrom<ComplexMatrix> for HermitianOperator {
    type Error = Error;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<HermitianOperator> for ComplexMatrix {
    fn from(h: HermitianOperator) -> Self {
        h.0
    }
}

/// Eigendecomposition `H = V diag(values) V^dagger`, values ascending,
/// eigenvectors stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    pub fn reassemble(&self, values: &[f64]) -> ComplexMatrix {
        let v = &self.vectors;
        let dim = v.rows();
        let mut out = ComplexMatrix::zeros(dim, dim);
        for (k, &lam) in values.iter().enumerate() {
            if lam == 0.0 {
                continue;
            }
            for i in 0..dim {
                let a = v[(i, k)] * lam;
                for j in 0..dim {
                    out[(i, j)] += a * v[(j, k)].conj();
                }
            }
        }
        out
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.rows())
            .map(|i| self.vectors[(i, k)])
            .collect()
    }
}

pub fn hermitian_eig(h: &HermitianOperator) -> Eigen {
    let dim = h.dim();
    let dm = DMatrix::from_fn(dim, dim, |i, j| h[(i, j)]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
    Eigen { values, vectors }
}

/// Euclidean projection of `x` onto the probability simplex.
pub fn project_to_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Closest density matrix in Frobenius norm: eigenvalues projected onto the
/// probability simplex, eigenvectors kept.
pub fn project_to_density(h: &HermitianOperator) -> HermitianOperator {
    let eig = hermitian_eig(h);
    let projected = project_to_simplex(&eig.values);
    HermitianOperator::symmetrize(eig.reassemble(&projected))
}

/// Single-qubit Pauli matrices `[I, X, Y, Z]`.
pub fn pauli_matrices() -> [ComplexMatrix; 4] {
    let i = C64::new(0.0, 1.0);
    [
        ComplexMatrix::identity(2),
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap(),
        ComplexMatrix::from_vec(2, 2, vec![ZERO, -i, i, ZERO]).unwrap(),
        ComplexMatrix::from_real_diagonal(&[1.0, -1.0]),
    ]
}
