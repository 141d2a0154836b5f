//! Dense complex linear algebra: the matrix carrier used for every operator in
//! the crate, Kronecker products, Hermitian eigendecomposition, unitary
//! propagators and minimum-norm least squares.
//!
//! Storage is row-major. Eigen- and singular-value decompositions are
//! delegated to `nalgebra`; everything else is implemented here.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par::Exec;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative tolerance for the Hermiticity precondition of `herm_eig`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Singular values below this fraction of the largest one are dropped by
/// [`PseudoInverse`].
pub const PINV_RCOND: f64 = 1e-12;

// Work size (multiply-adds) above which matrix products are split by rows.
const PAR_MATMUL_WORK: usize = 1 << 16;

/// Dense complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix entries",
                expected: rows * cols,
                found: data.len(),
            });
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

    pub fn from_real(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                context: "column length",
                expected: rows,
                found: bad.len(),
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[C64]) {
        assert_eq!(values.len(), self.rows, "column length");
        for (i, &v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = v;
        }
    }

    /// Submatrix made of the listed columns, in order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self::from_fn(self.rows, columns.len(), |i, j| self[(i, columns[j])])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * alpha).collect(),
        }
    }

    pub fn scale_real(&self, alpha: f64) -> Self {
        self.scale(C64::new(alpha, 0.0))
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: C64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_scaled shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖self − self†‖_F`.
    pub fn hermiticity_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `‖self†·self − I‖_F`.
    pub fn unitarity_residual(&self) -> f64 {
        (&self.adjoint().matmul(self) - &Self::identity(self.cols)).frobenius_norm()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        self.matmul_with(other, Exec::Parallel)
    }

    pub fn matmul_with(&self, other: &Self, exec: Exec) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        if out.data.is_empty() {
            return out;
        }
        let (inner, width) = (self.cols, other.cols);
        let exec = if self.rows * inner * width >= PAR_MATMUL_WORK {
            exec
        } else {
            Exec::Sequential
        };
        exec.for_each_chunk(&mut out.data, width, |i, out_row| {
            let a_row = &self.data[i * inner..(i + 1) * inner];
            for (k, &a) in a_row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * width..(k + 1) * width];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        });
        out
    }

    /// `self† · other` without materializing the adjoint of a tall `self`.
    pub fn adjoint_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "adjoint_matmul rows");
        let (n, m) = (self.cols, other.cols);
        let mut out = Self::zeros(n, m);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, a) in a_row.iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                let a = a.conj();
                let out_row = &mut out.data[i * m..(i + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "mul_vec length");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `[a, b] = ab − ba`.
    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(ONE, rhs);
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(-ONE, rhs);
        out
    }
}

/// Kronecker product; `kron(a, b)[(i·rb + k, j·cb + l)] = a[(i,j)]·b[(k,l)]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    let width = ca * cb;
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..rb {
                let row = (i * rb + k) * width + j * cb;
                for l in 0..cb {
                    out.data[row + l] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of a list of factors (left to right); identity of size 1
/// for an empty list.
pub fn kron_all(factors: &[ComplexMatrix]) -> ComplexMatrix {
    factors
        .iter()
        .fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ONE, ZERO, ZERO, -ONE]).unwrap()
}

/// Single-site operator `op` acting on qubit `site` of `n` (site 0 is the most
/// significant tensor factor).
pub fn embed_site(op: &ComplexMatrix, site: usize, n: usize) -> ComplexMatrix {
    let factors: Vec<ComplexMatrix> = (0..n)
        .map(|q| {
            if q == site {
                op.clone()
            } else {
                ComplexMatrix::identity(op.rows())
            }
        })
        .collect();
    kron_all(&factors)
}

/// Complex vector; the carrier for pure states and least-squares right-hand
/// sides.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![ZERO; dim])
    }

    /// Computational basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amplitudes[index] = ONE;
        v
    }

    /// Unit-normalized complex Gaussian vector.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self::new((0..dim).map(|_| complex_gaussian(rng)).collect()).normalized()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Returns the vector scaled to unit norm (unchanged if zero).
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        Self::new(self.amplitudes.iter().map(|z| z / n).collect())
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-12
    }

    /// The vector as a `dim × 1` matrix.
    pub fn to_column(&self) -> ComplexMatrix {
        ComplexMatrix::from_vec(self.dim(), 1, self.amplitudes.clone()).unwrap()
    }
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `(a + ib)/√2` with `a`, `b` standard normal.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermEig {
    /// `U·diag(λ)·U†`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut scaled = self.vectors.clone();
        let n = scaled.cols();
        for i in 0..scaled.rows() {
            for j in 0..n {
                scaled[(i, j)] *= self.values[j];
            }
        }
        scaled.matmul(&self.vectors.adjoint())
    }

    /// `exp(−i·h·t)` for the decomposed `h`.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        let n = self.values.len();
        if t == 0.0 {
            return ComplexMatrix::identity(n);
        }
        let phases: Vec<C64> = self
            .values
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * t))
            .collect();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= phases[j];
            }
        }
        scaled.matmul(&self.vectors.adjoint())
    }

    /// `∂/∂t exp(−i·h·t) = −i·h·exp(−i·h·t)`.
    pub fn propagator_derivative(&self, t: f64) -> ComplexMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let f = -I * self.values[j] * C64::from_polar(1.0, -self.values[j] * t);
            for i in 0..n {
                scaled[(i, j)] *= f;
            }
        }
        scaled.matmul(&self.vectors.adjoint())
    }
}

fn check_hermitian(h: &ComplexMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            context: "Hermitian matrix must be square",
            expected: h.rows(),
            found: h.cols(),
        });
    }
    let residual = h.hermiticity_residual();
    let scale = h.frobenius_norm();
    if residual > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian {
            residual: residual / scale,
        });
    }
    Ok(())
}

pub fn herm_eig(h: &ComplexMatrix) -> Result<HermEig> {
    check_hermitian(h)?;
    let n = h.rows();
    let sym = DMatrix::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermEig { values, vectors })
}

/// `exp(−i·h·t)` via eigendecomposition.
pub fn evolve(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    check_hermitian(h)?;
    if t == 0.0 {
        return Ok(ComplexMatrix::identity(h.rows()));
    }
    Ok(herm_eig(h)?.propagator(t))
}

/// Truncated SVD pseudo-inverse of a (possibly rank-deficient) matrix.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    rows: usize,
    cols: usize,
    // u: rows × r, v: cols × r, singular values σ_1..σ_r above the cutoff.
    u: ComplexMatrix,
    v: ComplexMatrix,
    sigma: Vec<f64>,
    sigma_max: f64,
}

impl PseudoInverse {
    pub fn new(a: &ComplexMatrix) -> Self {
        Self::with_rcond(a, PINV_RCOND)
    }

    pub fn with_rcond(a: &ComplexMatrix, rcond: f64) -> Self {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 || a.as_slice().iter().all(|z| *z == ZERO) {
            return Self {
                rows,
                cols,
                u: ComplexMatrix::zeros(rows, 0),
                v: ComplexMatrix::zeros(cols, 0),
                sigma: Vec::new(),
                sigma_max: 0.0,
            };
        }
        let svd = a.to_nalgebra().svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| {
                let s = svd.singular_values[i];
                s > rcond * sigma_max && s > 0.0
            })
            .collect();
        let sigma = keep.iter().map(|&i| svd.singular_values[i]).collect();
        let u = ComplexMatrix::from_fn(rows, keep.len(), |i, j| u[(i, keep[j])]);
        let v = ComplexMatrix::from_fn(cols, keep.len(), |i, j| v_t[(keep[j], i)].conj());
        Self {
            rows,
            cols,
            u,
            v,
            sigma,
            sigma_max,
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Smallest retained singular value (0 if rank is 0).
    pub fn sigma_min(&self) -> f64 {
        self.sigma.iter().copied().fold(f64::INFINITY, f64::min).min(self.sigma_max)
    }

    /// Minimum-norm least-squares solution of `a·x = b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        assert_eq!(b.len(), self.rows, "pseudo-inverse rhs length");
        let coeffs: Vec<C64> = (0..self.rank())
            .map(|r| {
                let dot: C64 = (0..self.rows).map(|i| self.u[(i, r)].conj() * b[i]).sum();
                dot / self.sigma[r]
            })
            .collect();
        self.expand(&coeffs)
    }

    /// Minimum-norm solution of the normal-equation system `(a†a)·x = r`.
    pub fn solve_gram(&self, r: &[C64]) -> Vec<C64> {
        assert_eq!(r.len(), self.cols, "gram rhs length");
        let coeffs: Vec<C64> = (0..self.rank())
            .map(|k| {
                let dot: C64 = (0..self.cols).map(|i| self.v[(i, k)].conj() * r[i]).sum();
                dot / (self.sigma[k] * self.sigma[k])
            })
            .collect();
        self.expand(&coeffs)
    }

    fn expand(&self, coeffs: &[C64]) -> Vec<C64> {
        (0..self.cols)
            .map(|i| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| self.v[(i, k)] * c)
                    .sum()
            })
            .collect()
    }
}

/// Minimum-norm `x` minimizing `‖a·x − b‖₂`.
pub fn lstsq(a: &ComplexMatrix, b: &StateVector) -> Result<StateVector> {
    if a.rows() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "lstsq rows vs rhs",
            expected: a.rows(),
            found: b.dim(),
        });
    }
    Ok(StateVector::new(PseudoInverse::new(a).solve(b.as_slice())))
}

/// Orthonormalizes the columns (modified Gram–Schmidt, two passes). The column
/// span is unchanged and the triangular factor has a positive real diagonal.
pub fn orthonormalize_columns(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut cols: Vec<Vec<C64>> = (0..m.cols()).map(|j| m.column(j)).collect();
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        let original = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for _pass in 0..2 {
            for q in done.iter() {
                let proj = inner(q, v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-13 * original.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient);
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    ComplexMatrix::from_columns(&cols).map(|c| {
        if c.rows() == 0 {
            ComplexMatrix::zeros(m.rows(), m.cols())
        } else {
            c
        }
    })
}

/// Haar-random `rows × cols` isometry (orthonormalized complex Gaussian).
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    assert!(cols <= rows, "isometry needs cols <= rows");
    loop {
        let g = ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng));
        if let Ok(q) = orthonormalize_columns(&g) {
            return q;
        }
    }
}

/// Haar-random unitary: QR of a complex Gaussian matrix with the phases of
/// `R`'s diagonal fixed to be positive.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    random_isometry(dim, dim, rng)
}

/// Extends an isometry to a full unitary whose leading columns (at the given
/// positions) are the isometry's columns.
pub fn complete_to_unitary<R: Rng + ?Sized>(
    isometry: &ComplexMatrix,
    positions: &[usize],
    rng: &mut R,
) -> Result<ComplexMatrix> {
    let dim = isometry.rows();
    if positions.len() != isometry.cols() {
        return Err(Error::DimensionMismatch {
            context: "isometry column positions",
            expected: isometry.cols(),
            found: positions.len(),
        });
    }
    let mut columns: Vec<Vec<C64>> = (0..isometry.cols()).map(|j| isometry.column(j)).collect();
    while columns.len() < dim {
        columns.push((0..dim).map(|_| complex_gaussian(rng)).collect());
    }
    let q = orthonormalize_columns(&ComplexMatrix::from_columns(&columns)?)?;
    // The first cols() columns of q equal the isometry up to rounding; place
    // them at `positions` and fill the remaining slots in order.
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut free = (0..dim).filter(|p| !positions.contains(p));
    for j in 0..dim {
        let target = if j < positions.len() {
            positions[j]
        } else {
            free.next().expect("free slot")
        };
        let col = if j < positions.len() {
            isometry.column(j)
        } else {
            q.column(j)
        };
        out.set_column(target, &col);
    }
    Ok(out)
}
