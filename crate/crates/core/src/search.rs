//! Iterative search for code subspaces on which every error generator has
//! vanishing matrix elements, `⟨ν_l|E_m|ν_s⟩ = 0`.
//!
//! One iteration expresses the correction as a combination of the error
//! vectors, `x → x + ½·Σ_m γ_m E_m x`, where `γ` solves a linear least-squares
//! problem over the basis `{E_m x}`. The factor ½ makes the first-order change
//! of every matrix element `⟨x|E_m|x⟩` equal to minus its current value.
//!
//! In encoding mode the same step is applied to all `N` columns of the
//! isometry at once over the shared basis `{E_m ν_s}`. Optionally the columns
//! `{ν_s}` join the basis and the right-hand side gains the orthonormality
//! deviations `⟨ν_s|ν_l⟩ − δ_sl`. Columns are re-orthonormalized after every
//! update either way.

use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BestIterate, Error, Result};
use crate::error_set::{hamming_feasible, ErrorSet};
use crate::linalg::{
    orthonormalize_columns, random_isometry, ComplexMatrix, PseudoInverse, StateVector, C64, ONE,
};
use crate::par::{max_of, Exec};

/// `(iteration, residual)` pairs recorded by the searches.
pub type Trace = Vec<(usize, f64)>;

/// Anything that spans a candidate code space: a single vector or an
/// isometry whose columns are the code basis.
pub trait CodeBasis {
    fn basis(&self) -> Cow<'_, ComplexMatrix>;
}

impl CodeBasis for ComplexMatrix {
    fn basis(&self) -> Cow<'_, ComplexMatrix> {
        Cow::Borrowed(self)
    }
}

impl CodeBasis for StateVector {
    fn basis(&self) -> Cow<'_, ComplexMatrix> {
        Cow::Owned(self.to_column())
    }
}

impl CodeBasis for Encoding {
    fn basis(&self) -> Cow<'_, ComplexMatrix> {
        Cow::Borrowed(&self.isometry)
    }
}

/// A code subspace given by the isometry `V = Ĉ|α̃⟩` (`N·A × N`).
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub n: usize,
    pub k: usize,
    pub isometry: ComplexMatrix,
    /// `max |⟨ν_l|E_m|ν_s⟩|` against the error set the code was built for.
    pub residual: f64,
    pub trace: Trace,
    pub seed: u64,
}

impl Encoding {
    /// Information states with the ancilla held in `|0…0⟩`: columns `e_{s·A}`.
    pub fn trivial(n: usize, k: usize) -> Self {
        let dim = 1usize << n;
        let cols = code_columns(n, k);
        let isometry = ComplexMatrix::from_fn(dim, cols.len(), |i, j| {
            if i == cols[j] {
                ONE
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self {
            n,
            k,
            isometry,
            residual: 0.0,
            trace: vec![(0, 0.0)],
            seed: 0,
        }
    }

    /// Wraps an isometry, evaluating its residual against `errors`.
    pub fn from_isometry(
        n: usize,
        k: usize,
        isometry: ComplexMatrix,
        errors: &ErrorSet,
        seed: u64,
        trace: Trace,
    ) -> Result<Self> {
        let dim = 1usize << n;
        if isometry.shape() != (dim, 1 << k) {
            return Err(Error::DimensionMismatch {
                context: "isometry shape",
                expected: dim,
                found: isometry.rows(),
            });
        }
        let residual = weak_residual(&isometry, errors)?;
        Ok(Self {
            n,
            k,
            isometry,
            residual,
            trace,
            seed,
        })
    }

    /// `N = 2^k`.
    pub fn info_dim(&self) -> usize {
        1 << self.k
    }

    /// `A = 2^{n−k}`.
    pub fn ancilla_dim(&self) -> usize {
        1 << (self.n - self.k)
    }
}

/// Positions `s·A` of the states `|s⟩⊗|α̃⟩` in the full basis, with the
/// information qubits most significant and `|α̃⟩ = |0…0⟩`.
pub fn code_columns(n: usize, k: usize) -> Vec<usize> {
    let a = 1usize << (n - k);
    (0..1usize << k).map(|s| s * a).collect()
}

fn check_dims(basis: &ComplexMatrix, errors: &ErrorSet) -> Result<()> {
    if !errors.is_empty() && basis.rows() != errors.dim {
        return Err(Error::DimensionMismatch {
            context: "code basis vs error dimension",
            expected: errors.dim,
            found: basis.rows(),
        });
    }
    Ok(())
}

// E_m·V for every generator.
fn error_images(basis: &ComplexMatrix, errors: &ErrorSet, exec: Exec) -> Vec<ComplexMatrix> {
    exec.map(&errors.generators, |e| e.matmul_with(basis, Exec::Sequential))
}

fn weak_residual_from_images(basis: &ComplexMatrix, images: &[ComplexMatrix], exec: Exec) -> f64 {
    max_of(&exec.map(images, |w| basis.adjoint_matmul(w).max_abs()))
}

/// `max_{m,l,s} |⟨ν_l|E_m|ν_s⟩|` (for a single vector, `max_m |⟨x|E_m|x⟩|`).
pub fn weak_residual<B: CodeBasis + ?Sized>(v: &B, errors: &ErrorSet) -> Result<f64> {
    let basis = v.basis();
    check_dims(&basis, errors)?;
    let images = error_images(&basis, errors, Exec::Parallel);
    Ok(weak_residual_from_images(&basis, &images, Exec::Parallel))
}

/// Deviation from the strong (Knill) condition: for every pair of generators
/// the block `⟨ν'|E_s E_l|ν⟩` is compared with `c_sl·I`, `c_sl` the block's
/// mean diagonal, and the largest entrywise deviation is returned.
pub fn knill_residual<B: CodeBasis + ?Sized>(v: &B, errors: &ErrorSet) -> Result<f64> {
    let basis = v.basis();
    check_dims(&basis, errors)?;
    let images = error_images(&basis, errors, Exec::Parallel);
    let m = images.len();
    let per_pair = Exec::Parallel.map_range(m * m, |idx| {
        let (s, l) = (idx / m, idx % m);
        // E_s Hermitian: ⟨ν'|E_s E_l|ν⟩ = (E_s ν')†(E_l ν).
        let mut block = images[s].adjoint_matmul(&images[l]);
        let n = block.rows();
        let mean = block.trace() / n as f64;
        for i in 0..n {
            block[(i, i)] -= mean;
        }
        block.max_abs()
    });
    Ok(max_of(&per_pair))
}

/// `V†·e·V`, the error projected on the code space.
pub fn projected_error<B: CodeBasis + ?Sized>(v: &B, e: &ComplexMatrix) -> Result<ComplexMatrix> {
    let basis = v.basis();
    if e.shape() != (basis.rows(), basis.rows()) {
        return Err(Error::DimensionMismatch {
            context: "projected error",
            expected: basis.rows(),
            found: e.rows(),
        });
    }
    Ok(basis.adjoint_matmul(&e.matmul(&basis)))
}

/// Coefficients of the encoding-mode correction
/// `ΔV = Σ_m E_m·V·γ_m + V·η`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingGamma {
    /// One `N × N` block per error generator.
    pub blocks: Vec<ComplexMatrix>,
    /// Coefficients on the code columns themselves; present when the
    /// orthonormality rows are part of the system.
    pub orthonormality: Option<ComplexMatrix>,
}

/// Single-vector coefficients: `γ` minimizing `‖x + Σ_m γ_m E_m x‖`
/// (minimum-norm on degenerate systems).
pub fn gamma_vector(x: &StateVector, errors: &ErrorSet) -> Result<Vec<C64>> {
    check_dims(&x.to_column(), errors)?;
    let columns: Vec<Vec<C64>> = errors
        .generators
        .iter()
        .map(|e| e.mul_vec(x.as_slice()))
        .collect();
    if columns.is_empty() {
        return Ok(Vec::new());
    }
    let w = ComplexMatrix::from_columns(&columns)?;
    let rhs: Vec<C64> = x.as_slice().iter().map(|z| -z).collect();
    Ok(PseudoInverse::new(&w).solve(&rhs))
}

// Stacked basis [E_1 V | … | E_M V | V] (identity block optional).
fn stacked_basis(basis: &ComplexMatrix, images: &[ComplexMatrix], with_identity: bool) -> ComplexMatrix {
    let (dim, n) = basis.shape();
    let blocks = images.len() + usize::from(with_identity);
    ComplexMatrix::from_fn(dim, blocks * n, |i, j| {
        let (b, s) = (j / n, j % n);
        if b < images.len() {
            images[b][(i, s)]
        } else {
            basis[(i, s)]
        }
    })
}

fn solve_encoding_gamma(
    basis: &ComplexMatrix,
    images: &[ComplexMatrix],
    orthonormality_rows: bool,
) -> (ComplexMatrix, ComplexMatrix) {
    let n = basis.cols();
    let w = stacked_basis(basis, images, orthonormality_rows);
    // Residual rows: ⟨E_m ν_s|ν_l⟩ and ⟨ν_s|ν_l⟩ − δ_sl.
    let mut r = w.adjoint_matmul(basis);
    if orthonormality_rows {
        let offset = images.len() * n;
        for s in 0..n {
            r[(offset + s, s)] -= ONE;
        }
    }
    let pinv = PseudoInverse::new(&w);
    let mut gamma = ComplexMatrix::zeros(w.cols(), n);
    for l in 0..n {
        let rhs: Vec<C64> = r.column(l).iter().map(|z| -z).collect();
        gamma.set_column(l, &pinv.solve_gram(&rhs));
    }
    (w, gamma)
}

/// Encoding-mode coefficients: the minimum-norm `γ` with
/// `(W†W)·γ = −(W†V − T)` for the stacked basis `W`, i.e. the least-squares
/// system whose rows are the weak-condition elements and (optionally) the
/// orthonormality deviations.
pub fn gamma_encoding(
    basis: &ComplexMatrix,
    errors: &ErrorSet,
    orthonormality_rows: bool,
) -> Result<EncodingGamma> {
    check_dims(basis, errors)?;
    let images = error_images(basis, errors, Exec::Parallel);
    let (_, gamma) = solve_encoding_gamma(basis, &images, orthonormality_rows);
    let n = basis.cols();
    let block = |b: usize| ComplexMatrix::from_fn(n, n, |s, l| gamma[(b * n + s, l)]);
    Ok(EncodingGamma {
        blocks: (0..images.len()).map(block).collect(),
        orthonormality: orthonormality_rows.then(|| block(images.len())),
    })
}

/// Parameters shared by the vector and encoding searches.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Multiplier on the least-squares correction.
    pub step: f64,
    /// Include `⟨ν_s|ν_l⟩ − δ_sl` rows in the encoding-mode system.
    pub orthonormality_rows: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-9,
            max_iter: 5000,
            step: 0.5,
            orthonormality_rows: false,
        }
    }
}

/// One vector iteration: `x → normalize(x + step·Σ γ_m E_m x)`.
pub fn vector_step(x: &StateVector, errors: &ErrorSet, step: f64) -> Result<StateVector> {
    let gamma = gamma_vector(x, errors)?;
    let mut next: Vec<C64> = x.as_slice().to_vec();
    for (g, e) in gamma.iter().zip(&errors.generators) {
        let ex = e.mul_vec(x.as_slice());
        for (a, b) in next.iter_mut().zip(ex) {
            *a += g * step * b;
        }
    }
    Ok(StateVector::new(next).normalized())
}

/// Finds a unit vector with `⟨x|E_m|x⟩ = 0` for every generator.
pub fn find_code_vector(errors: &ErrorSet, cfg: &SearchConfig) -> Result<(StateVector, Trace)> {
    if errors.is_empty() {
        return Err(Error::invalid("find_code_vector needs at least one error"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = StateVector::random(errors.dim, &mut rng);
    let mut trace = Trace::new();
    let mut best = (f64::INFINITY, x.clone());
    for iter in 0..=cfg.max_iter {
        let residual = weak_residual(&x, errors)?;
        trace.push((iter, residual));
        if residual < best.0 {
            best = (residual, x.clone());
        }
        if residual <= cfg.tol {
            return Ok((x, trace));
        }
        if !residual.is_finite() || iter == cfg.max_iter {
            break;
        }
        x = vector_step(&x, errors, cfg.step)?;
    }
    Err(Error::NotConverged {
        iterations: trace.len().saturating_sub(1),
        residual: best.0,
        best: Some(Box::new(BestIterate::Vector(best.1, trace))),
    })
}

/// One encoding iteration: least-squares correction of all columns followed by
/// re-orthonormalization. Returns the new isometry and the residual of the
/// input.
pub fn encoding_step(
    basis: &ComplexMatrix,
    errors: &ErrorSet,
    cfg: &SearchConfig,
) -> Result<(ComplexMatrix, f64)> {
    check_dims(basis, errors)?;
    let images = error_images(basis, errors, Exec::Parallel);
    let residual = weak_residual_from_images(basis, &images, Exec::Parallel);
    let next = apply_encoding_step(basis, &images, cfg)?;
    Ok((next, residual))
}

fn apply_encoding_step(
    basis: &ComplexMatrix,
    images: &[ComplexMatrix],
    cfg: &SearchConfig,
) -> Result<ComplexMatrix> {
    let (w, gamma) = solve_encoding_gamma(basis, images, cfg.orthonormality_rows);
    let mut next = basis.clone();
    next.add_scaled(C64::new(cfg.step, 0.0), &w.matmul(&gamma));
    orthonormalize_columns(&next)
}

/// Finds an `N·A × N` isometry satisfying the weak condition for `errors`,
/// starting from a seeded Haar-random isometry.
pub fn find_encoding(errors: &ErrorSet, k: usize, cfg: &SearchConfig) -> Result<Encoding> {
    let n = errors.n_qubits;
    if n == 0 || errors.dim != 1 << n {
        return Err(Error::invalid("find_encoding needs a qubit error set"));
    }
    if k >= n {
        return Err(Error::invalid(format!("need k < n, got n={n}, k={k}")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    if errors.is_empty() {
        return Ok(Encoding {
            seed: cfg.seed,
            ..Encoding::trivial(n, k)
        });
    }
    let check = hamming_feasible(n, k, errors.len() as u128)?;
    if !check.feasible {
        log::warn!(
            "M = {} exceeds ancilla dimension 2^{} (slack {:.4}); convergence is not expected",
            errors.len(),
            n - k,
            check.slack
        );
    }
    let dim = errors.dim;
    let info = 1usize << k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = random_isometry(dim, info, &mut rng);
    let mut trace = Trace::new();
    let mut best = (f64::INFINITY, v.clone());
    for iter in 0..=cfg.max_iter {
        let images = error_images(&v, errors, Exec::Parallel);
        let residual = weak_residual_from_images(&v, &images, Exec::Parallel);
        trace.push((iter, residual));
        log::debug!("find_encoding iter {iter}: residual {residual:e}");
        if residual < best.0 {
            best = (residual, v.clone());
        }
        if residual <= cfg.tol {
            return Ok(Encoding {
                n,
                k,
                isometry: v,
                residual,
                trace,
                seed: cfg.seed,
            });
        }
        if !residual.is_finite() || iter == cfg.max_iter {
            break;
        }
        match apply_encoding_step(&v, &images, cfg) {
            Ok(next) => v = next,
            Err(Error::RankDeficient) => break,
            Err(e) => return Err(e),
        }
    }
    let iterations = trace.len().saturating_sub(1);
    let residual = best.0;
    Err(Error::NotConverged {
        iterations,
        residual,
        best: Some(Box::new(BestIterate::Encoding(Encoding {
            n,
            k,
            isometry: best.1,
            residual,
            trace,
            seed: cfg.seed,
        }))),
    })
}

/// Runs `find_encoding` with seeds `seed, seed+1, …` until one converges or
/// `restarts` extra attempts are exhausted. On failure returns the error of the
/// attempt with the lowest residual.
pub fn find_encoding_with_restarts(
    errors: &ErrorSet,
    k: usize,
    cfg: &SearchConfig,
    restarts: usize,
) -> Result<Encoding> {
    let mut best_err: Option<Error> = None;
    for attempt in 0..=restarts {
        let attempt_cfg = SearchConfig {
            seed: cfg.seed + attempt as u64,
            ..cfg.clone()
        };
        match find_encoding(errors, k, &attempt_cfg) {
            Ok(enc) => return Ok(enc),
            Err(e @ Error::NotConverged { .. }) => {
                log::info!("seed {} did not converge: {e}", attempt_cfg.seed);
                let better = match (&best_err, &e) {
                    (Some(Error::NotConverged { residual: old, .. }), Error::NotConverged { residual: new, .. }) => {
                        new < old
                    }
                    _ => true,
                };
                if better {
                    best_err = Some(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(best_err.expect("at least one attempt"))
}
