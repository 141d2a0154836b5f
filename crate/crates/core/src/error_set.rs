//! Error-generator sets and the counting bounds used to size codes.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{kron_all, pauli_x, pauli_y, pauli_z, ComplexMatrix, C64};

/// Largest Hilbert-space dimension `pauli_error_set` builds by default.
pub const DEFAULT_MAX_DIM: usize = 1 << 10;
/// Hard cap on qubit count for Pauli sets.
pub const MAX_PAULI_QUBITS: usize = 12;

const HERMITIAN_TOL: f64 = 1e-12;

/// A list of traceless Hermitian error generators on a common space.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSet {
    /// Qubit count; 0 for explicit-dimension sets that are not a power of two.
    pub n_qubits: usize,
    pub dim: usize,
    pub generators: Vec<ComplexMatrix>,
    pub labels: Vec<String>,
    /// Maximum Pauli weight `t`; 0 for non-Pauli sets.
    pub weight: usize,
}

impl ErrorSet {
    /// Builds a validated set. Generators with a trace part are repaired by
    /// subtracting `(tr/dim)·I`, which only contributes a global phase.
    pub fn new(
        n_qubits: usize,
        dim: usize,
        generators: Vec<ComplexMatrix>,
        labels: Vec<String>,
        weight: usize,
    ) -> Result<Self> {
        if n_qubits > 0 && 1usize.checked_shl(n_qubits as u32) != Some(dim) {
            return Err(Error::invalid(format!(
                "dimension {dim} is not 2^{n_qubits}"
            )));
        }
        if labels.len() != generators.len() {
            return Err(Error::DimensionMismatch {
                context: "labels vs generators",
                expected: generators.len(),
                found: labels.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid(format!("duplicate label {l:?}")));
            }
        }
        let mut repaired = Vec::with_capacity(generators.len());
        for g in generators {
            if g.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch {
                    context: "error generator",
                    expected: dim,
                    found: g.rows().max(g.cols()),
                });
            }
            if !g.is_finite() {
                return Err(Error::invalid("non-finite generator entry"));
            }
            let scale = g.frobenius_norm().max(1.0);
            let residual = g.hermiticity_residual();
            if residual > HERMITIAN_TOL * scale {
                return Err(Error::NotHermitian {
                    residual: residual / scale,
                });
            }
            repaired.push(remove_trace(g));
        }
        Ok(Self {
            n_qubits,
            dim,
            generators: repaired,
            labels,
            weight,
        })
    }

    /// The empty set on `n` qubits.
    pub fn empty(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            dim: 1 << n_qubits,
            generators: Vec::new(),
            labels: Vec::new(),
            weight: 0,
        }
    }

    /// Number of generators `M`.
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Keeps only the generators whose label satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let (generators, labels) = self
            .generators
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| keep(l))
            .map(|(g, l)| (g.clone(), l.clone()))
            .unzip();
        Self {
            generators,
            labels,
            ..self.clone()
        }
    }
}

fn remove_trace(mut g: ComplexMatrix) -> ComplexMatrix {
    let n = g.rows();
    let shift = g.trace() / n as f64;
    if shift != C64::new(0.0, 0.0) {
        for i in 0..n {
            g[(i, i)] -= shift;
        }
    }
    g
}

/// All Pauli strings of weight `1..=t` on `n` qubits, labelled like `"X..Z"`
/// (site 0 leftmost, `.` for identity).
pub fn pauli_error_set(n: usize, t: usize) -> Result<ErrorSet> {
    pauli_error_set_capped(n, t, DEFAULT_MAX_DIM)
}

pub fn pauli_error_set_capped(n: usize, t: usize, max_dim: usize) -> Result<ErrorSet> {
    if !(1 <= t && t <= n && n <= MAX_PAULI_QUBITS) {
        return Err(Error::invalid(format!(
            "need 1 <= t <= n <= {MAX_PAULI_QUBITS}, got n={n}, t={t}"
        )));
    }
    let dim = 1usize << n;
    if dim > max_dim {
        return Err(Error::CapExceeded {
            dim,
            limit: max_dim,
        });
    }
    let singles = [('X', pauli_x()), ('Y', pauli_y()), ('Z', pauli_z())];
    let mut generators = Vec::new();
    let mut labels = Vec::new();
    for pattern in pauli_patterns(n, t) {
        let factors: Vec<ComplexMatrix> = pattern
            .iter()
            .map(|p| match p {
                0 => ComplexMatrix::identity(2),
                k => singles[k - 1].1.clone(),
            })
            .collect();
        labels.push(
            pattern
                .iter()
                .map(|&p| if p == 0 { '.' } else { singles[p - 1].0 })
                .collect(),
        );
        generators.push(kron_all(&factors));
    }
    ErrorSet::new(n, dim, generators, labels, t)
}

// Per-site codes 0 = I, 1 = X, 2 = Y, 3 = Z; ordered by weight, then
// lexicographically by support and letters.
fn pauli_patterns(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for weight in 1..=t {
        for support in combinations(n, weight) {
            let total = 3usize.pow(weight as u32);
            for code in 0..total {
                let mut pattern = vec![0; n];
                let mut c = code;
                for &site in support.iter().rev() {
                    pattern[site] = c % 3 + 1;
                    c /= 3;
                }
                out.push(pattern);
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `m` random traceless Hermitian generators of dimension `dim`: GUE draws
/// (unit-variance off-diagonal entries) with the trace removed and each scaled
/// to unit Frobenius norm. Deterministic in `seed`.
pub fn random_error_set(dim: usize, m: usize, seed: u64) -> Result<ErrorSet> {
    if dim < 2 || m < 1 {
        return Err(Error::invalid(format!(
            "need dim >= 2 and m >= 1, got dim={dim}, m={m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generators = Vec::with_capacity(m);
    for _ in 0..m {
        let mut h = ComplexMatrix::zeros(dim, dim);
        for i in 0..dim {
            let d: f64 = rng.sample(StandardNormal);
            h[(i, i)] = C64::new(d, 0.0);
            for j in i + 1..dim {
                let z = crate::linalg::complex_gaussian(&mut rng);
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        let h = remove_trace(h);
        let norm = h.frobenius_norm();
        generators.push(h.scale_real(1.0 / norm));
    }
    let labels = (0..m).map(|i| format!("random#{seed}.{i}")).collect();
    let n_qubits = if dim.is_power_of_two() {
        dim.trailing_zeros() as usize
    } else {
        0
    };
    ErrorSet::new(n_qubits, dim, generators, labels, 0)
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `Σ_{l=1}^{t} C(n,l)·(K²−1)^l`, the number of distinct error operators of
/// weight at most `t` on `n` sites of dimension `K`.
pub fn error_count(n: usize, sites: usize, t: usize) -> Result<u128> {
    if sites < 2 || t < 1 || t > n {
        return Err(Error::invalid(format!(
            "need K >= 2 and 1 <= t <= n, got n={n}, K={sites}, t={t}"
        )));
    }
    let per_site = (sites * sites - 1) as u128;
    Ok((1..=t)
        .map(|l| binomial(n as u64, l as u64) * per_site.pow(l as u32))
        .sum())
}

/// Result of the counting check `M ≤ 2^{n−k}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HammingCheck {
    pub feasible: bool,
    /// `1 − k/n − log₂(M)/n`; nonnegative exactly when `feasible`.
    pub slack: f64,
}

pub fn hamming_feasible(n: usize, k: usize, m: u128) -> Result<HammingCheck> {
    if k >= n {
        return Err(Error::invalid(format!("need 0 <= k < n, got n={n}, k={k}")));
    }
    let ancilla_bits = (n - k) as u32;
    let feasible = match 1u128.checked_shl(ancilla_bits) {
        Some(a) => m <= a,
        None => true,
    };
    let slack = 1.0 - k as f64 / n as f64 - (m.max(1) as f64).log2() / n as f64;
    Ok(HammingCheck { feasible, slack })
}
