//! Non-holonomic control: two fixed Hamiltonians applied alternately with
//! tuned durations, `Ĉ = ⋯ e^{−i t₃ H₁} e^{−i t₂ H₂} e^{−i t₁ H₁}`, and the
//! search for timings whose product maps `|s⟩⊗|α̃⟩` onto a weak-condition code.
//!
//! The timing search is a damped Gauss–Newton iteration driven by the
//! code-search coefficients: each step asks for the increments of the
//! projected errors `V†E_mV` that one code-search step would produce, and
//! solves the real least-squares system `β·J·δt = δ̂` for the timing changes,
//! where `J` stacks `∂(V†E_mV)/∂t_l`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BestIterate, Error, Result};
use crate::error_set::ErrorSet;
use crate::linalg::{embed_site, herm_eig, pauli_x, pauli_y, pauli_z, ComplexMatrix, HermEig, C64, I, ONE, ZERO};
use crate::search::{code_columns, gamma_encoding, Encoding, Trace};

/// Which of the two control Hamiltonians acts in a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    H1,
    H2,
}

impl Generator {
    fn other(self) -> Self {
        match self {
            Generator::H1 => Generator::H2,
            Generator::H2 => Generator::H1,
        }
    }
}

/// Sign applied to both Hamiltonians (`Minus` realizes the reversed-field
/// inverse).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

/// Magneto-dipole term: static field `B_x` and per-nucleus ratios `μ_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DipoleParams {
    pub b_x: f64,
    pub mu: Vec<f64>,
}

/// Raman term: field amplitudes `B^R`, transition elements `μ^{(2)}_{ij}`
/// (used for `i < j`) and detuning `δω`.
#[derive(Clone, Debug, PartialEq)]
pub struct RamanParams {
    pub b_r: [f64; 3],
    pub mu2: Vec<Vec<f64>>,
    pub delta_omega: f64,
}

/// `H₁ = Σ_j B_x μ_j σ_x^{(j)}`.
pub fn build_h1(n: usize, b_x: f64, mu: &[f64]) -> Result<ComplexMatrix> {
    check_qubits(n)?;
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            context: "gyromagnetic ratios",
            expected: n,
            found: mu.len(),
        });
    }
    let mut h = ComplexMatrix::zeros(1 << n, 1 << n);
    for (j, &m) in mu.iter().enumerate() {
        h.add_scaled(C64::new(b_x * m, 0.0), &embed_site(&pauli_x(), j, n));
    }
    Ok(h)
}

/// `H₂ = Σ_{i<j} Σ_{a,b∈{x,y,z}} δω⁻¹ μ^{(2)}_{ij} B^R_a B^R_b σ_a^{(i)} σ_b^{(j)}`.
pub fn build_h2(n: usize, b_r: [f64; 3], mu2: &[Vec<f64>], delta_omega: f64) -> Result<ComplexMatrix> {
    check_qubits(n)?;
    if delta_omega == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    if mu2.len() != n || mu2.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "Raman matrix elements",
            expected: n,
            found: mu2.len(),
        });
    }
    let sigmas = [pauli_x(), pauli_y(), pauli_z()];
    // Σ_a B_a σ_a on a single site; the double sum factorizes per pair.
    let mut field = ComplexMatrix::zeros(2, 2);
    for (b, s) in b_r.iter().zip(&sigmas) {
        field.add_scaled(C64::new(*b, 0.0), s);
    }
    let dim = 1usize << n;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in i + 1..n {
            let coeff = mu2[i][j] / delta_omega;
            if coeff == 0.0 {
                continue;
            }
            let factors: Vec<ComplexMatrix> = (0..n)
                .map(|q| {
                    if q == i || q == j {
                        field.clone()
                    } else {
                        ComplexMatrix::identity(2)
                    }
                })
                .collect();
            h.add_scaled(C64::new(coeff, 0.0), &crate::linalg::kron_all(&factors));
        }
    }
    Ok(h)
}

fn check_qubits(n: usize) -> Result<()> {
    const MAX_CONTROL_DIM: usize = 1 << 10;
    if n == 0 {
        return Err(Error::invalid("need at least one qubit"));
    }
    if n >= 31 || 1usize << n > MAX_CONTROL_DIM {
        return Err(Error::CapExceeded {
            dim: 1usize.checked_shl(n as u32).unwrap_or(usize::MAX),
            limit: MAX_CONTROL_DIM,
        });
    }
    Ok(())
}

/// The two control Hamiltonians with their parameters and cached spectra.
#[derive(Clone, Debug)]
pub struct ControlPair {
    pub n: usize,
    pub h1: ComplexMatrix,
    pub h2: ComplexMatrix,
    pub dipole: DipoleParams,
    pub raman: RamanParams,
    eig1: HermEig,
    eig2: HermEig,
}

impl ControlPair {
    pub fn new(n: usize, dipole: DipoleParams, raman: RamanParams) -> Result<Self> {
        let h1 = build_h1(n, dipole.b_x, &dipole.mu)?;
        let h2 = build_h2(n, raman.b_r, &raman.mu2, raman.delta_omega)?;
        let eig1 = herm_eig(&h1)?;
        let eig2 = herm_eig(&h2)?;
        Ok(Self {
            n,
            h1,
            h2,
            dipole,
            raman,
            eig1,
            eig2,
        })
    }

    /// Generic parameters: `B_x = 1`, `μ_j ~ U[0.5, 1.5]`, `B^R = (1, 1, 0)`,
    /// `μ^{(2)}_{ij} ~ U[0.5, 1.5]` (symmetric), `δω = 10`.
    pub fn with_defaults(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut mu2 = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0.5..1.5);
                mu2[i][j] = v;
                mu2[j][i] = v;
            }
        }
        Self::new(
            n,
            DipoleParams { b_x: 1.0, mu },
            RamanParams {
                b_r: [1.0, 1.0, 0.0],
                mu2,
                delta_omega: 10.0,
            },
        )
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn hamiltonian(&self, g: Generator) -> &ComplexMatrix {
        match g {
            Generator::H1 => &self.h1,
            Generator::H2 => &self.h2,
        }
    }

    pub fn spectrum(&self, g: Generator) -> &HermEig {
        match g {
            Generator::H1 => &self.eig1,
            Generator::H2 => &self.eig2,
        }
    }

    /// Largest `|eigenvalue|` of the generator.
    pub fn operator_norm(&self, g: Generator) -> f64 {
        self.spectrum(g)
            .values
            .iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Ordered timings `t₁…t_{M′}`; slot 1 acts first. Sequences built by
/// [`synthesize`] start with `H₁` and have sign `Plus`; their inverses are
/// reversed, sign `Minus`, and keep each timing on its original Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingSequence {
    pub timings: Vec<f64>,
    pub sign: Sign,
    pub seed: u64,
    pub residual: f64,
    pub trace: Trace,
    pub beta_history: Vec<f64>,
}

impl TimingSequence {
    pub fn new(timings: Vec<f64>) -> Self {
        Self {
            timings,
            sign: Sign::Plus,
            seed: 0,
            residual: f64::NAN,
            trace: Trace::new(),
            beta_history: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.timings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timings.is_empty()
    }

    /// The Hamiltonian acting in the first slot.
    pub fn start(&self) -> Generator {
        match self.sign {
            Sign::Plus => Generator::H1,
            // Reversal of an H₁-first sequence: the old last slot comes first.
            Sign::Minus if self.len() % 2 == 1 => Generator::H1,
            Sign::Minus => Generator::H2,
        }
    }

    /// Hamiltonian of 0-based slot `idx`.
    pub fn generator_at(&self, idx: usize) -> Generator {
        if idx % 2 == 0 {
            self.start()
        } else {
            self.start().other()
        }
    }
}

/// Reversed order, negated sign; each timing stays on its Hamiltonian.
pub fn inverse_sequence(seq: &TimingSequence) -> TimingSequence {
    let mut timings = seq.timings.clone();
    timings.reverse();
    TimingSequence {
        timings,
        sign: seq.sign.flipped(),
        ..seq.clone()
    }
}

fn slot_propagator(seq: &TimingSequence, pair: &ControlPair, idx: usize) -> ComplexMatrix {
    let g = seq.generator_at(idx);
    pair.spectrum(g).propagator(seq.sign.value() * seq.timings[idx])
}

fn slot_derivative(seq: &TimingSequence, pair: &ControlPair, idx: usize) -> ComplexMatrix {
    let g = seq.generator_at(idx);
    let s = seq.sign.value();
    pair.spectrum(g)
        .propagator_derivative(s * seq.timings[idx])
        .scale_real(s)
}

/// `Ĉ = U_{M′}⋯U₂U₁` with `U_l = exp(−i·sign·t_l·H_{tag(l)})`.
pub fn sequence_unitary(seq: &TimingSequence, pair: &ControlPair) -> ComplexMatrix {
    (0..seq.len()).fold(ComplexMatrix::identity(pair.dim()), |acc, idx| {
        slot_propagator(seq, pair, idx).matmul(&acc)
    })
}

/// `∂Ĉ/∂t_l` for 1-based slot `l`.
pub fn sequence_gradient(seq: &TimingSequence, pair: &ControlPair, l: usize) -> Result<ComplexMatrix> {
    if l == 0 || l > seq.len() {
        return Err(Error::IndexOutOfRange {
            index: l,
            len: seq.len(),
        });
    }
    let idx = l - 1;
    let dim = pair.dim();
    let mut prefix = ComplexMatrix::identity(dim);
    for j in 0..idx {
        prefix = slot_propagator(seq, pair, j).matmul(&prefix);
    }
    let mut out = slot_derivative(seq, pair, idx).matmul(&prefix);
    for j in idx + 1..seq.len() {
        out = slot_propagator(seq, pair, j).matmul(&out);
    }
    Ok(out)
}

/// All `∂Ĉ/∂t_l`, sharing cached prefix and suffix products.
pub fn sequence_gradients(seq: &TimingSequence, pair: &ControlPair) -> Vec<ComplexMatrix> {
    let m = seq.len();
    let dim = pair.dim();
    let props: Vec<ComplexMatrix> = (0..m).map(|j| slot_propagator(seq, pair, j)).collect();
    // prefixes[j] = U_j⋯U_1 (empty product for j = 0).
    let mut prefixes = Vec::with_capacity(m);
    let mut acc = ComplexMatrix::identity(dim);
    for p in &props {
        prefixes.push(acc.clone());
        acc = p.matmul(&acc);
    }
    // suffixes[j] = U_{M′}⋯U_{j+2}.
    let mut suffixes = vec![ComplexMatrix::identity(dim); m];
    for j in (0..m.saturating_sub(1)).rev() {
        suffixes[j] = suffixes[j + 1].matmul(&props[j + 1]);
    }
    (0..m)
        .map(|j| {
            suffixes[j]
                .matmul(&slot_derivative(seq, pair, j))
                .matmul(&prefixes[j])
        })
        .collect()
}

/// Per-slot action `‖H_{tag(l)}‖·t_l` and whether it exceeds `threshold`.
pub fn action_report(seq: &TimingSequence, pair: &ControlPair, threshold: f64) -> Vec<(f64, bool)> {
    (0..seq.len())
        .map(|idx| {
            let a = pair.operator_norm(seq.generator_at(idx)) * seq.timings[idx];
            (a, a > threshold)
        })
        .collect()
}

/// Real dimension of the Lie algebra generated by `{iH : H ∈ hamiltonians}`
/// using commutators nested up to `depth` brackets deep.
pub fn lie_algebra_dimension(hamiltonians: &[ComplexMatrix], depth: usize) -> usize {
    fn to_real(m: &ComplexMatrix) -> Vec<f64> {
        m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
    }
    // Gram–Schmidt over the real vectorization; returns true if `v` was new.
    fn try_add(basis: &mut Vec<Vec<f64>>, m: &ComplexMatrix) -> bool {
        let mut v = to_real(m);
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0 {
            return false;
        }
        basis.push(v.into_iter().map(|x| x / norm).collect());
        true
    }
    let gens: Vec<ComplexMatrix> = hamiltonians.iter().map(|h| h.scale(I)).collect();
    let mut basis = Vec::new();
    let mut layer = Vec::new();
    for g in &gens {
        if try_add(&mut basis, g) {
            layer.push(g.clone());
        }
    }
    for _ in 0..depth {
        let mut next = Vec::new();
        for a in &layer {
            for g in &gens {
                let c = a.commutator(g);
                let scale = c.frobenius_norm();
                if scale > 0.0 && try_add(&mut basis, &c) {
                    next.push(c.scale_real(1.0 / scale));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layer = next;
    }
    basis.len()
}

/// How the target increments of the projected errors are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IncrementRule {
    /// First-order change of `V†E_mV` under the code-search update
    /// `ΔV = ½·Σ E_m V γ_m`.
    #[default]
    Induced,
    /// `V†E_mV·γ_m + γ_m†·V†E_mV`.
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub k: usize,
    pub m_prime: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step scale; halved on a rejected step, grown 1.2× on an
    /// accepted one, capped at `beta_max`.
    pub beta0: f64,
    pub beta_max: f64,
    /// Initial timings are drawn so that `‖H‖·t ∈ action_window`.
    pub action_window: (f64, f64),
    /// Timings are clamped at this fraction of the lower initialization bound.
    pub floor_fraction: f64,
    pub increment_rule: IncrementRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            k: 1,
            m_prime: 0,
            seed: 0,
            tol: 1e-6,
            max_iter: 500,
            beta0: 1.0,
            beta_max: 1.0,
            action_window: (1.0, 10.0),
            floor_fraction: 1e-6,
            increment_rule: IncrementRule::Induced,
        }
    }
}

/// Random initial timings with actions in the configured window.
pub fn initial_timings(pair: &ControlPair, m_prime: usize, window: (f64, f64), seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = TimingSequence::new(vec![0.0; m_prime]);
    (0..m_prime)
        .map(|idx| {
            let norm = pair.operator_norm(seq.generator_at(idx)).max(f64::MIN_POSITIVE);
            rng.random_range(window.0..window.1) / norm
        })
        .collect()
}

// Real coordinates of a Hermitian N×N matrix, weighted so the Euclidean norm
// equals the Frobenius norm: diagonal, then √2·(Re, Im) of the upper triangle.
fn hermitian_coords(m: &ComplexMatrix, out: &mut Vec<f64>) {
    let n = m.rows();
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    let r2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            out.push(r2 * m[(i, j)].re);
            out.push(r2 * m[(i, j)].im);
        }
    }
}

/// Code isometry `Ĉ|α̃⟩` together with the forward states after each slot.
struct Forward {
    /// states[j] = U_j⋯U_1|α̃⟩ (states[0] the input columns).
    states: Vec<ComplexMatrix>,
    props: Vec<ComplexMatrix>,
}

fn forward(seq: &TimingSequence, pair: &ControlPair, k: usize) -> Forward {
    let dim = pair.dim();
    let cols = code_columns(pair.n, k);
    let mut x = ComplexMatrix::from_fn(dim, cols.len(), |i, j| if i == cols[j] { ONE } else { ZERO });
    let mut states = vec![x.clone()];
    let mut props = Vec::with_capacity(seq.len());
    for idx in 0..seq.len() {
        let u = slot_propagator(seq, pair, idx);
        x = u.matmul(&x);
        states.push(x.clone());
        props.push(u);
    }
    Forward { states, props }
}

/// The code isometry realized by a sequence: columns `s·A` of `Ĉ`.
pub fn realized_isometry(seq: &TimingSequence, pair: &ControlPair, k: usize) -> ComplexMatrix {
    forward(seq, pair, k).states.pop().expect("non-empty")
}

fn projected(v: &ComplexMatrix, images: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    images.iter().map(|w| v.adjoint_matmul(w)).collect()
}

/// Real Jacobian `∂ coords(V†E_mV) / ∂t_l`, rows grouped by generator.
pub fn projected_error_jacobian(
    seq: &TimingSequence,
    pair: &ControlPair,
    errors: &ErrorSet,
    k: usize,
) -> Vec<Vec<f64>> {
    let fw = forward(seq, pair, k);
    let v = fw.states.last().expect("non-empty");
    let m = seq.len();
    // Adjoint sweep: z[j] = (U_{M′}⋯U_{j+2})†·E_m·V for all m at once.
    let mut z: Vec<ComplexMatrix> = errors.generators.iter().map(|e| e.matmul(v)).collect();
    let mut columns = vec![Vec::new(); m];
    for j in (0..m).rev() {
        // ∂V/∂t_j = S_j·(dU_j)·X_{j−1}; V†E ∂V = z†·dU_j·X_{j−1}.
        let y = slot_derivative(seq, pair, j).matmul(&fw.states[j]);
        let mut col = Vec::with_capacity(errors.len() * v.cols() * v.cols());
        for zm in &z {
            let x = zm.adjoint_matmul(&y);
            let d = &x + &x.adjoint();
            hermitian_coords(&d, &mut col);
        }
        columns[j] = col;
        if j > 0 {
            let back = fw.props[j].adjoint();
            for zm in z.iter_mut() {
                *zm = back.matmul(zm);
            }
        }
    }
    let rows = columns.first().map_or(0, Vec::len);
    (0..rows).map(|r| columns.iter().map(|c| c[r]).collect()).collect()
}

fn target_increments(
    v: &ComplexMatrix,
    errors: &ErrorSet,
    rule: IncrementRule,
) -> Result<Vec<ComplexMatrix>> {
    let gamma = gamma_encoding(v, errors, false)?;
    let images: Vec<ComplexMatrix> = errors.generators.iter().map(|e| e.matmul(v)).collect();
    let proj = projected(v, &images);
    Ok(match rule {
        IncrementRule::Literal => proj
            .iter()
            .zip(&gamma.blocks)
            .map(|(p, g)| {
                let a = p.matmul(g);
                &a + &a.adjoint()
            })
            .collect(),
        IncrementRule::Induced => {
            let mut dv = ComplexMatrix::zeros(v.rows(), v.cols());
            for (w, g) in images.iter().zip(&gamma.blocks) {
                dv.add_scaled(C64::new(0.5, 0.0), &w.matmul(g));
            }
            // δ(V†E V) = δV†·E V + (E V)†·δV for Hermitian E.
            images
                .iter()
                .map(|w| {
                    let a = dv.adjoint_matmul(w);
                    &a + &a.adjoint()
                })
                .collect()
        }
    })
}

// (max |⟨ν_l|E_m|ν_s⟩|, Σ_m ‖V†E_mV‖²_F)
fn residual_of(v: &ComplexMatrix, errors: &ErrorSet) -> (f64, f64) {
    errors.generators.iter().fold((0.0, 0.0), |(mx, sq), e| {
        let p = v.adjoint_matmul(&e.matmul(v));
        (mx.max(p.max_abs()), sq + p.frobenius_norm().powi(2))
    })
}

fn solve_real(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    let a = ComplexMatrix::from_fn(rows.len(), cols, |i, j| C64::new(rows[i][j], 0.0));
    let b: Vec<C64> = rhs.iter().map(|&x| C64::new(x, 0.0)).collect();
    crate::linalg::PseudoInverse::new(&a)
        .solve(&b)
        .into_iter()
        .map(|z| z.re)
        .collect()
}

/// Searches timings whose product realizes a weak-condition code for `errors`.
pub fn synthesize(
    errors: &ErrorSet,
    pair: &ControlPair,
    cfg: &SynthConfig,
) -> Result<(TimingSequence, Encoding)> {
    let n = pair.n;
    if !errors.is_empty() && errors.dim != pair.dim() {
        return Err(Error::DimensionMismatch {
            context: "error set vs control pair",
            expected: pair.dim(),
            found: errors.dim,
        });
    }
    if cfg.k >= n {
        return Err(Error::invalid(format!("need k < n, got n={n}, k={}", cfg.k)));
    }
    if cfg.m_prime == 0 {
        return Err(Error::invalid("m_prime must be positive"));
    }
    let info = 1usize << cfg.k;
    let needed = errors.len() * info * info;
    if cfg.m_prime < needed {
        log::warn!(
            "m_prime = {} is below M·N² = {needed}; the timing system is underdetermined in the wrong direction",
            cfg.m_prime
        );
    }
    let mut seq = TimingSequence::new(initial_timings(pair, cfg.m_prime, cfg.action_window, cfg.seed));
    seq.seed = cfg.seed;
    let lower = cfg.action_window.0 / pair.operator_norm(Generator::H1).max(pair.operator_norm(Generator::H2));
    let floor = cfg.floor_fraction * lower;
    // Largest single-step change of any timing: one radian of action.
    let max_move = lower / cfg.action_window.0;

    let mut v = realized_isometry(&seq, pair, cfg.k);
    let (mut residual, mut objective) = residual_of(&v, errors);
    let mut beta = cfg.beta0;
    seq.trace.push((0, residual));
    seq.beta_history.push(beta);
    let mut iter = 0;
    while residual > cfg.tol && iter < cfg.max_iter {
        iter += 1;
        let deltas = target_increments(&v, errors, cfg.increment_rule)?;
        let mut rhs = Vec::new();
        for d in &deltas {
            hermitian_coords(d, &mut rhs);
        }
        let jac = projected_error_jacobian(&seq, pair, errors, cfg.k);
        let mut dt = solve_real(&jac, &rhs);
        let largest = dt.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        if largest > max_move {
            dt.iter_mut().for_each(|d| *d *= max_move / largest);
        }
        // Backtrack on β until Σ‖V†E_mV‖² drops; the max-norm residual is
        // what gets reported and compared against the tolerance.
        let mut accepted = false;
        while beta > 1e-12 {
            let mut trial = seq.clone();
            for (t, d) in trial.timings.iter_mut().zip(&dt) {
                *t = (*t + beta * d).max(floor);
            }
            let v_trial = realized_isometry(&trial, pair, cfg.k);
            let (r_trial, obj_trial) = residual_of(&v_trial, errors);
            if obj_trial < objective {
                seq.timings = trial.timings;
                v = v_trial;
                residual = r_trial;
                objective = obj_trial;
                beta = (beta * 1.2).min(cfg.beta_max);
                accepted = true;
                break;
            }
            beta *= 0.5;
        }
        seq.trace.push((iter, residual));
        seq.beta_history.push(beta);
        log::debug!("synthesize iter {iter}: residual {residual:e}, beta {beta:e}");
        if !accepted {
            break;
        }
    }
    seq.residual = residual;
    let encoding = Encoding {
        n,
        k: cfg.k,
        isometry: v,
        residual,
        trace: seq.trace.clone(),
        seed: cfg.seed,
    };
    if residual <= cfg.tol {
        Ok((seq, encoding))
    } else {
        Err(Error::NotConverged {
            iterations: iter,
            residual,
            best: Some(Box::new(BestIterate::Synthesis(seq, encoding))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{evolve, kron};
    use crate::search::weak_residual;

    fn small_pair(n: usize) -> ControlPair {
        ControlPair::with_defaults(n, 7).unwrap()
    }

    #[test]
    fn h1_examples() {
        assert_eq!(build_h1(1, 1.0, &[1.0]).unwrap(), pauli_x());
        let h = build_h1(2, 1.0, &[1.0, 1.0]).unwrap();
        let expected = &kron(&pauli_x(), &ComplexMatrix::identity(2)) + &kron(&ComplexMatrix::identity(2), &pauli_x());
        assert_eq!(h, expected);
        let e = herm_eig(&build_h1(2, 1.0, &[1.0, 2.0]).unwrap()).unwrap();
        for (got, want) in e.values.iter().zip([-3.0, -1.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(build_h1(2, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn h2_examples() {
        let mu2 = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let h = build_h2(2, [1.0, 0.0, 0.0], &mu2, 1.0).unwrap();
        assert_eq!(h, kron(&pauli_x(), &pauli_x()));
        let neg = build_h2(2, [1.0, 0.0, 0.0], &mu2, -1.0).unwrap();
        assert_eq!(neg, h.scale_real(-1.0));
        assert!(matches!(build_h2(2, [1.0, 0.0, 0.0], &mu2, 0.0), Err(Error::ZeroDetuning)));
        let mu3 = vec![vec![0.0, 0.7, 1.2], vec![0.7, 0.0, 0.9], vec![1.2, 0.9, 0.0]];
        let h3 = build_h2(3, [1.0, 1.0, 0.0], &mu3, 10.0).unwrap();
        assert!(h3.hermiticity_residual() < 1e-13);
    }

    #[test]
    fn h2_matches_explicit_double_sum() {
        let n = 3;
        let b = [0.3, -1.1, 0.6];
        let mu3 = vec![vec![0.0, 0.7, 1.2], vec![0.7, 0.0, 0.9], vec![1.2, 0.9, 0.0]];
        let sig = [pauli_x(), pauli_y(), pauli_z()];
        let mut explicit = ComplexMatrix::zeros(8, 8);
        for i in 0..n {
            for j in i + 1..n {
                for a in 0..3 {
                    for c in 0..3 {
                        let op = embed_site(&sig[a], i, n).matmul(&embed_site(&sig[c], j, n));
                        explicit.add_scaled(C64::new(mu3[i][j] * b[a] * b[c] / 2.5, 0.0), &op);
                    }
                }
            }
        }
        let h = build_h2(n, b, &mu3, 2.5).unwrap();
        assert!((&h - &explicit).frobenius_norm() < 1e-13);
    }

    #[test]
    fn pair_reconstructs_from_params() {
        let pair = small_pair(3);
        let h1 = build_h1(3, pair.dipole.b_x, &pair.dipole.mu).unwrap();
        let h2 = build_h2(3, pair.raman.b_r, &pair.raman.mu2, pair.raman.delta_omega).unwrap();
        assert!((&h1 - &pair.h1).frobenius_norm() < 1e-12);
        assert!((&h2 - &pair.h2).frobenius_norm() < 1e-12);
        assert!(pair.h1.hermiticity_residual() < 1e-12 && pair.h2.hermiticity_residual() < 1e-12);
    }

    #[test]
    fn sequence_unitary_basic_cases() {
        let pair = small_pair(2);
        let empty = TimingSequence::new(vec![]);
        assert_eq!(sequence_unitary(&empty, &pair), ComplexMatrix::identity(4));
        let one = TimingSequence::new(vec![0.8]);
        let direct = evolve(&pair.h1, 0.8).unwrap();
        assert!((&sequence_unitary(&one, &pair) - &direct).frobenius_norm() < 1e-12);
        let two = TimingSequence::new(vec![0.8, 1.3]);
        let direct = evolve(&pair.h2, 1.3).unwrap().matmul(&evolve(&pair.h1, 0.8).unwrap());
        assert!((&sequence_unitary(&two, &pair) - &direct).frobenius_norm() < 1e-12);
    }

    #[test]
    fn inverse_sequence_properties() {
        let pair = small_pair(2);
        assert!(inverse_sequence(&TimingSequence::new(vec![])).is_empty());
        for len in [1, 4, 7] {
            let seq = TimingSequence::new(initial_timings(&pair, len, (1.0, 10.0), len as u64));
            let inv = inverse_sequence(&seq);
            let back = inverse_sequence(&inv);
            assert_eq!((back.timings, back.sign), (seq.timings.clone(), seq.sign));
            for idx in 0..len {
                assert_eq!(inv.generator_at(idx), seq.generator_at(len - 1 - idx));
            }
            let prod = sequence_unitary(&seq, &pair).matmul(&sequence_unitary(&inv, &pair));
            assert!((&prod - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn sequence_unitarity_budget() {
        let pair = small_pair(3);
        let m = 40;
        let seq = TimingSequence::new(initial_timings(&pair, m, (1.0, 10.0), 3));
        assert!(sequence_unitary(&seq, &pair).unitarity_residual() < 1e-10 * m as f64);
    }

    #[test]
    fn single_slot_gradient() {
        let pair = small_pair(2);
        let seq = TimingSequence::new(vec![0.6]);
        let g = sequence_gradient(&seq, &pair, 1).unwrap();
        let expected = pair.h1.scale(-I).matmul(&evolve(&pair.h1, 0.6).unwrap());
        assert!((&g - &expected).frobenius_norm() < 1e-12);
        assert!(matches!(sequence_gradient(&seq, &pair, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(sequence_gradient(&seq, &pair, 0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let pair = small_pair(2);
        for sign in [Sign::Plus, Sign::Minus] {
            let mut seq = TimingSequence::new(initial_timings(&pair, 5, (0.5, 2.0), 11));
            seq.sign = sign;
            let all = sequence_gradients(&seq, &pair);
            for l in 1..=seq.len() {
                let exact = sequence_gradient(&seq, &pair, l).unwrap();
                assert!((&exact - &all[l - 1]).frobenius_norm() < 1e-12);
                let h = 1e-6;
                let mut plus = seq.clone();
                plus.timings[l - 1] += h;
                let mut minus = seq.clone();
                minus.timings[l - 1] -= h;
                let fd = (&sequence_unitary(&plus, &pair) - &sequence_unitary(&minus, &pair)).scale_real(0.5 / h);
                let rel = (&fd - &exact).frobenius_norm() / exact.frobenius_norm();
                assert!(rel < 1e-5, "slot {l}: {rel:e}");
                // Gradient of the adjoint is the adjoint of the gradient.
                let fd_adj = (&sequence_unitary(&plus, &pair).adjoint() - &sequence_unitary(&minus, &pair).adjoint())
                    .scale_real(0.5 / h);
                assert!((&fd_adj - &exact.adjoint()).frobenius_norm() < 1e-5 * exact.frobenius_norm());
            }
        }
    }

    #[test]
    fn jacobian_matches_full_gradients() {
        let pair = small_pair(2);
        let errors = crate::error_set::pauli_error_set(2, 1).unwrap().filter(|l| l == "Z.");
        let seq = TimingSequence::new(initial_timings(&pair, 6, (1.0, 10.0), 2));
        let jac = projected_error_jacobian(&seq, &pair, &errors, 1);
        let cols = code_columns(2, 1);
        let c = sequence_unitary(&seq, &pair);
        let v = c.select_columns(&cols);
        for (l, grad) in sequence_gradients(&seq, &pair).iter().enumerate() {
            let dv = grad.select_columns(&cols);
            let mut want = Vec::new();
            for e in &errors.generators {
                let a = dv.adjoint_matmul(&e.matmul(&v));
                hermitian_coords(&(&a + &a.adjoint()), &mut want);
            }
            for (r, w) in want.iter().enumerate() {
                assert!((jac[r][l] - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn two_qubit_pair_is_controllable() {
        let pair = ControlPair::with_defaults(2, 0).unwrap();
        assert_eq!(lie_algebra_dimension(&[pair.h1.clone(), pair.h2.clone()], 6), 15);
        // Commuting pair: only the span of the two generators.
        let z = kron(&pauli_z(), &ComplexMatrix::identity(2));
        let zz = kron(&pauli_z(), &pauli_z());
        assert_eq!(lie_algebra_dimension(&[z, zz], 6), 2);
    }

    #[test]
    fn empty_error_set_returns_initial_sequence() {
        let pair = small_pair(2);
        let cfg = SynthConfig { m_prime: 4, seed: 5, ..Default::default() };
        let (seq, enc) = synthesize(&ErrorSet::empty(2), &pair, &cfg).unwrap();
        assert_eq!(seq.timings, initial_timings(&pair, 4, cfg.action_window, 5));
        assert_eq!(enc.residual, 0.0);
    }

    #[test]
    fn synthesizes_two_qubit_single_error() {
        let pair = small_pair(2);
        let errors = crate::error_set::pauli_error_set(2, 1).unwrap().filter(|l| l == "Z.");
        let cfg = SynthConfig { m_prime: 6, tol: 1e-6, ..Default::default() };
        let (seq, enc) = (0..10)
            .find_map(|seed| synthesize(&errors, &pair, &SynthConfig { seed, ..cfg.clone() }).ok())
            .expect("some seed converges");
        assert!(weak_residual(&enc, &errors).unwrap() < 1e-6);
        assert!(seq.timings.iter().all(|&t| t > 0.0));
        let realized = sequence_unitary(&seq, &pair).select_columns(&code_columns(2, 1));
        assert!((&realized - &enc.isometry).frobenius_norm() < 1e-10);
    }
}
