//! Simulation of the protection cycle: encode `|s⟩⊗|α̃⟩`, evolve under one
//! Zeno period of random error fields, decode, reset the ancilla.
//!
//! Fields are modelled per period by their action `φ_{p,m} = ∫ f_m dt`, drawn
//! i.i.d. Gaussian. For a physical field of fixed strength the action per
//! period grows linearly with the period, see [`FieldTrace::for_period`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::control::{sequence_unitary, ControlPair, TimingSequence};
use crate::error::{Error, Result};
use crate::error_set::ErrorSet;
use crate::linalg::{complete_to_unitary, evolve, haar_unitary, ComplexMatrix, StateVector, C64, I, ONE};
use crate::par::{pairwise_sum, Exec};
use crate::search::{code_columns, CodeBasis, Encoding};

/// Per-period actions of `M` independent fields.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTrace {
    pub m: usize,
    pub periods: usize,
    /// `periods × M`, row `p` holds `φ_{p,·}`.
    pub actions: Vec<Vec<f64>>,
    /// RMS action per period.
    pub strength: f64,
    pub seed: u64,
}

impl FieldTrace {
    pub fn gaussian(m: usize, periods: usize, strength: f64, seed: u64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::invalid(format!("field strength must be finite and >= 0, got {strength}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions = if strength == 0.0 {
            vec![vec![0.0; m]; periods]
        } else {
            let normal = Normal::new(0.0, strength).expect("positive std");
            (0..periods)
                .map(|_| (0..m).map(|_| normal.sample(&mut rng)).collect())
                .collect()
        };
        Ok(Self {
            m,
            periods,
            actions,
            strength,
            seed,
        })
    }

    /// Fields of constant RMS strength `rate` (action per unit time): the
    /// action per period is `rate·T`.
    pub fn for_period(m: usize, cfg: &ZenoConfig, rate: f64, seed: u64) -> Result<Self> {
        Self::gaussian(m, cfg.periods()?, rate * cfg.period, seed)
    }

    pub fn zero(m: usize, periods: usize) -> Self {
        Self {
            m,
            periods,
            actions: vec![vec![0.0; m]; periods],
            strength: 0.0,
            seed: 0,
        }
    }
}

/// Seeded random pure state of dimension `dim`.
pub fn random_state(dim: usize, seed: u64) -> StateVector {
    StateVector::random(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    /// `I − iΣφ_mE_m`; not unitary, for analysis only.
    FirstOrder,
    /// `exp(−iΣφ_mE_m)`.
    #[default]
    Exact,
    /// `exp(−iφ_ME_M)⋯exp(−iφ_1E_1)`.
    OrderedProduct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResetMode {
    /// Project the ancilla on `|α̃⟩` and renormalize.
    #[default]
    Postselect,
    /// Trace out the ancilla and re-prepare it in `|α̃⟩`.
    Replace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZenoConfig {
    /// Zeno period `T`.
    pub period: f64,
    pub total_time: f64,
    pub noise_mode: NoiseMode,
    pub reset_mode: ResetMode,
}

impl Default for ZenoConfig {
    fn default() -> Self {
        Self {
            period: 0.1,
            total_time: 1.0,
            noise_mode: NoiseMode::Exact,
            reset_mode: ResetMode::Postselect,
        }
    }
}

impl ZenoConfig {
    /// `round(total_time / T)`.
    pub fn periods(&self) -> Result<usize> {
        if !(self.period > 0.0 && self.period <= self.total_time && self.total_time.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < T <= total_time, got T={}, total_time={}",
                self.period, self.total_time
            )));
        }
        Ok((self.total_time / self.period).round() as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZenoReport {
    /// `|⟨s₀|s⟩|²` (or `⟨s₀|ρ|s₀⟩`) after each reset.
    pub fidelity_per_cycle: Vec<f64>,
    /// `1 − P(ancilla found in |α̃⟩)` in each cycle.
    pub leakage_per_cycle: Vec<f64>,
    pub final_infidelity: f64,
    /// Largest `‖Σ_m φ_{p,m} V†E_mV‖_F` over the periods.
    pub h_e_norm: f64,
    /// Product of the per-cycle success probabilities.
    pub survival: f64,
}

impl ZenoReport {
    /// `1 − survival`, the probability that some reset failed.
    pub fn cumulative_leakage(&self) -> f64 {
        1.0 - self.survival
    }

    pub fn mean_leakage(&self) -> f64 {
        if self.leakage_per_cycle.is_empty() {
            return 0.0;
        }
        pairwise_sum(&self.leakage_per_cycle) / self.leakage_per_cycle.len() as f64
    }
}

fn check_actions(errors: &ErrorSet, actions: &[f64]) -> Result<()> {
    if actions.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            context: "field actions vs error generators",
            expected: errors.len(),
            found: actions.len(),
        });
    }
    Ok(())
}

fn field_sum(errors: &ErrorSet, actions: &[f64]) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(errors.dim, errors.dim);
    for (e, &phi) in errors.generators.iter().zip(actions) {
        if phi != 0.0 {
            h.add_scaled(C64::new(phi, 0.0), e);
        }
    }
    h
}

/// The error propagator of one Zeno period.
pub fn noise_step(errors: &ErrorSet, actions: &[f64], mode: NoiseMode) -> Result<ComplexMatrix> {
    check_actions(errors, actions)?;
    let dim = errors.dim;
    match mode {
        NoiseMode::FirstOrder => {
            let mut u = ComplexMatrix::identity(dim);
            u.add_scaled(-I, &field_sum(errors, actions));
            Ok(u)
        }
        NoiseMode::Exact => evolve(&field_sum(errors, actions), 1.0),
        NoiseMode::OrderedProduct => {
            let mut u = ComplexMatrix::identity(dim);
            for (e, &phi) in errors.generators.iter().zip(actions) {
                if phi != 0.0 {
                    u = evolve(e, phi)?.matmul(&u);
                }
            }
            Ok(u)
        }
    }
}

/// `ĥ_e = Σ_m f_m·V†E_mV`.
pub fn effective_hamiltonian<B: CodeBasis + ?Sized>(v: &B, errors: &ErrorSet, f: &[f64]) -> Result<ComplexMatrix> {
    check_actions(errors, f)?;
    let basis = v.basis();
    if !errors.is_empty() && basis.rows() != errors.dim {
        return Err(Error::DimensionMismatch {
            context: "code basis vs error dimension",
            expected: errors.dim,
            found: basis.rows(),
        });
    }
    Ok(basis.adjoint_matmul(&field_sum(errors, f).matmul(&basis)))
}

/// Encoder/decoder used by [`zeno_run`]. The full unitary is only needed for
/// the replace reset; postselection depends on the isometry alone.
#[derive(Clone, Debug)]
pub struct Codec {
    pub n: usize,
    pub k: usize,
    pub isometry: ComplexMatrix,
    pub unitary: ComplexMatrix,
}

impl Codec {
    /// From a full encoding unitary `Ĉ`.
    pub fn from_unitary(n: usize, k: usize, unitary: ComplexMatrix) -> Result<Self> {
        let dim = 1usize << n;
        if unitary.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch {
                context: "encoding unitary",
                expected: dim,
                found: unitary.rows(),
            });
        }
        if k > n {
            return Err(Error::invalid(format!("need k <= n, got n={n}, k={k}")));
        }
        let isometry = unitary.select_columns(&code_columns(n, k));
        Ok(Self {
            n,
            k,
            isometry,
            unitary,
        })
    }

    /// From a control sequence: `Ĉ = sequence_unitary`, decoding by the
    /// reversed sequence.
    pub fn from_sequence(seq: &TimingSequence, pair: &ControlPair, k: usize) -> Result<Self> {
        Self::from_unitary(pair.n, k, sequence_unitary(seq, pair))
    }

    /// From an isometry alone; the rest of `Ĉ` is a random completion drawn
    /// from `completion_seed`.
    pub fn from_encoding(enc: &Encoding, completion_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(completion_seed);
        let cols = code_columns(enc.n, enc.k);
        let unitary = complete_to_unitary(&enc.isometry, &cols, &mut rng)?;
        Ok(Self {
            n: enc.n,
            k: enc.k,
            isometry: enc.isometry.clone(),
            unitary,
        })
    }

    pub fn info_dim(&self) -> usize {
        1 << self.k
    }

    pub fn ancilla_dim(&self) -> usize {
        1 << (self.n - self.k)
    }
}

// |⟨a|b⟩|² clamped to [0, 1] (first-order noise breaks unitarity slightly).
fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Runs the encode/noise/decode/reset cycle for every period of `fields`.
pub fn zeno_run(
    s0: &StateVector,
    codec: &Codec,
    errors: &ErrorSet,
    fields: &FieldTrace,
    cfg: &ZenoConfig,
) -> Result<ZenoReport> {
    let n_info = codec.info_dim();
    if s0.dim() != n_info {
        return Err(Error::DimensionMismatch {
            context: "initial information state",
            expected: n_info,
            found: s0.dim(),
        });
    }
    if !s0.is_normalized() {
        return Err(Error::invalid("initial state must be normalized"));
    }
    let dim = 1usize << codec.n;
    if !errors.is_empty() && errors.dim != dim {
        return Err(Error::DimensionMismatch {
            context: "error set vs encoding",
            expected: dim,
            found: errors.dim,
        });
    }
    if fields.m != errors.len() {
        return Err(Error::DimensionMismatch {
            context: "field trace vs error generators",
            expected: errors.len(),
            found: fields.m,
        });
    }
    let v = &codec.isometry;
    let a = codec.ancilla_dim();
    let mut fidelity = Vec::with_capacity(fields.periods);
    let mut leakage = Vec::with_capacity(fields.periods);
    let mut h_e_norm: f64 = 0.0;
    let mut survival = 1.0;
    let mut state = s0.clone();
    let mut rho = state.to_column().matmul(&state.to_column().adjoint());

    for actions in &fields.actions {
        let u = if errors.is_empty() {
            ComplexMatrix::identity(dim)
        } else {
            noise_step(errors, actions, cfg.noise_mode)?
        };
        let uv = u.matmul(v);
        if !errors.is_empty() {
            let h = v.adjoint_matmul(&field_sum(errors, actions).matmul(v));
            h_e_norm = h_e_norm.max(h.frobenius_norm());
        }
        match cfg.reset_mode {
            ResetMode::Postselect => {
                // ⟨s'|⊗⟨α̃| Ĉ† U Ĉ |s⟩⊗|α̃⟩ = V†UV.
                let kept = v.adjoint_matmul(&uv).mul_vec(state.as_slice());
                let p: f64 = kept.iter().map(|z| z.norm_sqr()).sum();
                if p < 1e-15 {
                    return Err(Error::ZeroNormState { probability: p });
                }
                state = StateVector::new(kept).normalized();
                leakage.push(clamp01(1.0 - p));
                survival *= p.min(1.0);
                fidelity.push(clamp01(s0.inner(&state).norm_sqr()));
            }
            ResetMode::Replace => {
                // X = Ĉ†UV, full state XρX†, partial trace over the ancilla.
                let x = codec.unitary.adjoint_matmul(&uv);
                let y = x.matmul(&rho);
                let mut next = ComplexMatrix::zeros(n_info, n_info);
                let mut kept = 0.0;
                for s in 0..n_info {
                    for t in 0..n_info {
                        let mut acc = C64::new(0.0, 0.0);
                        for anc in 0..a {
                            let (rs, rt) = (s * a + anc, t * a + anc);
                            acc += crate::linalg::inner(x.row(rt), y.row(rs));
                        }
                        next[(s, t)] = acc;
                    }
                    kept += crate::linalg::inner(x.row(s * a), y.row(s * a)).re;
                }
                // Renormalize: exact for unitary noise, a no-op up to rounding.
                let tr = next.trace().re;
                if tr < 1e-15 {
                    return Err(Error::ZeroNormState { probability: tr });
                }
                rho = next.scale_real(1.0 / tr);
                leakage.push(clamp01(1.0 - kept / tr));
                survival *= (kept / tr).min(1.0);
                let f = crate::linalg::inner(s0.as_slice(), &rho.mul_vec(s0.as_slice())).re;
                fidelity.push(clamp01(f));
            }
        }
    }
    let final_infidelity = fidelity.last().map_or(0.0, |f| 1.0 - f);
    Ok(ZenoReport {
        fidelity_per_cycle: fidelity,
        leakage_per_cycle: leakage,
        final_infidelity,
        h_e_norm,
        survival,
    })
}

/// Field parameters for a batch of seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    /// RMS action per period.
    pub strength: f64,
    pub first_seed: u64,
    pub seeds: usize,
}

/// One [`zeno_run`] per field seed, in seed order.
pub fn zeno_monte_carlo(
    s0: &StateVector,
    codec: &Codec,
    errors: &ErrorSet,
    cfg: &ZenoConfig,
    model: &FieldModel,
    exec: Exec,
) -> Result<Vec<Result<ZenoReport>>> {
    let periods = cfg.periods()?;
    Ok(exec.map_range(model.seeds, |i| {
        let seed = model.first_seed.wrapping_add(i as u64);
        let fields = FieldTrace::gaussian(errors.len(), periods, model.strength, seed)?;
        zeno_run(s0, codec, errors, &fields, cfg)
    }))
}

/// Averages over the successful runs of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ZenoSummary {
    pub runs: usize,
    pub failures: usize,
    pub mean_final_infidelity: f64,
    pub mean_cycle_leakage: f64,
    pub mean_cumulative_leakage: f64,
    pub max_h_e_norm: f64,
}

pub fn summarize(reports: &[Result<ZenoReport>]) -> ZenoSummary {
    let ok: Vec<&ZenoReport> = reports.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mean = |f: &dyn Fn(&ZenoReport) -> f64| {
        if ok.is_empty() {
            return f64::NAN;
        }
        pairwise_sum(&ok.iter().map(|r| f(r)).collect::<Vec<_>>()) / ok.len() as f64
    };
    ZenoSummary {
        runs: ok.len(),
        failures: reports.len() - ok.len(),
        mean_final_infidelity: mean(&|r| r.final_infidelity),
        mean_cycle_leakage: mean(&|r| r.mean_leakage()),
        mean_cumulative_leakage: mean(&|r| r.cumulative_leakage()),
        max_h_e_norm: ok.iter().map(|r| r.h_e_norm).fold(0.0, f64::max),
    }
}

/// `ρ ← UρU†` with `U = exp(−i·h_e·dt)`.
pub fn master_step(rho: &ComplexMatrix, h_e: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    if !rho.is_square() || !rho.is_finite() {
        return Err(Error::NotDensityMatrix(format!("shape {:?} or non-finite entries", rho.shape())));
    }
    if rho.hermiticity_residual() > 1e-10 {
        return Err(Error::NotDensityMatrix(format!(
            "not Hermitian (residual {:e})",
            rho.hermiticity_residual()
        )));
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > 1e-10 {
        return Err(Error::NotDensityMatrix(format!("trace {tr} != 1")));
    }
    if h_e.shape() != rho.shape() {
        return Err(Error::DimensionMismatch {
            context: "effective Hamiltonian vs density matrix",
            expected: rho.rows(),
            found: h_e.rows(),
        });
    }
    let u = evolve(h_e, dt)?;
    let out = u.matmul(rho).matmul(&u.adjoint());
    // Strip the rounding drift of U so repeated steps stay Hermitian with
    // unit trace.
    let sym = (&out + &out.adjoint()).scale_real(0.5);
    Ok(sym.scale_real(1.0 / sym.trace().re))
}

/// Relative projected strengths `q_m = A·(‖V†E_mV‖²_F/N) / (‖E_m‖²_F/D)`:
/// the mean-square matrix element on the code divided by the `1/A`
/// prediction. Zero when the error is invisible on the code.
pub fn suppression_ratios(v: &ComplexMatrix, errors: &ErrorSet) -> Vec<f64> {
    let (d, n) = (v.rows() as f64, v.cols() as f64);
    let a = d / n;
    errors
        .generators
        .iter()
        .map(|e| {
            let p = v.adjoint_matmul(&e.matmul(v)).frobenius_norm().powi(2);
            a * (p / n) / (e.frobenius_norm().powi(2) / d)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainStats {
    pub trials: usize,
    pub n: usize,
    pub k: usize,
    /// Statistics of `q_m` over trials and errors.
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub std_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `A / mean(q_m)`: how much weaker the projected coupling is than the
    /// bare one, per matrix element.
    pub mean_suppression: f64,
    /// `q_m` for the identity encoding, as a baseline.
    pub identity_ratios: Vec<f64>,
    /// `|⟨ν_l|E_m|ν_s⟩|` for every trial, error and (l, s); trial-major.
    pub element_magnitudes: Vec<f64>,
}

/// Haar-random encodings and the resulting suppression of projected errors.
pub fn random_encoding_gain(
    n: usize,
    k: usize,
    errors: &ErrorSet,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<GainStats> {
    if k > n || n == 0 {
        return Err(Error::invalid(format!("need 0 < n and k <= n, got n={n}, k={k}")));
    }
    if errors.dim != 1 << n {
        return Err(Error::DimensionMismatch {
            context: "error set vs register",
            expected: 1 << n,
            found: errors.dim,
        });
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if trials < 10 {
        log::warn!("{trials} trials are too few for meaningful statistics");
    }
    let cols = code_columns(n, k);
    let per_trial = exec.map_range(trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let c = haar_unitary(1 << n, &mut rng);
        let v = c.select_columns(&cols);
        let mut mags = Vec::with_capacity(errors.len() << (2 * k));
        for e in &errors.generators {
            let p = v.adjoint_matmul(&e.matmul(&v));
            mags.extend(p.as_slice().iter().map(|z| z.norm()));
        }
        (suppression_ratios(&v, errors), mags)
    });
    let mut ratios: Vec<f64> = per_trial.iter().flat_map(|(r, _)| r.iter().copied()).collect();
    let element_magnitudes = per_trial.into_iter().flat_map(|(_, m)| m).collect();
    let count = ratios.len() as f64;
    let mean = pairwise_sum(&ratios) / count;
    let var = pairwise_sum(&ratios.iter().map(|r| (r - mean).powi(2)).collect::<Vec<_>>()) / count;
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    let median = if ratios.len() % 2 == 0 {
        0.5 * (ratios[mid - 1] + ratios[mid])
    } else {
        ratios[mid]
    };
    let identity = ComplexMatrix::identity(1 << n).select_columns(&cols);
    Ok(GainStats {
        trials,
        n,
        k,
        mean_ratio: mean,
        median_ratio: median,
        std_ratio: var.sqrt(),
        min_ratio: ratios[0],
        max_ratio: ratios[ratios.len() - 1],
        mean_suppression: (1usize << (n - k)) as f64 / mean,
        identity_ratios: suppression_ratios(&identity, errors),
        element_magnitudes,
    })
}
