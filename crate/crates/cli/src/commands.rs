use std::path::{Path, PathBuf};

use log::{info, warn};
use zeno_core::control::{
    action_report, inverse_sequence, sequence_unitary, synthesize, ControlPair, IncrementRule, SynthConfig,
};
use zeno_core::error_set::{hamming_feasible, pauli_error_set, random_error_set, ErrorSet};
use zeno_core::format::{self, KeyValues};
use zeno_core::linalg::ComplexMatrix;
use zeno_core::par::Exec;
use zeno_core::search::{find_encoding_with_restarts, knill_residual, weak_residual, Encoding, SearchConfig};
use zeno_core::zeno::{
    random_encoding_gain, random_state, summarize, zeno_monte_carlo, Codec, FieldModel, NoiseMode, ResetMode,
    ZenoConfig, ZenoReport,
};
use zeno_core::{BestIterate, Error};

use crate::args::{
    Common, FieldScaling, FindCode, GenErrors, Increment, Noise, RandomStudy, Reset, Simulate, Synth,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::NotConverged { .. }) => 3,
            CliError::Core(Error::Io(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CmdResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn exec_for(common: &Common) -> Exec {
    if common.threads == 1 {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

/// `<out>.<ext>` next to a file artifact.
fn sibling(out: &Path, ext: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn load_errors(path: &Path) -> Result<ErrorSet, CliError> {
    Ok(format::error_set_from_str(&format::read_file(path)?)?)
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".to_string(), T::to_string)
}

pub fn gen_errors(args: &GenErrors) -> CmdResult {
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("errors.txt"));
    let set = if args.random {
        let dim = args.dim.ok_or_else(|| usage("--random needs --dim"))?;
        let m = args.m.ok_or_else(|| usage("--random needs --m"))?;
        if dim < 2 {
            return Err(usage("--dim must be at least 2"));
        }
        random_error_set(dim, m, args.common.seed)?
    } else {
        let n = args.n.ok_or_else(|| usage("need --n (or --random)"))?;
        if n == 0 {
            return Err(usage("--n must be at least 1"));
        }
        if args.t == 0 || args.t > n {
            return Err(usage(format!("need 1 <= t <= n, got t={}", args.t)));
        }
        pauli_error_set(n, args.t)?
    };
    format::write_file(&out, &format::error_set_to_string(&set))?;
    let mut kv = KeyValues::new();
    kv.push("command", "gen-errors")
        .push("n", opt(&args.n))
        .push("t", args.t)
        .push("random", args.random)
        .push("dim", opt(&args.dim))
        .push("m", opt(&args.m));
    kv.push("seed", args.common.seed)
        .push("out", out.display())
        .push("threads", args.common.threads);
    format::write_file(&sibling(&out, "config"), &kv.to_string())?;
    println!("wrote {} generators (dim {}) to {}", set.len(), set.dim, out.display());
    Ok(())
}

fn encoding_report(enc: &Encoding, errors: &ErrorSet, converged: bool) -> Result<KeyValues, CliError> {
    let mut kv = KeyValues::new();
    kv.push("converged", converged)
        .push("n", enc.n)
        .push("k", enc.k)
        .push("M", errors.len())
        .push("seed", enc.seed)
        .push_real("weak_residual", weak_residual(enc, errors)?)
        .push("iterations", enc.trace.len().saturating_sub(1));
    if enc.n > enc.k {
        let h = hamming_feasible(enc.n, enc.k, errors.len() as u128)?;
        kv.push("hamming_feasible", h.feasible).push_real("hamming_slack", h.slack);
    }
    if !errors.is_empty() {
        kv.push_real("knill_residual", knill_residual(enc, errors)?);
    }
    Ok(kv)
}

pub fn find_code(args: &FindCode) -> CmdResult {
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("encoding.txt"));
    let tol = args.common.tol.unwrap_or(1e-9);
    let max_iter = args.common.max_iter.unwrap_or(5000);
    let errors = load_errors(&args.errors)?;
    if errors.n_qubits == 0 {
        return Err(usage("find-code needs a qubit error set (dim = 2^n)"));
    }
    if args.k >= errors.n_qubits {
        return Err(usage(format!("need k < n = {}", errors.n_qubits)));
    }
    let mut kv = KeyValues::new();
    kv.push("command", "find-code")
        .push("errors", args.errors.display())
        .push("k", args.k)
        .push("restarts", args.restarts)
        .push("step", args.step)
        .push("orthonormality-rows", args.orthonormality_rows);
    args.common.echo(&mut kv, tol, max_iter, &out);
    format::write_file(&sibling(&out, "config"), &kv.to_string())?;

    let cfg = SearchConfig {
        seed: args.common.seed,
        tol,
        max_iter,
        step: args.step,
        orthonormality_rows: args.orthonormality_rows,
    };
    let (enc, failure) = match find_encoding_with_restarts(&errors, args.k, &cfg, args.restarts) {
        Ok(enc) => (enc, None),
        Err(e @ Error::NotConverged { .. }) => {
            let Error::NotConverged { best, .. } = &e else { unreachable!() };
            match best.as_deref() {
                Some(BestIterate::Encoding(enc)) => (enc.clone(), Some(e)),
                _ => return Err(e.into()),
            }
        }
        Err(e) => return Err(e.into()),
    };
    format::write_file(&out, &format::encoding_to_string(&enc))?;
    let report = encoding_report(&enc, &errors, failure.is_none())?;
    format::write_file(&sibling(&out, "report"), &report.to_string())?;
    print!("{report}");
    match failure {
        None => Ok(()),
        Some(e) => {
            eprintln!("best iterate written to {}", out.display());
            Err(e.into())
        }
    }
}

pub fn synth(args: &Synth) -> CmdResult {
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("timings.txt"));
    let tol = args.common.tol.unwrap_or(1e-6);
    let max_iter = args.common.max_iter.unwrap_or(500);
    let errors = load_errors(&args.errors)?;
    let n = errors.n_qubits;
    if n == 0 {
        return Err(usage("synth needs a qubit error set (dim = 2^n)"));
    }
    if args.k >= n {
        return Err(usage(format!("need k < n = {n}")));
    }
    let pair = match &args.pair {
        Some(p) => format::control_pair_from_str(&format::read_file(p)?)?,
        None => ControlPair::with_defaults(n, args.pair_seed)?,
    };
    if pair.n != n {
        return Err(usage(format!("control pair has n={}, error set n={n}", pair.n)));
    }
    let needed = errors.len() << (2 * args.k);
    let m_prime = args.m_prime.unwrap_or(needed + 2);
    if m_prime < needed {
        warn!("m-prime {m_prime} is below M·N² = {needed}; proceeding");
        eprintln!("warning: m-prime {m_prime} is below M·N² = {needed}");
    }
    let mut kv = KeyValues::new();
    kv.push("command", "synth")
        .push("errors", args.errors.display())
        .push("k", args.k)
        .push("m-prime", m_prime)
        .push("pair", opt(&args.pair.as_ref().map(|p| p.display())))
        .push("pair-seed", args.pair_seed)
        .push("beta0", args.beta0)
        .push(
            "increment",
            match args.increment {
                Increment::Induced => "induced",
                Increment::Literal => "literal",
            },
        )
        .push("restarts", args.restarts)
        .push("verify-inverse", args.verify_inverse);
    args.common.echo(&mut kv, tol, max_iter, &out);
    format::write_file(&sibling(&out, "config"), &kv.to_string())?;
    format::write_file(&sibling(&out, "pair"), &format::control_pair_to_string(&pair))?;

    let base = SynthConfig {
        k: args.k,
        m_prime,
        seed: args.common.seed,
        tol,
        max_iter,
        beta0: args.beta0,
        increment_rule: match args.increment {
            Increment::Induced => IncrementRule::Induced,
            Increment::Literal => IncrementRule::Literal,
        },
        ..SynthConfig::default()
    };
    let mut best: Option<(zeno_core::control::TimingSequence, Encoding, Error)> = None;
    let mut found = None;
    for attempt in 0..=args.restarts {
        let cfg = SynthConfig {
            seed: base.seed + attempt as u64,
            ..base.clone()
        };
        match synthesize(&errors, &pair, &cfg) {
            Ok(r) => {
                found = Some(r);
                break;
            }
            Err(Error::NotConverged { iterations, residual, best: b }) => {
                info!("seed {} stalled at residual {residual:e}", cfg.seed);
                if let Some(BestIterate::Synthesis(seq, enc)) = b.map(|b| *b) {
                    if best.as_ref().is_none_or(|(_, e, _)| residual < e.residual) {
                        let err = Error::NotConverged { iterations, residual, best: None };
                        best = Some((seq, enc, err));
                    }
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (seq, enc, failure) = match found {
        Some((s, e)) => (s, e, None),
        None => {
            let (s, e, err) = best.ok_or_else(|| usage("no synthesis attempt produced a sequence"))?;
            (s, e, Some(err))
        }
    };
    format::write_file(&out, &format::timings_to_string(&seq))?;
    format::write_file(&sibling(&out, "encoding"), &format::encoding_to_string(&enc))?;

    let mut report = KeyValues::new();
    report
        .push("converged", failure.is_none())
        .push("m_prime", seq.len())
        .push("seed", seq.seed)
        .push_real("weak_residual", weak_residual(&enc, &errors)?)
        .push("iterations", seq.trace.len().saturating_sub(1))
        .push_real("final_beta", seq.beta_history.last().copied().unwrap_or(f64::NAN));
    let actions = action_report(&seq, &pair, 1.0);
    let flagged: Vec<String> = actions
        .iter()
        .enumerate()
        .filter(|(_, (_, f))| *f)
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    let max_action = actions.iter().map(|(a, _)| *a).fold(0.0, f64::max);
    report.push_real("max_action", max_action).push(
        "large_action_slots",
        if flagged.is_empty() { "none".to_string() } else { flagged.join(",") },
    );
    if args.verify_inverse {
        let c = sequence_unitary(&seq, &pair);
        let inv = sequence_unitary(&inverse_sequence(&seq), &pair);
        let dev = (&c.matmul(&inv) - &ComplexMatrix::identity(pair.dim())).frobenius_norm();
        report.push_real("inverse_deviation", dev);
    }
    format::write_file(&sibling(&out, "report"), &report.to_string())?;
    print!("{report}");
    match failure {
        None => Ok(()),
        Some(e) => Err(e.into()),
    }
}

fn period_tag(t: f64) -> String {
    format!("T_{t}")
}

/// Seed-averaged per-cycle fidelity and leakage.
fn mean_report(reports: &[&ZenoReport]) -> ZenoReport {
    let cycles = reports.first().map_or(0, |r| r.fidelity_per_cycle.len());
    let avg = |f: &dyn Fn(&ZenoReport, usize) -> f64, c: usize| -> f64 {
        let v: Vec<f64> = reports.iter().map(|r| f(r, c)).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let fidelity: Vec<f64> = (0..cycles).map(|c| avg(&|r, c| r.fidelity_per_cycle[c], c)).collect();
    let leakage: Vec<f64> = (0..cycles).map(|c| avg(&|r, c| r.leakage_per_cycle[c], c)).collect();
    let n = reports.len().max(1) as f64;
    ZenoReport {
        final_infidelity: fidelity.last().map_or(0.0, |f| 1.0 - f),
        fidelity_per_cycle: fidelity,
        leakage_per_cycle: leakage,
        h_e_norm: reports.iter().map(|r| r.h_e_norm).fold(0.0, f64::max),
        survival: reports.iter().map(|r| r.survival).sum::<f64>() / n,
    }
}

pub fn simulate(args: &Simulate) -> CmdResult {
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("simulate"));
    let errors = load_errors(&args.errors)?;
    if args.periods.is_empty() || args.periods.iter().any(|t| !(*t > 0.0)) {
        return Err(usage("--T needs positive periods"));
    }
    if args.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    if !(args.epsilon >= 0.0) {
        return Err(usage("--epsilon must be non-negative"));
    }
    let codec = match (&args.encoding, &args.timings) {
        (Some(path), None) => {
            let enc = format::encoding_from_str(&format::read_file(path)?)?;
            Codec::from_encoding(&enc, args.completion_seed.unwrap_or(enc.seed))?
        }
        (None, Some(path)) => {
            let seq = format::timings_from_str(&format::read_file(path)?)?;
            let pair_path = args.pair.as_ref().ok_or_else(|| usage("--timings needs --pair"))?;
            let pair = format::control_pair_from_str(&format::read_file(pair_path)?)?;
            let k = args.k.ok_or_else(|| usage("--timings needs --k"))?;
            if k > pair.n {
                return Err(usage(format!("need k <= n = {}", pair.n)));
            }
            Codec::from_sequence(&seq, &pair, k)?
        }
        _ => return Err(usage("give exactly one of --encoding or --timings")),
    };
    if !errors.is_empty() && errors.dim != 1 << codec.n {
        return Err(CliError::Core(Error::DimensionMismatch {
            context: "error set vs encoding",
            expected: 1 << codec.n,
            found: errors.dim,
        }));
    }

    let mut kv = KeyValues::new();
    let periods: Vec<String> = args.periods.iter().map(f64::to_string).collect();
    kv.push("command", "simulate")
        .push("errors", args.errors.display())
        .push("encoding", opt(&args.encoding.as_ref().map(|p| p.display())))
        .push("timings", opt(&args.timings.as_ref().map(|p| p.display())))
        .push("pair", opt(&args.pair.as_ref().map(|p| p.display())))
        .push("k", opt(&args.k))
        .push("T", periods.join(","))
        .push("total-time", args.total_time)
        .push("epsilon", args.epsilon)
        .push(
            "field-scaling",
            match args.field_scaling {
                FieldScaling::Proportional => "proportional",
                FieldScaling::Fixed => "fixed",
            },
        )
        .push("seeds", args.seeds)
        .push(
            "noise",
            match args.noise {
                Noise::FirstOrder => "first-order",
                Noise::Exact => "exact",
                Noise::OrderedProduct => "ordered-product",
            },
        )
        .push(
            "reset",
            match args.reset {
                Reset::Postselect => "postselect",
                Reset::Replace => "replace",
            },
        )
        .push("state-seed", args.state_seed)
        .push("completion-seed", opt(&args.completion_seed));
    args.common.echo(
        &mut kv,
        args.common.tol.unwrap_or(0.0),
        args.common.max_iter.unwrap_or(0),
        &out,
    );
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    format::write_file(&out.join("config.txt"), &kv.to_string())?;

    let s0 = random_state(codec.info_dim(), args.state_seed);
    let exec = exec_for(&args.common);
    let t0 = args.periods[0];
    let mut summary = KeyValues::new();
    summary.push("seeds", format!("{}..{}", args.common.seed, args.common.seed + args.seeds as u64));
    let mut rows = Vec::new();
    for &t in &args.periods {
        let cfg = ZenoConfig {
            period: t,
            total_time: args.total_time,
            noise_mode: match args.noise {
                Noise::FirstOrder => NoiseMode::FirstOrder,
                Noise::Exact => NoiseMode::Exact,
                Noise::OrderedProduct => NoiseMode::OrderedProduct,
            },
            reset_mode: match args.reset {
                Reset::Postselect => ResetMode::Postselect,
                Reset::Replace => ResetMode::Replace,
            },
        };
        let strength = match args.field_scaling {
            FieldScaling::Proportional => args.epsilon * t / t0,
            FieldScaling::Fixed => args.epsilon,
        };
        let model = FieldModel {
            strength,
            first_seed: args.common.seed,
            seeds: args.seeds,
        };
        let reports = zeno_monte_carlo(&s0, &codec, &errors, &cfg, &model, exec)?;
        for (i, r) in reports.iter().enumerate() {
            if let Err(e) = r {
                eprintln!("T={t} seed {}: {e}", args.common.seed + i as u64);
            }
        }
        let ok: Vec<&ZenoReport> = reports.iter().filter_map(|r| r.as_ref().ok()).collect();
        let stats = summarize(&reports);
        let tag = period_tag(t);
        format::write_file(&out.join(format!("{tag}.csv")), &format::zeno_csv(&mean_report(&ok)))?;
        summary
            .push(&format!("{tag}.strength"), format!("{strength:.16e}"))
            .push(&format!("{tag}.runs"), stats.runs)
            .push(&format!("{tag}.failures"), stats.failures)
            .push_real(&format!("{tag}.final_infidelity"), stats.mean_final_infidelity)
            .push_real(&format!("{tag}.cycle_leakage"), stats.mean_cycle_leakage)
            .push_real(&format!("{tag}.cumulative_leakage"), stats.mean_cumulative_leakage)
            .push_real(&format!("{tag}.h_e_norm"), stats.max_h_e_norm);
        rows.push((t, stats));
    }
    for w in rows.windows(2) {
        let ((ta, a), (tb, b)) = (&w[0], &w[1]);
        let key = format!("ratio.{}/{}", period_tag(*ta), period_tag(*tb));
        summary
            .push_real(&format!("{key}.period"), ta / tb)
            .push_real(&format!("{key}.final_infidelity"), a.mean_final_infidelity / b.mean_final_infidelity)
            .push_real(&format!("{key}.cumulative_leakage"), a.mean_cumulative_leakage / b.mean_cumulative_leakage);
    }
    format::write_file(&out.join("summary.txt"), &summary.to_string())?;
    print!("{summary}");
    Ok(())
}

pub fn random_study(args: &RandomStudy) -> CmdResult {
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("random-study"));
    if args.n == 0 || args.k >= args.n {
        return Err(usage("need n >= 1 and k < n"));
    }
    if args.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    if args.trials < 10 {
        eprintln!("warning: {} trials give unreliable statistics", args.trials);
    }
    if args.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let errors = pauli_error_set(args.n, args.t)?;
    let mut kv = KeyValues::new();
    kv.push("command", "random-study")
        .push("n", args.n)
        .push("k", args.k)
        .push("t", args.t)
        .push("trials", args.trials)
        .push("bins", args.bins);
    args.common.echo(
        &mut kv,
        args.common.tol.unwrap_or(0.0),
        args.common.max_iter.unwrap_or(0),
        &out,
    );
    std::fs::create_dir_all(&out).map_err(Error::from)?;
    format::write_file(&out.join("config.txt"), &kv.to_string())?;

    let stats = random_encoding_gain(args.n, args.k, &errors, args.trials, args.common.seed, exec_for(&args.common))?;
    let n_info = 1usize << args.k;
    let per_trial = errors.len() * n_info * n_info;
    let mut hist = String::new();
    for (i, m) in stats.element_magnitudes.iter().enumerate() {
        let trial = i / per_trial;
        let rest = i % per_trial;
        let (err, l, s) = (rest / (n_info * n_info), (rest / n_info) % n_info, rest % n_info);
        hist.push_str(&format!("{trial} {} {l} {s} {m:.16e}\n", errors.labels[err]));
    }
    format::write_file(&out.join("histogram.txt"), &hist)?;

    let a = (1usize << (args.n - args.k)) as f64;
    let mut report = KeyValues::new();
    report
        .push("trials", stats.trials)
        .push("M", errors.len())
        .push("A", a)
        .push_real("mean_ratio", stats.mean_ratio)
        .push_real("median_ratio", stats.median_ratio)
        .push_real("std_ratio", stats.std_ratio)
        .push_real("min_ratio", stats.min_ratio)
        .push_real("max_ratio", stats.max_ratio)
        .push_real("mean_suppression", stats.mean_suppression);
    report.push(
        "identity_ratios",
        stats.identity_ratios.iter().map(|r| format!("{r:.6e}")).collect::<Vec<_>>().join(","),
    );
    let max = stats.element_magnitudes.iter().copied().fold(0.0, f64::max);
    let width = if max > 0.0 { max / args.bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; args.bins];
    for m in &stats.element_magnitudes {
        counts[((m / width) as usize).min(args.bins - 1)] += 1;
    }
    for (b, c) in counts.iter().enumerate() {
        report.push(&format!("bin.{:.6e}", (b as f64 + 0.5) * width), c);
    }
    format::write_file(&out.join("report.txt"), &report.to_string())?;
    print!("{report}");
    Ok(())
}
