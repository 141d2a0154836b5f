use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zeno_core::format::KeyValues;

#[derive(Parser, Debug)]
#[command(name = "zeno", version, about = "Weak-condition codes, control synthesis and Zeno simulation")]
#[command(args_override_self = true)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write an error-set file (Pauli or random Hermitian generators).
    GenErrors(GenErrors),
    /// Search a weak-condition encoding for an error set.
    FindCode(FindCode),
    /// Synthesize control timings realizing a code.
    Synth(Synth),
    /// Monte Carlo simulation of the Zeno protection cycle.
    Simulate(Simulate),
    /// Suppression statistics of Haar-random encodings.
    RandomStudy(RandomStudy),
}

pub const SUBCOMMANDS: [&str; 5] = ["gen-errors", "find-code", "synth", "simulate", "random-study"];

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convergence tolerance (command-specific default).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Output path (command-specific default).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Flat "key value" file of flag defaults, e.g. a previous config echo.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    pub fn echo(&self, kv: &mut KeyValues, tol: f64, max_iter: usize, out: &std::path::Path) {
        kv.push("seed", self.seed)
            .push("tol", tol)
            .push("max-iter", max_iter)
            .push("out", out.display())
            .push("threads", self.threads);
    }
}

#[derive(Args, Debug)]
pub struct GenErrors {
    /// Qubit count of a Pauli set.
    #[arg(long)]
    pub n: Option<usize>,
    /// Maximum Pauli weight.
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    /// Random traceless Hermitian generators instead of Paulis.
    #[arg(long)]
    pub random: bool,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct FindCode {
    #[arg(long)]
    pub errors: PathBuf,
    /// Information qubits.
    #[arg(long)]
    pub k: usize,
    /// Extra seeds tried after a non-converged attempt.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Include orthonormality rows in the encoding least-squares system.
    #[arg(long = "orthonormality-rows")]
    pub orthonormality_rows: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Increment {
    Induced,
    Literal,
}

#[derive(Args, Debug)]
pub struct Synth {
    #[arg(long)]
    pub errors: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Number of timings; defaults to M·N² + 2.
    #[arg(long = "m-prime")]
    pub m_prime: Option<usize>,
    /// Control-pair file; generic parameters from --pair-seed otherwise.
    #[arg(long)]
    pub pair: Option<PathBuf>,
    #[arg(long = "pair-seed", default_value_t = 0)]
    pub pair_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub beta0: f64,
    #[arg(long, value_enum, default_value_t = Increment::Induced)]
    pub increment: Increment,
    /// Extra seeds tried after a non-converged attempt.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Print ‖Ĉ·Ĉ⁻¹ − I‖ for the reversed sequence.
    #[arg(long = "verify-inverse")]
    pub verify_inverse: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    FirstOrder,
    Exact,
    OrderedProduct,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reset {
    Postselect,
    Replace,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldScaling {
    /// Action per period proportional to T (fixed field strength).
    Proportional,
    /// Same action per period for every T.
    Fixed,
}

#[derive(Args, Debug)]
pub struct Simulate {
    #[arg(long)]
    pub errors: PathBuf,
    /// Encoding file.
    #[arg(long, conflicts_with = "timings")]
    pub encoding: Option<PathBuf>,
    /// Timing-sequence file; needs --pair and --k.
    #[arg(long, requires = "pair", requires = "k")]
    pub timings: Option<PathBuf>,
    #[arg(long)]
    pub pair: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Zeno periods, comma separated.
    #[arg(long = "T", value_delimiter = ',', default_value = "0.1")]
    pub periods: Vec<f64>,
    #[arg(long = "total-time", default_value_t = 1.0)]
    pub total_time: f64,
    /// RMS action per period at the first T.
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    #[arg(long = "field-scaling", value_enum, default_value_t = FieldScaling::Proportional)]
    pub field_scaling: FieldScaling,
    /// Field seeds per period (starting at --seed).
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    #[arg(long, value_enum, default_value_t = Noise::Exact)]
    pub noise: Noise,
    #[arg(long, value_enum, default_value_t = Reset::Replace)]
    pub reset: Reset,
    /// Seed of the random initial information state.
    #[arg(long = "state-seed", default_value_t = 0)]
    pub state_seed: u64,
    /// Seed completing an encoding isometry to a unitary (default: its seed).
    #[arg(long = "completion-seed")]
    pub completion_seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct RandomStudy {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    /// Maximum Pauli weight of the studied errors.
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Bins of the |h_e| histogram in the report.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub common: Common,
}

/// Inserts the contents of `--config FILE` as flags right after the
/// subcommand, so flags given on the command line take precedence.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else {
        return Ok(argv);
    };
    let path = if argv[pos] == "--config" {
        argv.get(pos + 1).cloned().ok_or("--config needs a path")?
    } else {
        argv[pos]["--config=".len()..].to_string()
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let kv = KeyValues::parse(&text).map_err(|e| format!("config {path}: {e}"))?;
    let sub = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .ok_or("--config needs a subcommand")?;
    if let Some(cmd) = kv.get("command") {
        if cmd != argv[sub] {
            return Err(format!("config {path} is for {cmd:?}, not {:?}", argv[sub]));
        }
    }
    let mut inserted = Vec::new();
    for (key, value) in &kv.entries {
        if key == "command" || key == "config" || key.starts_with("result.") {
            continue;
        }
        match value.as_str() {
            "true" => inserted.push(format!("--{key}")),
            "false" | "none" => {}
            v => {
                inserted.push(format!("--{key}"));
                inserted.push(v.to_string());
            }
        }
    }
    let mut out = argv[..=sub].to_vec();
    out.extend(inserted);
    out.extend(argv[sub + 1..].iter().cloned());
    Ok(out)
}
