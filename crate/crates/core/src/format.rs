//! Plain-text artifact formats.
//!
//! Matrices are `rows cols` followed by one `re im` line per entry in
//! row-major order, printed with 17 significant digits so that values
//! round-trip exactly. Every other artifact is a one-line header followed by
//! matrices and/or plain lines.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::control::{ControlPair, DipoleParams, RamanParams, Sign, TimingSequence};
use crate::error::{Error, Result};
use crate::error_set::ErrorSet;
use crate::linalg::{ComplexMatrix, C64};
use crate::search::Encoding;
use crate::zeno::ZenoReport;

/// Line cursor that reports 1-based line numbers in parse errors.
pub struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    /// Next non-blank line.
    pub fn next_line(&mut self) -> Option<&'a str> {
        for (i, l) in self.lines.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Some(l.trim());
            }
        }
        None
    }

    pub fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        self.next_line()
            .ok_or_else(|| Error::parse(self.line + 1, format!("unexpected end of input, expected {what}")))
    }

    pub fn line(&self) -> usize {
        self.line
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, message)
    }

    /// Parses whitespace-separated fields of one line into `T`s.
    pub fn fields<T: FromStr>(&self, line: &str, expected: usize, what: &str) -> Result<Vec<T>> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != expected {
            return Err(self.error(format!("{what}: expected {expected} fields, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| p.parse().map_err(|_| self.error(format!("{what}: cannot parse {p:?}"))))
            .collect()
    }

    /// Checks a header line `tag f1 f2 …` and returns the fields after the tag.
    pub fn header(&mut self, tag: &str, fields: usize) -> Result<Vec<&'a str>> {
        let line = self.expect_line(tag)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.first() != Some(&tag) {
            return Err(self.error(format!("expected header {tag:?}, found {line:?}")));
        }
        if parts.len() != fields + 1 {
            return Err(self.error(format!("{tag} header: expected {fields} fields, found {}", parts.len() - 1)));
        }
        Ok(parts[1..].to_vec())
    }

    pub fn parse<T: FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.error(format!("{what}: cannot parse {field:?}")))
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix(out: &mut String, m: &ComplexMatrix) {
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for z in m.as_slice() {
        let _ = writeln!(out, "{} {}", real(z.re), real(z.im));
    }
}

pub fn read_matrix(r: &mut Reader<'_>) -> Result<ComplexMatrix> {
    let line = r.expect_line("matrix shape")?;
    let shape: Vec<usize> = r.fields(line, 2, "matrix shape")?;
    let (rows, cols) = (shape[0], shape[1]);
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| r.error("matrix shape overflows"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let line = r.expect_line("matrix entry")?;
        let v: Vec<f64> = r.fields(line, 2, "matrix entry")?;
        data.push(C64::new(v[0], v[1]));
    }
    ComplexMatrix::from_vec(rows, cols, data)
}

pub fn matrix_to_string(m: &ComplexMatrix) -> String {
    let mut s = String::new();
    write_matrix(&mut s, m);
    s
}

pub fn matrix_from_str(text: &str) -> Result<ComplexMatrix> {
    read_matrix(&mut Reader::new(text))
}

/// `errorset n dim M t`, then `M` label lines, then `M` matrices.
pub fn error_set_to_string(e: &ErrorSet) -> String {
    let mut s = format!("errorset {} {} {} {}\n", e.n_qubits, e.dim, e.len(), e.weight);
    for l in &e.labels {
        s.push_str(l);
        s.push('\n');
    }
    for g in &e.generators {
        write_matrix(&mut s, g);
    }
    s
}

pub fn error_set_from_str(text: &str) -> Result<ErrorSet> {
    let mut r = Reader::new(text);
    let h = r.header("errorset", 4)?;
    let n: usize = r.parse(h[0], "n")?;
    let dim: usize = r.parse(h[1], "dim")?;
    let m: usize = r.parse(h[2], "M")?;
    let t: usize = r.parse(h[3], "t")?;
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let l = r.expect_line("label")?;
        if l.contains(char::is_whitespace) {
            return Err(r.error(format!("label {l:?} contains whitespace")));
        }
        labels.push(l.to_string());
    }
    let generators = (0..m).map(|_| read_matrix(&mut r)).collect::<Result<Vec<_>>>()?;
    if r.next_line().is_some() {
        return Err(r.error("trailing content after error set"));
    }
    ErrorSet::new(n, dim, generators, labels, t)
}

/// `encoding n k seed residual`, the isometry, then `iter residual` lines.
pub fn encoding_to_string(e: &Encoding) -> String {
    let mut s = format!("encoding {} {} {} {}\n", e.n, e.k, e.seed, real(e.residual));
    write_matrix(&mut s, &e.isometry);
    for (it, res) in &e.trace {
        let _ = writeln!(s, "{it} {}", real(*res));
    }
    s
}

pub fn encoding_from_str(text: &str) -> Result<Encoding> {
    let mut r = Reader::new(text);
    let h = r.header("encoding", 4)?;
    let n: usize = r.parse(h[0], "n")?;
    let k: usize = r.parse(h[1], "k")?;
    let seed: u64 = r.parse(h[2], "seed")?;
    let residual: f64 = r.parse(h[3], "residual")?;
    if k > n || n >= usize::BITS as usize {
        return Err(r.error(format!("invalid code parameters n={n}, k={k}")));
    }
    let isometry = read_matrix(&mut r)?;
    if isometry.shape() != (1 << n, 1 << k) {
        return Err(r.error(format!(
            "isometry shape {:?} does not match n={n}, k={k}",
            isometry.shape()
        )));
    }
    let mut trace = Vec::new();
    while let Some(line) = r.next_line() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(r.error("trace line: expected \"iter residual\""));
        }
        trace.push((r.parse(parts[0], "iter")?, r.parse(parts[1], "residual")?));
    }
    Ok(Encoding {
        n,
        k,
        isometry,
        residual,
        trace,
        seed,
    })
}

/// `timings M′ sign seed residual`, then one timing per line.
pub fn timings_to_string(t: &TimingSequence) -> String {
    let sign = match t.sign {
        Sign::Plus => 1,
        Sign::Minus => -1,
    };
    let mut s = format!("timings {} {sign} {} {}\n", t.len(), t.seed, real(t.residual));
    for x in &t.timings {
        s.push_str(&real(*x));
        s.push('\n');
    }
    s
}

pub fn timings_from_str(text: &str) -> Result<TimingSequence> {
    let mut r = Reader::new(text);
    let h = r.header("timings", 4)?;
    let m: usize = r.parse(h[0], "M'")?;
    let sign_value: i64 = r.parse(h[1], "sign")?;
    let sign = Sign::from_value(sign_value).ok_or_else(|| r.error(format!("sign must be 1 or -1, got {sign_value}")))?;
    let seed: u64 = r.parse(h[2], "seed")?;
    let residual: f64 = r.parse(h[3], "residual")?;
    let mut timings = Vec::with_capacity(m);
    for _ in 0..m {
        let line = r.expect_line("timing")?;
        let t: f64 = r.parse(line, "timing")?;
        if !t.is_finite() {
            return Err(r.error("non-finite timing"));
        }
        timings.push(t);
    }
    if r.next_line().is_some() {
        return Err(r.error(format!("more than {m} timings")));
    }
    Ok(TimingSequence {
        timings,
        sign,
        seed,
        residual,
        trace: Vec::new(),
        beta_history: Vec::new(),
    })
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(real).collect::<Vec<_>>().join(" ")
}

/// `H₁`, `H₂`, then the parameter block; the matrices are checked against
/// the parameters when read back.
pub fn control_pair_to_string(p: &ControlPair) -> String {
    let mut s = String::new();
    write_matrix(&mut s, &p.h1);
    write_matrix(&mut s, &p.h2);
    let _ = writeln!(s, "n {}", p.n);
    let _ = writeln!(s, "b_x {}", real(p.dipole.b_x));
    let _ = writeln!(s, "mu {}", join(p.dipole.mu.iter().copied()));
    let _ = writeln!(s, "b_r {}", join(p.raman.b_r));
    let _ = writeln!(s, "mu2 {}", join(p.raman.mu2.iter().flatten().copied()));
    let _ = writeln!(s, "delta_omega {}", real(p.raman.delta_omega));
    s
}

pub fn control_pair_from_str(text: &str) -> Result<ControlPair> {
    let mut r = Reader::new(text);
    let h1 = read_matrix(&mut r)?;
    let h2 = read_matrix(&mut r)?;
    let mut params = std::collections::BTreeMap::new();
    while let Some(line) = r.next_line() {
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let values = rest
            .split_whitespace()
            .map(|v| r.parse::<f64>(v, key))
            .collect::<Result<Vec<_>>>()?;
        params.insert(key.to_string(), (r.line(), values));
    }
    let get = |key: &str, len: Option<usize>| -> Result<Vec<f64>> {
        let (line, v) = params
            .get(key)
            .ok_or_else(|| Error::parse(r.line(), format!("missing parameter {key}")))?;
        if let Some(len) = len {
            if v.len() != len {
                return Err(Error::parse(*line, format!("{key}: expected {len} values, found {}", v.len())));
            }
        }
        Ok(v.clone())
    };
    let n = get("n", Some(1))?[0];
    if n.fract() != 0.0 || !(1.0..=30.0).contains(&n) {
        return Err(Error::parse(r.line(), format!("invalid qubit count {n}")));
    }
    let n = n as usize;
    let mu = get("mu", Some(n))?;
    let b_r = get("b_r", Some(3))?;
    let flat = get("mu2", Some(n * n))?;
    let pair = ControlPair::new(
        n,
        DipoleParams {
            b_x: get("b_x", Some(1))?[0],
            mu,
        },
        RamanParams {
            b_r: [b_r[0], b_r[1], b_r[2]],
            mu2: flat.chunks(n).map(<[f64]>::to_vec).collect(),
            delta_omega: get("delta_omega", Some(1))?[0],
        },
    )?;
    for (name, stored, built) in [("H1", &h1, &pair.h1), ("H2", &h2, &pair.h2)] {
        if stored.shape() != built.shape() {
            return Err(Error::parse(r.line(), format!("{name} shape does not match parameters")));
        }
        let diff = (stored - built).max_abs();
        if diff > 1e-12 * built.max_abs().max(1.0) {
            return Err(Error::parse(r.line(), format!("{name} differs from its parameters by {diff:e}")));
        }
    }
    Ok(pair)
}

/// `cycle,fidelity,leakage` rows, cycles numbered from 1.
pub fn zeno_csv(report: &ZenoReport) -> String {
    let mut s = String::from("cycle,fidelity,leakage\n");
    for (i, (f, l)) in report
        .fidelity_per_cycle
        .iter()
        .zip(&report.leakage_per_cycle)
        .enumerate()
    {
        let _ = writeln!(s, "{},{},{}", i + 1, real(*f), real(*l));
    }
    s
}

/// Ordered `key value` lines. Values may contain spaces; keys may not.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    pub entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        debug_assert!(!key.contains(char::is_whitespace));
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_real(&mut self, key: &str, value: f64) -> &mut Self {
        self.push(key, real(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn extend(&mut self, other: &KeyValues) -> &mut Self {
        self.entries.extend(other.entries.iter().cloned());
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let mut out = Self::new();
        while let Some(line) = r.next_line() {
            if line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            out.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} {v}")?;
        }
        Ok(())
    }
}

/// Summary block of a simulation.
pub fn zeno_summary(report: &ZenoReport) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.push("cycles", report.fidelity_per_cycle.len())
        .push_real("final_infidelity", report.final_infidelity)
        .push_real("h_e_norm", report.h_e_norm)
        .push_real("mean_leakage", report.mean_leakage())
        .push_real("cumulative_leakage", report.cumulative_leakage());
    kv
}

pub fn read_file(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(std::fs::write(path, contents)?)
}
