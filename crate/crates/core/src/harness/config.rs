//! `key = value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys and repeated keys are errors. Every key is optional.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `n`, `u` | transmit antennas, users | 2, 2 |
//! | `q`, `k` | pixel switches, spatial samples | 39, 72 |
//! | `snr_db` | comma list, or `a:b:step` | `0:30:5` |
//! | `trials` | channel draws per SNR point | 500 |
//! | `algorithm` | `fp_alt`, `zf_alt`, `codebook`, `hierarchy`, `conventional` | `fp_alt` |
//! | `d` | flat codebook bits | 6 |
//! | `a`, `l` | hierarchy branching and depth | 3, 6 |
//! | `seed` | master seed | 0 |
//! | `antenna` | `surrogate` or a port-model file | `surrogate` |
//! | `antenna_seed` | surrogate generator seed | 1 |
//! | `codebook`, `hierarchy` | trained codebook files (trained in-process when absent) | |
//! | `train_samples` | training channel samples | 1000 |
//! | `rho_bar` | training SNR (linear) | 10 |
//! | `lloyd_max_rounds`, `lloyd_rel_tol` | training stop rule | 50, 1e-6 |
//! | `block_size`, `max_cycles`, `flip_rounds` | SEBO block size and budgets | 4, 20, 10 |
//! | `max_iters`, `rel_tol` | outer-loop stop rule of every joint design | 200, 1e-6 |
//! | `bisect_tol` | FP multiplier bisection tolerance | 1e-8 |
//! | `init` | `gain_matched` or `zeros` initial coders | `gain_matched` |
//! | `zf_scoring` | `resolved` or `fixed` | `resolved` |
//! | `rank_tol` | pattern-basis rank tolerance | 1e-6 |
//! | `open_reactance` | open-switch reactance | 1e10 |
//! | `timing` | measure wall time | `false` |
//! | `parallel` | run trials on the worker pool | `true` |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baseline::ZfAltScoring;
use crate::error::{Error, Result};
use crate::fp_solver::CoderInit;
use crate::port_model::{DEFAULT_RANK_TOL, OPEN_CIRCUIT_REACTANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    FpAlt,
    ZfAlt,
    Codebook,
    Hierarchy,
    Conventional,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::FpAlt,
        Algorithm::ZfAlt,
        Algorithm::Codebook,
        Algorithm::Hierarchy,
        Algorithm::Conventional,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FpAlt => "fp_alt",
            Algorithm::ZfAlt => "zf_alt",
            Algorithm::Codebook => "codebook",
            Algorithm::Hierarchy => "hierarchy",
            Algorithm::Conventional => "conventional",
        }
    }

    /// Whether the algorithm precodes by zero forcing and so needs `U <= N`.
    pub fn uses_zero_forcing(self) -> bool {
        !matches!(self, Algorithm::FpAlt)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm `{s}`; expected one of fp_alt, zf_alt, codebook, hierarchy, conventional"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AntennaSource {
    Surrogate { seed: u64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub u: usize,
    pub q: usize,
    pub k: usize,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub algorithm: Algorithm,
    pub d: u32,
    pub branching: usize,
    pub depth: usize,
    pub seed: u64,
    pub antenna: AntennaSource,
    pub codebook: Option<PathBuf>,
    pub hierarchy: Option<PathBuf>,
    pub train_samples: usize,
    pub rho_bar: f64,
    pub lloyd_max_rounds: usize,
    pub lloyd_rel_tol: f64,
    pub block_size: usize,
    pub max_cycles: usize,
    pub flip_rounds: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub bisect_tol: f64,
    pub init: CoderInit,
    pub zf_scoring: ZfAltScoring,
    pub rank_tol: f64,
    pub open_reactance: f64,
    pub timing: bool,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 2,
            u: 2,
            q: 39,
            k: 72,
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            trials: 500,
            algorithm: Algorithm::FpAlt,
            d: 6,
            branching: 3,
            depth: 6,
            seed: 0,
            antenna: AntennaSource::Surrogate { seed: 1 },
            codebook: None,
            hierarchy: None,
            train_samples: 1000,
            rho_bar: 10.0,
            lloyd_max_rounds: 50,
            lloyd_rel_tol: 1e-6,
            block_size: 4,
            max_cycles: 20,
            flip_rounds: 10,
            max_iters: 200,
            rel_tol: 1e-6,
            bisect_tol: 1e-8,
            init: CoderInit::GainMatched,
            zf_scoring: ZfAltScoring::ResolvedZf,
            rank_tol: DEFAULT_RANK_TOL,
            open_reactance: OPEN_CIRCUIT_REACTANCE,
            timing: false,
            parallel: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

/// Parses an SNR list: either comma-separated values or an inclusive
/// `start:stop:step` range.
pub fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("snr range `{text}` must be start:stop:step")));
        }
        let start: f64 = parse_value("snr_db", parts[0])?;
        let stop: f64 = parse_value("snr_db", parts[1])?;
        let step: f64 = parse_value("snr_db", parts[2])?;
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::Config("snr range must be finite".into()));
        }
        if step <= 0.0 || stop < start {
            return Err(Error::Config(format!(
                "snr range `{text}` needs step > 0 and stop >= start"
            )));
        }
        let intervals = ((stop - start) / step + 1e-9).floor();
        if !(intervals < 10_000.0) {
            return Err(Error::Config(format!("snr range `{text}` has too many points")));
        }
        let count = intervals as usize + 1;
        Ok((0..count).map(|i| start + step * i as f64).collect())
    } else {
        text.split(',')
            .map(|v| parse_value("snr_db", v.trim()))
            .collect()
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("repeated key `{key}`"),
                });
            }
            seen.push(key.to_string());
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Parse { line: i + 1, msg },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_value(key, value)?,
            "u" => self.u = parse_value(key, value)?,
            "q" => self.q = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "snr_db" => self.snr_db = parse_snr_list(value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "algorithm" => self.algorithm = value.parse()?,
            "d" => self.d = parse_value(key, value)?,
            "a" => self.branching = parse_value(key, value)?,
            "l" => self.depth = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "antenna" => {
                self.antenna = if value == "surrogate" {
                    AntennaSource::Surrogate {
                        seed: self.antenna_seed(),
                    }
                } else {
                    AntennaSource::File(PathBuf::from(value))
                }
            }
            "antenna_seed" => {
                let seed = parse_value(key, value)?;
                if let AntennaSource::Surrogate { seed: s } = &mut self.antenna {
                    *s = seed;
                } else {
                    return Err(Error::Config("`antenna_seed` only applies to the surrogate antenna".into()));
                }
            }
            "codebook" => self.codebook = Some(PathBuf::from(value)),
            "hierarchy" => self.hierarchy = Some(PathBuf::from(value)),
            "train_samples" => self.train_samples = parse_value(key, value)?,
            "rho_bar" => self.rho_bar = parse_value(key, value)?,
            "lloyd_max_rounds" => self.lloyd_max_rounds = parse_value(key, value)?,
            "lloyd_rel_tol" => self.lloyd_rel_tol = parse_value(key, value)?,
            "block_size" => self.block_size = parse_value(key, value)?,
            "max_cycles" => self.max_cycles = parse_value(key, value)?,
            "flip_rounds" => self.flip_rounds = parse_value(key, value)?,
            "max_iters" => self.max_iters = parse_value(key, value)?,
            "rel_tol" => self.rel_tol = parse_value(key, value)?,
            "bisect_tol" => self.bisect_tol = parse_value(key, value)?,
            "init" => {
                self.init = match value {
                    "gain_matched" => CoderInit::GainMatched,
                    "zeros" => CoderInit::Zeros,
                    _ => return Err(Error::Config(format!("`init`: expected gain_matched or zeros, got `{value}`"))),
                }
            }
            "zf_scoring" => {
                self.zf_scoring = match value {
                    "resolved" => ZfAltScoring::ResolvedZf,
                    "fixed" => ZfAltScoring::FixedZf,
                    _ => return Err(Error::Config(format!("`zf_scoring`: expected resolved or fixed, got `{value}`"))),
                }
            }
            "rank_tol" => self.rank_tol = parse_value(key, value)?,
            "open_reactance" => self.open_reactance = parse_value(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn antenna_seed(&self) -> u64 {
        match self.antenna {
            AntennaSource::Surrogate { seed } => seed,
            AntennaSource::File(_) => 1,
        }
    }

    /// Checks the invariants every command relies on.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.u == 0 {
            return fail("`n` and `u` must be at least 1".into());
        }
        if self.algorithm.uses_zero_forcing() && self.u > self.n {
            return fail(format!(
                "{} precodes by zero forcing and needs u <= n (got u={}, n={}); lower `u` or raise `n`",
                self.algorithm, self.u, self.n
            ));
        }
        if self.q == 0 || self.k == 0 {
            return fail("`q` and `k` must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("`trials` must be at least 1".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return fail("`snr_db` must list at least one finite value".into());
        }
        match self.algorithm {
            Algorithm::Codebook if self.codebook.is_none() => self.validate_codebook()?,
            Algorithm::Hierarchy if self.hierarchy.is_none() => self.validate_hierarchy()?,
            _ => {}
        }
        if self.train_samples == 0 {
            return fail("`train_samples` must be at least 1".into());
        }
        if !(self.rho_bar > 0.0 && self.rho_bar.is_finite()) {
            return fail("`rho_bar` must be positive".into());
        }
        if self.block_size == 0 || self.block_size > 20 {
            return fail("`block_size` must lie in 1..=20".into());
        }
        if self.max_cycles == 0 || self.max_iters == 0 || self.lloyd_max_rounds == 0 {
            return fail("iteration limits must be at least 1".into());
        }
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("lloyd_rel_tol", self.lloyd_rel_tol),
            ("bisect_tol", self.bisect_tol),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v >= 0.0) {
                return fail(format!("`{name}` must be non-negative"));
            }
        }
        if !(self.bisect_tol > 0.0 && self.rank_tol > 0.0) {
            return fail("`bisect_tol` and `rank_tol` must be positive".into());
        }
        if !(self.open_reactance > 0.0 && self.open_reactance.is_finite()) {
            return fail("`open_reactance` must be positive".into());
        }
        Ok(())
    }

    /// Checks the flat-codebook training parameters.
    pub fn validate_codebook(&self) -> Result<()> {
        if self.d as usize > self.q.min(24) {
            return Err(Error::Config(format!(
                "`d` = {} exceeds min(q, 24) = {}",
                self.d,
                self.q.min(24)
            )));
        }
        Ok(())
    }

    /// Checks the hierarchy training parameters.
    pub fn validate_hierarchy(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.branching < 2 || self.depth == 0 {
            return fail("hierarchy needs `a` >= 2 and `l` >= 1".into());
        }
        if self.q < 63 && self.branching as u64 > 1u64 << self.q {
            return fail(format!("`a` = {} exceeds the 2^q distinct coders", self.branching));
        }
        let leaves = (self.branching as f64).powi(self.depth as i32);
        if leaves > 1e7 {
            return fail(format!("hierarchy with a^l = {leaves:.0} leaves is too large"));
        }
        Ok(())
    }
}
