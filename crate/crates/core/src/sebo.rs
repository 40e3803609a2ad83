//! Successive exhaustive boolean optimization (SEBO).
//!
//! Maximizes a real objective over `{0,1}^Q` by cyclic exhaustive search
//! over blocks of `J` bits, followed by random multi-bit flips that are
//! kept only when they strictly improve the objective. Every accepted flip
//! restarts block cycling from the new point.

use rand::seq::index::sample;
use rand::Rng;

use crate::linalg::seeded_rng;
use crate::port_model::AntennaCoder;

/// Relative gain below which a full pass over all blocks counts as converged.
pub const CYCLE_REL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeboConfig {
    pub block_size: usize,
    pub max_cycles: usize,
    pub flip_rounds: usize,
    pub seed: u64,
}

impl Default for SeboConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            max_cycles: 20,
            flip_rounds: 10,
            seed: 0,
        }
    }
}

impl SeboConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SeboTrace {
    /// Objective after the initial evaluation and after every accepted update.
    pub values: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Clone, Debug)]
pub struct SeboOutcome {
    pub coder: AntennaCoder,
    pub value: f64,
    pub trace: SeboTrace,
    /// Block cycling hit `max_cycles` without converging at least once.
    pub budget_exhausted: bool,
}

struct Search<'f, F> {
    f: &'f F,
    bits: Vec<bool>,
    value: f64,
    trace: SeboTrace,
    exhausted: bool,
}

impl<F: Fn(&[bool]) -> f64> Search<'_, F> {
    fn eval(&mut self, bits: &[bool]) -> f64 {
        self.trace.evaluations += 1;
        (self.f)(bits)
    }

    fn accept(&mut self, bits: Vec<bool>, value: f64) {
        self.bits = bits;
        self.value = value;
        self.trace.values.push(value);
    }

    /// Exhaustive search over one block; the incumbent assignment is kept
    /// unless another one is strictly better.
    fn optimize_block(&mut self, start: usize, len: usize) {
        let incumbent: u64 = (0..len).fold(0, |acc, i| acc | ((self.bits[start + i] as u64) << i));
        let mut best: Option<(u64, f64)> = None;
        let mut trial = self.bits.clone();
        for pattern in 0..(1u64 << len) {
            if pattern == incumbent {
                continue;
            }
            for i in 0..len {
                trial[start + i] = (pattern >> i) & 1 == 1;
            }
            let v = self.eval(&trial);
            if v > best.map_or(self.value, |(_, bv)| bv) {
                best = Some((pattern, v));
            }
        }
        if let Some((pattern, v)) = best {
            let mut bits = self.bits.clone();
            for i in 0..len {
                bits[start + i] = (pattern >> i) & 1 == 1;
            }
            self.accept(bits, v);
        }
    }

    fn cycle_blocks(&mut self, block: usize, max_cycles: usize) {
        let q = self.bits.len();
        for _ in 0..max_cycles {
            let before = self.value;
            let mut start = 0;
            while start < q {
                let len = block.min(q - start);
                self.optimize_block(start, len);
                start += len;
            }
            let gain = self.value - before;
            if !(gain > CYCLE_REL_TOL * before.abs()) {
                return;
            }
        }
        self.exhausted = true;
    }
}

/// Maximizes `f` over binary vectors of length `q`, starting from `start`
/// (all zeros when `None`).
///
/// The objective must be deterministic; it may return `-inf` for infeasible
/// points, which are then never accepted.
pub fn sebo_maximize<F>(f: F, q: usize, cfg: &SeboConfig, start: Option<&AntennaCoder>) -> SeboOutcome
where
    F: Fn(&[bool]) -> f64,
{
    assert!(cfg.max_cycles >= 1, "max_cycles must be at least 1");
    let block = cfg.block_size.clamp(1, q.max(1)).min(63);
    let bits = match start {
        Some(b) => {
            assert_eq!(b.len(), q, "start coder length");
            b.bits().to_vec()
        }
        None => vec![false; q],
    };

    let mut search = Search {
        f: &f,
        bits: Vec::new(),
        value: f64::NEG_INFINITY,
        trace: SeboTrace::default(),
        exhausted: false,
    };
    let v0 = search.eval(&bits);
    search.accept(bits, v0);
    if q == 0 {
        return finish(search);
    }

    search.cycle_blocks(block, cfg.max_cycles);

    let mut rng = seeded_rng(cfg.seed);
    for _ in 0..cfg.flip_rounds {
        let count = rng.random_range(1..=block.min(q));
        let mut trial = search.bits.clone();
        for pos in sample(&mut rng, q, count) {
            trial[pos] = !trial[pos];
        }
        let v = search.eval(&trial);
        if v > search.value {
            search.accept(trial, v);
            search.cycle_blocks(block, cfg.max_cycles);
        }
    }
    finish(search)
}

fn finish<F>(search: Search<'_, F>) -> SeboOutcome {
    SeboOutcome {
        coder: AntennaCoder::from_bits(search.bits),
        value: search.value,
        trace: search.trace,
        budget_exhausted: search.exhausted,
    }
}

/// Exhaustive maximum over all `2^q` binary vectors (ties: lowest index).
/// Test and oracle helper; `q` must be small.
pub fn brute_force_maximize<F: Fn(&[bool]) -> f64>(f: F, q: usize) -> (AntennaCoder, f64) {
    assert!(q < 30, "exhaustive search is limited to small q");
    let mut best = (AntennaCoder::zeros(q), f64::NEG_INFINITY);
    for idx in 0..(1u64 << q) {
        let b = AntennaCoder::from_index(q, idx);
        let v = f(b.bits());
        if v > best.1 {
            best = (b, v);
        }
    }
    best
}
