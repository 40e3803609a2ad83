//! Flat antenna-coder codebooks: generalized-Lloyd training and the online
//! zero-forcing search that picks one codeword per user.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use crate::beamspace::{effective_channel, sample_reduced, ReducedChannel};
use crate::error::{Error, Result};
use crate::format::LineReader;
use crate::fp_solver::{rate_from_rows, Precoder};
use crate::linalg::{derive_seed, seeded_rng, singular_values, CMatrix, CRow, C64};
use crate::port_model::{AntennaCoder, PatternCoder, PixelAntenna};
use crate::sebo::{sebo_maximize, SeboConfig};

/// Largest accepted condition number of the effective-channel Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Unit-norm zero-forcing directions: column `u` of `Hᴴ(HHᴴ)⁻¹`, normalized.
///
/// Computed from a QR factorization `Hᴴ = QR`, for which
/// `Hᴴ(HHᴴ)⁻¹ = QR⁻ᴴ`.
pub fn zf_directions(h: &CMatrix) -> Result<CMatrix> {
    let (u, n) = h.shape();
    if u == 0 || u > n {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let qr = h.adjoint().qr();
    let r = qr.r();
    let sv = singular_values(&r).ok_or(Error::NonFinite("effective channel matrix"))?;
    let smin = sv.last().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { (sv[0] / smin).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let r_inv_h = r
        .adjoint()
        .solve_lower_triangular(&CMatrix::identity(u, u))
        .ok_or(Error::RankDeficient { condition })?;
    let mut p = qr.q() * r_inv_h;
    for mut col in p.column_iter_mut() {
        let norm = col.norm();
        col.unscale_mut(norm);
    }
    Ok(p)
}

/// ZF precoder with uniform power: every column has norm `√(P/U)`.
pub fn zf_precoder(h_eff: &CMatrix, p_budget: f64) -> Result<Precoder> {
    let dirs = zf_directions(h_eff)?;
    let scale = (p_budget / h_eff.nrows() as f64).sqrt();
    Ok(Precoder {
        p: dirs * C64::new(scale, 0.0),
    })
}

/// Rate of a ZF precoder counting only the desired-signal terms, as in the
/// candidate objective of the codebook searches.
fn zf_rate(h: &CMatrix, p: &Precoder, sigma2: &[f64]) -> f64 {
    (0..h.nrows())
        .map(|u| {
            let g: C64 = (0..h.ncols()).map(|k| h[(u, k)] * p.p[(k, u)]).sum();
            (1.0 + g.norm_sqr() / sigma2[u]).log2()
        })
        .sum()
}

/// Training metric `Σ_u log₂(1 + ρ̄|w(c)ᴴH̄_u p̄_u|²)` with unit-norm ZF
/// directions built from all users' effective channels under the shared
/// codeword. Returns `-inf` when the ZF solve fails.
pub fn training_metric_for(sample: &[ReducedChannel], w: &PatternCoder, rho_bar: f64) -> f64 {
    let mut h = CMatrix::zeros(sample.len(), sample[0].n_tx());
    for (u, ch) in sample.iter().enumerate() {
        h.set_row(u, &effective_channel(w, ch).h_eff);
    }
    match zf_directions(&h) {
        Ok(p) => (0..h.nrows())
            .map(|u| {
                let g: C64 = (0..h.ncols()).map(|k| h[(u, k)] * p[(k, u)]).sum();
                (1.0 + rho_bar * g.norm_sqr()).log2()
            })
            .sum(),
        Err(_) => f64::NEG_INFINITY,
    }
}

pub fn training_metric(sample: &[ReducedChannel], codeword: &AntennaCoder, rho_bar: f64, antenna: &PixelAntenna) -> f64 {
    match antenna.pattern_coder(codeword) {
        Ok(w) => training_metric_for(sample, &w, rho_bar),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// `S` channel bundles, each holding one reduced channel per user.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<Vec<ReducedChannel>>,
}

impl TrainingSet {
    /// Draws `s` i.i.d. Rayleigh bundles of `u` users from `seed`.
    pub fn generate(n_eff: usize, n: usize, u: usize, s: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        Self {
            samples: (0..s).map(|_| sample_reduced(n_eff, n, u, &mut rng)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check(&self) -> Result<()> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
        if first.is_empty() {
            return Err(Error::InvalidArgument("training samples have no users".into()));
        }
        let shape = (first.len(), first[0].n_eff(), first[0].n_tx());
        let uniform = self
            .samples
            .iter()
            .all(|s| s.len() == shape.0 && s.iter().all(|h| (h.n_eff(), h.n_tx()) == (shape.1, shape.2)));
        if !uniform {
            return Err(Error::InvalidArgument("training samples have mixed dimensions".into()));
        }
        Ok(())
    }
}

/// Codebook of `M` antenna coders shared by all users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatCodebook {
    codewords: Vec<AntennaCoder>,
}

impl FlatCodebook {
    pub fn new(codewords: Vec<AntennaCoder>) -> Result<Self> {
        let q = codewords
            .first()
            .ok_or_else(|| Error::InvalidArgument("codebook needs at least one codeword".into()))?
            .len();
        if let Some(c) = codewords.iter().find(|c| c.len() != q) {
            return Err(Error::CoderLength {
                expected: q,
                found: c.len(),
            });
        }
        Ok(Self { codewords })
    }

    pub fn codewords(&self) -> &[AntennaCoder] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn q(&self) -> usize {
        self.codewords[0].len()
    }

    /// `D` with `M = 2^D`, when `M` is a power of two.
    pub fn quantization_bits(&self) -> Option<u32> {
        self.len().is_power_of_two().then(|| self.len().trailing_zeros())
    }

    /// Number of repeated codewords.
    pub fn duplicates(&self) -> usize {
        let mut sorted = self.codewords.clone();
        sorted.sort();
        sorted.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Text form: a `Q M` header, then one line of `Q` bits per codeword.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.q(), self.len());
        for c in &self.codewords {
            let _ = writeln!(s, "{c}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        let [q, m] = reader.header::<2>("codebook header `Q M`")?;
        if q == 0 || m == 0 {
            return Err(reader.err("codebook needs Q >= 1 and M >= 1"));
        }
        let mut codewords = Vec::new();
        for i in 0..m {
            let line = reader.expect_line(&format!("codeword {}", i + 1))?;
            codewords.push(parse_bits(&reader, line, q)?);
        }
        reader.expect_end()?;
        Self::new(codewords)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub(crate) fn parse_bits(reader: &LineReader<'_>, line: &str, q: usize) -> Result<AntennaCoder> {
    if line.len() != q {
        return Err(reader.err(format!("codeword has {} characters, expected {q}", line.len())));
    }
    line.parse()
        .map_err(|_| reader.err(format!("codeword {line:?} is not a string of 0 and 1")))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CentroidMode {
    /// SEBO over the cell's mean metric, started from the current codeword.
    Sebo,
    /// Enumeration of all `2^Q` coders; small `Q` only.
    Exhaustive,
}

#[derive(Clone, Debug)]
pub struct LloydConfig {
    pub rho_bar: f64,
    pub max_rounds: usize,
    pub rel_tol: f64,
    pub centroid: CentroidMode,
    pub sebo: SeboConfig,
    pub seed: u64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            rho_bar: 10.0,
            max_rounds: 50,
            rel_tol: 1e-6,
            centroid: CentroidMode::Sebo,
            sebo: SeboConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LloydDiagnostics {
    /// Training objective after the initial partition and after every
    /// subsequent centroid and partition step.
    pub trace: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
    pub empty_cells_reseeded: usize,
    pub duplicate_codewords: usize,
}

#[derive(Clone, Debug)]
pub struct LloydOutcome {
    pub codebook: FlatCodebook,
    /// Nearest-neighbor cell of every training sample (positions refer to
    /// the sample subset that was trained on) under the final codebook.
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub diagnostics: LloydDiagnostics,
}

struct Cells {
    assignment: Vec<usize>,
    best: Vec<f64>,
}

fn mean(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.sum::<f64>() / count as f64
}

fn coder_metric(antenna: &PixelAntenna, ts: &TrainingSet, members: &[usize], bits: &[bool], rho_bar: f64) -> f64 {
    match antenna.pattern_coder(&AntennaCoder::from_bits(bits.to_vec())) {
        Ok(w) => mean(
            members.iter().map(|&s| training_metric_for(&ts.samples[s], &w, rho_bar)),
            members.len(),
        ),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn partition(antenna: &PixelAntenna, ts: &TrainingSet, subset: &[usize], codewords: &[AntennaCoder], rho_bar: f64) -> Cells {
    let patterns: Vec<Option<PatternCoder>> = codewords.iter().map(|c| antenna.pattern_coder(c).ok()).collect();
    let (assignment, best): (Vec<usize>, Vec<f64>) = subset
        .par_iter()
        .map(|&s| {
            let mut best = (0, f64::NEG_INFINITY);
            for (m, w) in patterns.iter().enumerate() {
                let v = w.as_ref().map_or(f64::NEG_INFINITY, |w| training_metric_for(&ts.samples[s], w, rho_bar));
                if v > best.1 {
                    best = (m, v);
                }
            }
            best
        })
        .unzip();
    Cells { assignment, best }
}

fn random_distinct_coders<R: Rng + ?Sized>(q: usize, m: usize, rng: &mut R) -> Vec<AntennaCoder> {
    let mut out: Vec<AntennaCoder> = Vec::with_capacity(m);
    while out.len() < m {
        let c = AntennaCoder::from_bits((0..q).map(|_| rng.random::<bool>()).collect());
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// Trains a codebook of `m` codewords on the training samples listed in
/// `subset` with the generalized Lloyd algorithm.
pub fn lloyd_train_subset(
    antenna: &PixelAntenna,
    ts: &TrainingSet,
    subset: &[usize],
    m: usize,
    cfg: &LloydConfig,
) -> Result<LloydOutcome> {
    ts.check()?;
    let q = antenna.q();
    if m == 0 {
        return Err(Error::InvalidArgument("codebook size must be at least 1".into()));
    }
    if q < usize::BITS as usize && m > 1usize << q {
        return Err(Error::InvalidArgument(format!("{m} distinct codewords exceed 2^{q} coders")));
    }
    if subset.is_empty() {
        return Err(Error::InvalidArgument("training subset is empty".into()));
    }
    if cfg.centroid == CentroidMode::Exhaustive && q > 20 {
        return Err(Error::InvalidArgument("exhaustive centroids are limited to Q <= 20".into()));
    }
    if !(cfg.rho_bar > 0.0) {
        return Err(Error::InvalidArgument("training SNR must be positive".into()));
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut codewords = random_distinct_coders(q, m, &mut rng);
    let mut diag = LloydDiagnostics::default();
    let mut cells = partition(antenna, ts, subset, &codewords, cfg.rho_bar);
    let mut objective = mean(cells.best.iter().copied(), subset.len());
    diag.trace.push(objective);

    for round in 0..cfg.max_rounds {
        let before = objective;
        let members: Vec<Vec<usize>> = (0..m)
            .map(|c| {
                subset
                    .iter()
                    .zip(&cells.assignment)
                    .filter(|&(_, &a)| a == c)
                    .map(|(&s, _)| s)
                    .collect()
            })
            .collect();
        let worst = subset
            .iter()
            .zip(&cells.best)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&s, _)| s)
            .expect("subset is non-empty");

        let updates: Vec<(AntennaCoder, bool)> = (0..m)
            .into_par_iter()
            .map(|c| {
                let (cell, start, reseed) = if members[c].is_empty() {
                    (vec![worst], None, true)
                } else {
                    (members[c].clone(), Some(&codewords[c]), false)
                };
                let f = |bits: &[bool]| coder_metric(antenna, ts, &cell, bits, cfg.rho_bar);
                let coder = match cfg.centroid {
                    CentroidMode::Sebo => {
                        let sebo = cfg.sebo.with_seed(derive_seed(cfg.seed, &[round as u64, c as u64]));
                        sebo_maximize(f, q, &sebo, start).coder
                    }
                    CentroidMode::Exhaustive => exhaustive_argmax(f, q, start),
                };
                (coder, reseed)
            })
            .collect();
        for (c, (coder, reseed)) in updates.into_iter().enumerate() {
            codewords[c] = coder;
            diag.empty_cells_reseeded += reseed as usize;
        }
        let centroid_objective = mean(
            subset.iter().zip(&cells.assignment).map(|(&s, &a)| {
                training_metric(&ts.samples[s], &codewords[a], cfg.rho_bar, antenna)
            }),
            subset.len(),
        );
        diag.trace.push(centroid_objective);

        cells = partition(antenna, ts, subset, &codewords, cfg.rho_bar);
        objective = mean(cells.best.iter().copied(), subset.len());
        diag.trace.push(objective);
        diag.rounds = round + 1;
        if !(objective - before > cfg.rel_tol * before.abs()) {
            diag.converged = true;
            break;
        }
    }

    let codebook = FlatCodebook::new(codewords)?;
    diag.duplicate_codewords = codebook.duplicates();
    if diag.duplicate_codewords > 0 {
        log::debug!("trained codebook holds {} duplicate codewords", diag.duplicate_codewords);
    }
    Ok(LloydOutcome {
        codebook,
        assignment: cells.assignment,
        objective,
        diagnostics: diag,
    })
}

/// Trains a `2^d`-codeword codebook on the whole training set.
pub fn lloyd_train(antenna: &PixelAntenna, ts: &TrainingSet, d: u32, cfg: &LloydConfig) -> Result<LloydOutcome> {
    if d >= usize::BITS - 1 {
        return Err(Error::InvalidArgument(format!("{d} quantization bits is too many")));
    }
    let all: Vec<usize> = (0..ts.len()).collect();
    lloyd_train_subset(antenna, ts, &all, 1usize << d, cfg)
}

/// Maximum over all coders; the incumbent `start` wins ties, then the
/// lowest index.
fn exhaustive_argmax<F: Fn(&[bool]) -> f64>(f: F, q: usize, start: Option<&AntennaCoder>) -> AntennaCoder {
    let mut best = match start {
        Some(c) => (c.clone(), f(c.bits())),
        None => (AntennaCoder::zeros(q), f64::NEG_INFINITY),
    };
    for idx in 0..(1u64 << q) {
        let c = AntennaCoder::from_index(q, idx);
        let v = f(c.bits());
        if v > best.1 {
            best = (c, v);
        }
    }
    best.0
}

/// A codeword together with its pattern coder (`None` when degenerate).
#[derive(Clone, Debug)]
pub struct Candidate {
    pub coder: AntennaCoder,
    pub pattern: Option<PatternCoder>,
}

impl Candidate {
    pub fn new(antenna: &PixelAntenna, coder: &AntennaCoder) -> Self {
        Self {
            coder: coder.clone(),
            pattern: antenna.pattern_coder(coder).ok(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SearchReport {
    /// Sum rate at initialization, then after every outer iteration.
    pub sum_rate_trace: Vec<f64>,
    /// Best candidate objective after every single-user update.
    pub step_objectives: Vec<f64>,
    /// Candidate evaluations of every single-user update, in order.
    pub evaluations: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
}

impl SearchReport {
    pub fn final_rate(&self) -> f64 {
        self.sum_rate_trace.last().copied().unwrap_or(0.0)
    }

    pub fn total_evaluations(&self) -> usize {
        self.evaluations.iter().sum()
    }

    pub fn evaluations_per_user_iteration(&self) -> f64 {
        if self.evaluations.is_empty() {
            0.0
        } else {
            self.total_evaluations() as f64 / self.evaluations.len() as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub precoder: Precoder,
    pub coders: Vec<AntennaCoder>,
    pub report: SearchReport,
}

/// Scores candidate coders for one user against the current coders of all
/// other users.
pub struct CandidateScorer<'a> {
    channel: &'a ReducedChannel,
    user: usize,
    rows: &'a [CRow],
    sigma2: &'a [f64],
    p_budget: f64,
    evaluations: usize,
}

impl CandidateScorer<'_> {
    /// Sum rate under the ZF precoder rebuilt with the candidate's
    /// effective channel in row `user`; `-inf` when infeasible.
    pub fn score(&mut self, c: &Candidate) -> f64 {
        self.evaluations += 1;
        match &c.pattern {
            Some(w) => replaced_row_rate(
                self.rows,
                self.user,
                &effective_channel(w, self.channel).h_eff,
                self.sigma2,
                self.p_budget,
            ),
            None => f64::NEG_INFINITY,
        }
    }

    /// Best of `candidates` (lowest index on ties) with its score.
    pub fn best_of<'c>(&mut self, candidates: &'c [Candidate]) -> Option<(usize, &'c Candidate, f64)> {
        let mut best: Option<(usize, &Candidate, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let v = self.score(c);
            if v > best.map_or(f64::NEG_INFINITY, |b| b.2) {
                best = Some((i, c, v));
            }
        }
        best
    }
}

/// Sum rate under uniform-power ZF after replacing row `user` of the
/// effective channel matrix; `-inf` when ZF is infeasible.
pub fn replaced_row_rate(rows: &[CRow], user: usize, row: &CRow, sigma2: &[f64], p_budget: f64) -> f64 {
    let mut h = stack(rows);
    h.set_row(user, row);
    match zf_precoder(&h, p_budget) {
        Ok(p) => zf_rate(&h, &p, sigma2),
        Err(_) => f64::NEG_INFINITY,
    }
}

pub(crate) fn stack(rows: &[CRow]) -> CMatrix {
    let mut h = CMatrix::zeros(rows.len(), rows[0].len());
    for (u, r) in rows.iter().enumerate() {
        h.set_row(u, r);
    }
    h
}

/// User-by-user coordinate search shared by the flat and hierarchical
/// codebook algorithms.
///
/// Each user's coder starts as a uniformly drawn member of `init`. In every
/// outer iteration `select` picks a new coder for each user in turn, scoring
/// candidates with the scorer it is handed; the loop ends when the relative
/// sum-rate change falls below the tolerance or no coder changes.
pub fn coordinate_search<S>(
    channels: &[ReducedChannel],
    sigma2: &[f64],
    p_budget: f64,
    init: &[Candidate],
    cfg: &SearchConfig,
    mut select: S,
) -> Result<SearchOutcome>
where
    S: FnMut(&mut CandidateScorer<'_>) -> Option<(Candidate, f64)>,
{
    let start = Instant::now();
    if channels.is_empty() || sigma2.len() != channels.len() {
        return Err(Error::InvalidArgument("need one noise power per user".into()));
    }
    if channels.len() > channels[0].n_tx() {
        return Err(Error::InvalidArgument(format!(
            "zero forcing needs U <= N, got U={} N={}",
            channels.len(),
            channels[0].n_tx()
        )));
    }
    if init.is_empty() {
        return Err(Error::InvalidArgument("empty initial codebook".into()));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut current: Vec<Candidate> = channels
        .iter()
        .map(|_| init[rng.random_range(0..init.len())].clone())
        .collect();
    let mut rows: Vec<CRow> = Vec::with_capacity(channels.len());
    for (c, h) in current.iter().zip(channels) {
        let w = c.pattern.as_ref().ok_or(Error::DegenerateCoder)?;
        rows.push(effective_channel(w, h).h_eff);
    }

    let rate_of = |rows: &[CRow]| match zf_precoder(&stack(rows), p_budget) {
        Ok(p) => rate_from_rows(&p, rows, sigma2),
        // No interference-free precoder exists; nothing is transmitted.
        Err(_) => 0.0,
    };
    let mut rate = rate_of(&rows);
    let mut report = SearchReport {
        sum_rate_trace: vec![rate],
        ..Default::default()
    };

    for it in 0..cfg.max_iters {
        let mut changed = false;
        for (u, h) in channels.iter().enumerate() {
            let mut scorer = CandidateScorer {
                channel: h,
                user: u,
                rows: &rows,
                sigma2,
                p_budget,
                evaluations: 0,
            };
            let choice = select(&mut scorer);
            report.evaluations.push(scorer.evaluations);
            let (cand, value) = choice.ok_or(Error::NoFeasibleCandidate { user: u })?;
            report.step_objectives.push(value);
            let w = cand.pattern.as_ref().ok_or(Error::DegenerateCoder)?;
            rows[u] = effective_channel(w, h).h_eff;
            changed |= cand.coder != current[u].coder;
            current[u] = cand;
        }
        let new_rate = rate_of(&rows);
        report.sum_rate_trace.push(new_rate);
        report.iterations = it + 1;
        let delta = (new_rate - rate).abs();
        rate = new_rate;
        if !changed || delta <= cfg.rel_tol * rate.abs() {
            report.converged = true;
            break;
        }
    }

    let precoder = zf_precoder(&stack(&rows), p_budget)?;
    report.wall_time = start.elapsed();
    Ok(SearchOutcome {
        precoder,
        coders: current.into_iter().map(|c| c.coder).collect(),
        report,
    })
}

/// Joint ZF precoding and per-user exhaustive search over a flat codebook.
pub fn flat_search_optimize(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    cb: &FlatCodebook,
    p_budget: f64,
    sigma2: &[f64],
    cfg: &SearchConfig,
) -> Result<SearchOutcome> {
    if cb.q() != antenna.q() {
        return Err(Error::CoderLength {
            expected: antenna.q(),
            found: cb.q(),
        });
    }
    let candidates: Vec<Candidate> = cb.codewords().iter().map(|c| Candidate::new(antenna, c)).collect();
    coordinate_search(channels, sigma2, p_budget, &candidates, cfg, |scorer| {
        scorer.best_of(&candidates).map(|(_, c, v)| (c.clone(), v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp_solver::sinr_from_row;
    use crate::linalg::complex_gaussian_matrix;
    use crate::sebo::brute_force_maximize;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn zf_on_identity_is_scaled_identity() {
        let p = zf_precoder(&CMatrix::identity(3, 3), 6.0).unwrap();
        assert!((p.p - CMatrix::identity(3, 3) * c(2f64.sqrt(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zf_nulls_interference_and_normalizes_columns() {
        for seed in 0..50 {
            let mut rng = seeded_rng(seed);
            let h = complex_gaussian_matrix(&mut rng, 2, 4);
            let p = zf_precoder(&h, 3.0).unwrap();
            let hp = &h * &p.p;
            for u in 0..2 {
                assert!((p.p.column(u).norm_squared() - 1.5).abs() < 1e-12);
                for j in 0..2 {
                    if j != u {
                        assert!(hp[(j, u)].norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn zf_matches_normal_equations() {
        let h = complex_gaussian_matrix(&mut seeded_rng(3), 3, 5);
        let gram = &h * h.adjoint();
        let direct = h.adjoint() * gram.try_inverse().unwrap();
        let dirs = zf_directions(&h).unwrap();
        for u in 0..3 {
            let d = direct.column(u) / c(direct.column(u).norm(), 0.0);
            // Same direction: |⟨d, dirs_u⟩| = 1.
            assert!((d.dotc(&dirs.column(u)).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zf_rejects_colliding_channels() {
        let row = [c(1.0, 0.5), c(-0.3, 2.0)];
        let h = CMatrix::from_row_slice(2, 2, &[row[0], row[1], row[0], row[1]]);
        assert!(matches!(zf_precoder(&h, 1.0), Err(Error::RankDeficient { .. })));
        assert!(zf_precoder(&CMatrix::zeros(3, 2), 1.0).is_err());
    }

    #[test]
    fn single_user_metric_is_matched_filter_gain() {
        let antenna = PixelAntenna::surrogate(4, 6, 1);
        let sample = sample_reduced(antenna.n_eff(), 3, 1, &mut seeded_rng(2));
        let b = AntennaCoder::from_index(4, 5);
        let w = antenna.pattern_coder(&b).unwrap();
        let g = effective_channel(&w, &sample[0]).h_eff.norm_squared();
        let m = training_metric(&sample, &b, 10.0, &antenna);
        assert!((m - (1.0 + 10.0 * g).log2()).abs() < 1e-12);
        assert!(training_metric(&sample, &b, 1e-12, &antenna) < 1e-10);
    }

    #[test]
    fn two_user_metric_matches_pipeline() {
        let antenna = PixelAntenna::surrogate(4, 6, 5);
        let sample = sample_reduced(antenna.n_eff(), 3, 2, &mut seeded_rng(6));
        let b = AntennaCoder::from_index(4, 9);
        let w = antenna.pattern_coder(&b).unwrap();
        let rows: Vec<CRow> = sample.iter().map(|h| effective_channel(&w, h).h_eff).collect();
        let h = stack(&rows);
        let direct = h.adjoint() * (&h * h.adjoint()).try_inverse().unwrap();
        let expected: f64 = (0..2)
            .map(|u| {
                let pu = direct.column(u) / c(direct.column(u).norm(), 0.0);
                let g = (rows[u].clone() * pu)[(0, 0)];
                (1.0 + 4.0 * g.norm_sqr()).log2()
            })
            .sum();
        assert!((training_metric(&sample, &b, 4.0, &antenna) - expected).abs() < 1e-10);
    }

    #[test]
    fn codebook_text_round_trip() {
        let cb = FlatCodebook::new(vec!["0101".parse().unwrap(), "1111".parse().unwrap(), "0101".parse().unwrap()]).unwrap();
        let text = cb.to_text();
        assert_eq!(text, "4 3\n0101\n1111\n0101\n");
        assert_eq!(FlatCodebook::parse(&text).unwrap(), cb);
        assert_eq!(cb.duplicates(), 1);
        assert_eq!(cb.quantization_bits(), None);
    }

    #[test]
    fn codebook_parse_errors() {
        assert!(FlatCodebook::parse("4 2\n0101\n").is_err());
        assert!(FlatCodebook::parse("4 1\n01012\n").is_err());
        assert!(FlatCodebook::parse("4 1\n0121\n").is_err());
        assert!(FlatCodebook::parse("0 1\n").is_err());
        assert!(FlatCodebook::parse("4 1\n0101\n1\n").is_err());
        assert!(FlatCodebook::parse("18446744073709551615 18446744073709551615\n").is_err());
    }

    fn small_set(antenna: &PixelAntenna, u: usize, s: usize, seed: u64) -> TrainingSet {
        TrainingSet::generate(antenna.n_eff(), 2, u, s, seed)
    }

    #[test]
    fn single_cell_quantizer_is_global_centroid() {
        let antenna = PixelAntenna::surrogate(5, 6, 2);
        let ts = small_set(&antenna, 2, 40, 1);
        let cfg = LloydConfig { sebo: SeboConfig { block_size: 5, ..Default::default() }, ..Default::default() };
        let out = lloyd_train(&antenna, &ts, 0, &cfg).unwrap();
        assert_eq!(out.codebook.len(), 1);
        let all: Vec<usize> = (0..ts.len()).collect();
        let (_, best) = brute_force_maximize(|b| coder_metric(&antenna, &ts, &all, b, 10.0), 5);
        assert!((out.objective - best).abs() < 1e-12);
    }

    #[test]
    fn lloyd_trace_is_non_decreasing() {
        let antenna = PixelAntenna::surrogate(6, 6, 3);
        let ts = small_set(&antenna, 2, 60, 2);
        for d in [1, 2] {
            let out = lloyd_train(&antenna, &ts, d, &LloydConfig { seed: d as u64, ..Default::default() }).unwrap();
            let t = &out.diagnostics.trace;
            assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{t:?}");
            assert_eq!(out.codebook.quantization_bits(), Some(d));
            assert_eq!(out.assignment.len(), 60);
        }
    }

    #[test]
    fn full_codebook_serves_every_sample_optimally() {
        let antenna = PixelAntenna::surrogate(4, 6, 4);
        let ts = small_set(&antenna, 2, 30, 3);
        let cfg = LloydConfig { centroid: CentroidMode::Exhaustive, ..Default::default() };
        let out = lloyd_train(&antenna, &ts, 4, &cfg).unwrap();
        for (s, sample) in ts.samples.iter().enumerate() {
            let best = (0..16)
                .map(|i| training_metric(sample, &AntennaCoder::from_index(4, i), 10.0, &antenna))
                .fold(f64::NEG_INFINITY, f64::max);
            let got = training_metric(sample, &out.codebook.codewords()[out.assignment[s]], 10.0, &antenna);
            assert!((got - best).abs() < 1e-12, "sample {s}");
        }
    }

    #[test]
    fn lloyd_is_deterministic_and_rejects_oversized_codebooks() {
        let antenna = PixelAntenna::surrogate(4, 6, 4);
        let ts = small_set(&antenna, 1, 20, 5);
        let cfg = LloydConfig { seed: 11, ..Default::default() };
        let a = lloyd_train(&antenna, &ts, 2, &cfg).unwrap();
        let b = lloyd_train(&antenna, &ts, 2, &cfg).unwrap();
        assert_eq!(a.codebook, b.codebook);
        assert!(lloyd_train(&antenna, &ts, 5, &cfg).is_err());
    }

    #[test]
    fn single_codeword_search_converges_immediately() {
        let antenna = PixelAntenna::surrogate(4, 6, 7);
        let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut seeded_rng(1));
        let cb = FlatCodebook::new(vec!["0110".parse().unwrap()]).unwrap();
        let out = flat_search_optimize(&antenna, &chans, &cb, 10.0, &[1.0, 1.0], &SearchConfig::default()).unwrap();
        assert!(out.coders.iter().all(|b| *b == cb.codewords()[0]));
        assert_eq!(out.report.iterations, 1);
        assert!(out.report.evaluations.iter().all(|&e| e == 1));
    }

    #[test]
    fn flat_search_is_monotone_and_counts_evaluations() {
        let antenna = PixelAntenna::surrogate(6, 6, 8);
        let codewords: Vec<AntennaCoder> = (0..16).map(|i| AntennaCoder::from_index(6, i * 3)).collect();
        let cb = FlatCodebook::new(codewords).unwrap();
        for seed in 0..10 {
            let chans = sample_reduced(antenna.n_eff(), 3, 3, &mut seeded_rng(seed));
            let cfg = SearchConfig { seed, ..Default::default() };
            let out = flat_search_optimize(&antenna, &chans, &cb, 10.0, &[1.0; 3], &cfg).unwrap();
            let steps = &out.report.step_objectives;
            assert!(steps.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{steps:?}");
            assert!(out.report.evaluations.iter().all(|&e| e == 16));
            assert!(out.coders.iter().all(|b| cb.codewords().contains(b)));
            let t = &out.report.sum_rate_trace;
            assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{t:?}");
            // Reported rate uses the final ZF precoder and has no leakage.
            let ws: Vec<PatternCoder> = out.coders.iter().map(|b| antenna.pattern_coder(b).unwrap()).collect();
            let rows: Vec<CRow> = ws.iter().zip(&chans).map(|(w, h)| effective_channel(w, h).h_eff).collect();
            assert!((rate_from_rows(&out.precoder, &rows, &[1.0; 3]) - out.report.final_rate()).abs() < 1e-9);
        }
    }

    #[test]
    fn search_with_included_coder_is_at_least_as_good() {
        // Single user: a codebook containing the best coder must find it.
        let antenna = PixelAntenna::surrogate(4, 6, 9);
        let chans = sample_reduced(antenna.n_eff(), 2, 1, &mut seeded_rng(4));
        let all: Vec<AntennaCoder> = (0..16).map(|i| AntennaCoder::from_index(4, i)).collect();
        let rate = |b: &AntennaCoder| {
            let w = antenna.pattern_coder(b).unwrap();
            let h = effective_channel(&w, &chans[0]).h_eff;
            (1.0 + 10.0 * h.norm_squared()).log2()
        };
        let best = all.iter().map(rate).fold(f64::NEG_INFINITY, f64::max);
        let cb = FlatCodebook::new(all).unwrap();
        let out = flat_search_optimize(&antenna, &chans, &cb, 10.0, &[1.0], &SearchConfig::default()).unwrap();
        assert!((out.report.final_rate() - best).abs() < 1e-9);
        assert!(sinr_from_row(&out.precoder, 0, &effective_channel(&antenna.pattern_coder(&out.coders[0]).unwrap(), &chans[0]).h_eff, 1.0) > 0.0);
    }

    #[test]
    fn search_rejects_too_many_users() {
        let antenna = PixelAntenna::surrogate(4, 6, 9);
        let chans = sample_reduced(antenna.n_eff(), 2, 3, &mut seeded_rng(4));
        let cb = FlatCodebook::new(vec![AntennaCoder::zeros(4)]).unwrap();
        assert!(flat_search_optimize(&antenna, &chans, &cb, 1.0, &[1.0; 3], &SearchConfig::default()).is_err());
    }
}
