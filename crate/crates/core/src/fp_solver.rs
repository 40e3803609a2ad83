//! Alternating sum-rate maximization over the precoder and the antenna
//! coders, via the quadratic fractional-programming transform.
//!
//! Each outer iteration updates, in order: the auxiliaries `(ι, τ)` in
//! closed form, the precoder by a Lagrangian solve with a bisection on the
//! multiplier, and every user's coder by SEBO on its separable
//! subproblem.

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use crate::beamspace::{effective_channel, ReducedChannel};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, hermitian_eigen, CMatrix, CRow, CVector, C64};
use crate::port_model::{AntennaCoder, PatternCoder, PixelAntenna};
use crate::sebo::{sebo_maximize, SeboConfig};

/// `N x U` precoder; column `u` carries user `u`'s stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder {
    pub p: CMatrix,
}

impl Precoder {
    pub fn zeros(n: usize, u: usize) -> Self {
        Self { p: CMatrix::zeros(n, u) }
    }

    /// Total transmit power `‖P‖_F²`.
    pub fn power(&self) -> f64 {
        self.p.norm_squared()
    }

    pub fn column(&self, u: usize) -> CVector {
        self.p.column(u).into_owned()
    }

    pub fn n_tx(&self) -> usize {
        self.p.nrows()
    }

    pub fn users(&self) -> usize {
        self.p.ncols()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FpAuxiliaries {
    pub iota: Vec<f64>,
    pub tau: Vec<C64>,
}

/// SINR of user `u` given its effective channel row `h_u = w_uᴴ H̄_u`.
pub fn sinr_from_row(p: &Precoder, u: usize, h_u: &CRow, sigma2: f64) -> f64 {
    let gains = h_u * &p.p;
    let signal = gains[u].norm_sqr();
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != u)
        .map(|(_, g)| g.norm_sqr())
        .sum();
    signal / (interference + sigma2)
}

/// `γ_u = |w_uᴴH̄_u p_u|² / (Σ_{j≠u} |w_uᴴH̄_u p_j|² + σ_u²)`.
pub fn sinr(p: &Precoder, u: usize, w_u: &PatternCoder, h_bar_u: &ReducedChannel, sigma2: f64) -> f64 {
    sinr_from_row(p, u, &effective_channel(w_u, h_bar_u).h_eff, sigma2)
}

pub fn rate_from_rows(p: &Precoder, rows: &[CRow], sigma2: &[f64]) -> f64 {
    rows.iter()
        .enumerate()
        .map(|(u, h)| (1.0 + sinr_from_row(p, u, h, sigma2[u])).log2())
        .sum()
}

/// `R(P, B) = Σ_u log₂(1 + γ_u)` in bit/s/Hz.
pub fn sum_rate(p: &Precoder, coders: &[PatternCoder], channels: &[ReducedChannel], sigma2: &[f64]) -> f64 {
    rate_from_rows(p, &effective_rows(coders, channels), sigma2)
}

pub fn effective_rows(coders: &[PatternCoder], channels: &[ReducedChannel]) -> Vec<CRow> {
    coders
        .iter()
        .zip(channels)
        .map(|(w, h)| effective_channel(w, h).h_eff)
        .collect()
}

/// Closed-form `ι_u = γ_u`.
pub fn update_iota(p: &Precoder, rows: &[CRow], sigma2: &[f64]) -> Vec<f64> {
    rows.iter()
        .enumerate()
        .map(|(u, h)| sinr_from_row(p, u, h, sigma2[u]))
        .collect()
}

/// Closed-form `τ_u = √(1+ι_u) h_u p_u / (Σ_p |h_u p_p|² + σ_u²)`.
pub fn update_tau(p: &Precoder, rows: &[CRow], sigma2: &[f64], iota: &[f64]) -> Vec<C64> {
    rows.iter()
        .enumerate()
        .map(|(u, h)| {
            let gains = h * &p.p;
            let total: f64 = gains.iter().map(|g| g.norm_sqr()).sum::<f64>() + sigma2[u];
            gains[u] * ((1.0 + iota[u]).sqrt() / total)
        })
        .collect()
}

/// FP surrogate `R̃(P, B, ι, τ)` expressed in bits.
///
/// Log and linear terms are both in nats before the final scaling, which
/// keeps `ι = γ` the exact maximizer and `max_{ι,τ} R̃ = R`.
pub fn surrogate(p: &Precoder, rows: &[CRow], sigma2: &[f64], aux: &FpAuxiliaries) -> f64 {
    let nats: f64 = rows
        .iter()
        .enumerate()
        .map(|(u, h)| {
            let gains = h * &p.p;
            let total: f64 = gains.iter().map(|g| g.norm_sqr()).sum::<f64>() + sigma2[u];
            let (iota, tau) = (aux.iota[u], aux.tau[u]);
            (1.0 + iota).ln() - iota + 2.0 * (1.0 + iota).sqrt() * (tau.conj() * gains[u]).re
                - tau.norm_sqr() * total
        })
        .sum();
    nats / LN_2
}

#[derive(Clone, Debug)]
pub struct PrecoderUpdate {
    pub precoder: Precoder,
    /// Lagrange multiplier of the power constraint (0 when inactive).
    pub mu: f64,
    pub binding: bool,
}

const MU_START: f64 = 1e-12;
const MU_LIMIT: f64 = 1e12;
const MAX_BISECTIONS: usize = 400;

/// Maximizes `Σ_u 2Re{a_uᴴp_u} − p_uᴴ A p_u` subject to `‖P‖_F² ≤ budget`,
/// with `A = Σ_p |τ_p|² h_pᴴh_p` and `a_u = √(1+ι_u) τ_u h_uᴴ`.
///
/// `A` is diagonalized once, after which `‖P(μ)‖²` is a scalar function of
/// `μ`. A binding solution is returned from the feasible side of the
/// bisection, so the budget is never exceeded.
pub fn update_precoder(
    rows: &[CRow],
    aux: &FpAuxiliaries,
    p_budget: f64,
    bisect_tol: f64,
) -> Result<PrecoderUpdate> {
    let u_count = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    let mut a_mat = CMatrix::zeros(n, n);
    let mut rhs = CMatrix::zeros(n, u_count);
    for (u, h) in rows.iter().enumerate() {
        let h_col = h.adjoint();
        a_mat += (&h_col * h) * C64::new(aux.tau[u].norm_sqr(), 0.0);
        rhs.set_column(u, &(h_col * (aux.tau[u] * (1.0 + aux.iota[u]).sqrt())));
    }
    // Exact Hermitian symmetry before the eigen-solve.
    let a_mat = (&a_mat + a_mat.adjoint()) * C64::new(0.5, 0.0);

    let (lambda, basis) = hermitian_eigen(&a_mat).ok_or(Error::NonFinite("precoder normal matrix"))?;
    let lambda: Vec<f64> = lambda.into_iter().map(|l| l.max(0.0)).collect();
    let coeff = basis.ad_mul(&rhs);
    let energy: Vec<f64> = (0..n)
        .map(|i| coeff.row(i).iter().map(|c| c.norm_sqr()).sum())
        .collect();
    let total_energy: f64 = energy.iter().sum();

    let build = |mu: f64, null: &[bool]| {
        let mut scaled = coeff.clone();
        for i in 0..n {
            let f = if null[i] { 0.0 } else { 1.0 / (lambda[i] + mu) };
            scaled.row_mut(i).iter_mut().for_each(|c| *c *= f);
        }
        Precoder { p: &basis * scaled }
    };
    let no_null = vec![false; n];
    let power = |mu: f64| -> f64 {
        (0..n)
            .map(|i| energy[i] / (lambda[i] + mu).powi(2))
            .sum()
    };

    if total_energy == 0.0 {
        return Ok(PrecoderUpdate {
            precoder: Precoder::zeros(n, u_count),
            mu: 0.0,
            binding: false,
        });
    }

    let lambda_max = lambda.iter().copied().fold(0.0, f64::max);
    let null: Vec<bool> = lambda.iter().map(|&l| l <= 1e-12 * lambda_max).collect();
    let null_energy: f64 = (0..n).filter(|&i| null[i]).map(|i| energy[i]).sum();
    if null_energy <= 1e-24 * total_energy {
        let pinv_power: f64 = (0..n)
            .filter(|&i| !null[i])
            .map(|i| energy[i] / lambda[i].powi(2))
            .sum();
        if pinv_power <= p_budget {
            return Ok(PrecoderUpdate {
                precoder: build(0.0, &null),
                mu: 0.0,
                binding: false,
            });
        }
    }

    let mut hi = MU_START;
    while power(hi) > p_budget {
        hi *= 2.0;
        if hi > MU_LIMIT {
            return Err(Error::BisectionBracket { limit: MU_LIMIT });
        }
    }
    let mut lo = if hi == MU_START { 0.0 } else { hi / 2.0 };
    for _ in 0..MAX_BISECTIONS {
        if p_budget - power(hi) <= bisect_tol * p_budget {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if power(mid) > p_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PrecoderUpdate {
        precoder: build(hi, &no_null),
        mu: hi,
        binding: true,
    })
}

/// Per-user coder subproblem data: `Q_u = |τ_u|² H̄_u P Pᴴ H̄_uᴴ` and
/// `q_u = √(1+ι_u) τ_u* H̄_u p_u`.
pub fn coder_subproblem(h_bar: &ReducedChannel, p: &Precoder, u: usize, aux: &FpAuxiliaries) -> (CMatrix, CVector) {
    let g = &h_bar.h_bar * &p.p;
    let q_mat = (&g * g.adjoint()) * C64::new(aux.tau[u].norm_sqr(), 0.0);
    let q_vec = g.column(u) * (aux.tau[u].conj() * (1.0 + aux.iota[u]).sqrt());
    (q_mat, q_vec)
}

/// `2Re{wᴴq} − wᴴQw`.
pub fn coder_objective(w: &PatternCoder, q_mat: &CMatrix, q_vec: &CVector) -> f64 {
    let w = w.w();
    2.0 * w.dotc(q_vec).re - w.dotc(&(q_mat * w)).re
}

#[derive(Clone, Debug)]
pub struct CoderUpdate {
    pub coders: Vec<AntennaCoder>,
    pub patterns: Vec<PatternCoder>,
    pub evaluations: usize,
}

/// Runs SEBO on every user's separable coder subproblem, starting from the
/// current coder. A candidate that would lower the objective is discarded.
pub fn update_coders(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    p: &Precoder,
    aux: &FpAuxiliaries,
    current: &[AntennaCoder],
    current_w: &[PatternCoder],
    sebo: &SeboConfig,
) -> Result<CoderUpdate> {
    let mut coders = Vec::with_capacity(current.len());
    let mut patterns = Vec::with_capacity(current.len());
    let mut evaluations = 0;
    for (u, h) in channels.iter().enumerate() {
        let (q_mat, q_vec) = coder_subproblem(h, p, u, aux);
        let objective = |bits: &[bool]| match antenna.pattern_coder(&AntennaCoder::from_bits(bits.to_vec())) {
            Ok(w) => coder_objective(&w, &q_mat, &q_vec),
            Err(_) => f64::NEG_INFINITY,
        };
        let cfg = sebo.with_seed(derive_seed(sebo.seed, &[u as u64]));
        let out = sebo_maximize(objective, antenna.q(), &cfg, Some(&current[u]));
        evaluations += out.trace.evaluations;
        let old = coder_objective(&current_w[u], &q_mat, &q_vec);
        if out.value >= old && out.coder != current[u] {
            patterns.push(antenna.pattern_coder(&out.coder)?);
            coders.push(out.coder);
        } else {
            patterns.push(current_w[u].clone());
            coders.push(current[u].clone());
        }
    }
    Ok(CoderUpdate {
        coders,
        patterns,
        evaluations,
    })
}

/// Matched-filter precoder `p_u ∝ h_uᴴ` scaled to the full budget.
pub fn matched_filter(rows: &[CRow], p_budget: f64) -> Precoder {
    let n = rows.first().map_or(0, |r| r.len());
    let mut p = CMatrix::zeros(n, rows.len());
    for (u, h) in rows.iter().enumerate() {
        p.set_column(u, &h.adjoint());
    }
    let norm2 = p.norm_squared();
    if norm2 > 0.0 {
        p *= C64::new((p_budget / norm2).sqrt(), 0.0);
    }
    Precoder { p }
}

/// Starting antenna coders of the alternating designs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoderInit {
    /// All switches closed.
    Zeros,
    /// Each user's coder maximizes its own channel gain `‖w(b)ᴴH̄_u‖²`.
    GainMatched,
}

/// SEBO-maximized `‖w(b)ᴴH̄_u‖²` per user, with the evaluations spent.
pub fn gain_matched_coders(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    sebo: &SeboConfig,
) -> (Vec<AntennaCoder>, usize) {
    let mut evaluations = 0;
    let coders = channels
        .iter()
        .enumerate()
        .map(|(u, h)| {
            let gain = |bits: &[bool]| match antenna.pattern_coder(&AntennaCoder::from_bits(bits.to_vec())) {
                Ok(w) => effective_channel(&w, h).h_eff.norm_squared(),
                Err(_) => f64::NEG_INFINITY,
            };
            let cfg = sebo.with_seed(derive_seed(sebo.seed, &[u64::MAX, u as u64]));
            let out = sebo_maximize(gain, antenna.q(), &cfg, None);
            evaluations += out.trace.evaluations;
            out.coder
        })
        .collect();
    (coders, evaluations)
}

pub(crate) fn initial_coders(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    init: CoderInit,
    sebo: &SeboConfig,
) -> (Vec<AntennaCoder>, usize) {
    match init {
        CoderInit::Zeros => (vec![AntennaCoder::zeros(antenna.q()); channels.len()], 0),
        CoderInit::GainMatched => gain_matched_coders(antenna, channels, sebo),
    }
}

#[derive(Clone, Debug)]
pub struct FpConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub bisect_tol: f64,
    pub init: CoderInit,
    pub sebo: SeboConfig,
}

impl Default for FpConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-6,
            bisect_tol: 1e-8,
            init: CoderInit::GainMatched,
            sebo: SeboConfig::default(),
        }
    }
}

/// Surrogate and power bookkeeping for one outer iteration.
#[derive(Clone, Debug)]
pub struct IterationDiagnostics {
    /// True sum rate entering the iteration.
    pub rate_before: f64,
    /// Surrogate after the `(ι, τ)` update; equals `rate_before` when tight.
    pub surrogate_after_aux: f64,
    pub surrogate_after_precoder: f64,
    pub surrogate_after_coders: f64,
    /// Power of the solved precoder, whether or not it was applied.
    pub precoder_power: f64,
    pub binding: bool,
    /// The solved precoder scored below the previous one and was discarded.
    pub precoder_kept: bool,
    pub rate_after: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    /// Sum rate at initialization followed by one entry per outer iteration.
    pub sum_rate_trace: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
    pub sinrs: Vec<f64>,
    pub converged: bool,
    /// Objective evaluations spent on antenna coders, over all users and
    /// iterations.
    pub coder_evaluations: usize,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl SolveReport {
    pub fn final_rate(&self) -> f64 {
        self.sum_rate_trace.last().copied().unwrap_or(0.0)
    }

    /// Coder evaluations per user per outer iteration.
    pub fn evaluations_per_user_iteration(&self, users: usize) -> f64 {
        if self.iterations == 0 || users == 0 {
            0.0
        } else {
            self.coder_evaluations as f64 / (self.iterations * users) as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub precoder: Precoder,
    pub coders: Vec<AntennaCoder>,
    pub report: SolveReport,
}

/// Alternates `ι → τ → P → B` until the relative sum-rate gain falls below
/// `cfg.rel_tol`. Coders start as set by `cfg.init`; the precoder starts as
/// a full-power matched filter.
pub fn fp_alternate(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    sigma2: &[f64],
    p_budget: f64,
    cfg: &FpConfig,
) -> Result<Solution> {
    check_dimensions(antenna, channels, sigma2)?;
    let (coders, evaluations) = initial_coders(antenna, channels, cfg.init, &cfg.sebo);
    let mut sol = fp_alternate_from(antenna, channels, sigma2, p_budget, cfg, coders, None)?;
    sol.report.coder_evaluations += evaluations;
    Ok(sol)
}

/// [`fp_alternate`] from given coders and, optionally, a feasible precoder
/// (the full-power matched filter otherwise).
pub fn fp_alternate_from(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    sigma2: &[f64],
    p_budget: f64,
    cfg: &FpConfig,
    coders: Vec<AntennaCoder>,
    precoder: Option<Precoder>,
) -> Result<Solution> {
    let start = Instant::now();
    check_dimensions(antenna, channels, sigma2)?;
    if coders.len() != channels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} initial coders for {} users",
            coders.len(),
            channels.len()
        )));
    }
    let mut coders = coders;
    let mut patterns = coders
        .iter()
        .map(|b| antenna.pattern_coder(b))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = effective_rows(&patterns, channels);
    let mut p = match precoder {
        Some(p) if p.p.shape() == (channels[0].n_tx(), channels.len()) && p.power() <= p_budget * (1.0 + 1e-12) => p,
        Some(_) => return Err(Error::InvalidArgument("initial precoder has wrong shape or exceeds the budget".into())),
        None => matched_filter(&rows, p_budget),
    };

    let mut rate = rate_from_rows(&p, &rows, sigma2);
    let mut report = SolveReport {
        sum_rate_trace: vec![rate],
        ..Default::default()
    };

    for it in 0..cfg.max_iters {
        let mut aux = FpAuxiliaries {
            iota: update_iota(&p, &rows, sigma2),
            tau: Vec::new(),
        };
        aux.tau = update_tau(&p, &rows, sigma2, &aux.iota);
        let surrogate_after_aux = surrogate(&p, &rows, sigma2, &aux);

        let upd = update_precoder(&rows, &aux, p_budget, cfg.bisect_tol)?;
        let precoder_power = upd.precoder.power();
        let candidate = surrogate(&upd.precoder, &rows, sigma2, &aux);
        // The bisection stops slightly inside the budget; keep the previous
        // precoder if that costs surrogate value.
        let precoder_kept = candidate < surrogate_after_aux;
        if !precoder_kept {
            p = upd.precoder;
        }
        let surrogate_after_precoder = candidate.max(surrogate_after_aux);

        let sebo = cfg.sebo.with_seed(derive_seed(cfg.sebo.seed, &[it as u64]));
        let cu = update_coders(antenna, channels, &p, &aux, &coders, &patterns, &sebo)?;
        report.coder_evaluations += cu.evaluations;
        coders = cu.coders;
        patterns = cu.patterns;
        rows = effective_rows(&patterns, channels);
        let surrogate_after_coders = surrogate(&p, &rows, sigma2, &aux);

        let new_rate = rate_from_rows(&p, &rows, sigma2);
        report.diagnostics.push(IterationDiagnostics {
            rate_before: rate,
            surrogate_after_aux,
            surrogate_after_precoder,
            surrogate_after_coders,
            precoder_power,
            binding: upd.binding,
            precoder_kept,
            rate_after: new_rate,
        });
        report.sum_rate_trace.push(new_rate);
        report.iterations = it + 1;
        let gain = new_rate - rate;
        let prev = rate;
        rate = new_rate;
        if !(gain >= cfg.rel_tol * prev.abs()) {
            report.converged = true;
            break;
        }
    }

    report.sinrs = update_iota(&p, &rows, sigma2);
    report.wall_time = start.elapsed();
    Ok(Solution {
        precoder: p,
        coders,
        report,
    })
}

pub(crate) fn check_dimensions(antenna: &PixelAntenna, channels: &[ReducedChannel], sigma2: &[f64]) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("need at least one user".into()));
    }
    if sigma2.len() != channels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} noise powers for {} users",
            sigma2.len(),
            channels.len()
        )));
    }
    if sigma2.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("noise powers must be positive".into()));
    }
    let n = channels[0].n_tx();
    for h in channels {
        if h.n_eff() != antenna.n_eff() || h.n_tx() != n {
            return Err(Error::InvalidArgument(format!(
                "channel is {}x{}, expected {}x{n}",
                h.n_eff(),
                h.n_tx(),
                antenna.n_eff()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamspace::sample_reduced;
    use crate::linalg::{complex_gaussian_matrix, seeded_rng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn unit_coder(n: usize, i: usize) -> PatternCoder {
        let mut w = CVector::zeros(n);
        w[i] = c(1.0, 0.0);
        PatternCoder::from_unnormalized(w).unwrap()
    }

    #[test]
    fn single_user_sinr_has_no_interference() {
        let h = ReducedChannel {
            h_bar: CMatrix::from_row_slice(1, 2, &[c(1.0, 1.0), c(0.0, 2.0)]),
            user_index: 0,
        };
        let p = Precoder { p: CMatrix::from_column_slice(2, 1, &[c(0.5, 0.0), c(0.0, -1.0)]) };
        // h p = (1+i)0.5 + (2i)(-i) = 0.5 + 0.5i + 2 = 2.5 + 0.5i -> |.|² = 6.5
        let g = sinr(&p, 0, &unit_coder(1, 0), &h, 2.0);
        assert!((g - 3.25).abs() < 1e-14);
    }

    #[test]
    fn null_beam_has_zero_sinr() {
        let row = CRow::from_row_slice(&[c(1.0, 0.0), c(1.0, 0.0)]);
        let p = Precoder { p: CMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(-1.0, 0.0)]) };
        assert_eq!(sinr_from_row(&p, 0, &row, 1.0), 0.0);
    }

    #[test]
    fn two_user_sinr_hand_computed() {
        let rows = vec![
            CRow::from_row_slice(&[c(1.0, 0.0), c(0.0, 1.0)]),
            CRow::from_row_slice(&[c(2.0, 0.0), c(1.0, -1.0)]),
        ];
        let p = Precoder {
            p: CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(1.0, 0.0)]),
        };
        // user 0: h0 p0 = 1 + i -> 2 ; h0 p1 = i + i = 2i -> 4 ; γ0 = 2/(4+1)
        // user 1: h1 p1 = 2i + 1 - i = 1 + i -> 2 ; h1 p0 = 2 + 1 - i = 3 - i -> 10 ; γ1 = 2/(10+1)
        assert!((sinr_from_row(&p, 0, &rows[0], 1.0) - 0.4).abs() < 1e-14);
        assert!((sinr_from_row(&p, 1, &rows[1], 1.0) - 2.0 / 11.0).abs() < 1e-14);
        let r = rate_from_rows(&p, &rows, &[1.0, 1.0]);
        assert!((r - (1.4f64.log2() + (13.0f64 / 11.0).log2())).abs() < 1e-14);
    }

    #[test]
    fn sum_rate_edge_cases() {
        let rows = vec![CRow::from_row_slice(&[c(1.0, 0.0)])];
        assert_eq!(rate_from_rows(&Precoder::zeros(1, 1), &rows, &[1.0]), 0.0);
        let p = Precoder { p: CMatrix::from_element(1, 1, c(1.0, 0.0)) };
        assert!((rate_from_rows(&p, &rows, &[1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sum_rate_recomposes_from_sinr() {
        let mut rng = seeded_rng(4);
        let chans = sample_reduced(3, 2, 2, &mut rng);
        let ws = vec![unit_coder(3, 0), unit_coder(3, 2)];
        let p = Precoder { p: complex_gaussian_matrix(&mut rng, 2, 2) };
        let direct: f64 = (0..2).map(|u| (1.0 + sinr(&p, u, &ws[u], &chans[u], 1.0)).log2()).sum();
        assert!((sum_rate(&p, &ws, &chans, &[1.0, 1.0]) - direct).abs() < 1e-14);
    }

    #[test]
    fn zero_precoder_gives_zero_auxiliaries() {
        let rows = vec![CRow::from_row_slice(&[c(1.0, 2.0), c(0.5, 0.0)])];
        let p = Precoder::zeros(2, 1);
        let iota = update_iota(&p, &rows, &[1.0]);
        assert_eq!(iota, vec![0.0]);
        let tau = update_tau(&p, &rows, &[1.0], &iota);
        assert_eq!(tau, vec![c(0.0, 0.0)]);
    }

    #[test]
    fn scalar_tau_hand_computed() {
        let rows = vec![CRow::from_row_slice(&[c(2.0, 0.0)])];
        let p = Precoder { p: CMatrix::from_element(1, 1, c(0.0, 1.0)) };
        let iota = update_iota(&p, &rows, &[1.0]);
        assert!((iota[0] - 4.0).abs() < 1e-15);
        let tau = update_tau(&p, &rows, &[1.0], &iota);
        // √5 · 2i / (4 + 1)
        assert!((tau[0] - c(0.0, 2.0 * 5f64.sqrt() / 5.0)).norm() < 1e-15);
        assert_eq!(tau, update_tau(&p, &rows, &[1.0], &iota));
    }

    #[test]
    fn surrogate_is_tight_after_aux_update() {
        for seed in 0..20 {
            let mut rng = seeded_rng(seed);
            let rows: Vec<CRow> = (0..3).map(|_| complex_gaussian_matrix(&mut rng, 1, 4).row(0).into_owned()).collect();
            let p = Precoder { p: complex_gaussian_matrix(&mut rng, 4, 3) };
            let s2 = [1.0, 0.5, 2.0];
            let iota = update_iota(&p, &rows, &s2);
            let tau = update_tau(&p, &rows, &s2, &iota);
            let aux = FpAuxiliaries { iota, tau };
            let r = rate_from_rows(&p, &rows, &s2);
            assert!((surrogate(&p, &rows, &s2, &aux) - r).abs() < 1e-9);
            // Any other auxiliaries give a lower value.
            let mut other = aux.clone();
            other.iota[0] *= 1.3;
            other.tau[1] *= c(0.9, 0.1);
            assert!(surrogate(&p, &rows, &s2, &other) <= r + 1e-12);
        }
    }

    #[test]
    fn inactive_constraint_returns_unconstrained_solution() {
        // A = I (τ = 1 for both users, rows are unit vectors), a_u small.
        let rows = vec![
            CRow::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
            CRow::from_row_slice(&[c(0.0, 0.0), c(1.0, 0.0)]),
        ];
        let aux = FpAuxiliaries { iota: vec![0.0, 0.0], tau: vec![c(1.0, 0.0), c(1.0, 0.0)] };
        let upd = update_precoder(&rows, &aux, 10.0, 1e-8).unwrap();
        assert!(!upd.binding);
        assert_eq!(upd.mu, 0.0);
        assert!((upd.precoder.p.clone() - CMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn binding_constraint_meets_budget() {
        let rows = vec![
            CRow::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
            CRow::from_row_slice(&[c(0.0, 0.0), c(1.0, 0.0)]),
        ];
        let aux = FpAuxiliaries { iota: vec![3.0, 8.0], tau: vec![c(1.0, 0.0), c(0.0, 1.0)] };
        let upd = update_precoder(&rows, &aux, 0.5, 1e-8).unwrap();
        assert!(upd.binding);
        let pw = upd.precoder.power();
        assert!(pw <= 0.5);
        assert!((pw - 0.5).abs() / 0.5 < 1e-6);
        // KKT: p_u = (A + μI)⁻¹ a_u holds for the returned μ.
        let a = CMatrix::identity(2, 2) * c(1.0 + upd.mu, 0.0);
        let a0 = CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        let residual = &a * upd.precoder.column(0) - a0;
        assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn zero_targets_give_zero_precoder() {
        let rows = vec![CRow::from_row_slice(&[c(1.0, 0.0), c(2.0, 0.0)])];
        let aux = FpAuxiliaries { iota: vec![0.0], tau: vec![c(0.0, 0.0)] };
        let upd = update_precoder(&rows, &aux, 1.0, 1e-8).unwrap();
        assert_eq!(upd.precoder.p, CMatrix::zeros(2, 1));
    }

    #[test]
    fn rank_deficient_normal_matrix_uses_pseudo_inverse() {
        // One user, two antennas: A has rank one, a lies in its range.
        let rows = vec![CRow::from_row_slice(&[c(1.0, 0.0), c(1.0, 0.0)])];
        let aux = FpAuxiliaries { iota: vec![0.0], tau: vec![c(0.1, 0.0)] };
        let upd = update_precoder(&rows, &aux, 1e6, 1e-8).unwrap();
        assert!(!upd.binding);
        // A = 0.01 hᴴh, a = 0.1 hᴴ: p = a / (0.01 ‖h‖²) along hᴴ.
        let expected = CVector::from_vec(vec![c(5.0, 0.0), c(5.0, 0.0)]);
        assert!((upd.precoder.column(0) - expected).norm() < 1e-9);
    }

    #[test]
    fn coder_objective_matches_surrogate_difference() {
        let antenna = PixelAntenna::surrogate(4, 6, 3);
        let mut rng = seeded_rng(9);
        let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut rng);
        let p = Precoder { p: complex_gaussian_matrix(&mut rng, 2, 2) };
        let ws: Vec<PatternCoder> = (0..2).map(|u| antenna.pattern_coder(&AntennaCoder::from_index(4, u + 3)).unwrap()).collect();
        let rows = effective_rows(&ws, &chans);
        let iota = update_iota(&p, &rows, &[1.0, 1.0]);
        let tau = update_tau(&p, &rows, &[1.0, 1.0], &iota);
        let aux = FpAuxiliaries { iota, tau };
        // Changing user 0's coder changes the surrogate by exactly the change
        // in user 0's coder objective (in nats).
        let alt = antenna.pattern_coder(&AntennaCoder::from_index(4, 11)).unwrap();
        let (qm, qv) = coder_subproblem(&chans[0], &p, 0, &aux);
        let d_obj = coder_objective(&alt, &qm, &qv) - coder_objective(&ws[0], &qm, &qv);
        let mut ws2 = ws.clone();
        ws2[0] = alt;
        let rows2 = effective_rows(&ws2, &chans);
        let d_sur = (surrogate(&p, &rows2, &[1.0, 1.0], &aux) - surrogate(&p, &rows, &[1.0, 1.0], &aux)) * LN_2;
        assert!((d_obj - d_sur).abs() < 1e-10);
    }

    #[test]
    fn coder_update_matches_enumeration_for_full_block() {
        let antenna = PixelAntenna::surrogate(6, 6, 12);
        let mut rng = seeded_rng(10);
        let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut rng);
        let p = Precoder { p: complex_gaussian_matrix(&mut rng, 2, 2) };
        let coders = vec![AntennaCoder::zeros(6); 2];
        let ws: Vec<PatternCoder> = coders.iter().map(|b| antenna.pattern_coder(b).unwrap()).collect();
        let rows = effective_rows(&ws, &chans);
        let iota = update_iota(&p, &rows, &[1.0, 1.0]);
        let tau = update_tau(&p, &rows, &[1.0, 1.0], &iota);
        let aux = FpAuxiliaries { iota, tau };
        let sebo = SeboConfig { block_size: 6, ..Default::default() };
        let upd = update_coders(&antenna, &chans, &p, &aux, &coders, &ws, &sebo).unwrap();
        for (u, chan) in chans.iter().enumerate() {
            let (qm, qv) = coder_subproblem(chan, &p, u, &aux);
            let f = |bits: &[bool]| coder_objective(&antenna.pattern_coder(&AntennaCoder::from_bits(bits.to_vec())).unwrap(), &qm, &qv);
            let (_, best) = crate::sebo::brute_force_maximize(f, 6);
            assert_eq!(coder_objective(&upd.patterns[u], &qm, &qv), best);
        }
        // Re-running from the optimum changes nothing.
        let again = update_coders(&antenna, &chans, &p, &aux, &upd.coders, &upd.patterns, &sebo).unwrap();
        assert_eq!(again.coders, upd.coders);
    }

    #[test]
    fn linear_objective_is_maximized_when_quadratic_term_vanishes() {
        let antenna = PixelAntenna::surrogate(4, 5, 2);
        let target = antenna.pattern_coder(&AntennaCoder::from_index(4, 9)).unwrap();
        let qm = CMatrix::zeros(antenna.n_eff(), antenna.n_eff());
        let qv = target.w().clone();
        let f = |bits: &[bool]| coder_objective(&antenna.pattern_coder(&AntennaCoder::from_bits(bits.to_vec())).unwrap(), &qm, &qv);
        let out = sebo_maximize(f, 4, &SeboConfig { block_size: 4, ..Default::default() }, None);
        assert!((out.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_iteration_when_tolerance_is_infinite() {
        let antenna = PixelAntenna::surrogate(4, 6, 1);
        let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut seeded_rng(3));
        let cfg = FpConfig { rel_tol: f64::INFINITY, ..Default::default() };
        let sol = fp_alternate(&antenna, &chans, &[1.0, 1.0], 10.0, &cfg).unwrap();
        assert_eq!(sol.report.iterations, 1);
        assert_eq!(sol.report.sum_rate_trace.len(), 2);
    }

    #[test]
    fn alternation_is_monotone_and_feasible() {
        let antenna = PixelAntenna::surrogate(6, 8, 4);
        for seed in 0..10 {
            let chans = sample_reduced(antenna.n_eff(), 2, 2, &mut seeded_rng(seed));
            let sol = fp_alternate(&antenna, &chans, &[1.0, 1.0], 10.0, &FpConfig::default()).unwrap();
            let t = &sol.report.sum_rate_trace;
            assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{t:?}");
            assert!(sol.precoder.power() <= 10.0 + 1e-9);
            for d in &sol.report.diagnostics {
                assert!((d.surrogate_after_aux - d.rate_before).abs() < 1e-9);
                assert!(d.surrogate_after_precoder >= d.surrogate_after_aux - 1e-9);
                assert!(d.surrogate_after_coders >= d.surrogate_after_precoder - 1e-9);
                assert!(d.rate_after >= d.surrogate_after_coders - 1e-9);
            }
        }
    }

    #[test]
    fn single_user_reaches_exhaustive_coder_optimum() {
        // For N = U = 1 the global optimum is the best coder with full-power
        // matched filtering. Gain-matched initialization with a full block
        // finds it and the alternation never leaves it.
        let antenna = PixelAntenna::surrogate(4, 6, 8);
        for seed in 0..50 {
            let chans = sample_reduced(antenna.n_eff(), 1, 1, &mut seeded_rng(seed));
            let cfg = FpConfig { sebo: SeboConfig { block_size: 4, ..Default::default() }, ..Default::default() };
            let sol = fp_alternate(&antenna, &chans, &[1.0], 10.0, &cfg).unwrap();
            let rate_of = |i: u64| {
                let w = antenna.pattern_coder(&AntennaCoder::from_index(4, i)).unwrap();
                let h = effective_channel(&w, &chans[0]).h_eff;
                (1.0 + 10.0 * h.norm_squared()).log2()
            };
            let best = (0..16).map(rate_of).fold(f64::NEG_INFINITY, f64::max);
            let got = sol.report.final_rate();
            assert!(got <= best + 1e-9);
            assert!(got >= rate_of(0) - 1e-9);
            let own = rate_of(
                (0..4).fold(0u64, |acc, i| acc | ((sol.coders[0].bits()[i] as u64) << i)),
            );
            assert!((got - own).abs() < 1e-6 * own);
            assert!(got >= best - 1e-6 * best, "seed {seed}: {got} < {best}");
        }
    }
}
