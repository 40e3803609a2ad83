//! Reference systems: conventional single-pattern users with ZF precoding
//! and water-filling, and ZF precoding alternated with SEBO antenna coding.

use std::time::Instant;

use crate::beamspace::{effective_channel, ReducedChannel};
use crate::codebook::{replaced_row_rate, stack, zf_directions, zf_precoder};
use crate::error::{Error, Result};
use crate::fp_solver::{initial_coders, rate_from_rows, update_iota, CoderInit, Precoder, SolveReport};
use crate::linalg::{derive_seed, CMatrix, CRow, C64};
use crate::port_model::{AntennaCoder, PixelAntenna};
use crate::sebo::{sebo_maximize, SeboConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    /// Water level `μ`; zero when no channel is funded.
    pub water_level: f64,
}

impl PowerAllocation {
    pub fn total(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// `p_u = max(0, μ − 1/g_u)` with `Σ p_u = budget`.
///
/// Channels with non-positive or non-finite gain receive no power.
pub fn water_fill(gains: &[f64], p_budget: f64) -> PowerAllocation {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0 && gains[i].is_finite()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut powers = vec![0.0; gains.len()];
    if order.is_empty() || !(p_budget > 0.0) {
        return PowerAllocation { powers, water_level: 0.0 };
    }
    // Largest active set whose weakest member still sits below the water.
    let mut inv_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (k, &i) in order.iter().enumerate() {
        inv_sum += 1.0 / gains[i];
        let mu = (p_budget + inv_sum) / (k + 1) as f64;
        if mu - 1.0 / gains[i] > 0.0 {
            level = mu;
            active = k + 1;
        } else {
            break;
        }
    }
    for &i in &order[..active] {
        powers[i] = level - 1.0 / gains[i];
    }
    PowerAllocation {
        powers,
        water_level: level,
    }
}

/// Sum rate of users with fixed single-pattern antennas: ZF directions from
/// the `U x N` channel, gains `|h_u p̄_u|²/σ_u²`, water-filled powers.
pub fn conventional_system_rate(h: &CMatrix, p_budget: f64, sigma2: &[f64]) -> Result<f64> {
    if sigma2.len() != h.nrows() {
        return Err(Error::InvalidArgument("need one noise power per user".into()));
    }
    let dirs = zf_directions(h)?;
    let gains: Vec<f64> = (0..h.nrows())
        .map(|u| {
            let g: C64 = (0..h.ncols()).map(|k| h[(u, k)] * dirs[(k, u)]).sum();
            g.norm_sqr() / sigma2[u]
        })
        .collect();
    let alloc = water_fill(&gains, p_budget);
    Ok(gains
        .iter()
        .zip(&alloc.powers)
        .map(|(g, p)| (1.0 + p * g).log2())
        .sum())
}

/// How a candidate coder is scored in the coder step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZfAltScoring {
    /// Sum rate under the ZF precoder re-solved with the candidate's
    /// effective channel.
    ResolvedZf,
    /// Sum rate under the ZF precoder of the previous precoder step,
    /// interference included.
    FixedZf,
}

#[derive(Clone, Debug)]
pub struct ZfAltConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub scoring: ZfAltScoring,
    pub init: CoderInit,
    pub sebo: SeboConfig,
}

impl Default for ZfAltConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tol: 1e-6,
            scoring: ZfAltScoring::ResolvedZf,
            init: CoderInit::GainMatched,
            sebo: SeboConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ZfAltOutcome {
    pub precoder: Precoder,
    pub coders: Vec<AntennaCoder>,
    pub report: SolveReport,
}

/// Alternates (a) uniform-power ZF precoding from the current effective
/// channels with (b) per-user SEBO over the sum rate, other users frozen,
/// candidates scored as set by `cfg.scoring`. Coders start as set by
/// `cfg.init`. A pass whose re-solved ZF rate falls below the previous one
/// is discarded and ends the loop.
pub fn zf_alt_optimize(
    antenna: &PixelAntenna,
    channels: &[ReducedChannel],
    p_budget: f64,
    sigma2: &[f64],
    cfg: &ZfAltConfig,
) -> Result<ZfAltOutcome> {
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
    let q = antenna.q();
    let (mut coders, init_evaluations) = initial_coders(antenna, channels, cfg.init, &cfg.sebo);
    let mut rows: Vec<CRow> = Vec::with_capacity(channels.len());
    for (b, h) in coders.iter().zip(channels) {
        rows.push(effective_channel(&antenna.pattern_coder(b)?, h).h_eff);
    }
    let mut p = zf_precoder(&stack(&rows), p_budget)?;
    let mut rate = rate_from_rows(&p, &rows, sigma2);
    let mut report = SolveReport {
        sum_rate_trace: vec![rate],
        coder_evaluations: init_evaluations,
        ..Default::default()
    };

    for it in 0..cfg.max_iters {
        let mut next_coders = coders.clone();
        let mut next_rows = rows.clone();
        for (u, h) in channels.iter().enumerate() {
            let objective = |bits: &[bool]| match antenna.pattern_coder(&AntennaCoder::from_bits(bits.to_vec())) {
                Ok(w) => {
                    let row = effective_channel(&w, h).h_eff;
                    match cfg.scoring {
                        ZfAltScoring::ResolvedZf => replaced_row_rate(&next_rows, u, &row, sigma2, p_budget),
                        ZfAltScoring::FixedZf => {
                            let mut trial = next_rows.clone();
                            trial[u] = row;
                            rate_from_rows(&p, &trial, sigma2)
                        }
                    }
                }
                Err(_) => f64::NEG_INFINITY,
            };
            let sebo = cfg.sebo.with_seed(derive_seed(cfg.sebo.seed, &[it as u64, u as u64]));
            let out = sebo_maximize(objective, q, &sebo, Some(&next_coders[u]));
            report.coder_evaluations += out.trace.evaluations;
            if out.coder != next_coders[u] {
                let w = antenna.pattern_coder(&out.coder)?;
                next_rows[u] = effective_channel(&w, h).h_eff;
                next_coders[u] = out.coder;
            }
        }
        report.iterations = it + 1;
        let candidate = zf_precoder(&stack(&next_rows), p_budget)
            .ok()
            .map(|np| (rate_from_rows(&np, &next_rows, sigma2), np))
            .filter(|(r, _)| *r >= rate);
        let Some((new_rate, new_p)) = candidate else {
            report.sum_rate_trace.push(rate);
            report.converged = true;
            break;
        };
        coders = next_coders;
        rows = next_rows;
        p = new_p;
        report.sum_rate_trace.push(new_rate);
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
    Ok(ZfAltOutcome {
        precoder: p,
        coders,
        report,
    })
}
