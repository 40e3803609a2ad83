//! Seeded Monte Carlo sweeps over SNR, codebook training commands and CSV
//! output.
//!
//! Every random draw is derived from the master seed: trial `t` at SNR
//! point `i` uses the stream `derive_seed(seed, [i, t])`, so results do not
//! depend on the number of worker threads. The noise power is 1 for every
//! user, so the SNR sets the transmit power budget directly.

pub mod config;
pub mod csv;

use std::path::Path;
use std::time::Instant;

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::baseline::{conventional_system_rate, zf_alt_optimize, ZfAltConfig};
use crate::beamspace::sample_reduced;
use crate::codebook::{
    flat_search_optimize, lloyd_train, CentroidMode, FlatCodebook, LloydConfig, LloydOutcome, SearchConfig,
    TrainingSet,
};
use crate::error::{Error, Result};
use crate::fp_solver::{fp_alternate, FpConfig};
use crate::hierarchy::{build_hierarchy, hierarchical_search_optimize, HierarchicalCodebook, HierarchyBuild};
use crate::linalg::{complex_gaussian_matrix, derive_seed, seeded_rng};
use crate::port_model::{PixelAntenna, PortModel};
use crate::sebo::SeboConfig;

pub use config::{Algorithm, AntennaSource, ExperimentConfig};
pub use csv::{format_g9, to_csv, HEADER};

const TAG_TRAINING_SET: u64 = 0x7472_6169_6e00_0001;
const TAG_LLOYD: u64 = 0x7472_6169_6e00_0002;
const TAG_SOLVER: u64 = 0x736f_6c76_6572;

/// Aggregate over the trials of one SNR point.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    /// Mean sum rate in bit/s/Hz.
    pub mean_rate: f64,
    /// Standard error of the mean sum rate.
    pub stderr: f64,
    /// Mean solve wall time in seconds; 0 unless timing is enabled.
    pub mean_time_s: f64,
    /// Mean candidate coder evaluations per user per outer iteration.
    pub evals: f64,
}

/// Outcome of one channel draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialResult {
    pub rate: f64,
    pub time_s: f64,
    pub evals: f64,
}

pub fn snr_to_power(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

pub fn load_antenna(cfg: &ExperimentConfig) -> Result<PixelAntenna> {
    let model = match &cfg.antenna {
        AntennaSource::Surrogate { seed } => PortModel::synthesize_surrogate(cfg.q, cfg.k, *seed),
        AntennaSource::File(path) => {
            let m = PortModel::load(path)?;
            if m.q() != cfg.q || m.k() != cfg.k {
                return Err(Error::Config(format!(
                    "port model {} has q={} k={}, but the configuration says q={} k={}",
                    path.display(),
                    m.q(),
                    m.k(),
                    cfg.q,
                    cfg.k
                )));
            }
            m
        }
    };
    PixelAntenna::new(model.with_open_reactance(cfg.open_reactance), cfg.rank_tol)
}

fn sebo_config(cfg: &ExperimentConfig, seed: u64) -> SeboConfig {
    SeboConfig {
        block_size: cfg.block_size,
        max_cycles: cfg.max_cycles,
        flip_rounds: cfg.flip_rounds,
        seed,
    }
}

pub fn training_set(cfg: &ExperimentConfig, antenna: &PixelAntenna) -> TrainingSet {
    TrainingSet::generate(
        antenna.n_eff(),
        cfg.n,
        cfg.u,
        cfg.train_samples,
        derive_seed(cfg.seed, &[TAG_TRAINING_SET]),
    )
}

pub fn lloyd_config(cfg: &ExperimentConfig) -> LloydConfig {
    let seed = derive_seed(cfg.seed, &[TAG_LLOYD]);
    LloydConfig {
        rho_bar: cfg.rho_bar,
        max_rounds: cfg.lloyd_max_rounds,
        rel_tol: cfg.lloyd_rel_tol,
        centroid: CentroidMode::Sebo,
        sebo: sebo_config(cfg, seed),
        seed,
    }
}

pub fn train_codebook(cfg: &ExperimentConfig, antenna: &PixelAntenna) -> Result<LloydOutcome> {
    let ts = training_set(cfg, antenna);
    let out = lloyd_train(antenna, &ts, cfg.d, &lloyd_config(cfg))?;
    let diag = &out.diagnostics;
    info!(
        "codebook D={} trained in {} rounds (converged: {}), objective {:.6}",
        cfg.d, diag.rounds, diag.converged, out.objective
    );
    debug!("training trace {:?}", diag.trace);
    if diag.empty_cells_reseeded > 0 {
        warn!("{} empty cells were reseeded", diag.empty_cells_reseeded);
    }
    if diag.duplicate_codewords > 0 {
        warn!("codebook holds {} duplicate codewords", diag.duplicate_codewords);
    }
    Ok(out)
}

pub fn train_hierarchy(cfg: &ExperimentConfig, antenna: &PixelAntenna) -> Result<HierarchyBuild> {
    let ts = training_set(cfg, antenna);
    let build = build_hierarchy(antenna, &ts, cfg.branching, cfg.depth, &lloyd_config(cfg))?;
    info!(
        "hierarchy A={} L={} trained ({} degenerate sub-codebooks)",
        cfg.branching,
        cfg.depth,
        build.degenerate.len()
    );
    for (l, layer) in build.diagnostics.iter().enumerate() {
        let traces: Vec<&Vec<f64>> = layer.iter().flatten().map(|d| &d.trace).collect();
        debug!("layer {} training traces {:?}", l + 1, traces);
    }
    debug!("sub-codebooks without training samples: {:?}", build.degenerate);
    Ok(build)
}

/// Trains a flat codebook and writes it to `out`.
pub fn train_codebook_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<LloydOutcome> {
    cfg.validate()?;
    cfg.validate_codebook()?;
    let antenna = load_antenna(cfg)?;
    let outcome = train_codebook(cfg, &antenna)?;
    outcome.codebook.save(out)?;
    info!("wrote {}", out.display());
    Ok(outcome)
}

/// Trains a hierarchical codebook and writes it to `out`.
pub fn train_hierarchy_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<HierarchyBuild> {
    cfg.validate()?;
    cfg.validate_hierarchy()?;
    let antenna = load_antenna(cfg)?;
    let build = train_hierarchy(cfg, &antenna)?;
    build.codebook.save(out)?;
    info!("wrote {}", out.display());
    Ok(build)
}

#[derive(Clone, Debug)]
enum Design {
    None,
    Flat(FlatCodebook),
    Tree(HierarchicalCodebook),
}

/// A validated configuration with its antenna and, for the codebook
/// algorithms, a loaded or freshly trained codebook.
#[derive(Clone, Debug)]
pub struct Experiment {
    cfg: ExperimentConfig,
    antenna: PixelAntenna,
    design: Design,
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let antenna = load_antenna(cfg)?;
        let design = match cfg.algorithm {
            Algorithm::Codebook => Design::Flat(match &cfg.codebook {
                Some(path) => FlatCodebook::load(path)?,
                None => train_codebook(cfg, &antenna)?.codebook,
            }),
            Algorithm::Hierarchy => Design::Tree(match &cfg.hierarchy {
                Some(path) => HierarchicalCodebook::load(path)?,
                None => train_hierarchy(cfg, &antenna)?.codebook,
            }),
            _ => Design::None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            antenna,
            design,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn antenna(&self) -> &PixelAntenna {
        &self.antenna
    }

    /// Draws the channels of stream `seed` and runs the configured
    /// algorithm at transmit power `p_budget`.
    pub fn run_trial(&self, p_budget: f64, seed: u64) -> Result<TrialResult> {
        let cfg = &self.cfg;
        let mut rng = seeded_rng(seed);
        let sigma2 = vec![1.0; cfg.u];
        let solver_seed = derive_seed(seed, &[TAG_SOLVER]);
        let search = SearchConfig {
            max_iters: cfg.max_iters,
            rel_tol: cfg.rel_tol,
            seed: solver_seed,
        };

        if cfg.algorithm == Algorithm::Conventional {
            let h = complex_gaussian_matrix(&mut rng, cfg.u, cfg.n);
            let start = Instant::now();
            let rate = conventional_system_rate(&h, p_budget, &sigma2)?;
            return Ok(self.finish(rate, start, 0.0));
        }

        let channels = sample_reduced(self.antenna.n_eff(), cfg.n, cfg.u, &mut rng);
        let start = Instant::now();
        let (rate, evals) = match (&cfg.algorithm, &self.design) {
            (Algorithm::FpAlt, _) => {
                let fp = FpConfig {
                    max_iters: cfg.max_iters,
                    rel_tol: cfg.rel_tol,
                    bisect_tol: cfg.bisect_tol,
                    init: cfg.init,
                    sebo: sebo_config(cfg, solver_seed),
                };
                let sol = fp_alternate(&self.antenna, &channels, &sigma2, p_budget, &fp)?;
                (sol.report.final_rate(), sol.report.evaluations_per_user_iteration(cfg.u))
            }
            (Algorithm::ZfAlt, _) => {
                let zf = ZfAltConfig {
                    max_iters: cfg.max_iters,
                    rel_tol: cfg.rel_tol,
                    scoring: cfg.zf_scoring,
                    init: cfg.init,
                    sebo: sebo_config(cfg, solver_seed),
                };
                let out = zf_alt_optimize(&self.antenna, &channels, p_budget, &sigma2, &zf)?;
                (out.report.final_rate(), out.report.evaluations_per_user_iteration(cfg.u))
            }
            (Algorithm::Codebook, Design::Flat(cb)) => {
                let out = flat_search_optimize(&self.antenna, &channels, cb, p_budget, &sigma2, &search)?;
                (out.report.final_rate(), out.report.evaluations_per_user_iteration())
            }
            (Algorithm::Hierarchy, Design::Tree(hc)) => {
                let out = hierarchical_search_optimize(&self.antenna, &channels, hc, p_budget, &sigma2, &search)?;
                (out.search.report.final_rate(), out.search.report.evaluations_per_user_iteration())
            }
            _ => unreachable!("codebook prepared for the configured algorithm"),
        };
        Ok(self.finish(rate, start, evals))
    }

    fn finish(&self, rate: f64, start: Instant, evals: f64) -> TrialResult {
        let time_s = if self.cfg.timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        TrialResult { rate, time_s, evals }
    }

    /// Runs every trial of SNR point `snr_index`, in trial order.
    pub fn run_point(&self, snr_index: usize) -> Result<Vec<TrialResult>> {
        let p = snr_to_power(self.cfg.snr_db[snr_index]);
        let one = |t: usize| {
            self.run_trial(p, derive_seed(self.cfg.seed, &[snr_index as u64, t as u64]))
                .inspect_err(|e| warn!("snr point {snr_index}, trial {t}: {e}"))
        };
        if self.cfg.parallel {
            (0..self.cfg.trials).into_par_iter().map(one).collect()
        } else {
            (0..self.cfg.trials).map(one).collect()
        }
    }

    pub fn run(&self) -> Result<Vec<ResultRow>> {
        (0..self.cfg.snr_db.len())
            .map(|i| {
                let trials = self.run_point(i)?;
                let row = aggregate(self.cfg.snr_db[i], &trials);
                info!(
                    "{} at {} dB: mean rate {:.4} ± {:.4}",
                    self.cfg.algorithm, row.snr_db, row.mean_rate, row.stderr
                );
                Ok(row)
            })
            .collect()
    }
}

/// Mean, standard error of the mean, mean time and mean evaluation count,
/// reduced in trial order.
pub fn aggregate(snr_db: f64, trials: &[TrialResult]) -> ResultRow {
    let n = trials.len() as f64;
    let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let mean_rate = mean(|t| t.rate);
    let stderr = if trials.len() > 1 {
        let var = trials.iter().map(|t| (t.rate - mean_rate).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    ResultRow {
        snr_db,
        mean_rate,
        stderr,
        mean_time_s: mean(|t| t.time_s),
        evals: mean(|t| t.evals),
    }
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Experiment::prepare(cfg)?.run()
}
