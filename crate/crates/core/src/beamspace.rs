//! Reduced beamspace channels and per-user effective MISO channels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_matrix, CMatrix, CRow};
use crate::port_model::{PatternBasis, PatternCoder};

/// `N_eff x N` channel seen through the orthogonal pattern basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedChannel {
    pub h_bar: CMatrix,
    pub user_index: usize,
}

impl ReducedChannel {
    pub fn n_eff(&self) -> usize {
        self.h_bar.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.h_bar.ncols()
    }
}

/// Row vector `wᴴ H̄` seen by the transmitter for a given pattern coder.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannel {
    pub h_eff: CRow,
}

/// Draws `u_count` i.i.d. Rayleigh reduced channels with CN(0,1) entries.
pub fn sample_reduced<R: Rng + ?Sized>(
    n_eff: usize,
    n: usize,
    u_count: usize,
    rng: &mut R,
) -> Vec<ReducedChannel> {
    (0..u_count)
        .map(|u| ReducedChannel {
            h_bar: complex_gaussian_matrix(rng, n_eff, n),
            user_index: u,
        })
        .collect()
}

/// Full-dimension path: `H̄ = Uᵀ H_v E_T` with a fresh `2K x 2K` virtual
/// channel. Used to cross-check the statistics of [`sample_reduced`].
pub fn sample_virtual_and_reduce<R: Rng + ?Sized>(
    basis: &PatternBasis,
    e_t: &CMatrix,
    rng: &mut R,
) -> Result<ReducedChannel> {
    let rows = basis.u_mat().nrows();
    if e_t.nrows() != rows {
        return Err(Error::InvalidArgument(format!(
            "transmit patterns have {} samples, basis has {rows}",
            e_t.nrows()
        )));
    }
    let n = e_t.ncols();
    let gram = e_t.ad_mul(e_t);
    let deviation = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let target = if i == j { 1.0 } else { 0.0 };
            (gram[(i, j)] - target).norm()
        })
        .fold(0.0, f64::max);
    if deviation > 1e-8 {
        return Err(Error::NonOrthonormal { deviation });
    }
    let h_v = complex_gaussian_matrix(rng, rows, rows);
    Ok(ReducedChannel {
        h_bar: basis.u_mat().tr_mul(&(h_v * e_t)),
        user_index: 0,
    })
}

pub fn effective_channel(w: &PatternCoder, h_bar: &ReducedChannel) -> EffectiveChannel {
    EffectiveChannel {
        h_eff: w.w().adjoint() * &h_bar.h_bar,
    }
}

/// Stacks the effective channels of all users into a `U x N` matrix.
pub fn stack_effective(rows: &[CRow]) -> CMatrix {
    let n = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(rows.len(), n, |r, c| rows[r][c])
}
