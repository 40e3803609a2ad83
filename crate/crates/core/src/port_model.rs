//! Multiport network model of a pixel antenna.
//!
//! A pixel antenna with `Q` RF switches is a `(Q+1)`-port network: port 0
//! is the antenna (feed) port, ports `1..=Q` replace the switches. Each
//! switch is a two-state load, and the load pattern (the *antenna coder*)
//! fixes the port currents and hence the radiated pattern.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::format::{read_matrix_block, write_matrix, LineReader};
use crate::linalg::{
    complex_gaussian_matrix, seeded_rng, symmetric_eigenvalues, CMatrix, CVector, C64,
};

/// Reactance used to approximate an open-circuited switch (`z = jβ`).
pub const OPEN_CIRCUIT_REACTANCE: f64 = 1e10;
/// Default relative singular-value threshold for the effective rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;
/// Largest accepted condition number of the pixel-port system.
pub const MAX_CONDITION: f64 = 1e12;

const RECIPROCITY_TOL: f64 = 1e-6;
const PASSIVITY_TOL: f64 = 1e-8;
const SVD_MAX_ITERS: usize = 10_000;

/// Switch states of one pixel antenna. `true` is an open switch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AntennaCoder {
    bits: Vec<bool>,
}

impl AntennaCoder {
    pub fn zeros(q: usize) -> Self {
        Self { bits: vec![false; q] }
    }

    pub fn ones(q: usize) -> Self {
        Self { bits: vec![true; q] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Coder whose bit `i` is bit `i` of `index` (little-endian).
    pub fn from_index(q: usize, index: u64) -> Self {
        Self {
            bits: (0..q).map(|i| i < 64 && (index >> i) & 1 == 1).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl fmt::Display for AntennaCoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for AntennaCoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!(
                    "antenna coder contains {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

/// Diagonal load matrix `Z_L(b)`: `jβ` for open switches, `0` for closed.
pub fn load_impedance(b: &AntennaCoder, open_reactance: f64) -> CMatrix {
    let diag = CVector::from_iterator(
        b.len(),
        b.bits()
            .iter()
            .map(|&open| if open { C64::new(0.0, open_reactance) } else { C64::new(0.0, 0.0) }),
    );
    CMatrix::from_diagonal(&diag)
}

/// Impedance matrix and open-circuit patterns of a `(Q+1)`-port pixel antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct PortModel {
    z_aa: C64,
    z_pa: CVector,
    z_pp: CMatrix,
    e_oc: CMatrix,
    q: usize,
    k: usize,
    open_reactance: f64,
}

impl PortModel {
    /// Validates and assembles a model from the full impedance matrix `z`
    /// and the `2K x (Q+1)` open-circuit pattern matrix.
    ///
    /// `z` is symmetrized after the reciprocity check, then the real part is
    /// checked for passivity.
    pub fn new(z: CMatrix, e_oc: CMatrix, q: usize, k: usize) -> Result<Self> {
        let ports = q + 1;
        if z.shape() != (ports, ports) {
            return Err(Error::ImpedanceDimension {
                expected: ports,
                rows: z.nrows(),
                cols: z.ncols(),
            });
        }
        if e_oc.shape() != (2 * k, ports) {
            return Err(Error::PatternDimension {
                expected_rows: 2 * k,
                expected_cols: ports,
                rows: e_oc.nrows(),
                cols: e_oc.ncols(),
            });
        }
        if !crate::linalg::is_finite_matrix(&z) {
            return Err(Error::NonFinite("impedance matrix"));
        }
        if !crate::linalg::is_finite_matrix(&e_oc) {
            return Err(Error::NonFinite("pattern matrix"));
        }

        let scale = z.norm();
        let asymmetry = if scale > 0.0 {
            (&z - z.transpose()).norm() / scale
        } else {
            0.0
        };
        if !asymmetry.is_finite() || asymmetry > RECIPROCITY_TOL {
            return Err(Error::NonReciprocal { asymmetry });
        }
        let z = (&z + z.transpose()).map(|v| v * 0.5);
        if !crate::linalg::is_finite_matrix(&z) {
            return Err(Error::NonFinite("impedance matrix"));
        }

        let re: DMatrix<f64> = z.map(|v| v.re);
        let eig = symmetric_eigenvalues(&re).ok_or(Error::NonFinite("impedance eigenvalues"))?;
        let min = eig.first().copied().unwrap_or(0.0);
        let mag = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if min < -PASSIVITY_TOL * mag {
            return Err(Error::NonPassive { min_eigenvalue: min });
        }

        Ok(Self {
            z_aa: z[(0, 0)],
            z_pa: z.view((1, 0), (q, 1)).column(0).into_owned(),
            z_pp: z.view((1, 1), (q, q)).into_owned(),
            e_oc,
            q,
            k,
            open_reactance: OPEN_CIRCUIT_REACTANCE,
        })
    }

    /// Seeded stand-in for simulated antenna data: `Z = A + Aᵀ + δI` with
    /// `A` complex Gaussian and `δ` chosen so `Re(Z) ⪰ I`, and i.i.d.
    /// CN(0,1) open-circuit patterns.
    pub fn synthesize_surrogate(q: usize, k: usize, seed: u64) -> Self {
        assert!(k >= 1, "need at least one spatial sample");
        let mut rng = seeded_rng(seed);
        let ports = q + 1;
        let a = complex_gaussian_matrix(&mut rng, ports, ports);
        let mut z = &a + a.transpose();
        let re: DMatrix<f64> = z.map(|v| v.re);
        let min = symmetric_eigenvalues(&re)
            .and_then(|e| e.first().copied())
            .unwrap_or(0.0);
        let shift = (-min).max(0.0) + 1.0;
        for i in 0..ports {
            z[(i, i)].re += shift;
        }
        let e_oc = complex_gaussian_matrix(&mut rng, 2 * k, ports);
        // Jitter-free by construction; `new` only re-validates.
        Self::new(z, e_oc, q, k).expect("surrogate construction is valid")
    }

    pub fn with_open_reactance(mut self, beta: f64) -> Self {
        self.open_reactance = beta;
        self
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn open_reactance(&self) -> f64 {
        self.open_reactance
    }

    pub fn z_aa(&self) -> C64 {
        self.z_aa
    }

    pub fn z_pa(&self) -> &CVector {
        &self.z_pa
    }

    pub fn z_pp(&self) -> &CMatrix {
        &self.z_pp
    }

    pub fn e_oc(&self) -> &CMatrix {
        &self.e_oc
    }

    /// Reassembled `(Q+1) x (Q+1)` impedance matrix.
    pub fn impedance(&self) -> CMatrix {
        let n = self.q + 1;
        CMatrix::from_fn(n, n, |r, c| match (r, c) {
            (0, 0) => self.z_aa,
            (0, c) => self.z_pa[c - 1],
            (r, 0) => self.z_pa[r - 1],
            (r, c) => self.z_pp[(r - 1, c - 1)],
        })
    }

    pub fn load_impedance(&self, b: &AntennaCoder) -> CMatrix {
        load_impedance(b, self.open_reactance)
    }

    fn check_coder(&self, b: &AntennaCoder) -> Result<()> {
        if b.len() != self.q {
            return Err(Error::CoderLength {
                expected: self.q,
                found: b.len(),
            });
        }
        Ok(())
    }

    /// Port currents `[1; -(Z_PP + Z_L(b))⁻¹ z_PA]` for unit feed current.
    ///
    /// The system is row-equilibrated before factorization; its 1-norm
    /// condition number must not exceed [`MAX_CONDITION`].
    pub fn port_currents(&self, b: &AntennaCoder) -> Result<CVector> {
        self.check_coder(b)?;
        let q = self.q;
        let mut out = CVector::zeros(q + 1);
        out[0] = C64::new(1.0, 0.0);
        if q == 0 {
            return Ok(out);
        }

        let mut a = self.z_pp.clone();
        for (i, &open) in b.bits().iter().enumerate() {
            if open {
                a[(i, i)] += C64::new(0.0, self.open_reactance);
            }
        }
        let mut rhs = -self.z_pa.clone();
        for r in 0..q {
            let scale = a.row(r).iter().fold(0.0f64, |m, v| m.max(v.norm()));
            if scale == 0.0 {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                });
            }
            let inv = 1.0 / scale;
            a.row_mut(r).iter_mut().for_each(|v| *v *= inv);
            rhs[r] *= inv;
        }

        let lu = a.clone().lu();
        let inverse = lu.try_inverse().ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
        let condition = one_norm(&a) * one_norm(&inverse);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition });
        }
        let x = lu.solve(&rhs).ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
        out.rows_mut(1, q).copy_from(&x);
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        let [q, k] = reader.header::<2>("model header `Q K`")?;
        let ports = q
            .checked_add(1)
            .ok_or_else(|| reader.err("switch count overflow"))?;
        let rows = k
            .checked_mul(2)
            .ok_or_else(|| reader.err("sample count overflow"))?;
        let z = read_matrix_block(&mut reader)?;
        if z.shape() != (ports, ports) {
            return Err(Error::ImpedanceDimension {
                expected: ports,
                rows: z.nrows(),
                cols: z.ncols(),
            });
        }
        let e_oc = read_matrix_block(&mut reader)?;
        if e_oc.shape() != (rows, ports) {
            return Err(Error::PatternDimension {
                expected_rows: rows,
                expected_cols: ports,
                rows: e_oc.nrows(),
                cols: e_oc.ncols(),
            });
        }
        reader.expect_end()?;
        Self::new(z, e_oc, q, k)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.q, self.k);
        write_matrix(&mut s, &self.impedance());
        write_matrix(&mut s, &self.e_oc);
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Truncated SVD `E_oc ≈ U S Vᴴ` keeping the effective aerial degrees of
/// freedom.
#[derive(Clone, Debug)]
pub struct PatternBasis {
    u_mat: CMatrix,
    singular: Vec<f64>,
    v_mat: CMatrix,
}

impl PatternBasis {
    pub fn n_eff(&self) -> usize {
        self.singular.len()
    }

    pub fn u_mat(&self) -> &CMatrix {
        &self.u_mat
    }

    pub fn v_mat(&self) -> &CMatrix {
        &self.v_mat
    }

    /// Retained singular values, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular
    }

    pub fn s_mat(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.singular))
    }
}

/// Effective rank is the number of singular values above
/// `rank_tol * s_max`.
pub fn reduce_basis(m: &PortModel, rank_tol: f64) -> Result<PatternBasis> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must lie in (0, 1), got {rank_tol}"
        )));
    }
    let svd = nalgebra::SVD::try_new(m.e_oc.clone(), true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or(Error::NonFinite("pattern decomposition"))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᴴ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let s_max = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    if !(s_max > 0.0) {
        return Err(Error::ZeroPattern);
    }
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > rank_tol * s_max)
        .collect();

    let u_mat = CMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])]);
    let v_mat = CMatrix::from_fn(v_t.ncols(), keep.len(), |r, c| v_t[(keep[c], r)].conj());
    let singular = keep.iter().map(|&i| svd.singular_values[i]).collect();
    Ok(PatternBasis {
        u_mat,
        singular,
        v_mat,
    })
}

/// Unit-norm weights over the orthogonal basis patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternCoder {
    w: CVector,
}

impl PatternCoder {
    /// Normalizes `w`; fails if it is zero or non-finite.
    pub fn from_unnormalized(w: CVector) -> Result<Self> {
        let norm = w.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateCoder);
        }
        Ok(Self { w: w.unscale(norm) })
    }

    pub fn w(&self) -> &CVector {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `w(b) = S Vᵀ conj(ī(b))`, normalized.
pub fn pattern_coder(basis: &PatternBasis, m: &PortModel, b: &AntennaCoder) -> Result<PatternCoder> {
    let currents = m.port_currents(b)?;
    // S Vᵀ conj(ī) = S conj(Vᴴ ī)
    let projected = basis.v_mat.ad_mul(&currents);
    let w = CVector::from_iterator(
        basis.n_eff(),
        projected
            .iter()
            .zip(&basis.singular)
            .map(|(y, &s)| y.conj() * s),
    );
    PatternCoder::from_unnormalized(w)
}

/// Coded radiation pattern `e(b) = U conj(w(b))`, unit norm.
pub fn radiation_pattern(m: &PortModel, b: &AntennaCoder, basis: &PatternBasis) -> Result<CVector> {
    let w = pattern_coder(basis, m, b)?;
    Ok(pattern_from_coder(basis, &w))
}

pub fn pattern_from_coder(basis: &PatternBasis, w: &PatternCoder) -> CVector {
    &basis.u_mat * w.w.map(|v| v.conj())
}

/// A port model together with its reduced pattern basis; the unit every
/// optimizer works with.
#[derive(Clone, Debug)]
pub struct PixelAntenna {
    model: PortModel,
    basis: PatternBasis,
}

impl PixelAntenna {
    pub fn new(model: PortModel, rank_tol: f64) -> Result<Self> {
        let basis = reduce_basis(&model, rank_tol)?;
        Ok(Self { model, basis })
    }

    pub fn surrogate(q: usize, k: usize, seed: u64) -> Self {
        Self::new(PortModel::synthesize_surrogate(q, k, seed), DEFAULT_RANK_TOL)
            .expect("surrogate patterns are non-zero")
    }

    pub fn model(&self) -> &PortModel {
        &self.model
    }

    pub fn basis(&self) -> &PatternBasis {
        &self.basis
    }

    pub fn q(&self) -> usize {
        self.model.q
    }

    pub fn n_eff(&self) -> usize {
        self.basis.n_eff()
    }

    pub fn pattern_coder(&self, b: &AntennaCoder) -> Result<PatternCoder> {
        pattern_coder(&self.basis, &self.model, b)
    }

    pub fn random_coder<R: Rng + ?Sized>(&self, rng: &mut R) -> AntennaCoder {
        AntennaCoder::from_bits((0..self.q()).map(|_| rng.random::<bool>()).collect())
    }
}
