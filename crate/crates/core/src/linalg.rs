//! Dense complex linear-algebra helpers and seeded random streams.

use nalgebra::{DMatrix, DVector, RowDVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type CRow = RowDVector<C64>;

pub type TrialRng = ChaCha8Rng;

const EIGEN_MAX_ITERS: usize = 10_000;

pub fn seeded_rng(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a tag path
/// (e.g. `[snr_index, trial]`).
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(master), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// One draw from CN(0, 1).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // Column-major fill keeps the draw order fixed for a given shape.
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    CMatrix::from_vec(rows, cols, data)
}

/// Matrix with orthonormal columns drawn from the Haar measure (QR of a
/// Gaussian matrix). Requires `rows >= cols`.
pub fn orthonormal_columns<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    assert!(rows >= cols, "need rows >= cols for orthonormal columns");
    let g = complex_gaussian_matrix(rng, rows, cols);
    g.qr().q()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// ascending. Returns `None` if the iteration fails to converge.
pub fn hermitian_eigen(m: &CMatrix) -> Option<(Vec<f64>, CMatrix)> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITERS)?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Some((values, vectors))
}

/// Eigenvalues of a real symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITERS)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Some(v)
}

/// Singular values sorted descending.
pub fn singular_values(m: &CMatrix) -> Option<Vec<f64>> {
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, EIGEN_MAX_ITERS)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Some(s)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &CMatrix) -> f64 {
    match singular_values(m) {
        Some(s) if !s.is_empty() => {
            let smin = *s.last().unwrap();
            if smin > 0.0 {
                s[0] / smin
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}

/// Row vector times column vector without conjugation.
pub fn row_dot(row: &CRow, col: &CVector) -> C64 {
    row.iter().zip(col.iter()).map(|(a, b)| a * b).sum()
}

pub fn is_finite_matrix(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
