//! Seeded randomness.
//!
//! All draws come from ChaCha20 (`rand_chacha::ChaCha20Rng`). A run is keyed by
//! a 64-bit master seed through `seed_from_u64`; independent sub-experiments
//! (trials, seeds of a sweep, auxiliary draws of a construction) use distinct
//! ChaCha stream ids under that key. Matrices are filled in row-major order,
//! real part before imaginary part, so a given (seed, stream) reproduces the
//! same entries on every platform.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, ComplexVector};

/// Stream id offsets used inside one construction so that channel draws,
/// uplink beamformers and downlink receive vectors never share a stream.
pub mod streams {
    pub const CHANNELS: u64 = 0;
    pub const RELAY_SUBSPACE: u64 = 1;
    pub const UPLINK_UNITS: u64 = 2;
    pub const DOWNLINK_UNITS: u64 = 3;
}

pub fn trial_rng(master_seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// One circularly-symmetric CN(0, 1) sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> ComplexMatrix {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(complex_gaussian(rng));
    }
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> ComplexVector {
    ComplexVector::from_fn(len, |_, _| complex_gaussian(rng))
}

/// Haar-distributed unitary matrix (QR of a Gaussian matrix with the phases
/// of R's diagonal folded back into Q).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    if n == 0 {
        return ComplexMatrix::zeros(0, 0);
    }
    let g = complex_gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}
