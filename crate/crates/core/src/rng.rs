//! Deterministic random substreams.
//!
//! Every random quantity is drawn from a ChaCha stream keyed by the master
//! seed and a path of integers (stream tag, drop, trial, ...). Streams are
//! independent of evaluation order, so parallel runs reproduce serial ones.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type SimRng = ChaCha8Rng;

/// Stream tags. Distinct tags never share a substream.
pub mod tag {
    pub const AP_LAYOUT: u64 = 1;
    pub const UE_DROP: u64 = 2;
    pub const TARGET_DROP: u64 = 3;
    pub const SHADOWING: u64 = 4;
    pub const ENSEMBLE: u64 = 5;
    pub const SENSING_BLOCK: u64 = 6;
    pub const SYMBOLS: u64 = 7;
    pub const CAL_CLUTTER: u64 = 8;
    pub const CAL_NOISE: u64 = 9;
    pub const DET_RCS: u64 = 10;
    pub const DET_CLUTTER: u64 = 11;
    pub const DET_NOISE: u64 = 12;
    pub const VAL_CLUTTER: u64 = 13;
    pub const VAL_NOISE: u64 = 14;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream for `(seed, path...)`.
pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    let mut state = splitmix64(seed);
    for (depth, &p) in path.iter().enumerate() {
        state = splitmix64(state ^ splitmix64(p.wrapping_add((depth as u64 + 1) << 56)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        let word = splitmix64(state.wrapping_add(i as u64));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Draw from CN(0, 1).
#[inline]
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(T::lit(re * s), T::lit(im * s))
}

pub fn complex_normal_vector<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<Complex<T>> {
    DVector::from_fn(n, |_, _| complex_normal(rng))
}

pub fn complex_normal_matrix<T: Real, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<Complex<T>> {
    // column-major: vec(W) is the draw order
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| complex_normal(rng)))
}
