//! Fixtures shared by the criterion benches.

use c2l_core::numeric::Purpose;
use c2l_core::{Matrix, Rng};

/// `n` random scaled windows of shape `len`×3.
pub fn random_windows(n: usize, len: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = Rng::stream(seed, Purpose::Custom(0xbe));
    (0..n)
        .map(|_| Matrix::from_vec(len, 3, (0..len * 3).map(|_| rng.uniform()).collect()).expect("window shape"))
        .collect()
}
