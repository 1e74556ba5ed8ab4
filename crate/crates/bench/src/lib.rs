//! Criterion benchmarks for the hot kernels and the detection pipeline live
//! under `benches/`; this library only holds shared fixtures.

use ivsnet_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded normal tensor for benchmark inputs.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape, 1.0, &mut rng)
}
