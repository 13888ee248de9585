#![allow(dead_code)]

use chanpred_core::channel::{kmh_to_mps, LinkConfig, ProfileDef};
use chanpred_core::dataset::{generate, CsiSample, WeightedProfile};
use chanpred_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// EVA FDD samples on the default 36×7 grid, DL band 12 spacings up.
pub fn eva_samples(n: usize, seed: u64) -> Vec<CsiSample> {
    let cfg = LinkConfig {
        dl_band_offset_hz: 12.0 * 15e3,
        ..LinkConfig::default()
    };
    let mix = WeightedProfile::single(ProfileDef::builtin("EVA").unwrap().resolve(&cfg).unwrap());
    generate(&cfg, &mix, kmh_to_mps(50.0), n, seed).unwrap().samples
}

/// Uniform `[-1, 1]` tensor, the range of normalized network inputs.
pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}
