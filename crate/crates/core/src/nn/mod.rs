//! From-scratch differentiable networks: dense MLPs, a tiny transformer
//! encoder, losses and the Adam optimizer. Everything is `f64`.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod mlp;
pub mod stats;
pub mod transformer;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use mlp::{Mlp, MlpArch, MlpTrace};
pub use stats::{mean_std, RunningMeanStd, Welford};
pub use transformer::{TinyTransformer, TransformerArch};

/// Global gradient-norm cap applied by every agent.
pub const GRAD_CLIP_NORM: f64 = 10.0;

/// Stable fingerprint of a parameter buffer (FNV-1a over the bit patterns).
pub fn fingerprint(params: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for b in p.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}
