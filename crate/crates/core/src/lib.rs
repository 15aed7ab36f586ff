//! Robust heteroclinic tangencies at desk scale.
//!
//! Skew products `contraction × (DA or linear Anosov)` on `[-ε,ε]^m × T^n`
//! carry a folding manifold placed in tangency with the stable foliation.
//! The crate certifies the cone and folding structure, detects the tangency
//! with two independent methods and measures its persistence under small C¹
//! perturbations.

pub mod ambient;
pub mod cocycle;
pub mod error;
pub mod folding;
pub mod formats;
pub mod linalg;
pub mod robustness;
pub mod systems;
pub mod tangency;

pub use error::{Error, Result};

/// SplitMix64 finalizer applied to `seed ^ (stream · golden ratio)`; used to
/// derive independent per-item seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-preserving map, parallel when the `parallel` feature is on.
pub(crate) fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
