//! Knowledge-graph embedding toolkit: triple storage, four bilinear/translational
//! scoring families, six negative-sampling strategies, sparse Adam training, and
//! filtered ranking evaluation.
//!
//! Everything downstream of a single `u64` seed is deterministic, including the
//! rayon-parallel paths (enabled by the default `parallel` feature): parallel maps
//! preserve input order and all reductions run in a fixed order, so results are
//! bitwise identical to the sequential fallbacks.

pub mod error;
pub mod eval;
pub mod graph;
pub mod models;
pub mod optim;
pub mod samplers;
pub mod synth;

pub use error::KgeError;

/// Named RNG substreams carved out of one run seed. Every randomized stage owns a
/// stream so adding draws to one stage never perturbs another.
pub mod rng {
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const STREAM_INIT: u64 = 0;
    pub const STREAM_SHUFFLE: u64 = 1;
    pub const STREAM_SAMPLER: u64 = 2;
    pub const STREAM_SYNTH: u64 = 3;
    pub const STREAM_DEV_SUBSAMPLE: u64 = 4;

    /// Generator for one substream of `seed`.
    pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}
