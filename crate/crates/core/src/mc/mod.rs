//! Estimation engine: counter-based streams, crude Monte Carlo and
//! multilevel splitting.

pub mod engine;
pub mod estimate;
pub mod rng;
pub mod splitting;

pub use engine::{estimate_crude, Budget, Engine, Levels, SplittingConfig};
pub use estimate::{ratio_with_stderr, Estimate, MeanEstimate, Method, Moments, Z95};
pub use rng::{derive_seed, stream_id, RngStream, UniformSource};
pub use splitting::{auto_levels, estimate_splitting, BlockStream, PathRng, PathSeed};
