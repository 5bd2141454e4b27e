//! Configuration, caching, experiment orchestration and run manifests.

mod cache;
mod config;
mod manifest;
mod run;

pub use cache::{decode_matrices, encode_matrices, hex, sha256_hex, Cache, CacheKey};
pub use config::{
    CsTraceBlock, DnBlock, ExperimentConfig, ForwardBlock, GridBlock, InstabilityBlock, NetBudgetBlock, OperatorBlock,
    OperatorKind, PartitionBlock, RungeBlock, Selector, SolverBlock, StabilityBlock, TimeBlock, WindowSpec,
};
pub use manifest::{CheckRecord, ProducedFile, RunManifest, StageTiming};
pub use run::{exit_code, provenance_config, run, substream, VERSION};

/// Environment variable that overrides the cache directory.
pub const CACHE_ENV: &str = "FRACWAVE_CACHE";
