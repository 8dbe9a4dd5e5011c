//! Multi-level non-parametric bootstrap simulation for annotation budgets.
//!
//! Given a multi-rater annotation dataset, `raterboot` estimates how many
//! items (N) and responses per item (K) are needed before a metric can tell
//! an ideal model A apart from a slightly noisier model B. The pipeline is:
//!
//! 1. [`dataset`]: load or synthesize an [`AnnotationDataset`].
//! 2. [`resample`]: draw bootstrap replicates with one of three samplers
//!    (global raters, per-item raters, per-batch raters).
//! 3. [`metrics`]: aggregate responses and score A and B against the gold pool.
//! 4. [`sim`]: build alternative and null Γ distributions and a p-value.
//! 5. [`sweep`]: repeat over a (budget, K, ε) grid, in parallel.
//! 6. [`report`]: write CSV/markdown tables and SVG curves.
//!
//! Parallel execution uses rayon behind the `parallel` feature (on by
//! default). Results never depend on thread count.

pub mod dataset;
mod error;
pub mod exec;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod resample;
pub mod rng;
pub mod sim;
pub mod sweep;

pub use dataset::{AnnotationDataset, DatasetSummary, LabelDomain};
pub use error::Error;
pub use exec::Execution;
pub use metrics::MetricId;
pub use resample::{ResampledDataset, SamplerKind};
pub use rng::SeedSpec;
pub use sim::{PValueMethod, PValueReport, SimulationConfig};
pub use sweep::{SweepGrid, SweepResult};

pub type Result<T, E = Error> = std::result::Result<T, E>;
