use thiserror::Error;

use crate::dataset::DatasetError;
use crate::metrics::MetricError;
use crate::report::ReportError;
use crate::resample::ResampleError;
use crate::sim::SimError;
use crate::sweep::SweepError;

/// Crate-level error, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl Error {
    /// `module::Variant` name, used by the CLI for structured error output.
    pub fn code(&self) -> String {
        let (module, inner): (&str, &dyn std::fmt::Debug) = match self {
            Error::Dataset(e) => ("dataset", e),
            Error::Resample(e) => ("resample", e),
            Error::Metric(e) => ("metrics", e),
            Error::Sim(e) => ("sim", e),
            Error::Sweep(e) => ("sweep", e),
            Error::Report(e) => ("report", e),
        };
        let debug = format!("{inner:?}");
        let variant: String = debug
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        format!("{module}::{variant}")
    }
}
