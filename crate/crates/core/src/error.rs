use thiserror::Error;

use crate::data_io::DataError;
use crate::evidence::EvidenceError;
use crate::gmm::GmmError;
use crate::grfn::GrfnError;
use crate::metrics::MetricError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grfn(#[from] GrfnError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
