use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("grids do not match")]
    GridMismatch,
    #[error("cells do not match")]
    CellMismatch,
    #[error("dielectric tensor rejected: {0}")]
    Dielectric(String),
    #[error("state is not normalized (norm {0:.15})")]
    NotNormalized(f64),
    #[error(
        "no minimizer: participation ratio fell to {ratio:.3e} of its initial value after {iterations} iterations (energy {energy:.6e})"
    )]
    Spreading {
        energy: f64,
        ratio: f64,
        iterations: usize,
        energies: Vec<f64>,
    },
    #[error("divergence: energy increased after {0} backtracks")]
    Divergence(usize),
    #[error("tensor grid needs {needed} values, budget is {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("H7 violated: {0}")]
    Metallic(String),
    #[error("no electrons")]
    NoElectrons,
    #[error("cutoff too small: {0}")]
    Cutoff(String),
    #[error("SCF not converged after {iterations} iterations (residual {residual:.3e})")]
    ScfNotConverged { iterations: usize, residual: f64 },
    #[error("gap closed under the defect: {0}")]
    GapClosed(String),
    #[error("fit residual {residual:.3e} above threshold {threshold:.3e}")]
    FitResidual { residual: f64, threshold: f64 },
    #[error("macro and micro evaluations disagree (relative {0:.3e})")]
    Rescaling(f64),
    #[error("stagnation: {0}")]
    Stagnation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
