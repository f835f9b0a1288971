//! Variational solvers for polaron models: the Pekar functional, N-body
//! Pekar energies on tensor grids, the periodic reduced Hartree-Fock crystal,
//! its defect response, and the macroscopic limit connecting them.

pub mod dielectric;
pub mod error;
pub mod fields;

pub use dielectric::{DielectricTensor, ExtractionDiagnostics};
pub use error::{Error, Result};
pub mod optimize;
pub mod pekar;
pub mod multipolaron;
pub mod crystal;
pub mod defect;
pub mod macroscopic;
