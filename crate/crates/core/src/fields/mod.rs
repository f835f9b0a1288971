//! Grids, transforms and electrostatic kernels.

pub mod fft;
mod field;
mod grid;
pub mod io;
mod kernel;
mod lattice;

pub use field::{ComplexField, FourierField, ScalarField};
pub(crate) use field::check_same;
#[allow(unused_imports)]
pub(crate) use field::boundary_ratio;
pub use grid::Grid;
pub use kernel::{
    coulomb_energy, coulomb_energy_free, coulomb_potential, pekar_interaction, pekar_interaction_with,
    pekar_potential, periodic_green_energy, solve_poisson_aniso, solve_poisson_aniso_with, Convolver,
    CoulombKernel, Coupling, KernelEnergy, PeriodicGreen,
};
pub(crate) use kernel::{min_image, soft_table};
pub use lattice::LatticeCell;
pub(crate) use lattice::{dot3, norm3};
