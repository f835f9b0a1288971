//! Periodic reduced Hartree–Fock crystal: Bloch bands, insulating filling and the SCF ground state.

mod bands;
mod scf;
mod spec;

pub use bands::{
    band_density, band_kinetic, bloch_bands, bloch_hamiltonian, fermi_level, kpoint_grid, BlochHamiltonian, BlochState,
};
pub use scf::{cell_energy, scf_ground_state, scf_ground_state_with, scf_step, CrystalGroundState};
pub use spec::{CrystalSpec, Nucleus, ScfControls};
