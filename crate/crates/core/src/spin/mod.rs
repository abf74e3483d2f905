//! Static structure of the coupled electron–nuclear spin system: parameters,
//! operators, Hamiltonian assembly, eigensolutions, and transition catalogs.

mod eigen;
mod hamiltonian;
mod operators;
mod params;
mod transitions;

pub use eigen::{eigensolve, EigenSystem};
pub use hamiltonian::{assemble_hamiltonian, drive_operator, hermiticity, HamiltonianMatrix};
pub use operators::{embed_electron, embed_nuclear, identity, kron, spin_operators, SpinOps};
pub use params::{
    basis_index, basis_labels, BasisLabel, FieldConfig, NuclearSpecies, Orbital, SpinSystemParams,
};
pub use transitions::{eslac_field, transition_catalog, TransitionLine};
