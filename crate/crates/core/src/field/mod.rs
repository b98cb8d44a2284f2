//! Deterministic numerics for the field sector. Field objects never appear
//! as such: every formula downstream is expressed through the covariance
//! kernels computed here.

pub mod cutoff;
pub mod kernels;
pub mod table;

pub use cutoff::{CutoffProfile, CutoffSpec, ShellProfile, TestFunctionSpec};
pub use kernels::{
    cross_kernel, pair_potential, pair_potential_spherical, qe_j0_form, qm_form,
    transversal_projector, unprojected_kernel,
};
pub use table::KernelTable;
