// SPDX-License-Identifier: Apache-2.0

//! Numerical workbench for U(1) gauge invariance in open fermionic systems.
//!
//! Two tiers share this crate:
//!
//! * an exact tier on small Hubbard lattices ([`opspec`] → [`fock`] →
//!   [`lindblad`] → [`symmetry`]) that integrates the Lindblad equation on the
//!   full Fock space and measures particle number, the inter-sector coherence
//!   witness `O_N = Tr[NρNρ] − Tr[N²ρ²]` and the lattice continuity equation;
//! * a mean-field tier for the dissipative BCS superconductor ([`meanfield`],
//!   [`response`], [`collective`]): gap equation, time-dependent Bogoliubov
//!   amplitudes with complex coupling `U + iγ/2`, Nambu Green's functions, the
//!   retarded vertex identity, the transverse response kernel and the
//!   Nambu-Goldstone dispersion.
//!
//! The [`cli`] module drives both tiers and writes CSV/JSON outputs.

pub mod cli;
pub mod collective;
pub mod fock;
pub mod lindblad;
pub mod meanfield;
pub mod opspec;
pub mod response;
pub mod symmetry;

pub use num_complex::Complex64;

/// Version tag written into every JSON document the CLI emits.
pub const SCHEMA_VERSION: u32 = 1;
