//! Toolkit for studying how a multiplicative frequency rescaling (a redshift
//! factor χ², as produced by gravitational potentials) deforms single-photon
//! spectral wave packets: exact and perturbative mode overlaps, the induced
//! multimode mixing matrix with a single environment mode, and scans that
//! locate where that single-environment model stops being unitary.

pub mod cli;
pub mod mixer;
pub mod overlap;
pub mod quad;
pub mod spectra;
pub mod validity;
