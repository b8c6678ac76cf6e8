//! Concrete PDE problems: 1D Poisson with a known solution and the 2D
//! steady-state Allen–Cahn system with its latent-field linearisation.

pub mod allen_cahn;
pub mod poisson;
