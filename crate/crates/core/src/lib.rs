pub mod bessel;
pub mod cli;
pub mod elliptic;
pub mod error;
pub mod euler;
pub mod experiments;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod perturb;
pub mod rearrangement;
pub mod spectra;

pub use error::{Error, Result};
pub use grid::{make_grid, Grid, GridRef, ScalarField};
