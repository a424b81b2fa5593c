//! Physics-informed neural surrogates for steady, incompressible 2-D
//! turbulent flow closed with the standard k-ε model.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: second-order forward jets and a reverse-mode tape;
//! - [`network`]: five Fourier-feature coordinate networks (u, v, p, k, ε);
//! - [`physics`]: RANS k-ε residuals and reference scales;
//! - [`data`]: CSV point clouds, sampling, manufactured-solution cases;
//! - [`loss`]: data, boundary and weighted PDE losses;
//! - [`trainer`]: data-only pre-training followed by full training with Adam;
//! - [`report`]: validation metrics, field grids and error maps.

pub mod autodiff;
pub mod data;
pub mod loss;
pub mod network;
pub mod physics;
pub mod report;
pub mod trainer;
