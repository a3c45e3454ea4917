pub mod config;
pub mod curvature;
pub mod cutoff;
pub mod diff;
pub mod eigen;
pub mod error;
pub mod field;
pub mod grid;
pub mod hessian;
pub mod kahler;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{
    make_log_box, make_radial_grid, make_real_torus, make_torus_grid, make_tube, Axis, AxisKind,
    GridGeometry, RadialChart, RadialModel, Topology,
};
