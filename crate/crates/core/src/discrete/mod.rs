//! Grid discretization of the form and operator.

mod form;
mod grid;
mod io;
mod mollify;
mod pv;
mod weights;

pub use form::DiscreteForm;
pub use grid::{DomainMask, Grid, DEFAULT_NODE_CAP};
pub use io::{read_grid_function, write_grid_function, GridHeader};
pub use mollify::{mollifier_stencil, mollify};
pub use pv::{pointwise_pv, PvOptions, PvReport, PvStep, TestFunction};
pub use weights::{build_weight_table, build_weight_table_with, WeightOptions, WeightTable};
