//! A small reverse-mode differentiation engine for sequence regression.
//!
//! Values live on a [`Graph`] tape as row-major 2-D [`Tensor`]s; rows are
//! samples (or time steps of a sample), columns are features. Layers in
//! [`layers`] own parameters through a [`ParamStore`] and bind them onto a
//! fresh graph for every forward pass, so a training step is:
//! bind, forward, [`Graph::backward`], then [`Adam::step`].
//!
//! Everything is `f64` and single-threaded, which keeps gradient checks
//! tight and training bit-reproducible for a fixed seed.

mod container;
mod control;
mod error;
mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod tensor;

pub use container::{read_params, write_params, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use control::{ControlAction, TrainController};
pub use error::{NnError, Result};
pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, OptimState};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;
