//! Small-signal security assessment of power grids: power flow, N-1 damping
//! screening, graph features and a compact aggregation classifier.

pub mod error;
pub mod eval;
pub mod graph_features;
pub mod grid_io;
pub mod learner;
pub mod par;
pub mod small_signal;
pub mod steady_state;

pub use error::{Error, Result};
