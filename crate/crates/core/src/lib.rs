//! Composable finite-size key rates for discrete-modulated CV-QKD.

pub mod channel;
pub mod constellation;
pub mod detector;
pub mod error;
pub mod estimation;
pub mod finite_size;
pub mod fock;
pub mod keyrate;
pub mod linalg;
pub mod region;
pub mod scan;
pub mod sdp;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
