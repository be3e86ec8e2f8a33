pub mod admm;
pub mod bench;
pub mod classify;
pub mod error;
pub mod gmm;
pub mod image;
pub mod io;

pub use error::{Error, Result};
