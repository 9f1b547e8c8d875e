pub mod channel;
pub mod bounds;
pub mod codec;
pub mod detector;
pub mod dpsk;
pub mod ensemble;
pub mod error;
pub mod galois;
pub mod protograph;
pub mod receiver;

pub use error::{Error, Result};
