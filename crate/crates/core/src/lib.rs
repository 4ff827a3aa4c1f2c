//! Successive subspace learning for small-image classification.
//!
//! Features come from a channel-wise PixelHop++ tree of Saab transforms,
//! trained level by level in closed form; classes come from a linear
//! least-squares head on those features. Nothing is trained by gradient
//! descent.

pub mod decision;
pub mod error;
pub mod io;
pub mod pixelhop;
pub mod saab;
pub mod tensor;

pub use error::{Error, Result};
