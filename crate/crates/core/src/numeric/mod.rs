//! Shared numeric utilities: quadrature, normal quantile, seeded RNG streams,
//! small dense solves, and order statistics.

pub mod gauss_hermite;
pub mod linalg;
pub mod normal;
pub mod rng;
pub mod stats;

pub use gauss_hermite::GaussHermite;
pub use normal::normal_quantile;
pub use rng::{stream_rng, RngDomain};
