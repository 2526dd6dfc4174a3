//! Closed-form and independently integrated ground truth.

pub mod expm;
pub mod mobius;
pub mod quadratic;
pub mod real_reference;

pub use expm::expm;
pub use mobius::{oracle_mobius, sphere_embedding, Sl2Generator};
pub use quadratic::{oracle_quadratic, QuadraticSpec};
pub use real_reference::{real_reference, REFERENCE_TOL};
