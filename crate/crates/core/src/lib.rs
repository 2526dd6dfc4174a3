pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod error;
pub mod flow;
pub mod geometry;
pub mod hamiltonian;
pub mod leaf;
pub mod linalg;
mod ode;
pub mod oracles;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/complexification.md")]
    mod complexification {}
    #[doc = include_str!("../../../book/src/hamiltonians.md")]
    mod hamiltonians {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/leaves.md")]
    mod leaves {}
    #[doc = include_str!("../../../book/src/complex-structure.md")]
    mod complex_structure {}
    #[doc = include_str!("../../../book/src/companion-map.md")]
    mod companion_map {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
