//! Reference computations for the test suites.
//!
//! Everything here is deliberately naive: adaptive Gauss-Kronrod quadrature
//! in linear space after a max-shift, brute-force grids and direct linear
//! algebra. None of it shares code with the library under test.

pub mod gk;
pub mod models;
pub mod sums;
