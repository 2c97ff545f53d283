//! Numerical primitives: adaptive quadrature, bracketed inversion of monotone
//! maps, finite differences and compensated summation.

mod diff;
mod quad;
mod roots;
mod sum;

pub use diff::{derivative_in_window, finite_diff, DiffOrder};
pub use quad::{integrate, integrate_fallible, QuadOptions, Quadrature};
pub use roots::{invert_increasing, RootOptions};
pub use sum::{compensated_sum, NeumaierSum};
