//! Numerical toolkit for disc-functional envelopes of piecewise objectives on
//! domains of C^n (n = 1, 2), with an independent grid relaxation oracle for the
//! largest plurisubharmonic minorant, disc certificates for non-thinness, and
//! maximum-principle checks on non-thin sets.

pub mod disc;
pub mod domain;
pub mod envelope;
pub mod expr;
pub mod max_principle;
pub mod objective;
pub mod optim;
pub mod perron;
pub mod thinness;
pub mod error;
pub mod ext;
pub mod point;

pub use domain::{make_grid, BallCloud, Domain, GridNode, GridSpec};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use point::Point;
