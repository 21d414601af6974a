//! Quadratic testbed with exactly known smoothness, noise and alignment constants, used to
//! evaluate the convergence bounds, the efficiency ratio and the benefit term numerically.

mod bounds;
mod constants;
mod quadratic;
mod run;
mod suite;

pub use bounds::*;
pub use constants::{TheoryConstants, L_MATCH_TOL};
pub use quadratic::{QuadraticPair, RandomPairOptions, Relation};
pub use run::*;
pub use suite::*;
