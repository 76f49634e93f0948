//! Exact rational streams as names of real numbers, stream machines over them,
//! and an adversary that falsifies machines claiming impossible contracts.

pub mod adversary;
pub mod exactnum;
pub mod formats;
pub mod hotz;
pub mod lifting;
pub mod machine;
pub mod names;
pub mod nondet;
pub mod reductions;
pub mod registry;
pub mod weierstrass;

pub use exactnum::{Ext, Rational};
pub use machine::{Budget, Machine, Trace, Transformer};
pub use names::{Name, ReprTag};
