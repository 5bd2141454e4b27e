pub mod error;
pub mod fractional;
pub mod grid;
pub mod par;
pub mod forward;
pub mod dn;
pub mod fit;
pub mod runge;
pub mod instability;
pub mod harness;
