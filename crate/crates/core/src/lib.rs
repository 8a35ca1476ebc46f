//! Numerical laboratory for Newton maps of `p(z) e^{q(z)}`.

pub mod blaschke;
pub mod channel;
pub mod exec;
pub mod frontend;
pub mod newton;
pub mod orbits;
pub mod polyalg;
pub mod sphere;
pub mod surgery;
