pub mod config;
pub mod diagnostics;
pub mod geometry;
pub mod io;
pub mod linsolve;
pub mod manufactured;
pub mod mesh;
pub mod probes;
pub mod quadrature;
pub mod scheme;
pub mod spaces;
pub mod thermo;
