//! Geodesic flow on compact flat surfaces with large-angle cone points.
//!
//! The crate models a surface as Euclidean polygons glued along edges
//! ([`surface`]), traces geodesics through it and records how they turn at
//! cone points ([`tracer`]), enumerates saddle connections and closed
//! geodesics ([`saddle`], [`closed`]), evaluates the λ-function and its orbit
//! decomposition ([`lambda`]), builds shadowing closed geodesics from good
//! orbit segments ([`construct`]), and estimates pressure from weighted sums
//! over regular closed geodesics ([`thermo`]). [`cli`] wires it all into the
//! `flatflow` binary.

pub mod cli;
pub mod closed;
pub mod construct;
pub mod distance;
pub mod geom;
pub mod gsmetric;
pub mod lambda;
pub mod saddle;
pub mod surface;
pub mod symmetry;
pub mod thermo;
pub mod tracer;
pub mod visibility;

pub use geom::{Isometry, Vec2, TOL_ANGLE, TOL_GEOM};
pub use surface::{build_surface, load_surface, Surface, SurfaceDescriptor, SurfacePoint};
