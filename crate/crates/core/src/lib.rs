//! Newest vertex bisection on 2D triangulations.
//!
//! The crate covers mesh closure and splitting for plain NVB and its red and
//! bisec(5) variants, structural checks of refined meshes, a correspondence
//! between red and pure-bisection sequences, and tools to certify and measure
//! H1-stability of the L2-projection onto P1 elements.

pub mod analysis;
pub mod corr;
pub mod driver;
pub mod error;
pub mod exact;
pub mod fem;
pub mod forest;
pub mod generate;
pub mod geom;
pub mod io;
pub mod marking;
pub mod mesh;
pub mod refine;
pub mod stability;

pub use error::{Error, Result};
pub use mesh::{EdgeKey, ElemId, Element, Mesh, NodeId, Vertex};
