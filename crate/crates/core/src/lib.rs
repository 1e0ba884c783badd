//! Numerical toolkit for attracting basins of rational maps.

pub mod corpus;
pub mod curve;
pub mod error;
pub mod geometry;
pub mod pipeline;
pub mod point;
pub mod poly;
pub mod puzzle;
pub mod render;
pub mod ratmap;
pub mod search;
pub mod uniformize;

pub use curve::{JordanPolyline, Orientation};
pub use error::{Error, Result};
pub use geometry::{FatnessReport, Nesting, TurningReport};
pub use num_complex::Complex64;
pub use point::PlanePoint;
pub use poly::{polish_root, roots_all, Poly};
pub use puzzle::{End, EndClass, InvariantDisk, PuzzleForest, PuzzlePiece};
pub use ratmap::{CriticalOrbitReport, FixedPoint, FixedPointClass, OrbitVerdict, RationalMap};
pub use pipeline::{run_pipeline, PipelineReport, RunConfig};
pub use uniformize::{koebe_uniformize, Circle, CircleDomain, Truncation};
