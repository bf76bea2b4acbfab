pub mod datasets;
pub mod eval;
pub mod executor;
pub mod mcp;
pub mod memory;
pub mod planner;
pub mod policy;
pub mod skills;
pub mod text;

/// Chunk types in the public API are `ndarray` arrays.
pub use ndarray;
