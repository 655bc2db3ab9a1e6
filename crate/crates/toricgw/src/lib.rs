pub mod cycles;
pub mod equivariant;
pub mod error;
pub mod expr;
pub mod fan;
pub mod graphs;
pub mod integrate;
pub mod job;
pub mod linalg;
pub mod rat;
