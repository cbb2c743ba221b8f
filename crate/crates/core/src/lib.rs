//! Multiset algebra and simplex-constrained multiset representation learning.

pub mod clustering;
pub mod datagen;
pub mod harness;
pub mod model;
pub mod multiset;
pub mod nn;
pub mod selfcheck;
pub mod transform;
