//! Knowledge-graph question answering environment and reward toolkit.
//!
//! The crate covers the full data path of a plan-then-retrieve agent:
//!
//! - [`kg`]: indexed triple store, relation and neighbor search, incomplete-graph sampling
//! - [`trajectory`]: the tagged trajectory grammar, format checks and retrieval masks
//! - [`plan`]: the plan mini-language and set algebra over sub-answers
//! - [`rollout`]: the generate/retrieve loop, tools, policies and web back ends
//! - [`reward`]: answer, retrieval and overall rewards plus group advantages
//! - [`eval`]: SFT trajectory filtering, plan judging and evaluation metrics

pub mod eval;
pub mod io;
pub mod kg;
pub mod plan;
pub mod qa;
pub mod reward;
pub mod rollout;
pub mod text;
pub mod trajectory;

pub use kg::{Coverage, KnowledgeGraph, RemovalLog, Triple};
pub use qa::QaExample;
pub use trajectory::{Step, Tag, Trajectory};
