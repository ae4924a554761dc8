//! Hierarchical task network planning with task insertion, and refinement of
//! incomplete method sets from solved instances under prioritized
//! preferences.

pub mod completion;
pub mod eval;
pub mod model;
pub mod parser;
pub mod planner;
pub mod preference;
pub mod refine;
pub mod strategy;
pub mod tree;
