//! Negation cue detection and scope resolution as sequence labelling.

pub mod checkpoint;
pub mod corpus;
pub mod evaluation;
pub mod labeling;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod training;
pub mod synthetic;
pub mod dataset;
pub mod pipeline;
