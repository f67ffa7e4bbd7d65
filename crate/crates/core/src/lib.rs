//! Knowledge-base driven depression screening: a six-level mental-disorder
//! taxonomy, lexicon bindings, corpus curation, lexicon similarity scoring and
//! a stacked ensemble classifier.

pub mod classifier;
pub mod curation;
pub mod lexicon;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod taxonomy;
pub mod text;
