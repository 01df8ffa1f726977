//! Fake-news detection over a heterogeneous user-comment graph.
//!
//! The pipeline ingests news articles, comments, and user profiles; builds a
//! heterogeneous graph linking users to their comments and comments to their
//! nearest earlier neighbors; embeds nodes with attention over typed
//! neighborhoods; encodes article sentences with a hierarchical encoder; and
//! classifies each article through sentence-comment co-attention, which also
//! yields a ranked list of the sentences most responsible for the verdict.

pub mod coattn;
pub mod data;
pub mod encoder;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod init;
pub mod model;
pub mod parallel;
pub mod selftest;
pub mod synthetic;
pub mod train;
pub mod tensor;
