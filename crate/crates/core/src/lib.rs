//! Distantly-supervised relation extraction over entity-centric corpora.
//!
//! The pipeline matches knowledge-base triples against documents to obtain
//! seed (subject, noun phrase) pairs, couples candidate pairs through a
//! bipartite mention/list graph enriched with section and context-similarity
//! edges, propagates seed labels with one personalized PageRank per relation,
//! and finally trains sparse linear classifiers on the highest-ranked lists.
//!
//! Each stage lives in its own module:
//!
//! * [`corpus`]: interchange format, noun-phrase chunking, coordinate lists.
//! * [`simstring`]: SoftTFIDF name matching and context cosine.
//! * [`kb`]: triple loading, seed generation and seed splits.
//! * [`graph`]: the propagation graph with L-, S- and N-edges.
//! * [`propagate`]: MultiRankWalk scoring, labeling and top-N selection.
//! * [`features`]: feature extraction and frequency filtering.
//! * [`classify`]: one-vs-rest linear SVMs with probability calibration.
//! * [`evaluate`]: IR-style P/R/F1, 11-point curves and QA metrics.
//! * [`pipeline`]: staged on-disk orchestration, baselines and ablations.
//! * [`synthdata`]: synthetic corpora with planted facts.

// negated comparisons are how NaN parameters fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod graph;
pub mod kb;
pub mod pipeline;
pub mod propagate;
pub mod relation;
pub mod simstring;
pub mod synthdata;

pub use error::{Error, Result};
pub use relation::Relation;
