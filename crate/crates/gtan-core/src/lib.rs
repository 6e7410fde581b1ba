//! Learning-to-rank engine for community question answering.
//!
//! Builds one heterogeneous text graph per question (question, answer, and
//! word nodes with TF-IDF edges), propagates representations through a typed
//! gated graph network, refines them with an alternating tri-attention
//! mechanism, and scores answers with a small feed-forward head. Training is
//! pairwise hinge ranking on vote orderings; evaluation is P@1 / MRR / NDCG@K.
//!
//! Everything runs on a small dense-tensor reverse-mode autodiff engine in
//! [`tensor`], so the whole model is gradient-checkable against finite
//! differences at desk scale.

pub mod corpus;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod tensor;
pub mod train;
