//! Unsupervised opinion summarization driven by content plans.
//!
//! The pipeline has four stages backed by one frozen-then-reused model:
//!
//! 1. [`induction`] learns, without labels, a per-review *content plan*: a
//!    distribution over latent aspects and one over sentiment classes.
//! 2. [`synthesis`] turns a plain review corpus into synthetic
//!    summary/input pairs by treating one review as a pseudo-summary and
//!    matching plan-perturbed neighbors as its inputs.
//! 3. [`summarizer`] trains a plan-conditioned attention/copy decoder on
//!    those pairs and generates entity summaries with beam search.
//! 4. [`eval`] scores generated summaries with ROUGE and runs the
//!    sampling-strength and ablation studies.
//!
//! [`corpus`] supplies records, the subword vocabulary, and a synthetic
//! "desk" corpus with planted ground truth; [`pipeline`] wires the stages
//! into reproducible filesystem runs used by the CLI.

pub mod checkpoint;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod induction;
pub mod nn;
pub mod pipeline;
pub mod summarizer;
pub mod synthesis;
pub mod tensor;
