//! Weak-supervision pipeline for binary classification of remote-sensing
//! locations.
//!
//! The crate covers the full loop: labeling functions (synthetic noisy voters
//! for benchmarks, plus HTTP clients for VLM endpoints) emit weak votes over
//! a dataset manifest; a generative label model fits per-LF accuracy weights
//! from the vote matrix alone and produces probabilistic pseudo-labels; a
//! small student network trains on those pseudo-labels with a noise-aware
//! KL loss over precomputed image features; expert-vote aggregation and
//! confusion-matrix metrics close the evaluation loop. The `wsgully` binary
//! orchestrates the stages over on-disk artifacts.

pub mod config;
pub mod data;
pub mod label_model;
pub mod lf;
pub mod metrics;
pub mod pipeline;
pub mod student;
pub mod voting;


mod fsutil;
mod optim;
