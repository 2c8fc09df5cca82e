//! Time-based asynchronous independent cascades (T-BaSIC).
//!
//! The crate covers the whole modelling pipeline for topic diffusion in a
//! follower network:
//!
//! * [`corpus`] ingests tweets and follow edges and aggregates per-user
//!   behavioural profiles over a learning period.
//! * [`topics`] scores terms by burstiness and matches tweets to topics.
//! * [`cascade`] rebuilds who-influenced-whom trees with the Last-Influence
//!   rule and turns them into labelled diffusion / non-diffusion pairs.
//! * [`features`] computes the 13-value description of a (sender, receiver,
//!   topic, time-of-day) tuple.
//! * [`learn`] fits the logistic diffusion function and calibrates the
//!   receiver-dependent delay scale.
//! * [`engine`] runs the continuous-time cascade simulation and aggregates
//!   Monte-Carlo runs into a daily volume curve.
//! * [`eval`] scores predicted curves against observed ones and against the
//!   1-time-lag baseline.
//! * [`synth`] generates synthetic corpora with a planted ground truth.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Every
//! parallel reduction uses a fixed partition so results do not depend on the
//! thread count.

pub mod cascade;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod features;
pub mod learn;
pub mod par;
pub mod synth;
pub mod text;
pub mod time;
pub mod topics;

pub use error::{Error, Result};
