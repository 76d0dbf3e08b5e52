//! Multi-task learning on propagation cascades.
//!
//! This crate models how a piece of content spreads through a social
//! platform as a propagation event (a tree of posts with timestamps) and
//! jointly learns three tasks from partially observed cascades:
//!
//! * rumor detection: classify an event as rumor or non-rumor,
//! * virality prediction: regress the log2 count of unique participating
//!   users of the full event from an observed prefix,
//! * user vulnerability scoring: regress, per user, the fraction of rumor
//!   events among the events the user participated in.
//!
//! The pipeline is: parse events ([`data`]), pretrain user embeddings on the
//! global co-interaction graph ([`pretrain`]), encode an observed cascade
//! into user representations with time-aware cross-attention and graph
//! aggregation ([`encoder`]), pool users into communities and decode the
//! three task outputs ([`model`]), train with one of several multi-task
//! weighting strategies ([`train`]), and score with ranking-aware metrics
//! ([`eval`]).
//!
//! All numerics are dense `f64` with hand-written backward passes; every
//! gradient is verified against central finite differences in the test
//! suite. Runs are deterministic given a seed: the same config and seed
//! produce byte-identical corpora, parameters, and reports, regardless of
//! thread count.

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod eval;
pub mod export;
pub mod linalg;
pub mod model;
pub mod par;
pub mod pretrain;
pub mod train;

pub use data::{Label, PropagationEvent};
pub use model::{ModelConfig, ModelParams};
pub use train::{Strategy, TrainConfig};
