//! Bite detection from dual-wrist inertial data, eating episode clustering
//! and eating speed estimation.
//!
//! The processing chain is
//! [`preprocess`] → [`model`] → [`bites`] → [`episodes`], with [`metrics`]
//! scoring each stage against annotations and [`synth`] generating labeled
//! recordings for tests and benchmarks.

pub mod bites;
pub mod datamodel;
pub mod episodes;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod synth;

pub use bites::{detect_bites, BiteSet, BiteSource};
pub use datamodel::{
    BiteClass, BiteHand, BiteInterval, Class, EatingEpisode, FrameSeries, Hand, Interval, LabelSequence, Recording,
};
pub use episodes::{detect_episodes, EpisodeParams, EpisodeSet, MinuteSpeedTrack};
pub use error::{Error, Result};
pub use metrics::{EvalAccumulator, EvalReport};
pub use model::{Checkpoint, ModelConfig, Predictor, ProbSequence};
pub use preprocess::{CombinedSeries, NormStats, WindowBatch};
