//! Explainable intrusion detection for flow-level network data.
//!
//! The crate covers the full workflow: loading and cleaning CSV flow
//! tables ([`data`]), training an interpretable decision tree ([`cart`]),
//! explaining individual predictions with a locally weighted surrogate
//! ([`localexplain`]), ranking features globally by permutation importance
//! ([`globalexplain`]), and wiring everything into a reproducible
//! experiment plus a confidence-gated detector ([`pipeline`]).
//!
//! All randomness flows through [`rng::stream`], so every artifact is a
//! pure function of the configured seed.

pub mod cart;
pub mod data;
pub mod globalexplain;
pub mod linalg;
pub mod localexplain;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod schema;
pub mod synth;

pub use cart::CartTree;
pub use data::{EncodedDataset, RawTable};
pub use globalexplain::GlobalImportance;
pub use localexplain::{LocalExplanation, TabularExplainer};
pub use models::BlackBoxModel;
pub use pipeline::{DetectionReport, ExperimentConfig, Metrics};
pub use schema::FeatureSchema;
