//! Verification of the medical specialty users claim in an online health
//! community, from the language of what they post.
//!
//! The pipeline: ingest posts and profiles ([`corpus`]), count marker hits
//! per indicator group ([`lexicon`]), turn hits into per-1000-token rates and
//! average a trusted training sample into per-specialty prototypes
//! ([`indicators`]), weight indicators by how well they separate specialties
//! ([`weighting`]), classify users by weighted Euclidean distance and assign
//! each a verification outcome ([`verifier`]), and summarize outcomes for the
//! community ([`report`]). [`synthgen`] produces labeled synthetic communities.

pub mod corpus;
pub mod indicators;
pub mod lexicon;
pub mod pipeline;
pub mod report;
mod stats;
pub mod synthgen;
pub mod verifier;
pub mod weighting;

pub use corpus::{build_tracks, Corpus, InformationTrack, Label, Post, UserProfile};
pub use indicators::{IndicatorVector, ReferenceMatrix};
pub use lexicon::{load_lexicon, scan_track, MarkerLexicon, TrackAnalysis};
pub use report::{summarize, DistributionReport};
pub use verifier::{Outcome, Prediction, ReferenceModel, Thresholds, Verdict};
pub use weighting::WeightVector;
