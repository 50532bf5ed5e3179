//! Geographic and popularity bias measurement and mitigation for
//! collaborative-filtering recommendation lists.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dataset`]: rating files, continent sidecars, filtering, train/test
//!   splits, the item catalog with popularity groups, and target distributions.
//! - [`recommenders`]: vanilla top-n generators (MostPopular, RandomGuess,
//!   UserKNN, ItemKNN, BiasedMF, BPR) and the list TSV interchange format.
//! - [`metrics`]: visibility and exposure bias for continents and popularity
//!   groups, total absolute bias, and NDCG.
//! - [`mitigation`]: the multi-facet swap re-ranker and its two-phase
//!   (visibility, then exposure) driver.
//! - [`testkit`]: synthetic data, the eight-item toy fixture and a brute-force
//!   re-ranking oracle.
//! - [`harness`]: end-to-end experiment runs, reports and run comparison.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod ids;
pub mod metrics;
pub mod mitigation;
pub mod recommenders;
pub mod testkit;

pub use error::{Error, Result};
pub use ids::{ItemId, UserId};
