//! Citation-network disruption analysis: CD-index metrics, degree- and
//! year-preserving rewired null networks, configuration-model predictions,
//! trend regressions, and corpus quality audits.
//!
//! The crate is organized around an immutable [`graph::CitationGraph`]:
//!
//! * [`graph`] — loading, validation, and adjacency for citation corpora
//! * [`metrics`] — CD-index family per focal work, percentile normalization
//! * [`rewire`] — stratified double-edge-swap null networks and z-scores
//! * [`nullmodel`] — closed-form configuration-model predictions and their
//!   Monte-Carlo verification
//! * [`stats`] — OLS with robust/clustered errors, predicted-value curves,
//!   percentile trend slopes
//! * [`audit`] — crosswalks, corpus filters, prevalence shares, coverage
//!   contingency tables
//! * [`synth`] — seeded synthetic corpus generation for calibration runs
//! * [`testkit`] — brute-force oracles and fixture builders used by the
//!   test suites; not intended for production use

pub mod audit;
pub mod graph;
pub mod metrics;
pub mod nullmodel;
pub mod rewire;
pub mod stats;
pub mod synth;
pub mod testkit;
