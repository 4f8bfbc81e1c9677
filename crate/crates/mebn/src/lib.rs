//! Multi-entity Bayesian network (MEBN) engine.
//!
//! Knowledge is stored as parameterized Bayesian-network fragments over typed
//! entities. Queries trigger bottom-up construction of a situation-specific
//! network (SSN), which is evaluated exactly. Uncertainty about which entity
//! produced which observation is represented by association hypothesis nodes
//! and the reserved `*` ("not relevant to query") state. Hypothesis management
//! (suggestors, spatial gating, star-posterior pruning) keeps the hypothesis
//! population tractable.
//!
//! Modules:
//! - [`bn`]: finite discrete Bayesian networks with exact inference,
//!   d-separation and query-preserving pruning.
//! - [`kb`]: the MEBN knowledge base (hypothesis types, fragments, validation)
//!   and its text format.
//! - [`ssn`]: situation-specific network construction and evaluation.
//! - [`hypman`]: suggestors, gating, star pruning and the refine cycle.
//! - [`domain`]: the bundled battlefield domain (KB, scenario generator,
//!   scoring).
//! - [`cli`]: the `mebn` command-line front end.

pub mod bn;
pub mod cli;
pub mod domain;
pub mod hypman;
pub mod kb;
pub mod ssn;

/// Reserved state label meaning "not relevant to query".
pub const STAR: &str = "*";
