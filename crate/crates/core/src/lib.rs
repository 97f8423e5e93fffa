//! Builds training diffsets and factual probe sets from two consecutive
//! snapshots of an encyclopedia and its knowledge base.
//!
//! The crate is a set of streaming stages: [`ingest`] reads snapshots,
//! [`textseg`] and [`diff`] extract the text that is new in the recent
//! snapshot, [`categorize`] splits recent facts into Unchanged and Changed,
//! [`qc`] turns facts into filtered probes and [`stats`] summarizes the
//! result. [`pipeline`] wires them together for the command line tool.

pub mod categorize;
pub mod diff;
pub mod error;
pub mod fraction;
pub mod ingest;
pub mod qc;
pub mod pipeline;
pub mod stats;
pub mod textseg;

pub use error::{Error, Position, Result};
pub use fraction::Fraction;
