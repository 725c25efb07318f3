//! Compliance-by-construction argument graphs: drafters propose, a
//! deterministic kernel disposes, and a hash-chained PROV ledger records
//! how every persisted decision came to be.

pub mod canonical;
pub mod cli;
pub mod clock;
pub mod drafter;
pub mod evidence;
pub mod kernel;
pub mod knowledge;
pub mod ledger;
pub mod model;
pub mod pipeline;
pub mod policy;
pub mod service;
