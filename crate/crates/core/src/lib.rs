pub mod actors;
pub mod analysis;
pub mod cas;
pub mod cli;
pub mod contracts;
pub mod crypto;
pub mod ledger;
pub mod policy;
