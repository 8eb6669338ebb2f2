pub mod bagstore;
pub mod cli;
pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod head;
pub mod localize;
pub mod numkit;
pub mod statstream;
pub mod synthbench;
pub mod topostream;
pub mod trainer;

pub use error::{Error, Result};
