pub mod bench;
pub mod correct;
pub mod cumulants;
pub mod ep;
pub mod error;
pub mod model;
pub mod oracle;
pub mod special;
pub mod tree;

pub use error::{Error, Result};

#[cfg(test)]
mod equivalence;
#[cfg(test)]
mod invariants;
