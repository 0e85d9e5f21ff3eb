pub mod cns_model;
pub mod error;
pub mod helmholtz;
pub mod integrator;
pub mod io;
pub mod estimate;
pub mod harness;
pub mod ledger;
pub mod littlewood_paley;
pub mod spectral;

pub use error::{Error, Result};
