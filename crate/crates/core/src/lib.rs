pub mod bergman;
pub mod error;
pub mod hecke;
pub mod monodromy;
pub mod poly;
pub mod symbol;
pub mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
