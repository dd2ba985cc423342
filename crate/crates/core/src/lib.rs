pub mod cli;
pub mod compose;
pub mod error;
pub mod gdpt;
pub mod identify;
pub mod numfmt;
pub mod profiles;
pub mod specfun;
pub mod transform;
