pub mod error;
pub mod eval;
pub mod gateway;
pub mod probe;
pub mod store;
pub mod web;
pub mod highlight;
pub mod parser;
pub mod prompt;
pub mod taxonomy;
pub mod text;

pub use error::*;
pub use taxonomy::{card_for, parse_label, FallacyCard, FallacyLabel, PersuasiveStrategy};
