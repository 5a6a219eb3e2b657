//! Executable checks of the existence machinery and the two worked examples.
//!
//! Every check returns a typed report; [`Verdict`] is the common JSON shape
//! `{"pass", "worst", "details"}` the CLI writes.

mod chain;
mod curl;
mod examples;
mod exclusion;
mod identities;
pub mod random;

pub use chain::{chain_check, ChainReport};
pub use curl::{curl_lower_bound_check, CurlBound, FrameTransform};
pub use examples::{example_41, example_52, Ex41Report, Ex52Report, Ex52Row, Ex41Options, Ex52Options};
pub use exclusion::{exclusion_check, BoxCover, ExclusionReport, SliceRecord};
pub use identities::{cofactor_identity_check, div_bound_check, DivBound};

use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub pass: bool,
    #[serde(serialize_with = "crate::io::ser_f64")]
    pub worst: f64,
    pub details: serde_json::Value,
}

impl Verdict {
    pub fn new<D: Serialize>(pass: bool, worst: f64, details: &D) -> Self {
        Self { pass, worst, details: serde_json::to_value(details).unwrap_or(serde_json::Value::Null) }
    }
}
