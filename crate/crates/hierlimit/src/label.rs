//! Language labels: ISO 639-3 codes, `iso_subdivision` variety codes, and
//! the reserved `und` unknown tag.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const UND: &str = "und";

/// An ISO 639-3 code (`ben`), a variety code (`gon_bastar`), or `und`.
///
/// Labels are lowercase ASCII letters with single underscores separating
/// non-empty segments. `und` is reserved for unknown-language predictions
/// and is rejected as a training label unless explicitly enabled.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageLabel(String);

impl LanguageLabel {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.is_empty() {
            return Err(Error::Validation("language label is empty".into()));
        }
        if !code.bytes().all(|b| b == b'_' || b.is_ascii_lowercase()) {
            return Err(Error::Validation(format!(
                "language label {code:?} must be lowercase ASCII letters and underscores"
            )));
        }
        if code.split('_').any(str::is_empty) {
            return Err(Error::Validation(format!(
                "language label {code:?} has an empty underscore-separated segment"
            )));
        }
        Ok(LanguageLabel(code))
    }

    pub fn und() -> Self {
        LanguageLabel(UND.to_string())
    }

    pub fn is_und(&self) -> bool {
        self.0 == UND
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LanguageLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LanguageLabel::new(s)
    }
}

impl TryFrom<String> for LanguageLabel {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        LanguageLabel::new(value)
    }
}

impl From<LanguageLabel> for String {
    fn from(value: LanguageLabel) -> Self {
        value.0
    }
}
