use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A language identifier plus the grouping metadata used to compose stores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LanguageTag {
    code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grouping: Option<String>,
    #[serde(default)]
    is_bridge: bool,
}

impl LanguageTag {
    /// Codes are 1 to 8 lowercase ASCII letters.
    pub fn new(code: &str) -> Result<Self> {
        if code.is_empty() || code.len() > 8 || !code.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::invalid(format!(
                "language code {code:?} must be 1-8 lowercase ASCII letters"
            )));
        }
        Ok(LanguageTag { code: code.to_owned(), grouping: None, is_bridge: false })
    }

    pub fn with_grouping(mut self, grouping: impl Into<String>) -> Self {
        self.grouping = Some(grouping.into());
        self
    }

    pub fn with_bridge(mut self, is_bridge: bool) -> Self {
        self.is_bridge = is_bridge;
        self
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn grouping(&self) -> Option<&str> {
        self.grouping.as_deref()
    }

    pub fn is_bridge(&self) -> bool {
        self.is_bridge
    }

    /// Two tags name the same language when their codes match.
    pub fn same_language(&self, other: &LanguageTag) -> bool {
        self.code == other.code
    }

    pub(crate) fn validate(&self) -> Result<()> {
        LanguageTag::new(&self.code).map(|_| ())
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}
