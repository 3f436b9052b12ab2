//! Canonical entity category taxonomy and raw-label normalization.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The canonical entity categories.
///
/// Serialized names are uppercase ASCII and stable; they appear verbatim in
/// result files and API payloads. `Miscellaneous` is a normalization target
/// for backend labels that do not map onto the other eighteen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Person,
    Norp,
    Fac,
    Org,
    Gpe,
    Location,
    Product,
    Event,
    WorkOfArt,
    Law,
    Language,
    Date,
    Time,
    Percent,
    Money,
    Quantity,
    Ordinal,
    Cardinal,
    Miscellaneous,
}

impl Category {
    /// All categories in declaration order.
    pub const ALL: [Category; 19] = [
        Category::Person,
        Category::Norp,
        Category::Fac,
        Category::Org,
        Category::Gpe,
        Category::Location,
        Category::Product,
        Category::Event,
        Category::WorkOfArt,
        Category::Law,
        Category::Language,
        Category::Date,
        Category::Time,
        Category::Percent,
        Category::Money,
        Category::Quantity,
        Category::Ordinal,
        Category::Cardinal,
        Category::Miscellaneous,
    ];

    /// Canonical serialized name (uppercase, underscore-separated).
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Person => "PERSON",
            Category::Norp => "NORP",
            Category::Fac => "FAC",
            Category::Org => "ORG",
            Category::Gpe => "GPE",
            Category::Location => "LOCATION",
            Category::Product => "PRODUCT",
            Category::Event => "EVENT",
            Category::WorkOfArt => "WORK_OF_ART",
            Category::Law => "LAW",
            Category::Language => "LANGUAGE",
            Category::Date => "DATE",
            Category::Time => "TIME",
            Category::Percent => "PERCENT",
            Category::Money => "MONEY",
            Category::Quantity => "QUANTITY",
            Category::Ordinal => "ORDINAL",
            Category::Cardinal => "CARDINAL",
            Category::Miscellaneous => "MISCELLANEOUS",
        }
    }

    /// Canonical names, sorted lexicographically (the `/categories` listing).
    pub fn sorted_names() -> Vec<&'static str> {
        let mut names: Vec<&'static str> = Self::ALL.iter().map(|c| c.as_str()).collect();
        names.sort_unstable();
        names
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parses a canonical category name. Exact match only; raw backend labels go
/// through [`normalize_category`] instead.
impl FromStr for Category {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// A raw label that matched neither the per-model alias map nor the default
/// alias table while strict labeling was requested.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity label: {0:?}")]
pub struct UnknownLabel(pub String);

/// Alias map from raw backend labels to canonical categories. Keys are
/// matched case-insensitively.
pub type AliasMap = BTreeMap<String, Category>;

fn default_alias_table() -> &'static BTreeMap<String, Category> {
    static TABLE: OnceLock<BTreeMap<String, Category>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = BTreeMap::new();
        // Every canonical name maps to itself.
        for category in Category::ALL {
            table.insert(category.as_str().to_string(), category);
        }
        // CoNLL-style short labels.
        table.insert("PER".to_string(), Category::Person);
        table.insert("LOC".to_string(), Category::Location);
        table.insert("MISC".to_string(), Category::Miscellaneous);
        table
    })
}

/// Maps a backend's raw label onto the canonical category set.
///
/// Lookup is case-insensitive: first in `alias_map`, then in the built-in
/// default table. An unmatched label falls back to
/// [`Category::Miscellaneous`] unless `strict` is set, in which case it is an
/// [`UnknownLabel`] error.
pub fn normalize_category(
    raw_label: &str,
    alias_map: &AliasMap,
    strict: bool,
) -> Result<Category, UnknownLabel> {
    let key = raw_label.trim().to_uppercase();
    if !key.is_empty() {
        for (alias, category) in alias_map {
            if alias.trim().to_uppercase() == key {
                return Ok(*category);
            }
        }
        if let Some(category) = default_alias_table().get(&key) {
            return Ok(*category);
        }
    }
    if strict {
        Err(UnknownLabel(raw_label.to_string()))
    } else {
        Ok(Category::Miscellaneous)
    }
}
