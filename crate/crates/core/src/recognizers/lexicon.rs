//! Unit and currency token tables, shipped as editable data files and
//! embedded as compile-time defaults.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

const UNITS_TSV: &str = include_str!("../../data/units.tsv");
const CURRENCIES_TSV: &str = include_str!("../../data/currencies.tsv");

/// Tokens that turn an adjacent number into QUANTITY or MONEY. Stored
/// lowercased; lookups fold case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    units: BTreeSet<String>,
    currencies: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: expected \"token<TAB>KIND\", got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("lexicon line {line}: unknown kind {kind:?} (expected UNIT or CURRENCY)")]
    BadKind { line: usize, kind: String },
}

impl Lexicon {
    /// Parses "token<TAB>KIND" lines; KIND is UNIT or CURRENCY. Lines
    /// starting with "#" and blank lines are skipped.
    pub fn parse(content: &str) -> Result<Self, LexiconError> {
        let mut lexicon = Lexicon::default();
        lexicon.extend_from(content)?;
        Ok(lexicon)
    }

    /// Adds entries from another lexicon file to this one.
    pub fn extend_from(&mut self, content: &str) -> Result<(), LexiconError> {
        for (index, raw) in content.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (token, kind) = trimmed.split_once('\t').ok_or_else(|| LexiconError::BadLine {
                line,
                text: raw.to_string(),
            })?;
            let token = token.trim();
            if token.is_empty() {
                return Err(LexiconError::BadLine {
                    line,
                    text: raw.to_string(),
                });
            }
            match kind.trim() {
                "UNIT" => self.units.insert(token.to_lowercase()),
                "CURRENCY" => self.currencies.insert(token.to_lowercase()),
                other => {
                    return Err(LexiconError::BadKind {
                        line,
                        kind: other.to_string(),
                    })
                }
            };
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let content = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Lexicon::parse(&content)
    }

    pub fn is_unit(&self, token: &str) -> bool {
        self.units.contains(&token.to_lowercase())
    }

    pub fn is_currency(&self, token: &str) -> bool {
        self.currencies.contains(&token.to_lowercase())
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn currency_count(&self) -> usize {
        self.currencies.len()
    }
}

/// The bundled unit and currency tables.
pub fn default_lexicon() -> &'static Lexicon {
    static DEFAULT: OnceLock<Lexicon> = OnceLock::new();
    DEFAULT.get_or_init(|| {
        let mut lexicon = Lexicon::parse(UNITS_TSV).expect("bundled units table parses");
        lexicon
            .extend_from(CURRENCIES_TSV)
            .expect("bundled currency table parses");
        lexicon
    })
}
