//! Bundled token lists: punctuation (excluded from candidate sets) and
//! stopwords (excluded from the context-restricted baselines).

use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use crate::error::{Error, Result};

const PUNCTUATION_TXT: &str = include_str!("../resources/punctuation.txt");
const STOPWORDS_TXT: &str = include_str!("../resources/stopwords.txt");

/// Version tag of the bundled lists, recorded in output metadata.
pub const RESOURCE_VERSION: &str = "1";

static PUNCTUATION: LazyLock<Arc<TokenSet>> = LazyLock::new(|| Arc::new(TokenSet::parse(PUNCTUATION_TXT, false)));
static STOPWORDS: LazyLock<Arc<TokenSet>> = LazyLock::new(|| Arc::new(TokenSet::parse(STOPWORDS_TXT, true)));

/// A set of tokens loaded from a one-token-per-line list.
///
/// Case-folded sets match tokens regardless of case; exact sets compare
/// surfaces byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    tokens: HashSet<String>,
    case_folded: bool,
}

impl TokenSet {
    fn parse(text: &str, case_folded: bool) -> Self {
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| if case_folded { l.to_lowercase() } else { l.to_string() })
            .collect();
        TokenSet { tokens, case_folded }
    }

    pub fn from_tokens<I, S>(tokens: I, case_folded: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens = tokens
            .into_iter()
            .map(|t| {
                let t = t.as_ref();
                if case_folded {
                    t.to_lowercase()
                } else {
                    t.to_string()
                }
            })
            .collect();
        TokenSet { tokens, case_folded }
    }

    /// Load a list file. Empty lists are rejected.
    pub fn load(path: &Path, case_folded: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set = Self::parse(&text, case_folded);
        if set.tokens.is_empty() {
            return Err(Error::Config(format!("token list {} is empty", path.display())));
        }
        Ok(set)
    }

    pub fn contains(&self, token: &str) -> bool {
        if self.case_folded {
            // Most tokens are already lowercase; avoid the allocation when so.
            if token.chars().any(char::is_uppercase) {
                self.tokens.contains(&token.to_lowercase())
            } else {
                self.tokens.contains(token)
            }
        } else {
            self.tokens.contains(token)
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// The bundled punctuation list (exact match).
pub fn punctuation() -> Arc<TokenSet> {
    Arc::clone(&PUNCTUATION)
}

/// The bundled stopword list (case-insensitive match).
pub fn stopwords() -> Arc<TokenSet> {
    Arc::clone(&STOPWORDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lists_are_non_empty() {
        assert!(punctuation().len() > 10);
        assert!(stopwords().len() > 50);
    }

    #[test]
    fn punctuation_is_exact_and_stopwords_fold_case() {
        let p = punctuation();
        assert!(p.contains("."));
        assert!(p.contains("''"));
        assert!(!p.contains("John"));
        let s = stopwords();
        assert!(s.contains("the"));
        assert!(s.contains("The"));
        assert!(!s.contains("wolf"));
    }

    #[test]
    fn loading_an_empty_list_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "\n  \n").unwrap();
        assert!(TokenSet::load(&path, false).is_err());
    }
}
