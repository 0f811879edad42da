use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::instance::Instance;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BLANK: &str = "<blank>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BLANK_ID: usize = 2;

/// Case-sensitive token/id bijection with reserved padding, unknown and
/// blank-marker entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from(vec![PAD.to_string(), UNK.to_string(), BLANK.to_string()])
    }
}

impl Vocab {
    /// Tokens in order of first appearance, keeping those seen at least
    /// `min_count` times.
    pub fn build<'a, I>(tokens: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order = Vec::new();
        for t in tokens {
            let c = counts.entry(t).or_insert(0);
            if *c == 0 {
                order.push(t);
            }
            *c += 1;
        }
        let mut v = Vocab::default();
        for t in order {
            if counts[t] >= min_count.max(1) {
                v.insert(t);
            }
        }
        v
    }

    /// Vocabulary over every context and target-sentence token of `instances`.
    pub fn from_instances(instances: &[Instance], min_count: usize) -> Self {
        Self::build(
            instances
                .iter()
                .flat_map(|i| i.context.iter().flatten().chain(i.target_sentence.iter()))
                .map(String::as_str),
            min_count,
        )
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids<I, S>(&self, tokens: I) -> Vec<usize>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        tokens.into_iter().map(|t| self.id(t.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_come_first() {
        let v = Vocab::build(["a", "b", "a"], 1);
        assert_eq!(v.get(PAD), Some(PAD_ID));
        assert_eq!(v.get(UNK), Some(UNK_ID));
        assert_eq!(v.get(BLANK), Some(BLANK_ID));
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("b"), 4);
        assert_eq!(v.id("zzz"), UNK_ID);
    }

    #[test]
    fn case_sensitive_and_min_count() {
        let v = Vocab::build(["Wolf", "wolf", "wolf"], 2);
        assert_eq!(v.get("Wolf"), None);
        assert!(v.get("wolf").is_some());
    }

    #[test]
    fn serializes_as_token_list() {
        let v = Vocab::build(["x"], 1);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["<pad>","<unk>","<blank>","x"]"#);
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
