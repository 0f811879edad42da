use serde::{Deserialize, Serialize};

use crate::instance::Instance;

pub const NUM_FEATURES: usize = 4;

/// Hand-engineered signals for one context position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFeatures {
    /// The token also occurs in the target sentence (blank excluded).
    pub in_target_sentence: bool,
    /// Occurrences of the token in the whole context.
    pub frequency: f64,
    /// First occurrence index divided by the context length.
    pub first_occurrence_frac: f64,
    /// The preceding context token equals the token left of the blank.
    pub left_match: bool,
}

impl PositionFeatures {
    pub fn to_array(self) -> [f64; NUM_FEATURES] {
        [
            f64::from(u8::from(self.in_target_sentence)),
            self.frequency,
            self.first_occurrence_frac,
            f64::from(u8::from(self.left_match)),
        ]
    }
}

/// Features for every position of the flattened context.
pub fn compute_features(instance: &Instance) -> Vec<PositionFeatures> {
    let context = instance.flat_context();
    let n = context.len();
    let query = instance.query_prefix();
    let blank_left = query.last().map(String::as_str);

    let mut counts: std::collections::HashMap<&str, (usize, usize)> = std::collections::HashMap::new();
    for (i, tok) in context.iter().enumerate() {
        counts.entry(tok).or_insert((0, i)).0 += 1;
    }
    context
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let (freq, first) = counts[tok];
            PositionFeatures {
                in_target_sentence: query.iter().any(|q| q == tok),
                frequency: freq as f64,
                first_occurrence_frac: first as f64 / n as f64,
                left_match: i > 0 && blank_left == Some(context[i - 1]),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(context: &str, target: &str) -> Instance {
        let s = |x: &str| x.split_whitespace().map(String::from).collect();
        Instance::new("f", vec![s(context)], s(target)).unwrap()
    }

    #[test]
    fn definitions_on_a_small_context() {
        let f = compute_features(&inst("John saw Mary", "He greeted __"));
        assert_eq!(f[0].to_array(), [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f[2].first_occurrence_frac, 2.0 / 3.0);
    }

    #[test]
    fn left_match_and_frequency() {
        let f = compute_features(&inst("a b a", "x b __"));
        assert_eq!(f[2].to_array(), [0.0, 2.0, 0.0, 1.0]);
        assert!(f[1].in_target_sentence);
        assert!(!f[0].left_match);
    }

    #[test]
    fn single_token_target_has_no_left_neighbour() {
        let f = compute_features(&inst("a a", "a"));
        assert!(f.iter().all(|p| !p.left_match && !p.in_target_sentence));
    }
}
