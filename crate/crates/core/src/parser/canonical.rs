use serde::{Deserialize, Serialize};

use crate::types::{CategoryLabel, SentimentTuple, TermSpan};

/// String-equality preprocessing applied before exact-match comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "PolicyRepr")]
pub struct CanonicalizationPolicy {
    lowercase: bool,
    collapse_whitespace: bool,
    strict: bool,
}

#[derive(Deserialize)]
struct PolicyRepr {
    #[serde(default = "yes")]
    lowercase: bool,
    #[serde(default = "yes")]
    collapse_whitespace: bool,
    #[serde(default)]
    strict: bool,
}

fn yes() -> bool {
    true
}

impl From<PolicyRepr> for CanonicalizationPolicy {
    fn from(r: PolicyRepr) -> Self {
        if r.strict {
            Self::strict()
        } else {
            Self::new(r.lowercase, r.collapse_whitespace)
        }
    }
}

impl Default for CanonicalizationPolicy {
    fn default() -> Self {
        Self::new(true, true)
    }
}

impl CanonicalizationPolicy {
    /// Byte equality: canonicalization is the identity.
    pub fn strict() -> Self {
        CanonicalizationPolicy {
            lowercase: false,
            collapse_whitespace: false,
            strict: true,
        }
    }

    /// Non-strict policies always trim; `lowercase` and `collapse_whitespace`
    /// add to that.
    pub fn new(lowercase: bool, collapse_whitespace: bool) -> Self {
        CanonicalizationPolicy {
            lowercase,
            collapse_whitespace,
            strict: false,
        }
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn collapse_whitespace(&self) -> bool {
        self.collapse_whitespace
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn apply(&self, text: &str) -> String {
        if self.strict {
            return text.to_string();
        }
        let spaced = if self.collapse_whitespace {
            text.split_whitespace().collect::<Vec<_>>().join(" ")
        } else {
            text.trim().to_string()
        };
        if self.lowercase {
            spaced.to_lowercase()
        } else {
            spaced
        }
    }

    /// Short stable label used in reports and table headers.
    pub fn label(&self) -> String {
        if self.strict {
            return "strict".into();
        }
        let mut parts = vec!["trim"];
        if self.lowercase {
            parts.push("lowercase");
        }
        if self.collapse_whitespace {
            parts.push("collapse-ws");
        }
        parts.join("+")
    }
}

fn canonical_span(span: &TermSpan, policy: &CanonicalizationPolicy) -> TermSpan {
    match span {
        TermSpan::Explicit(text) => TermSpan::Explicit(policy.apply(text)),
        TermSpan::Implicit => TermSpan::Implicit,
    }
}

/// Deterministic normal form of a tuple. Implicit spans and polarity are
/// left untouched.
pub fn canonicalize(tuple: &SentimentTuple, policy: &CanonicalizationPolicy) -> SentimentTuple {
    if policy.strict {
        return tuple.clone();
    }
    SentimentTuple {
        aspect: canonical_span(&tuple.aspect, policy),
        category: tuple
            .category
            .as_ref()
            .map(|c| CategoryLabel(policy.apply(c.as_str()))),
        polarity: tuple.polarity,
        opinion: tuple.opinion.as_ref().map(|o| canonical_span(o, policy)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Polarity;
    use proptest::prelude::*;

    #[test]
    fn default_trims_collapses_and_lowercases() {
        let t = SentimentTuple::quad("  Great   Quality ", "Food  Quality", Polarity::Positive, "null");
        let c = canonicalize(&t, &CanonicalizationPolicy::default());
        assert_eq!(c.aspect, TermSpan::explicit("great quality"));
        assert_eq!(c.category.unwrap().as_str(), "food quality");
        assert_eq!(c.opinion, Some(TermSpan::Implicit));
    }

    #[test]
    fn strict_is_identity() {
        let t = SentimentTuple::aste("  Great   Quality ", "X", Polarity::Neutral);
        assert_eq!(canonicalize(&t, &CanonicalizationPolicy::strict()), t);
    }

    #[test]
    fn strict_flag_in_config_forces_other_flags_off() {
        let p: CanonicalizationPolicy =
            serde_json::from_str(r#"{"lowercase":true,"collapse_whitespace":true,"strict":true}"#).unwrap();
        assert_eq!(p, CanonicalizationPolicy::strict());
        let d: CanonicalizationPolicy = serde_json::from_str("{}").unwrap();
        assert_eq!(d, CanonicalizationPolicy::default());
    }

    fn term() -> impl Strategy<Value = TermSpan> {
        prop_oneof![
            1 => Just(TermSpan::Implicit),
            4 => "[ \\tA-Za-z\u{c0}-\u{17f}'\"]{1,12}".prop_map(TermSpan::Explicit),
        ]
    }

    fn policy() -> impl Strategy<Value = CanonicalizationPolicy> {
        prop_oneof![
            Just(CanonicalizationPolicy::strict()),
            (any::<bool>(), any::<bool>()).prop_map(|(l, c)| CanonicalizationPolicy::new(l, c)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn idempotent_and_kind_preserving(
            aspect in term(),
            opinion in term(),
            category in "[ A-Za-z_]{1,10}",
            pol in 0usize..3,
            policy in policy(),
        ) {
            let t = SentimentTuple {
                aspect,
                category: Some(CategoryLabel(category)),
                polarity: Polarity::ALL[pol],
                opinion: Some(opinion),
            };
            let once = canonicalize(&t, &policy);
            let twice = canonicalize(&once, &policy);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.aspect.is_implicit(), t.aspect.is_implicit());
            prop_assert_eq!(once.polarity, t.polarity);
        }
    }
}
