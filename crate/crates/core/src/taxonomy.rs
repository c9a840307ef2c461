//! The closed fallacy set, its persuasive-strategy grouping, definitions,
//! display colors and lenient label parsing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TaxonomyError;

/// One of the five detected fallacies, or the `Nothing` sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FallacyLabel {
    AgainstThePerson,
    AppealToAuthority,
    AppealToPopularity,
    AppealToEmotion,
    QuestionableCause,
    Nothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PersuasiveStrategy {
    Ethos,
    Pathos,
    Logos,
}

/// Color token for user-authored highlights. Never used by a fallacy.
pub const USER_HIGHLIGHT_COLOR: &str = "light-red";

impl FallacyLabel {
    /// The five fallacies, in table order. Excludes `Nothing`.
    pub const FALLACIES: [FallacyLabel; 5] = [
        FallacyLabel::AgainstThePerson,
        FallacyLabel::AppealToAuthority,
        FallacyLabel::AppealToPopularity,
        FallacyLabel::AppealToEmotion,
        FallacyLabel::QuestionableCause,
    ];

    /// All six variants; `Nothing` last. Used as the confusion-matrix axis.
    pub const ALL: [FallacyLabel; 6] = [
        FallacyLabel::AgainstThePerson,
        FallacyLabel::AppealToAuthority,
        FallacyLabel::AppealToPopularity,
        FallacyLabel::AppealToEmotion,
        FallacyLabel::QuestionableCause,
        FallacyLabel::Nothing,
    ];

    pub fn index(self) -> usize {
        match self {
            FallacyLabel::AgainstThePerson => 0,
            FallacyLabel::AppealToAuthority => 1,
            FallacyLabel::AppealToPopularity => 2,
            FallacyLabel::AppealToEmotion => 3,
            FallacyLabel::QuestionableCause => 4,
            FallacyLabel::Nothing => 5,
        }
    }

    pub fn is_fallacy(self) -> bool {
        self != FallacyLabel::Nothing
    }

    pub fn strategy(self) -> Option<PersuasiveStrategy> {
        match self {
            FallacyLabel::AgainstThePerson | FallacyLabel::AppealToAuthority => {
                Some(PersuasiveStrategy::Ethos)
            }
            FallacyLabel::AppealToPopularity | FallacyLabel::AppealToEmotion => {
                Some(PersuasiveStrategy::Pathos)
            }
            FallacyLabel::QuestionableCause => Some(PersuasiveStrategy::Logos),
            FallacyLabel::Nothing => None,
        }
    }

    pub fn english_name(self) -> &'static str {
        match self {
            FallacyLabel::AgainstThePerson => "against the person",
            FallacyLabel::AppealToAuthority => "appeal to authority",
            FallacyLabel::AppealToPopularity => "appeal to popularity",
            FallacyLabel::AppealToEmotion => "appeal to emotion",
            FallacyLabel::QuestionableCause => "questionable cause",
            FallacyLabel::Nothing => "nothing",
        }
    }

    /// Short Latin alias, as used by the evaluation corpus.
    pub fn latin_alias(self) -> Option<&'static str> {
        match self {
            FallacyLabel::AgainstThePerson => Some("ad hominem"),
            FallacyLabel::AppealToAuthority => Some("ad verecundiam"),
            FallacyLabel::AppealToPopularity => Some("ad populum"),
            FallacyLabel::AppealToEmotion => Some("ad passiones"),
            FallacyLabel::QuestionableCause => Some("non causa pro causa"),
            FallacyLabel::Nothing => None,
        }
    }

    /// The name the detection prompt uses for this fallacy.
    pub fn prompt_name(self) -> &'static str {
        match self {
            FallacyLabel::AgainstThePerson => "ad hominem",
            FallacyLabel::AppealToPopularity => "ad populum",
            other => other.english_name(),
        }
    }
}

impl fmt::Display for FallacyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.english_name())
    }
}

/// Display card for one of the five fallacies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FallacyCard {
    pub label: FallacyLabel,
    pub english_name: &'static str,
    pub latin_name: &'static str,
    pub strategy: PersuasiveStrategy,
    pub definition: &'static str,
    pub color_token: &'static str,
}

pub fn card_for(label: FallacyLabel) -> Result<FallacyCard, TaxonomyError> {
    let (latin_name, definition, color_token) = match label {
        FallacyLabel::AgainstThePerson => (
            "Argumentum Ad Hominem",
            "Attacking the person or some aspect of the person making the argument instead of addressing the argument directly.",
            "orange",
        ),
        FallacyLabel::AppealToAuthority => (
            "Argumentum Ad Verecundiam",
            "Using an alleged authority who is not really an authority on the facts relevant to the argument as evidence.",
            "yellow",
        ),
        FallacyLabel::AppealToPopularity => (
            "Argumentum Ad Populum",
            "Affirming that something is real or better because the majority in general or of a particular group thinks so.",
            "green",
        ),
        FallacyLabel::AppealToEmotion => (
            "Argumentum Ad Passiones",
            "Manipulating the reader's emotions in order to win the argument in place of a valid reason.",
            "blue",
        ),
        FallacyLabel::QuestionableCause => (
            "Non Causa Pro Causa",
            "Concluding that one thing caused another simply because they are regularly associated.",
            "violet",
        ),
        FallacyLabel::Nothing => return Err(TaxonomyError::NoCard),
    };
    Ok(FallacyCard {
        label,
        english_name: label.english_name(),
        latin_name,
        strategy: label.strategy().expect("fallacies always have a strategy"),
        definition,
        color_token,
    })
}

/// Result of [`parse_label`]. `out_of_set` is set when the input named
/// something outside the closed set and was collapsed to `Nothing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedLabel {
    pub label: FallacyLabel,
    pub out_of_set: bool,
}

/// Total, case-insensitive label parser. Unknown names become `Nothing`
/// with `out_of_set` set.
pub fn parse_label(raw: &str) -> ParsedLabel {
    let key = raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let key = key.trim_matches(|c: char| matches!(c, '"' | '\'' | '.' | ','));
    let key = key.strip_prefix("argumentum ").unwrap_or(key);

    if key == "nothing" {
        return ParsedLabel {
            label: FallacyLabel::Nothing,
            out_of_set: false,
        };
    }
    for label in FallacyLabel::FALLACIES {
        if key == label.english_name() || Some(key) == label.latin_alias() {
            return ParsedLabel {
                label,
                out_of_set: false,
            };
        }
    }
    ParsedLabel {
        label: FallacyLabel::Nothing,
        out_of_set: true,
    }
}
