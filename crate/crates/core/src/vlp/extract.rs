//! Rule-based landmark extraction. Stands in for an instruction-parsing
//! language model: splits the instruction into segments at sequencing
//! connectives, strips leading/trailing function words and motion verbs, and
//! keeps the remaining noun phrases in textual order.

use super::{LandmarkList, VlpError};

pub trait LandmarkExtractor {
    fn extract(&self, instruction: &str) -> Result<LandmarkList, VlpError>;
}

/// Words that open a new segment wherever they appear.
const CONNECTIVES: &[&str] = &["then", "after", "past"];

/// Motion verbs; a comma or "and" followed by one of these also splits.
const VERBS: &[&str] = &[
    "go", "walk", "head", "move", "drive", "proceed", "continue", "turn", "pass", "reach",
    "follow", "take", "stop", "navigate", "travel", "keep", "cross", "approach", "find", "visit",
    "return", "stay", "enter", "exit", "leave", "arrive", "start", "begin", "ride",
];

/// Function words stripped from segment edges (with the verbs above).
const FILLERS: &[&str] = &[
    "to", "toward", "towards", "the", "a", "an", "at", "into", "in", "by", "via", "until",
    "till", "left", "right", "straight", "forward", "ahead", "along", "through", "around",
    "near", "next", "onto", "on", "up", "down", "over", "beyond", "behind", "and", "you",
    "your", "please",
];

fn is_connective(word: &str) -> bool {
    CONNECTIVES.contains(&word)
}

fn is_verb(word: &str) -> bool {
    VERBS.contains(&word)
}

fn is_stop_word(word: &str) -> bool {
    is_verb(word) || FILLERS.contains(&word)
}

#[derive(Debug, PartialEq)]
enum Token {
    Word(String),
    /// A comma: splits only when a verb or connective follows.
    SoftBreak,
    /// Sentence punctuation: always splits.
    HardBreak,
}

fn tokenize(instruction: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for raw in instruction.split_whitespace() {
        let lower = raw.to_lowercase();
        let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
        if !trimmed.is_empty() {
            tokens.push(Token::Word(trimmed.to_string()));
        }
        match lower.chars().last() {
            Some(',') => tokens.push(Token::SoftBreak),
            Some('.') | Some(';') | Some('!') | Some('?') => tokens.push(Token::HardBreak),
            _ => {}
        }
    }
    tokens
}

#[derive(Debug, Default)]
pub struct RuleBasedExtractor;

impl LandmarkExtractor for RuleBasedExtractor {
    fn extract(&self, instruction: &str) -> Result<LandmarkList, VlpError> {
        let tokens = tokenize(instruction);
        let mut segments: Vec<Vec<&str>> = vec![Vec::new()];
        for (i, token) in tokens.iter().enumerate() {
            let next_word = tokens.get(i + 1).and_then(|t| match t {
                Token::Word(w) => Some(w.as_str()),
                _ => None,
            });
            let splits_before_verb =
                next_word.is_some_and(|w| is_verb(w) || is_connective(w));
            match token {
                Token::HardBreak => segments.push(Vec::new()),
                Token::SoftBreak if splits_before_verb => segments.push(Vec::new()),
                Token::SoftBreak => {}
                Token::Word(w) if is_connective(w) => segments.push(Vec::new()),
                Token::Word(w) if w == "and" && splits_before_verb => segments.push(Vec::new()),
                Token::Word(w) => segments.last_mut().unwrap().push(w),
            }
        }

        let mut landmarks = Vec::new();
        for segment in segments {
            let mut phrase: &[&str] = &segment;
            while phrase.first().is_some_and(|w| is_stop_word(w)) {
                phrase = &phrase[1..];
            }
            while phrase.last().is_some_and(|w| is_stop_word(w)) {
                phrase = &phrase[..phrase.len() - 1];
            }
            if !phrase.is_empty() {
                landmarks.push(phrase.join(" "));
            }
        }
        if landmarks.is_empty() {
            return Err(VlpError::NoLandmarksFound);
        }
        LandmarkList::new(landmarks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extract(text: &str) -> Vec<String> {
        RuleBasedExtractor
            .extract(text)
            .unwrap()
            .as_slice()
            .to_vec()
    }

    #[test]
    fn splits_on_then() {
        assert_eq!(
            extract("go to the red road post then the gate"),
            vec!["red road post", "gate"]
        );
    }

    #[test]
    fn splits_on_comma_before_verb() {
        assert_eq!(
            extract("pass the solar panel, then reach the bench"),
            vec!["solar panel", "bench"]
        );
    }

    #[test]
    fn bare_verb_yields_no_landmarks() {
        assert!(matches!(
            RuleBasedExtractor.extract("stop"),
            Err(VlpError::NoLandmarksFound)
        ));
    }

    #[test]
    fn past_acts_as_connective() {
        assert_eq!(
            extract("walk past the fountain then the bridge"),
            vec!["fountain", "bridge"]
        );
    }

    #[test]
    fn comma_inside_phrase_does_not_split() {
        // comma not followed by a verb stays inside the phrase
        assert_eq!(
            extract("head to the tall, red silo"),
            vec!["tall red silo"]
        );
    }

    #[test]
    fn and_before_verb_splits() {
        assert_eq!(
            extract("cross the bridge and find the kiosk"),
            vec!["bridge", "kiosk"]
        );
    }

    #[test]
    fn sentence_punctuation_splits() {
        assert_eq!(
            extract("Go to the water tower. Then reach the shed."),
            vec!["water tower", "shed"]
        );
    }

    #[test]
    fn preserves_instruction_order() {
        assert_eq!(
            extract("pass the barn, then the windmill, then the pond"),
            vec!["barn", "windmill", "pond"]
        );
    }
}
