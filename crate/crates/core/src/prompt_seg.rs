//! Rule-based prompt segmentation.
//!
//! A prompt is cut at separator characters, and inside each cut piece a new
//! morpheme is opened by every lexicon preposition that is neither the first
//! word of the current morpheme nor the last word of its piece. The
//! preposition stays with the morpheme it opens, so "a cat with a hat"
//! becomes `["a cat", "with a hat"]`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{PromptDecomposition, PromptText};

const DEFAULT_RULES: &str = include_str!("../data/default_rules.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationRules {
    prepositions: BTreeSet<String>,
    separators: BTreeSet<char>,
    max_morphemes: usize,
}

impl SegmentationRules {
    pub fn new(
        prepositions: impl IntoIterator<Item = impl AsRef<str>>,
        separators: impl IntoIterator<Item = char>,
        max_morphemes: usize,
    ) -> Result<Self> {
        let prepositions: BTreeSet<String> = prepositions
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if prepositions.is_empty() {
            return Err(Error::Config("preposition lexicon is empty".into()));
        }
        if max_morphemes == 0 {
            return Err(Error::Config("max_morphemes must be at least 1".into()));
        }
        let separators: BTreeSet<char> = separators.into_iter().collect();
        if separators.iter().any(|c| c.is_whitespace()) {
            return Err(Error::Config("whitespace cannot be a separator".into()));
        }
        Ok(SegmentationRules {
            prepositions,
            separators,
            max_morphemes,
        })
    }

    /// Parses the plain-text rules format.
    ///
    /// ```text
    /// [prepositions]
    /// of
    /// [separators]
    /// ,
    /// [limits]
    /// max_morphemes = 8
    /// ```
    ///
    /// `#` starts a comment line everywhere except under `[separators]`,
    /// where every nonblank line is one literal character. A missing
    /// `[limits]` section keeps the default cap.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Prepositions,
            Separators,
            Limits,
        }
        let mut section = Section::None;
        let mut prepositions = Vec::new();
        let mut separators = Vec::new();
        let mut max_morphemes = DEFAULT_MAX_MORPHEMES;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("rules line {}: {msg}", n + 1));
            match line {
                "[prepositions]" => section = Section::Prepositions,
                "[separators]" => section = Section::Separators,
                "[limits]" => section = Section::Limits,
                _ if section == Section::Separators => {
                    let mut chars = line.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => separators.push(c),
                        _ => return Err(bad(format!("separator {line:?} is not one character"))),
                    }
                }
                _ if line.starts_with('#') => {}
                _ => match section {
                    Section::Prepositions => {
                        if line.split_whitespace().count() != 1 {
                            return Err(bad(format!("preposition {line:?} is not a single word")));
                        }
                        prepositions.push(line.to_string());
                    }
                    Section::Limits => {
                        let (key, value) = line
                            .split_once('=')
                            .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
                        match key.trim() {
                            "max_morphemes" => {
                                max_morphemes = value.trim().parse().map_err(|_| {
                                    bad(format!("max_morphemes {:?} is not an integer", value.trim()))
                                })?
                            }
                            other => return Err(bad(format!("unknown limit {other:?}"))),
                        }
                    }
                    _ => return Err(bad(format!("{line:?} outside of any section"))),
                },
            }
        }
        SegmentationRules::new(prepositions, separators, max_morphemes)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        SegmentationRules::parse(&text)
    }

    pub fn contains_preposition(&self, word: &str) -> bool {
        self.prepositions.contains(&word.to_lowercase())
    }

    pub fn is_separator(&self, c: char) -> bool {
        self.separators.contains(&c)
    }

    pub fn prepositions(&self) -> impl Iterator<Item = &str> {
        self.prepositions.iter().map(String::as_str)
    }

    pub fn separators(&self) -> impl Iterator<Item = char> + '_ {
        self.separators.iter().copied()
    }

    pub fn max_morphemes(&self) -> usize {
        self.max_morphemes
    }
}

const DEFAULT_MAX_MORPHEMES: usize = 8;

/// The shipped English lexicon, separators `, ; . |`, and a cap of 8.
pub fn default_rules() -> SegmentationRules {
    SegmentationRules::parse(DEFAULT_RULES).expect("built-in rules parse")
}

impl Default for SegmentationRules {
    fn default() -> Self {
        default_rules()
    }
}

/// Splits a prompt into its ordered morphemes.
pub fn split_prompt(prompt: &PromptText, rules: &SegmentationRules) -> Result<PromptDecomposition> {
    let text = prompt.as_str();
    let mut morphemes: Vec<String> = Vec::new();

    for piece in text.split(|c| rules.is_separator(c)) {
        let words: Vec<(usize, &str)> = word_spans(piece);
        let mut seg_start: Option<usize> = None;
        let mut seg_first_word = 0;
        for (i, &(offset, word)) in words.iter().enumerate() {
            let opens = i > seg_first_word
                && i + 1 < words.len()
                && rules.contains_preposition(word);
            if opens {
                let start = seg_start.expect("segment opened before boundary");
                morphemes.push(piece[start..offset].trim().to_string());
                seg_start = Some(offset);
                seg_first_word = i;
            } else if seg_start.is_none() {
                seg_start = Some(offset);
                seg_first_word = i;
            }
        }
        if let Some(start) = seg_start {
            morphemes.push(piece[start..].trim().to_string());
        }
    }

    let cap = rules.max_morphemes();
    if morphemes.len() > cap {
        let tail = morphemes.split_off(cap - 1).join(" ");
        morphemes.push(tail);
    }
    if morphemes.is_empty() {
        return Err(Error::DegeneratePrompt(text.to_string()));
    }
    PromptDecomposition::new(prompt.clone(), morphemes)
}

fn word_spans(piece: &str) -> Vec<(usize, &str)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in piece.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, &piece[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, &piece[s..]));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(text: &str) -> Vec<String> {
        split_prompt(&PromptText::new(text).unwrap(), &default_rules())
            .unwrap()
            .morphemes()
            .to_vec()
    }

    #[test]
    fn single_word_is_one_morpheme() {
        assert_eq!(split("sunset"), ["sunset"]);
    }

    #[test]
    fn comma_and_preposition_boundaries() {
        assert_eq!(
            split("portrait of a woman, baroque style"),
            ["portrait", "of a woman", "baroque style"]
        );
    }

    #[test]
    fn preposition_chain() {
        assert_eq!(
            split("a cat with a hat in a garden"),
            ["a cat", "with a hat", "in a garden"]
        );
    }

    #[test]
    fn leading_preposition_does_not_split() {
        assert_eq!(split("in the forest"), ["in the forest"]);
        assert_eq!(split("Under the sea, with fish"), ["Under the sea", "with fish"]);
    }

    #[test]
    fn trailing_preposition_stays_put() {
        assert_eq!(split("something to think of, red"), ["something to think of", "red"]);
    }

    #[test]
    fn case_insensitive_match_preserves_case() {
        assert_eq!(split("A Dog WITH A Bone"), ["A Dog", "WITH A Bone"]);
    }

    #[test]
    fn consecutive_separators_make_no_empty_morphemes() {
        assert_eq!(split("red,, ;blue . | green"), ["red", "blue", "green"]);
    }

    #[test]
    fn only_separators_is_degenerate() {
        let err = split_prompt(&PromptText::new(", ; .").unwrap(), &default_rules()).unwrap_err();
        assert!(matches!(err, Error::DegeneratePrompt(_)));
    }

    #[test]
    fn overflow_merges_into_last() {
        let rules = SegmentationRules::new(["of"], [','], 3).unwrap();
        let d = split_prompt(&PromptText::new("a, b, c, d, e").unwrap(), &rules).unwrap();
        assert_eq!(d.morphemes(), ["a", "b", "c d e"]);
    }

    #[test]
    fn default_rules_contents() {
        let rules = default_rules();
        assert!(rules.contains_preposition("of"));
        assert!(rules.is_separator(','));
        assert_eq!(rules.max_morphemes(), 8);
        assert_eq!(rules.prepositions().count(), 25);
        assert_eq!(rules.separators().collect::<String>(), ",.;|");
    }

    #[test]
    fn parse_rejects_bad_files() {
        assert!(SegmentationRules::parse("[separators]\n,\n").is_err()); // no prepositions
        assert!(SegmentationRules::parse("[prepositions]\nof\n[separators]\n,,\n").is_err());
        assert!(SegmentationRules::parse("of\n").is_err());
        assert!(SegmentationRules::parse("[prepositions]\nof\n[limits]\nmax_morphemes = 0\n").is_err());
    }

    #[test]
    fn parse_keeps_hash_as_separator() {
        let rules = SegmentationRules::parse("[prepositions]\n# comment\nof\n[separators]\n#\n").unwrap();
        assert!(rules.is_separator('#'));
        assert_eq!(rules.prepositions().collect::<Vec<_>>(), ["of"]);
    }

    fn strip(s: &str, rules: &SegmentationRules) -> String {
        s.chars()
            .filter(|c| !c.is_whitespace() && !rules.is_separator(*c))
            .collect()
    }

    fn prompt_strategy() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            Just("of".to_string()),
            Just("with".to_string()),
            Just("in".to_string()),
            Just(",".to_string()),
            Just(";".to_string()),
            "[a-zA-Z]{1,7}",
        ];
        prop::collection::vec(word, 1..24).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn segmentation_invariants(text in prompt_strategy(), cap in 1usize..10) {
            let rules = SegmentationRules::new(default_rules().prepositions(), [',', ';'], cap).unwrap();
            let Ok(prompt) = PromptText::new(text.clone()) else { return Ok(()) };
            match split_prompt(&prompt, &rules) {
                Ok(d) => {
                    prop_assert!(d.count() >= 1 && d.count() <= cap);
                    prop_assert!(d.morphemes().iter().all(|m| !m.trim().is_empty()));
                    let joined: String = d.morphemes().concat();
                    prop_assert_eq!(strip(&joined, &rules), strip(&text, &rules));
                    prop_assert_eq!(split_prompt(&prompt, &rules).unwrap(), d.clone());

                    let rejoined = PromptText::new(d.morphemes().join(", ")).unwrap();
                    let again = split_prompt(&rejoined, &rules).unwrap();
                    prop_assert!(again.count() >= d.count());
                }
                Err(Error::DegeneratePrompt(_)) => {
                    prop_assert!(strip(&text, &rules).is_empty());
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
