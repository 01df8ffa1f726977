//! Word segmentation, sentence splitting, and vocabulary construction.

use std::collections::BTreeMap;

use unicode_segmentation::UnicodeSegmentation;

use super::Vocabulary;

/// Lowercased Unicode words of `text`; punctuation-only segments vanish.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .unicode_words()
        .map(str::to_string)
        .collect()
}

/// Splits text into sentences at runs of `.`, `!`, `?` followed by
/// whitespace or end of input. Terminal punctuation stays with its sentence;
/// segments without any word are discarded.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        current.push(chars[i]);
        if matches!(chars[i], '.' | '!' | '?') {
            while i + 1 < chars.len() && matches!(chars[i + 1], '.' | '!' | '?') {
                i += 1;
                current.push(chars[i]);
            }
            if i + 1 >= chars.len() || chars[i + 1].is_whitespace() {
                push_sentence(&mut sentences, &current);
                current.clear();
            }
        }
        i += 1;
    }
    push_sentence(&mut sentences, &current);
    sentences
}

fn push_sentence(sentences: &mut Vec<String>, raw: &str) {
    let trimmed = raw.trim();
    if !trimmed.is_empty() && !words(trimmed).is_empty() {
        sentences.push(trimmed.to_string());
    }
}

/// Builds a vocabulary over `corpus`. Words seen at least `min_freq` times
/// get ids (assigned in lexicographic order); everything else maps to UNK.
pub fn build_vocabulary<I, S>(corpus: I, min_freq: usize) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    assert!(min_freq >= 1, "min_freq must be at least 1");
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        for word in words(text.as_ref()) {
            *freq.entry(word).or_insert(0) += 1;
        }
    }
    let mut vocab = Vocabulary::with_specials();
    for (word, count) in freq {
        if count >= min_freq {
            vocab.insert(&word);
        }
    }
    vocab
}

/// Token ids for `text`, truncated to `max_len` from the end.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    assert!(max_len >= 1, "max_len must be at least 1");
    words(text)
        .into_iter()
        .take(max_len)
        .map(|w| vocab.id(&w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PAD, UNK};

    #[test]
    fn frequency_threshold_sends_rare_words_to_unk() {
        let vocab = build_vocabulary(["a b a"], 2);
        assert!(vocab.contains("a"));
        assert!(!vocab.contains("b"));
        assert_eq!(vocab.id("b"), UNK);
    }

    #[test]
    fn empty_corpus_keeps_only_specials() {
        let vocab = build_vocabulary(Vec::<&str>::new(), 1);
        assert_eq!(vocab.len(), 2);
        assert_eq!(vocab.token(PAD), Some("<pad>"));
        assert_eq!(vocab.token(UNK), Some("<unk>"));
    }

    #[test]
    fn first_real_token_gets_id_two() {
        let vocab = build_vocabulary(["x"], 1);
        assert_eq!(vocab.id("x"), 2);
    }

    #[test]
    fn tokenize_known_words() {
        let vocab = build_vocabulary(["hello world"], 1);
        let ids = tokenize("Hello, world", &vocab, 20);
        assert_eq!(ids, vec![vocab.id("hello"), vocab.id("world")]);
    }

    #[test]
    fn tokenize_empty_string() {
        let vocab = build_vocabulary(["x"], 1);
        assert_eq!(tokenize("", &vocab, 20), Vec::<u32>::new());
    }

    #[test]
    fn tokenize_truncates_from_the_end() {
        let text = (0..25).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let vocab = build_vocabulary([text.as_str()], 1);
        let ids = tokenize(&text, &vocab, 20);
        assert_eq!(ids.len(), 20);
        assert_eq!(ids[0], vocab.id("w0"));
        assert_eq!(ids[19], vocab.id("w19"));
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let sents = split_sentences("First part. Second part! Third? Tail without period");
        assert_eq!(
            sents,
            vec![
                "First part.",
                "Second part!",
                "Third?",
                "Tail without period"
            ]
        );
    }

    #[test]
    fn punctuation_runs_stay_with_their_sentence() {
        assert_eq!(split_sentences("Wait... what?!"), vec!["Wait...", "what?!"]);
    }

    #[test]
    fn interior_period_without_space_does_not_split() {
        assert_eq!(split_sentences("v1.2 shipped"), vec!["v1.2 shipped"]);
    }

    #[test]
    fn wordless_segments_are_dropped() {
        assert!(split_sentences("!!! ...").is_empty());
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn splitting_joined_sentences_is_stable() {
        let original = "One thing happened. Then another! Finally a third thing?";
        let sents = split_sentences(original);
        let rejoined = sents.join(" ");
        assert_eq!(split_sentences(&rejoined), sents);
    }
}
