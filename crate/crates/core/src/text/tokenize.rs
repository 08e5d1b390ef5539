use crate::text::vocab::{Vocabulary, CLS, PAD, SEP};

const STOP_WORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

pub fn is_stop_word(word: &str) -> bool {
    STOP_WORDS.binary_search(&word).is_ok()
}

/// Lowercased words, split on whitespace and punctuation.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Token indices wrapped as `[CLS] w1 .. wn [SEP]` and padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub mask: Vec<u8>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-padding positions, including `[CLS]` and `[SEP]`.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Word indices between `[CLS]` and `[SEP]`.
    pub fn content(&self) -> &[usize] {
        let real = self.real_len();
        if real < 2 {
            return &[];
        }
        &self.ids[1..real - 1]
    }
}

/// Tokenizes `text` keeping stop words.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    tokenize_with(text, vocab, max_len, false)
}

/// Tokenizes `text`, optionally dropping English stop words.
///
/// # Panics
/// If `max_len < 3`.
pub fn tokenize_with(
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
    drop_stop_words: bool,
) -> TokenSeq {
    assert!(
        max_len >= 3,
        "max_len must leave room for [CLS], one token and [SEP]"
    );
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(
        words(text)
            .filter(|w| !(drop_stop_words && is_stop_word(w)))
            .take(max_len - 2)
            .map(|w| vocab.get(&w)),
    );
    ids.push(SEP);
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mask = (0..max_len).map(|i| u8::from(i < real)).collect();
    TokenSeq { ids, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::vocab::UNK;

    #[test]
    fn stop_words_are_sorted() {
        assert!(STOP_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn wraps_and_pads() {
        let v = Vocabulary::build(["intel play"]);
        let t = tokenize("Intel Play", &v, 5);
        assert_eq!(t.ids, vec![CLS, v.get("intel"), v.get("play"), SEP, PAD]);
        assert_eq!(t.mask, vec![1, 1, 1, 1, 0]);
        assert_eq!(t.content(), &[v.get("intel"), v.get("play")]);
    }

    #[test]
    fn empty_text() {
        let v = Vocabulary::new();
        let t = tokenize("", &v, 4);
        assert_eq!(t.ids, vec![CLS, SEP, PAD, PAD]);
        assert!(t.content().is_empty());
    }

    #[test]
    fn truncates_to_max_len() {
        let text: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let text = text.join(" ");
        let v = Vocabulary::build([text.as_str()]);
        let t = tokenize(&text, &v, 32);
        assert_eq!(t.content().len(), 30);
        assert_eq!(t.ids[31], SEP);
        assert_eq!(t.ids[30], v.get("w29"));
    }

    #[test]
    fn punctuation_splits_and_unknown_maps_to_unk() {
        let v = Vocabulary::build(["the cat"]);
        let t = tokenize("The cat, (sat)!", &v, 8);
        assert_eq!(t.content(), &[v.get("the"), v.get("cat"), UNK]);
    }

    #[test]
    fn stop_words_dropped_on_request() {
        let v = Vocabulary::build(["the cat of the house"]);
        let t = tokenize_with("the cat of the house", &v, 8, true);
        assert_eq!(t.content(), &[v.get("cat"), v.get("house")]);
    }
}
