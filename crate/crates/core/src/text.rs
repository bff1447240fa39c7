//! Tokenizers and small lexicons shared by the scoring, extraction and
//! statistics code. All offsets are counted in Unicode scalar values.

/// Third-person pronouns and possessives.
pub const PRONOUNS: &[&str] = &[
    "he", "she", "it", "they", "him", "her", "them", "his", "hers", "its", "their", "theirs",
];

/// Function words that never count as proper nouns or standalone mentions.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "but", "by", "can", "could", "did", "do", "does", "during", "for", "from", "had", "has",
    "have", "how", "i", "if", "in", "into", "is", "was", "were", "many", "much", "of", "on",
    "or", "other", "so", "some", "than", "that", "the", "then", "there", "these", "this",
    "those", "to", "what", "when", "where", "which", "while", "who", "whom", "whose", "why",
    "will", "with", "would", "yes", "no", "not", "you", "we", "my", "our", "your", "me", "us",
    "again", "else", "ever", "more", "most", "only", "over", "same", "still", "too",
    "very", "well", "okay", "ok", "tell", "please",
];

pub fn is_pronoun(lower: &str) -> bool {
    PRONOUNS.contains(&lower)
}

pub fn is_stopword(lower: &str) -> bool {
    STOPWORDS.contains(&lower)
}

/// A maximal alphanumeric run of the input text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub surface: String,
    pub lower: String,
    /// Character offset of the first character.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
    /// Raw text between the previous word (or the text start) and this one.
    pub gap_before: String,
    pub sentence_initial: bool,
    pub sentence: usize,
}

impl Word {
    pub fn is_capitalized(&self) -> bool {
        self.surface.chars().next().is_some_and(char::is_uppercase)
    }
}

fn is_sentence_break(gap: &str) -> bool {
    gap.contains(['.', '?', '!']) && gap.contains(char::is_whitespace)
}

/// Splits on non-alphanumeric boundaries, keeping case and character offsets.
pub fn words(text: &str) -> Vec<Word> {
    let mut out: Vec<Word> = Vec::new();
    let mut gap = String::new();
    let mut current = String::new();
    let mut start = 0usize;
    let mut sentence = 0usize;

    let mut flush = |current: &mut String, gap: &mut String, start: usize, end: usize, out: &mut Vec<Word>| {
        if current.is_empty() {
            return;
        }
        let sentence_initial = out.is_empty() || is_sentence_break(gap);
        if sentence_initial && !out.is_empty() {
            sentence += 1;
        }
        out.push(Word {
            lower: current.to_lowercase(),
            surface: std::mem::take(current),
            start,
            end,
            gap_before: std::mem::take(gap),
            sentence_initial,
            sentence,
        });
    };

    let mut count = 0usize;
    for (i, c) in text.chars().enumerate() {
        count = i + 1;
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        } else {
            flush(&mut current, &mut gap, start, i, &mut out);
            gap.push(c);
        }
    }
    flush(&mut current, &mut gap, start, count, &mut out);
    out
}

/// Lowercased alphanumeric tokens; no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case-insensitive substring test.
pub fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// True when the tokens of `phrase` occur contiguously in `text`.
pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    let needle = tokenize(phrase);
    if needle.is_empty() {
        return false;
    }
    let hay = tokenize(text);
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Slices `text` by character offsets, returning `None` when out of range.
pub fn char_slice(text: &str, start: usize, len: usize) -> Option<&str> {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let from = indices.nth(start)?;
    if len == 0 {
        return Some(&text[from..from]);
    }
    let to = indices.nth(len - 1)?;
    Some(&text[from..to])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_punctuation() {
        assert_eq!(
            tokenize("What was she obsessed about?"),
            ["what", "was", "she", "obsessed", "about"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("F.R.I.E.N.D.S"), ["f", "r", "i", "e", "n", "d", "s"]);
    }

    #[test]
    fn words_track_offsets_and_sentences() {
        let ws = words("Ross é. Monica? yes");
        assert_eq!(ws.len(), 4);
        assert_eq!((ws[1].surface.as_str(), ws[1].start, ws[1].end), ("é", 5, 6));
        assert!(ws[0].sentence_initial && ws[2].sentence_initial && ws[3].sentence_initial);
        assert!(!ws[1].sentence_initial);
        assert_eq!(ws[3].sentence, 2);

        let dotted = words("F.R.I.E.N.D.S");
        assert_eq!(dotted.len(), 7);
        assert!(dotted.iter().skip(1).all(|w| !w.sentence_initial));
    }

    #[test]
    fn char_slice_handles_multibyte() {
        assert_eq!(char_slice("añb c", 1, 2), Some("ñb"));
        assert_eq!(char_slice("abc", 3, 0), Some(""));
        assert_eq!(char_slice("abc", 2, 2), None);
    }

    #[test]
    fn phrase_matching_respects_word_boundaries() {
        assert!(contains_phrase("Who played Monica Geller?", "monica geller"));
        assert!(!contains_phrase("across the hall", "Ross"));
        assert!(contains_ci("across the hall", "ROSS"));
    }
}
