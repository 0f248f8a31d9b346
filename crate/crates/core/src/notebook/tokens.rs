use std::sync::OnceLock;

use regex::Regex;

/// Prompt-size measure used by the token gate.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// `ceil(bytes / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteApproxTokenizer;

impl Tokenizer for ByteApproxTokenizer {
    fn count(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

/// Counts pre-tokenization pieces (contractions, letter runs, digit runs
/// of up to three, punctuation runs, whitespace runs), close to what BPE
/// tokenizers split on before merging.
#[derive(Debug, Clone)]
pub struct RegexTokenizer {
    pattern: Regex,
}

impl Default for RegexTokenizer {
    fn default() -> Self {
        static RE: OnceLock<Regex> = OnceLock::new();
        let pattern = RE
            .get_or_init(|| {
                Regex::new(
                    r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+",
                )
                .unwrap()
            })
            .clone();
        RegexTokenizer { pattern }
    }
}

impl RegexTokenizer {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(RegexTokenizer {
            pattern: Regex::new(pattern)?,
        })
    }
}

impl Tokenizer for RegexTokenizer {
    fn count(&self, text: &str) -> usize {
        self.pattern.find_iter(text).count()
    }
}

/// Token count under the default backend.
pub fn count_tokens(text: &str) -> usize {
    ByteApproxTokenizer.count(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backend() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens(&"a".repeat(40)), 10);
        assert_eq!(count_tokens("abcde"), 2);
    }

    #[test]
    fn regex_backend_counts_pieces() {
        let t = RegexTokenizer::default();
        assert_eq!(t.count(""), 0);
        assert_eq!(t.count("hello world"), 2);
        assert_eq!(t.count("x = 12345"), 5);
    }

    struct Words;
    impl Tokenizer for Words {
        fn count(&self, text: &str) -> usize {
            text.split_whitespace().count()
        }
    }

    #[test]
    fn pluggable_backend_is_used_as_is() {
        let text = "a b c d e f g h i j";
        let backend: &dyn Tokenizer = &Words;
        assert_eq!(backend.count(text), 10);
    }
}
