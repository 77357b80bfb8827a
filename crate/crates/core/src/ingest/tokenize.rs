use serde::{Deserialize, Serialize};

use super::IngestError;

/// How book titles are turned into LDA documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TokenizerMode {
    /// Split on whitespace and punctuation, lowercase.
    #[default]
    Whitespace,
    /// Overlapping character n-grams, for scripts written without spaces.
    CharNgram { n: usize },
}

fn is_separator(c: char) -> bool {
    !c.is_alphanumeric()
}

pub fn tokenize_title(title: &str, mode: TokenizerMode) -> Result<Vec<String>, IngestError> {
    let tokens: Vec<String> = match mode {
        TokenizerMode::Whitespace => title
            .split(is_separator)
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect(),
        TokenizerMode::CharNgram { n } => {
            if n == 0 {
                return Err(IngestError::InvalidOption("char n-gram size must be >= 1".into()));
            }
            let chars: Vec<char> = title
                .chars()
                .filter(|c| !is_separator(*c))
                .flat_map(|c| c.to_lowercase())
                .collect();
            if chars.is_empty() {
                Vec::new()
            } else if chars.len() < n {
                vec![chars.iter().collect()]
            } else {
                chars.windows(n).map(|w| w.iter().collect()).collect()
            }
        }
    };
    if tokens.is_empty() {
        return Err(IngestError::EmptyTitle(title.to_string()));
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_mode_lowercases_and_splits() {
        let t = tokenize_title("The Art of War", TokenizerMode::Whitespace).unwrap();
        assert_eq!(t, ["the", "art", "of", "war"]);
        let t = tokenize_title("  Rust: the  book!", TokenizerMode::Whitespace).unwrap();
        assert_eq!(t, ["rust", "the", "book"]);
    }

    #[test]
    fn char_bigrams_over_cjk() {
        let t = tokenize_title("数学之美", TokenizerMode::CharNgram { n: 2 }).unwrap();
        assert_eq!(t, ["数学", "学之", "之美"]);
        let t = tokenize_title("数学，之美", TokenizerMode::CharNgram { n: 2 }).unwrap();
        assert_eq!(t, ["数学", "学之", "之美"]);
    }

    #[test]
    fn short_title_is_one_gram() {
        let t = tokenize_title("书", TokenizerMode::CharNgram { n: 2 }).unwrap();
        assert_eq!(t, ["书"]);
    }

    #[test]
    fn punctuation_only_title_fails() {
        assert!(matches!(
            tokenize_title("!!!", TokenizerMode::Whitespace),
            Err(IngestError::EmptyTitle(_))
        ));
        assert!(tokenize_title("!!!", TokenizerMode::CharNgram { n: 2 }).is_err());
    }
}
