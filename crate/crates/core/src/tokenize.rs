//! Shared tokenizer: lowercase, split on whitespace and any non-alphanumeric
//! character, keep digits, drop empty fragments.

/// One token of a source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// The fragment exactly as it appears in the source.
    pub surface: String,
    /// Lowercased form used for matching and indexing. Never empty, never
    /// contains whitespace.
    pub norm: String,
    /// Byte offsets `(start, end)` of `surface` within the source string.
    pub byte_span: (usize, usize),
}

/// Split `text` into tokens: every maximal run of alphanumeric characters is
/// one token, everything else is a separator.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(idx);
            }
        } else if let Some(s) = start.take() {
            tokens.push(make_token(text, s, idx));
        }
    }
    if let Some(s) = start {
        tokens.push(make_token(text, s, text.len()));
    }
    tokens
}

/// Normalized token strings only, in source order.
pub fn norms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.norm).collect()
}

fn make_token(text: &str, start: usize, end: usize) -> Token {
    let surface = &text[start..end];
    Token {
        surface: surface.to_string(),
        norm: surface.to_lowercase(),
        byte_span: (start, end),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm_vec(text: &str) -> Vec<String> {
        norms(text)
    }

    #[test]
    fn splits_on_whitespace_and_punctuation() {
        assert_eq!(
            norm_vec("Which gas do plants absorb?"),
            ["which", "gas", "do", "plants", "absorb"]
        );
    }

    #[test]
    fn empty_input_yields_empty_list() {
        assert_eq!(norm_vec(""), Vec::<String>::new());
        assert_eq!(norm_vec("  ...  "), Vec::<String>::new());
    }

    #[test]
    fn hyphens_and_periods_split_and_strip() {
        assert_eq!(norm_vec("CO2-rich air."), ["co2", "rich", "air"]);
    }

    #[test]
    fn digits_are_retained() {
        assert_eq!(norm_vec("boils at 100 degrees"), ["boils", "at", "100", "degrees"]);
    }

    #[test]
    fn byte_spans_point_at_surface() {
        let toks = tokenize("CO2-rich air.");
        for t in &toks {
            assert_eq!(&"CO2-rich air."[t.byte_span.0..t.byte_span.1], t.surface);
            assert!(!t.norm.is_empty());
            assert!(!t.norm.contains(char::is_whitespace));
        }
        assert_eq!(toks[0].surface, "CO2");
        assert_eq!(toks[0].norm, "co2");
    }
}
