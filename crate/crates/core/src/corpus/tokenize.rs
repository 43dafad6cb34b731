/// Lowercases `text`, splits on Unicode whitespace and peels leading and
/// trailing punctuation off each chunk into single-character tokens.
/// Punctuation inside a word ("v2.0", "don't") stays attached.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for chunk in lowered.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let start = chars.iter().position(|c| !is_punct(*c));
        let Some(start) = start else {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| !is_punct(*c)).unwrap() + 1;
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn splits_trailing_punctuation() {
        assert_eq!(toks("The cat sat."), ["the", "cat", "sat", "."]);
    }

    #[test]
    fn empty_text() {
        assert!(toks("").is_empty());
        assert!(toks("   \n\t").is_empty());
    }

    #[test]
    fn keeps_inner_punctuation() {
        assert_eq!(toks("Re: FAQ v2.0"), ["re", ":", "faq", "v2.0"]);
        assert_eq!(toks("(don't) ?!"), ["(", "don't", ")", "?", "!"]);
    }

    #[test]
    fn reserved_markers_never_emitted() {
        assert_eq!(toks("<pad> <unk>"), ["<", "pad", ">", "<", "unk", ">"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_joined_output(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}
