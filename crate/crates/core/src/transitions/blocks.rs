pub const START: &str = "<START>";
pub const END: &str = "<END>";

/// Prompts extracted from `<START>...<END>` wrappers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptBlocks {
    pub blocks: Vec<String>,
    /// Set when an opening was unterminated, nested, or empty.
    pub malformed: bool,
}

/// Returns every block strictly between a `<START>` and the next `<END>`, in
/// order and trimmed. An opening followed by another opening before its
/// `<END>` yields nothing; an opening with no `<END>` ends the scan.
pub fn parse_prompt_blocks(text: &str) -> PromptBlocks {
    let mut out = PromptBlocks::default();
    let mut rest = text;
    while let Some(open) = rest.find(START) {
        let body = &rest[open + START.len()..];
        let end = body.find(END);
        let nested = body.find(START);
        match (end, nested) {
            (None, _) => {
                out.malformed = true;
                break;
            }
            (Some(e), Some(n)) if n < e => {
                out.malformed = true;
                rest = &body[n..];
            }
            (Some(e), _) => {
                let block = body[..e].trim();
                if block.is_empty() {
                    out.malformed = true;
                } else {
                    out.blocks.push(block.to_string());
                }
                rest = &body[e + END.len()..];
            }
        }
    }
    out
}

/// Inverse of [`parse_prompt_blocks`] for well-formed input.
pub fn wrap_prompt_blocks<S: AsRef<str>>(prompts: &[S]) -> String {
    prompts
        .iter()
        .map(|p| format!("{START}{}{END}", p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn junk_between_blocks_is_ignored() {
        let p = parse_prompt_blocks("<START>p1<END>junk<START>p2<END>");
        assert_eq!(p.blocks, vec!["p1", "p2"]);
        assert!(!p.malformed);
    }

    #[test]
    fn no_markers_no_blocks() {
        let p = parse_prompt_blocks("just some text");
        assert!(p.blocks.is_empty());
        assert!(!p.malformed);
    }

    #[test]
    fn unterminated_is_flagged() {
        let p = parse_prompt_blocks("<START>p1");
        assert!(p.blocks.is_empty());
        assert!(p.malformed);
    }

    #[test]
    fn nested_opening_drops_outer() {
        let p = parse_prompt_blocks("<START>a<START>b<END>");
        assert_eq!(p.blocks, vec!["b"]);
        assert!(p.malformed);
    }

    #[test]
    fn whitespace_is_trimmed() {
        let p = parse_prompt_blocks("intro\n<START>\n  new prompt \n<END>\n");
        assert_eq!(p.blocks, vec!["new prompt"]);
    }

    proptest! {
        #[test]
        fn wrapped_blocks_round_trip(prompts in prop::collection::vec("[a-zA-Z0-9 .,!?]{0,30}[a-zA-Z]", 0..8)) {
            let text = wrap_prompt_blocks(&prompts);
            let parsed = parse_prompt_blocks(&text);
            let expected: Vec<String> = prompts.iter().map(|p| p.trim().to_string()).collect();
            prop_assert_eq!(parsed.blocks, expected);
            prop_assert!(!parsed.malformed);
        }

        #[test]
        fn never_panics(s in any::<String>()) {
            let _ = parse_prompt_blocks(&s);
        }
    }
}
