//! Free-text answer parsing and the multi-question aggregation transcript.

use crate::data::WeakLabel;

/// Scans for the first standalone `yes` or `no` token, case-insensitively,
/// and lets it decide the vote; anything else is an abstain. Tokens are
/// maximal alphabetic runs, so "yesterday" or "cannot" never match.
pub fn parse_binary_answer(text: &str) -> WeakLabel {
    for token in text.split(|c: char| !c.is_alphabetic()) {
        if token.eq_ignore_ascii_case("yes") {
            return WeakLabel::Positive;
        }
        if token.eq_ignore_ascii_case("no") {
            return WeakLabel::Negative;
        }
    }
    WeakLabel::Abstain
}

/// The aggregation request body: the prompt followed by the numbered
/// question/answer transcript, one blank line between entries. The format is
/// frozen by a golden-file test.
pub fn build_aggregation_text(prompt: &str, questions: &[String], answers: &[String]) -> String {
    debug_assert_eq!(questions.len(), answers.len());
    let mut out = String::from(prompt.trim_end());
    out.push('\n');
    for (index, (question, answer)) in questions.iter().zip(answers).enumerate() {
        let n = index + 1;
        out.push_str(&format!("\nQuestion {n}: {question}\nAnswer {n}: {answer}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_token_decides() {
        assert_eq!(
            parse_binary_answer("Yes, there is an ephemeral gully."),
            WeakLabel::Positive
        );
        assert_eq!(
            parse_binary_answer("No, although one might say yes..."),
            WeakLabel::Negative
        );
        assert_eq!(
            parse_binary_answer("I cannot determine this."),
            WeakLabel::Abstain
        );
    }

    #[test]
    fn tokens_inside_words_do_not_match() {
        assert_eq!(parse_binary_answer("yesterday and nowhere"), WeakLabel::Abstain);
        assert_eq!(parse_binary_answer("NO."), WeakLabel::Negative);
        assert_eq!(parse_binary_answer("yes/no"), WeakLabel::Positive);
        assert_eq!(parse_binary_answer(""), WeakLabel::Abstain);
    }

    fn neutral_text() -> impl Strategy<Value = String> {
        // Words and separators that can never form a standalone yes/no.
        let word = prop::sample::select(vec![
            "maybe", "the", "image", "shows", "erosion", "likely", "unclear", "field",
            "channel", "noyes", "yesno", "eyes", "nope", "12",
        ]);
        prop::collection::vec(word, 0..8).prop_map(|words| {
            let mut s = words.join(" ");
            s.push(' ');
            s
        })
    }

    proptest! {
        #[test]
        fn neutral_prefix_never_changes_the_result(
            prefix in neutral_text(),
            base in prop::sample::select(vec![
                "yes definitely", "no signs", "hard to tell",
            ])
        ) {
            let plain = parse_binary_answer(base);
            let prefixed = parse_binary_answer(&format!("{prefix}{base}"));
            prop_assert_eq!(plain, prefixed);
        }
    }

    #[test]
    fn aggregation_text_shape() {
        let text = build_aggregation_text(
            "Decide yes or no.",
            &["Q one?".into(), "Q two?".into()],
            &["A one".into(), "(no answer)".into()],
        );
        assert_eq!(
            text,
            "Decide yes or no.\n\nQuestion 1: Q one?\nAnswer 1: A one\n\nQuestion 2: Q two?\nAnswer 2: (no answer)\n"
        );
    }
}
