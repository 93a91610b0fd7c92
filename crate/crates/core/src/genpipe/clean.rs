use super::split::split_sentences;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaned {
    pub text: String,
    /// Nothing remained after echo removal.
    pub degenerate: bool,
}

fn words(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for w in text.split_whitespace() {
        let at = offset + text[offset..].find(w).expect("word comes from text");
        out.push((at, w));
        offset = at + w.len();
    }
    out
}

fn matches_at(tw: &[(usize, &str)], prompt_words: &[String]) -> bool {
    tw.len() >= prompt_words.len() && tw.iter().zip(prompt_words).all(|((_, a), b)| a.to_lowercase() == *b)
}

fn cut<'a>(rest: &'a str, tw: &[(usize, &str)], k: usize) -> &'a str {
    let (at, last) = tw[k - 1];
    rest[at + last.len()..].trim_start()
}

/// Strips every leading copy of the full prompt (case-insensitive, whitespace-normalized).
fn strip_full_echo<'a>(text: &'a str, prompt_words: &[String]) -> &'a str {
    let mut rest = text.trim_start();
    loop {
        let tw = words(rest);
        if prompt_words.is_empty() || !matches_at(&tw, prompt_words) {
            return rest;
        }
        rest = cut(rest, &tw, prompt_words.len());
    }
}

/// Removes a leading echo of the prompt: every copy of the full prompt if the text
/// starts with it, otherwise the longest run of leading words equal to a run of
/// trailing prompt words.
fn strip_echo<'a>(text: &'a str, prompt_words: &[String]) -> &'a str {
    let rest = text.trim_start();
    let tw = words(rest);
    if !prompt_words.is_empty() && matches_at(&tw, prompt_words) {
        return strip_full_echo(rest, prompt_words);
    }
    let limit = tw.len().min(prompt_words.len());
    let k = (1..=limit)
        .rev()
        .find(|&k| matches_at(&tw[..k], &prompt_words[prompt_words.len() - k..]))
        .unwrap_or(0);
    if k == 0 {
        rest
    } else {
        cut(rest, &tw, k)
    }
}

/// Selects the first sentence of a generation with any echo of the prompt removed.
/// Falls back to the second sentence when the first has no content left.
pub fn clean_generation(raw: &str, prompt: &str) -> Cleaned {
    let prompt_words: Vec<String> = prompt.split_whitespace().map(str::to_lowercase).collect();
    let body = strip_echo(raw, &prompt_words);
    let text = split_sentences(body)
        .iter()
        .take(2)
        .map(|s| strip_full_echo(s, &prompt_words).trim().to_string())
        .find(|s| s.chars().any(char::is_alphanumeric))
        .unwrap_or_default();
    Cleaned {
        degenerate: text.is_empty(),
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stem_echo_is_removed() {
        let c = clean_generation("Her passion is painting. She smiles.", "Her passion is");
        assert_eq!(c.text, "painting.");
        assert!(!c.degenerate);
    }

    #[test]
    fn no_echo_is_noop() {
        let c = clean_generation("painting fills her days.", "Her passion is");
        assert_eq!(c.text, "painting fills her days.");
    }

    #[test]
    fn total_echo_is_degenerate() {
        let c = clean_generation("Her passion is", "Her passion is");
        assert_eq!(c.text, "");
        assert!(c.degenerate);
    }

    #[test]
    fn partial_and_case_insensitive_echo() {
        let prompt = "Complete the sentence: I lost my keys on the way here. Her passion is";
        assert_eq!(clean_generation("her  PASSION is music.", prompt).text, "music.");
        assert_eq!(clean_generation("passion is music.", prompt).text, "music.");
        assert_eq!(clean_generation(&format!("{prompt} music."), prompt).text, "music.");
    }

    #[test]
    fn falls_back_to_second_sentence() {
        let prompt = "The cat sat.";
        let c = clean_generation("Sat. It purred.", prompt);
        assert_eq!(c.text, "It purred.");
        let c = clean_generation("The cat sat. The cat sat. It purred.", prompt);
        assert_eq!(c.text, "It purred.");
        let c = clean_generation("Her passion is . Painting.", "Her passion is");
        assert_eq!(c.text, "Painting.");
    }

    #[test]
    fn continuation_sharing_prompt_tail_is_kept() {
        assert_eq!(clean_generation("a b b c.", "a b").text, "b c.");
    }

    #[test]
    fn repeated_full_echo_is_stripped() {
        let c = clean_generation("Her passion is Her passion is dance.", "Her passion is");
        assert_eq!(c.text, "dance.");
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-zA-Z]{1,8}"
    }

    fn prompt_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            proptest::collection::vec(word(), 1..6).prop_map(|w| w.join(" ")),
            (proptest::collection::vec(word(), 2..8), proptest::collection::vec(word(), 1..5))
                .prop_map(|(a, b)| format!("Complete the sentence: {}. {}", a.join(" "), b.join(" "))),
        ]
    }

    proptest! {
        #[test]
        fn echo_plus_continuation_recovers_continuation(
            prompt in prompt_strategy(),
            body in proptest::collection::vec(word(), 1..10),
            end in prop_oneof![Just("."), Just("!"), Just("?"), Just("")],
        ) {
            let continuation = format!("{}{}", body.join(" "), end);
            prop_assume!(!continuation.to_lowercase().contains(&prompt.to_lowercase()));
            let raw = format!("{prompt} {continuation}");
            prop_assert_eq!(clean_generation(&raw, &prompt).text, continuation);
        }

        #[test]
        fn output_never_starts_with_prompt(
            prompt in prompt_strategy(),
            raw_words in proptest::collection::vec(word(), 0..12),
            repeats in 0usize..3,
        ) {
            let raw = format!("{}{}", format!("{prompt} ").repeat(repeats), raw_words.join(" "));
            let cleaned = clean_generation(&raw, &prompt).text;
            let norm = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>();
            let (c, p) = (norm(&cleaned), norm(&prompt));
            prop_assert!(!(c.len() >= p.len() && c[..p.len()] == p[..]));
        }
    }
}
