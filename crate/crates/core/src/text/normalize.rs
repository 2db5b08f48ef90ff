/// Lower-cases, deletes every character that is neither alphanumeric nor
/// whitespace, and collapses whitespace runs to single spaces.
pub fn normalize_caption(raw: &str) -> String {
    let kept: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(normalized: &str) -> Vec<&str> {
    normalized.split_whitespace().collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn table_one_captions() {
        assert_eq!(
            normalize_caption("Something goes round that is playing its song"),
            "something goes round that is playing its song"
        );
        assert_eq!(
            normalize_caption("At the fair, music is playing near a carousel through the speaker"),
            "at the fair music is playing near a carousel through the speaker"
        );
    }

    #[test]
    fn punctuation_is_deleted_not_replaced() {
        assert_eq!(normalize_caption("  Wind;BLOWING!!  "), "windblowing");
        assert_eq!(normalize_caption("\tA  dog's\nbark. "), "a dogs bark");
        assert_eq!(normalize_caption("?!"), "");
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,60}") {
            let once = normalize_caption(&s);
            prop_assert_eq!(normalize_caption(&once), once);
        }
    }
}
