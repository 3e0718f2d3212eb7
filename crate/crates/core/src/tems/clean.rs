fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_tag(token: &str) -> bool {
    token.starts_with('@') || token.starts_with('#')
}

fn is_email(token: &str) -> bool {
    match token.find('@') {
        Some(at) => token[at + 1..].contains('.'),
        None => false,
    }
}

/// Lowercases a token and keeps only alphanumerics plus internal apostrophes.
fn scrub(token: &str) -> String {
    let kept: String = token
        .chars()
        .flat_map(char::to_lowercase)
        .filter_map(|c| {
            if is_apostrophe(c) {
                Some('\'')
            } else if c.is_alphanumeric() && !c.is_uppercase() {
                Some(c)
            } else {
                None
            }
        })
        .collect();
    kept.trim_matches('\'').to_string()
}

/// Removes emails and `@`/`#` tags, strips symbols, lowercases and collapses
/// whitespace.
///
/// A token is an email when it contains `@` followed later by a `.`. Symbols
/// are dropped inside tokens too, so `don't!` becomes `don't` and `a-b`
/// becomes `ab`.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for token in raw.split_whitespace() {
        if is_tag(token) || is_email(token) {
            continue;
        }
        let t = scrub(token);
        if t.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&t);
    }
    out
}

/// Turns a detector class name into a single lowercase token; multi-word
/// names are joined with `_` (`"Traffic Light"` → `traffic_light`).
pub fn normalize_object_name(name: &str) -> String {
    name.split_whitespace()
        .map(scrub)
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lowercases_table_text() {
        assert_eq!(clean_text("Families belong together"), "families belong together");
    }

    #[test]
    fn drops_emails_tags_and_symbols() {
        assert_eq!(clean_text("email me a@b.com #now!!!"), "email me");
        assert_eq!(clean_text("@user   hello,   WORLD!!"), "hello world");
        assert_eq!(clean_text("don't 'quoted' it’s"), "don't quoted it's");
        assert_eq!(clean_text("user@host no dot"), "userhost no dot");
        assert_eq!(clean_text("!!! ... ???"), "");
        assert_eq!(clean_text(""), "");
    }

    #[test]
    fn object_names() {
        assert_eq!(normalize_object_name("Traffic Light"), "traffic_light");
        assert_eq!(normalize_object_name("sky"), "sky");
        assert_eq!(normalize_object_name("  "), "");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn idempotent_and_lowercase(s in any::<String>()) {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
            prop_assert!(!once.chars().any(char::is_uppercase));
            prop_assert!(!once.contains("  "));
            prop_assert_eq!(once.trim(), once.as_str());
        }

        #[test]
        fn idempotent_on_texty_strings(s in "[A-Za-z0-9@#.,!' \t]{0,60}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once);
        }
    }
}
