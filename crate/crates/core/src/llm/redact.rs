//! Roster-based name anonymization.

pub const NAME_TOKEN: &str = "[NAME]";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Length in bytes of a case-insensitive match of `name` at the start of `hay`.
fn match_len(hay: &str, name: &str) -> Option<usize> {
    let mut hay_chars = hay.char_indices();
    for n in name.chars() {
        let (_, h) = hay_chars.next()?;
        if !h.to_lowercase().eq(n.to_lowercase()) {
            return None;
        }
    }
    Some(hay_chars.next().map_or(hay.len(), |(i, _)| i))
}

fn normalized_roster(roster: &[String]) -> Vec<&str> {
    let mut names: Vec<&str> = roster
        .iter()
        .map(|n| n.trim())
        .filter(|n| !n.is_empty())
        .collect();
    // longest first so "Ann Lee" wins over "Ann"
    names.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
    names.dedup();
    names
}

fn find_matches<'a>(text: &str, names: &[&'a str]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut prev: Option<char> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if prev.is_none_or(|p| !is_word_char(p)) {
            let rest = &text[i..];
            let hit = names.iter().find_map(|name| {
                let len = match_len(rest, name)?;
                let after = rest[len..].chars().next();
                let ends_clean = after.is_none_or(|a| !is_word_char(a));
                let name_edges_word = name.chars().next().is_some_and(is_word_char)
                    && name.chars().last().is_some_and(is_word_char);
                (ends_clean && name_edges_word).then_some(len)
            });
            if let Some(len) = hit {
                out.push((i, i + len));
                let end = i + len;
                let mut last = c;
                while let Some(&(j, ch)) = iter.peek() {
                    if j >= end {
                        break;
                    }
                    last = ch;
                    iter.next();
                }
                prev = Some(last);
                continue;
            }
        }
        prev = Some(c);
    }
    out
}

/// Replace every case-insensitive whole-word occurrence of a roster name with `[NAME]`.
pub fn redact_names(text: &str, roster: &[String]) -> String {
    let names = normalized_roster(roster);
    if names.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (start, end) in find_matches(text, &names) {
        out.push_str(&text[cursor..start]);
        out.push_str(NAME_TOKEN);
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Whether `text` still contains a whole-word roster name.
pub fn contains_roster_name(text: &str, roster: &[String]) -> bool {
    let names = normalized_roster(roster);
    !names.is_empty() && !find_matches(text, &names).is_empty()
}
