/// Characters that stay inside a token when flanked by alphanumerics
/// (`5'6`, `167.64`, `well-known`).
fn joins_alnum(c: char) -> bool {
    matches!(c, '\'' | '.' | '-' | '’')
}

/// Characters that stay inside a token only between digits (`1,000`).
fn joins_digits(c: char) -> bool {
    c == ','
}

/// Lowercased tokens with their byte ranges in `text`.
///
/// Alphanumeric runs form tokens; every other non-space character is a
/// token of its own unless one of the joining rules above applies.
pub fn tokenize_with_offsets(text: &str) -> Vec<(String, usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut prev: Option<char> = None;

    let flush = |current: &mut String, start: usize, end: usize, out: &mut Vec<(String, usize, usize)>| {
        if !current.is_empty() {
            out.push((std::mem::take(current), start, end));
        }
    };

    for (k, &(pos, c)) in chars.iter().enumerate() {
        let next = chars.get(k + 1).map(|&(_, n)| n);
        if c.is_whitespace() {
            flush(&mut current, start, pos, &mut out);
            prev = None;
            continue;
        }
        let inner = !current.is_empty()
            && prev.is_some_and(char::is_alphanumeric)
            && next.is_some_and(char::is_alphanumeric)
            && (joins_alnum(c)
                || (joins_digits(c)
                    && prev.is_some_and(|p| p.is_ascii_digit())
                    && next.is_some_and(|n| n.is_ascii_digit())));
        if c.is_alphanumeric() || inner {
            if current.is_empty() {
                start = pos;
            }
            current.extend(c.to_lowercase());
        } else {
            flush(&mut current, start, pos, &mut out);
            out.push((c.to_lowercase().collect(), pos, pos + c.len_utf8()));
        }
        prev = Some(c);
    }
    flush(&mut current, start, text.len(), &mut out);
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|(t, _, _)| t).collect()
}
