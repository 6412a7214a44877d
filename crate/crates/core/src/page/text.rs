//! HTML to plain text and token truncation.
//!
//! The converter is a tolerant tag scanner, not a DOM parser. Output rules:
//!
//! - `script`, `style`, `noscript`, `template` and `svg` content and HTML
//!   comments are dropped;
//! - every other tag is removed, keeping its inner text (anchors keep their
//!   text, never the URL);
//! - block-level tags and literal newlines become line breaks;
//! - whitespace inside a line collapses to one space, lines are trimmed and
//!   empty lines removed;
//! - entities are decoded. A decoded `<` or `&` that would read as markup
//!   again is re-escaped, so converting the output a second time is a no-op.

use serde::{Deserialize, Serialize};

/// Default cap on tokens handed to reference extraction.
pub const DEFAULT_TOKEN_CAP: usize = 5000;

const SKIPPED_ELEMENTS: &[&str] = &["script", "style", "noscript", "template", "svg"];

const BLOCK_ELEMENTS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "caption", "dd", "details", "div", "dl",
    "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5",
    "h6", "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section", "summary", "table",
    "tbody", "thead", "tfoot", "title", "tr", "ul", "body", "html", "head",
];

/// Cells separate with a space rather than a line break.
const SPACED_ELEMENTS: &[&str] = &["td", "th"];

/// A whitespace-token budget.
///
/// A token is a maximal run of non-whitespace characters. This is not any
/// model's tokenizer; it keeps the cap deterministic and portable. Text
/// written without spaces, such as Chinese, counts each run as one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub max_tokens: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_TOKEN_CAP,
        }
    }
}

impl TokenBudget {
    pub fn new(max_tokens: usize) -> Self {
        Self { max_tokens }
    }
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// First `min(count, max_tokens)` tokens joined by single spaces.
pub fn truncate_tokens(text: &str, budget: TokenBudget) -> String {
    let mut out = String::new();
    for (i, token) in text.split_whitespace().take(budget.max_tokens).enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

fn decode_named(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "copy" => '©',
        "reg" => '®',
        "mdash" => '—',
        "ndash" => '–',
        "hellip" => '…',
        "lsquo" => '‘',
        "rsquo" => '’',
        "ldquo" => '“',
        "rdquo" => '”',
        "middot" => '·',
        _ => return None,
    })
}

/// Decodes the entity starting at `at` (which must be `&`), returning the
/// character and the entity's byte length.
fn entity_at(s: &str, at: usize) -> Option<(char, usize)> {
    let rest = &s[at + 1..];
    let semi = rest.find(';')?;
    if semi == 0 || semi > 10 {
        return None;
    }
    let body = &rest[..semi];
    let decoded = if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse::<u32>().ok()?,
        };
        char::from_u32(code).filter(|c| *c != '\0' && (!c.is_control() || c.is_whitespace()))?
    } else {
        if !body.chars().all(|c| c.is_ascii_alphanumeric()) {
            return None;
        }
        decode_named(body)?
    };
    Some((decoded, semi + 2))
}

fn decode_entities(text: &str, out: &mut String) {
    let mut at = 0;
    while let Some(offset) = text[at..].find('&') {
        let amp = at + offset;
        out.push_str(&text[at..amp]);
        match entity_at(text, amp) {
            Some((c, len)) => {
                out.push(c);
                at = amp + len;
            }
            None => {
                out.push('&');
                at = amp + 1;
            }
        }
    }
    out.push_str(&text[at..]);
}

fn starts_tag(next: Option<char>) -> bool {
    matches!(next, Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?')
}

fn find_ignore_case(haystack: &str, needle: &str) -> Option<usize> {
    let n = needle.len();
    let bytes = haystack.as_bytes();
    (0..bytes.len().saturating_sub(n - 1))
        .find(|&i| bytes[i..i + n].eq_ignore_ascii_case(needle.as_bytes()))
}

/// Strips markup into a plain-text string. Never fails on malformed input.
pub fn html_to_text(html: &str) -> String {
    let mut raw = String::with_capacity(html.len() / 2);
    let mut at = 0;
    let mut text_start = 0;

    while let Some(offset) = html[at..].find('<') {
        let lt = at + offset;
        let rest = &html[lt..];
        let next = rest[1..].chars().next();
        if !starts_tag(next) {
            at = lt + 1;
            continue;
        }

        if rest.starts_with("<!--") {
            decode_entities(&html[text_start..lt], &mut raw);
            let end = rest.find("-->").map_or(html.len(), |e| lt + e + 3);
            at = end;
            text_start = end;
            continue;
        }

        let Some(gt) = rest.find('>') else {
            // Unterminated tag: keep the rest as text.
            at = lt + 1;
            continue;
        };
        decode_entities(&html[text_start..lt], &mut raw);
        let inner = &rest[1..gt];
        let tag_end = lt + gt + 1;
        at = tag_end;
        text_start = tag_end;

        if inner.starts_with('!') || inner.starts_with('?') {
            continue;
        }
        let closing = inner.starts_with('/');
        let name: String = inner
            .trim_start_matches('/')
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();

        if !closing && SKIPPED_ELEMENTS.contains(&name.as_str()) && !inner.ends_with('/') {
            let close = format!("</{name}");
            let body = &html[tag_end..];
            at = match find_ignore_case(body, &close) {
                Some(pos) => {
                    let after = tag_end + pos;
                    html[after..].find('>').map_or(html.len(), |g| after + g + 1)
                }
                None => html.len(),
            };
            text_start = at;
            continue;
        }

        if BLOCK_ELEMENTS.contains(&name.as_str()) {
            raw.push('\n');
        } else if SPACED_ELEMENTS.contains(&name.as_str()) {
            raw.push(' ');
        }
    }
    decode_entities(&html[text_start..], &mut raw);

    escape_markup(&normalize_lines(&raw))
}

fn normalize_lines(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for line in raw.split('\n') {
        let mut first = true;
        for word in line.split_whitespace() {
            if first {
                if !out.is_empty() {
                    out.push('\n');
                }
                first = false;
            } else {
                out.push(' ');
            }
            out.push_str(word);
        }
    }
    out
}

/// Re-escapes characters that a second conversion would treat as markup.
fn escape_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, c) in text.char_indices() {
        match c {
            '<' if starts_tag(text[i + 1..].chars().next()) => out.push_str("&lt;"),
            '&' if entity_at(text, i).is_some() => out.push_str("&amp;"),
            _ => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_markup() {
        assert_eq!(html_to_text("<p>Hello <b>world</b></p>"), "Hello world");
    }

    #[test]
    fn script_removed_and_blocks_split() {
        assert_eq!(html_to_text("<script>x()</script><p>A</p><p>B</p>"), "A\nB");
    }

    #[test]
    fn empty_page() {
        assert_eq!(html_to_text(""), "");
    }

    #[test]
    fn anchors_keep_text_only() {
        assert_eq!(
            html_to_text(r#"See <a href="https://x.example/page">the page</a> now."#),
            "See the page now."
        );
    }

    #[test]
    fn comments_styles_and_doctype_dropped() {
        let html = "<!DOCTYPE html><html><head><style>p{color:red}</style></head>\
                    <body><!-- hidden --><div>Visible</div><SCRIPT type='x'>if (a<b) {}</SCRIPT></body></html>";
        assert_eq!(html_to_text(html), "Visible");
    }

    #[test]
    fn entities_decoded() {
        assert_eq!(html_to_text("AT&amp;T &lt; 5 &quot;q&quot;&nbsp;&#65;&#x42;"), "AT&T < 5 \"q\" AB");
    }

    #[test]
    fn decoded_markup_is_re_escaped() {
        let once = html_to_text("<p>&lt;b&gt;bold&lt;/b&gt; and &amp;amp;</p>");
        assert_eq!(once, "&lt;b>bold&lt;/b> and &amp;amp;");
        assert_eq!(html_to_text(&once), once);
    }

    #[test]
    fn malformed_markup_is_tolerated() {
        assert_eq!(html_to_text("<p>open <b>never closed"), "open never closed");
        assert_eq!(html_to_text("a < b and c <d"), "a < b and c &lt;d");
        assert_eq!(html_to_text("<script>never ends"), "");
        assert_eq!(html_to_text("x <!-- open comment"), "x");
    }

    #[test]
    fn whitespace_and_lines() {
        let html = "<ul>\n  <li>one   two</li>\n<li>\tthree</li></ul><table><tr><td>a</td><td>b</td></tr></table>";
        assert_eq!(html_to_text(html), "one two\nthree\na b");
    }

    #[test]
    fn truncation_examples() {
        let text: String = (0..6000).map(|i| format!("t{i} ")).collect();
        let cut = truncate_tokens(&text, TokenBudget::default());
        assert_eq!(count_tokens(&cut), 5000);
        assert!(cut.ends_with("t4999"));

        let short = "one two three four five six seven eight nine ten";
        assert_eq!(truncate_tokens(short, TokenBudget::default()), short);

        assert_eq!(truncate_tokens("a  b\tc", TokenBudget::new(2)), "a b");
        assert_eq!(truncate_tokens("   ", TokenBudget::new(2)), "");
    }

    fn html_fragment() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-zA-Z0-9 ,.]{0,12}",
            Just("<p>".to_string()),
            Just("</p>".to_string()),
            Just("<br/>".to_string()),
            Just("<b>".to_string()),
            Just("<script>s</script>".to_string()),
            Just("<!-- c -->".to_string()),
            Just("&amp;".to_string()),
            Just("&lt;".to_string()),
            Just("&lt;b".to_string()),
            Just("&gt;".to_string()),
            Just("&#10;".to_string()),
            Just("&nbsp;".to_string()),
            Just("<".to_string()),
            Just("&".to_string()),
            Just("\n\t ".to_string()),
            Just("<td>".to_string()),
            Just("字".to_string()),
        ];
        proptest::collection::vec(piece, 0..30).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn conversion_is_idempotent(html in html_fragment()) {
            let once = html_to_text(&html);
            prop_assert_eq!(html_to_text(&once), once);
        }

        #[test]
        fn arbitrary_input_never_panics(s in ".{0,200}") {
            let _ = html_to_text(&s);
        }

        #[test]
        fn truncation_is_token_prefix(words in proptest::collection::vec("[a-z]{1,5}", 0..50), seps in proptest::collection::vec("[ \t\n]{1,3}", 50), cap in 0usize..60) {
            let text: String = words.iter().zip(&seps).map(|(w, s)| format!("{w}{s}")).collect();
            let cut = truncate_tokens(&text, TokenBudget::new(cap));
            let cut_tokens: Vec<&str> = cut.split_whitespace().collect();
            prop_assert_eq!(cut_tokens.len(), words.len().min(cap));
            prop_assert_eq!(&cut_tokens[..], &words.iter().map(String::as_str).collect::<Vec<_>>()[..cut_tokens.len()]);
        }
    }
}
