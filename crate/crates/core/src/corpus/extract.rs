use crate::corpus::RawPost;

/// Raw (untokenized) pair pulled from one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedPair {
    pub code_text: String,
    pub title_text: String,
    pub score: i64,
    pub post_id: u64,
}

/// Decodes the HTML character references that appear in post bodies.
/// Unknown named references are left as written.
pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let Some(semi) = tail[..tail.len().min(12)].find(';') else {
            out.push('&');
            rest = &tail[1..];
            continue;
        };
        let name = &tail[1..semi];
        let decoded = match name {
            "lt" => Some('<'),
            "gt" => Some('>'),
            "amp" => Some('&'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            _ if name.starts_with("#x") || name.starts_with("#X") => {
                u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
            }
            _ if name.starts_with('#') => name[1..].parse::<u32>().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &tail[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Contents of every `<code>` element, in document order.
fn code_blocks(html: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut rest = html;
    while let Some(start) = rest.find("<code") {
        let after = &rest[start + 5..];
        // `<code>` or `<code attr=…>`, but not `<codex>`
        if !after.starts_with('>') && !after.starts_with(char::is_whitespace) {
            rest = after;
            continue;
        }
        let Some(open_end) = after.find('>') else {
            break;
        };
        let content = &after[open_end + 1..];
        let Some(close) = content.find("</code>") else {
            break;
        };
        let text = decode_entities(&content[..close]);
        let text = text.trim_matches(['\n', '\r']).trim_end();
        if !text.trim().is_empty() {
            blocks.push(text.to_string());
        }
        rest = &content[close + 7..];
    }
    blocks
}

/// Pairs the concatenated `<code>` blocks of a question with its title.
/// An empty `tag_filter` accepts any post.
pub fn extract_pair(post: &RawPost, tag_filter: &str) -> Option<ExtractedPair> {
    if !tag_filter.is_empty() && !post.tags.iter().any(|t| t.eq_ignore_ascii_case(tag_filter)) {
        return None;
    }
    let title = post.title.trim();
    if title.is_empty() {
        return None;
    }
    let blocks = code_blocks(&post.body_html);
    if blocks.is_empty() {
        return None;
    }
    Some(ExtractedPair {
        code_text: blocks.join("\n"),
        title_text: decode_entities(title),
        score: post.score,
        post_id: post.post_id,
    })
}
