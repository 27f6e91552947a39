use std::path::Path;

use serde::{Deserialize, Serialize};

/// Default refusal phrases, matched case-insensitively as substrings.
pub const DEFAULT_REFUSAL_PATTERNS: &[&str] = &[
    "cannot create the query",
    "cannot generate the sql",
    "can't create the query",
    "can't generate the sql",
    "unable to create the query",
    "unable to generate the sql",
];

const SQL_FENCE_LABELS: &[&str] = &["", "sql", "oracle", "plsql", "pl/sql"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefusalPatterns {
    patterns: Vec<String>,
}

impl Default for RefusalPatterns {
    fn default() -> Self {
        Self::new(DEFAULT_REFUSAL_PATTERNS.iter().copied())
    }
}

impl RefusalPatterns {
    pub fn new<S: AsRef<str>>(patterns: impl IntoIterator<Item = S>) -> Self {
        let patterns = patterns
            .into_iter()
            .map(|p| p.as_ref().trim().to_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        RefusalPatterns { patterns }
    }

    /// One pattern per line; blank lines and `#` comments are ignored.
    pub fn parse(source: &str) -> Self {
        Self::new(source.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn load_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn find(&self, text: &str) -> Option<&str> {
        let lower = text.to_lowercase();
        self.patterns.iter().find(|p| lower.contains(p.as_str())).map(String::as_str)
    }
}

pub fn detect_refusal(text: &str, patterns: &RefusalPatterns) -> bool {
    patterns.find(text).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionKind {
    Sql,
    Refusal,
    Unparseable,
}

impl ExtractionKind {
    pub fn label(self) -> &'static str {
        match self {
            ExtractionKind::Sql => "sql",
            ExtractionKind::Refusal => "refusal",
            ExtractionKind::Unparseable => "unparseable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub kind: ExtractionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal_text: Option<String>,
    /// Why a response was judged unparseable, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ExtractionResult {
    pub fn sql(text: impl Into<String>) -> Self {
        ExtractionResult { kind: ExtractionKind::Sql, sql_text: Some(text.into()), refusal_text: None, detail: None }
    }

    pub fn refusal(text: impl Into<String>) -> Self {
        ExtractionResult { kind: ExtractionKind::Refusal, sql_text: None, refusal_text: Some(text.into()), detail: None }
    }

    pub fn unparseable(detail: Option<String>) -> Self {
        ExtractionResult { kind: ExtractionKind::Unparseable, sql_text: None, refusal_text: None, detail }
    }
}

/// Pull SQL out of a model response.
///
/// Order: a fenced block labelled as SQL (or unlabelled) wins; then a
/// refusal phrase; then the first bare statement starting with SELECT or
/// WITH, up to `;` or a blank line.
pub fn extract_sql(raw: &str, patterns: &RefusalPatterns) -> ExtractionResult {
    if let Some(sql) = fenced_sql(raw) {
        return ExtractionResult::sql(sql);
    }
    if detect_refusal(raw, patterns) {
        return ExtractionResult::refusal(raw.trim());
    }
    if let Some(sql) = bare_statement(raw) {
        return ExtractionResult::sql(sql);
    }
    ExtractionResult::unparseable(None)
}

fn starts_with_word(text: &str, word: &str) -> bool {
    text.len() >= word.len()
        && text.is_char_boundary(word.len())
        && text[..word.len()].eq_ignore_ascii_case(word)
        && !text[word.len()..].starts_with(|c: char| c.is_alphanumeric() || c == '_')
}

fn starts_statement(text: &str) -> bool {
    starts_with_word(text, "SELECT") || (starts_with_word(text, "WITH") && looks_like_cte(&text[4..]))
}

/// After `WITH`: `[RECURSIVE] name [(cols)] AS (`.
fn looks_like_cte(rest: &str) -> bool {
    let mut s = rest.trim_start();
    if starts_with_word(s, "RECURSIVE") {
        s = s[9..].trim_start();
    }
    let name_len = s
        .char_indices()
        .find(|&(_, c)| !(c.is_alphanumeric() || c == '_' || c == '"' || c == '$' || c == '#'))
        .map_or(s.len(), |(i, _)| i);
    if name_len == 0 {
        return false;
    }
    s = s[name_len..].trim_start();
    if s.starts_with('(') {
        match s.find(')') {
            Some(end) => s = s[end + 1..].trim_start(),
            None => return false,
        }
    }
    starts_with_word(s, "AS") && s[2..].trim_start().starts_with('(')
}

fn fenced_sql(raw: &str) -> Option<String> {
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let close = after.find("```")?;
        let inner = &after[..close];
        rest = &after[close + 3..];
        if let Some(sql) = fence_content(inner) {
            return Some(sql);
        }
    }
    None
}

fn fence_content(inner: &str) -> Option<String> {
    let (info, body) = match inner.split_once('\n') {
        Some((first, body)) => {
            if starts_statement(first.trim_start()) {
                ("", inner)
            } else {
                (first.trim(), body)
            }
        }
        None => {
            let trimmed = inner.trim_start();
            if starts_statement(trimmed) {
                ("", trimmed)
            } else {
                trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""))
            }
        }
    };
    let label = info.split_whitespace().next().unwrap_or("").to_lowercase();
    if !SQL_FENCE_LABELS.contains(&label.as_str()) {
        return None;
    }
    let body = body.trim();
    (!body.is_empty()).then(|| body.to_string())
}

fn bare_statement(raw: &str) -> Option<String> {
    let start = raw.char_indices().find_map(|(i, _)| {
        let at_boundary = raw[..i].chars().next_back().is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
        (at_boundary && starts_statement(&raw[i..])).then_some(i)
    })?;
    let text = &raw[start..];
    let mut end = text.len();
    if let Some(i) = text.find(';') {
        end = end.min(i);
    }
    if let Some(i) = blank_line(text) {
        end = end.min(i);
    }
    let sql = text[..end].trim();
    (!sql.is_empty()).then(|| sql.to_string())
}

fn blank_line(text: &str) -> Option<usize> {
    let mut offset = 0;
    let mut previous_newline = None;
    for line in text.split_inclusive('\n') {
        if let Some(nl) = previous_newline {
            if line.trim().is_empty() {
                return Some(nl);
            }
        }
        offset += line.len();
        previous_newline = line.ends_with('\n').then_some(offset - 1);
    }
    None
}
