use std::fmt;

use serde::{Deserialize, Serialize};

use super::SqlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    String,
    Number,
    Operator,
    Punctuation,
    Comment,
}

/// Location of a token in the source text. `line` and `column` are 1-based;
/// `column` counts characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text of the token, quotes included.
    pub text: String,
    pub position: Position,
}

impl Token {
    /// Uppercase name for keywords and identifiers; quoted identifiers lose
    /// their quotes.
    pub fn name(&self) -> String {
        match self.kind {
            TokenKind::Identifier | TokenKind::Keyword => {
                let t = self.text.as_str();
                let t = t
                    .strip_prefix('"')
                    .and_then(|s| s.strip_suffix('"'))
                    .unwrap_or(t);
                t.to_uppercase()
            }
            _ => self.text.clone(),
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text.eq_ignore_ascii_case(kw)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuation && self.text == p
    }

    pub fn is_operator(&self, op: &str) -> bool {
        self.kind == TokenKind::Operator && self.text == op
    }
}

/// Words the tokenizer classifies as keywords. Everything else that looks
/// like a word is an identifier, including function names such as `COUNT`
/// or `UPPER`.
const KEYWORDS: &[&str] = &[
    "ALL", "ALTER", "AND", "ANY", "APPLY", "AS", "ASC", "BETWEEN", "BY", "CASE", "CONNECT",
    "CREATE", "CROSS", "DELETE", "DESC", "DISTINCT", "DROP", "ELSE", "END", "ESCAPE", "EXCEPT",
    "EXISTS", "FETCH", "FIRST", "FOR", "FROM", "FULL", "GRANT", "GROUP", "HAVING", "IN",
    "INNER", "INSERT", "INTERSECT", "INTO", "IS", "JOIN", "LATERAL", "LEFT", "LIKE", "LIMIT",
    "MERGE", "MINUS", "NATURAL", "NEXT", "NOCYCLE", "NOT", "NULL", "NULLS", "OFFSET", "ON",
    "ONLY", "OR", "ORDER", "OUTER", "OVER", "PARTITION", "PRIOR", "RECURSIVE", "RENAME",
    "REVOKE", "RIGHT", "ROWS", "SELECT", "SET", "SIBLINGS", "SOME", "START", "THEN", "TIES",
    "TRUNCATE", "UNION", "UPDATE", "USING", "VALUES", "WHEN", "WHERE", "WITH", "WITHIN",
];

pub fn is_keyword(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    KEYWORDS.binary_search(&upper.as_str()).is_ok()
}

const OPERATORS: &[&str] = &[
    "<>", "!=", "^=", "<=", ">=", "||", "=>", "::", "=", "<", ">", "+", "-", "*", "/", "%", ":",
    "?", "@", "!", "^", "&", "|", "~",
];

struct Cursor<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    i: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.i + ahead).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.i).map(|&(o, _)| o).unwrap_or(self.src.len())
    }

    fn position(&self) -> Position {
        Position { offset: self.offset(), line: self.line, column: self.column }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.offset()..].starts_with(s)
    }
}

/// Split SQL text into classified tokens. Whitespace is dropped; comments
/// are kept as [`TokenKind::Comment`] tokens.
pub fn tokenize(sql: &str) -> Result<Vec<Token>, SqlError> {
    if sql.trim().is_empty() {
        return Err(SqlError::Empty);
    }
    let mut cur = Cursor {
        src: sql,
        chars: sql.char_indices().collect(),
        i: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    while let Some(c) = cur.peek(0) {
        let start = cur.position();
        let begin = cur.offset();
        let kind = if c.is_whitespace() {
            cur.bump();
            continue;
        } else if cur.starts_with("--") {
            while let Some(c) = cur.peek(0) {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            TokenKind::Comment
        } else if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(SqlError::UnterminatedComment(start));
                }
            }
            TokenKind::Comment
        } else if c == '\'' {
            cur.bump();
            loop {
                match cur.bump() {
                    None => return Err(SqlError::UnterminatedString(start)),
                    Some('\'') if cur.peek(0) == Some('\'') => {
                        cur.bump();
                    }
                    Some('\'') => break,
                    Some(_) => {}
                }
            }
            TokenKind::String
        } else if c == '"' {
            cur.bump();
            loop {
                match cur.bump() {
                    None => return Err(SqlError::UnterminatedIdentifier(start)),
                    Some('"') if cur.peek(0) == Some('"') => {
                        cur.bump();
                    }
                    Some('"') => break,
                    Some(_) => {}
                }
            }
            TokenKind::Identifier
        } else if c.is_ascii_digit() || (c == '.' && cur.peek(1).is_some_and(|d| d.is_ascii_digit())) {
            lex_number(&mut cur);
            TokenKind::Number
        } else if c.is_alphabetic() || c == '_' {
            while let Some(c) = cur.peek(0) {
                if c.is_alphanumeric() || c == '_' || c == '$' || c == '#' {
                    cur.bump();
                } else {
                    break;
                }
            }
            if is_keyword(&sql[begin..cur.offset()]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if matches!(c, '(' | ')' | ',' | ';' | '.' | '[' | ']') {
            cur.bump();
            TokenKind::Punctuation
        } else if let Some(op) = OPERATORS.iter().find(|op| cur.starts_with(op)) {
            for _ in 0..op.chars().count() {
                cur.bump();
            }
            TokenKind::Operator
        } else {
            return Err(SqlError::UnexpectedChar { ch: c, at: start });
        };
        tokens.push(Token {
            kind,
            text: sql[begin..cur.offset()].to_string(),
            position: start,
        });
    }
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>) {
    let mut seen_dot = false;
    while let Some(c) = cur.peek(0) {
        if c.is_ascii_digit() {
            cur.bump();
        } else if c == '.' && !seen_dot && cur.peek(1).is_none_or(|d| d.is_ascii_digit() || !d.is_alphabetic()) {
            seen_dot = true;
            cur.bump();
        } else {
            break;
        }
    }
    if matches!(cur.peek(0), Some('e' | 'E')) {
        let sign = matches!(cur.peek(1), Some('+' | '-'));
        let digit_at = if sign { 2 } else { 1 };
        if cur.peek(digit_at).is_some_and(|d| d.is_ascii_digit()) {
            for _ in 0..digit_at {
                cur.bump();
            }
            while cur.peek(0).is_some_and(|d| d.is_ascii_digit()) {
                cur.bump();
            }
        }
    }
}
