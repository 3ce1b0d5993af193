use std::fmt;

use super::SqlError;

/// Byte range in the source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Keyword,
    Identifier,
    /// Digits with an optional fractional part.
    Number,
    /// Single-quoted string; `lexeme` holds the unescaped contents.
    String,
    Operator,
    Punct,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Keywords are upper-cased; identifiers keep their spelling.
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.lexeme == kw
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.kind, TokenKind::Punct | TokenKind::Operator) && self.lexeme == p
    }
}

const KEYWORDS: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "AVG", "BETWEEN", "BY", "COUNT", "CROSS", "DEFAULT", "DELETE", "DESC", "DISTINCT",
    "ESCAPE", "EXCEPT", "EXISTS", "FROM", "FULL", "GROUP", "HAVING", "IN", "INNER", "INSERT", "INTERSECT", "INTO",
    "IS", "JOIN", "LEFT", "LIKE", "MAX", "MIN", "NOT", "NULL", "ON", "OR", "ORDER", "OUTER", "RIGHT", "SELECT",
    "SET", "SUM", "TOP", "UNION", "UPDATE", "VALUES", "WHERE",
];

pub fn is_keyword(word: &str) -> bool {
    let up = word.to_ascii_uppercase();
    KEYWORDS.contains(&up.as_str())
}

/// Splits statement text into tokens. Keywords are case-insensitive;
/// identifiers may not contain `subquery` in any case.
pub fn tokenize(text: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let span = Span { start, end: i };
            if is_keyword(word) {
                out.push(Token { kind: TokenKind::Keyword, lexeme: word.to_ascii_uppercase(), span });
            } else {
                if word.to_ascii_lowercase().contains("subquery") {
                    return Err(SqlError::Lex { message: format!("identifier {word:?} contains \"subquery\""), span });
                }
                out.push(Token { kind: TokenKind::Identifier, lexeme: word.to_string(), span });
            }
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(SqlError::Lex {
                    message: "malformed number".into(),
                    span: Span { start, end: i + 1 },
                });
            }
            out.push(Token { kind: TokenKind::Number, lexeme: text[start..i].to_string(), span: Span { start, end: i } });
            continue;
        }
        if c == b'\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match text[i..].chars().next() {
                    None => {
                        return Err(SqlError::Lex {
                            message: "unterminated string literal".into(),
                            span: Span { start, end: text.len() },
                        })
                    }
                    Some('\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token { kind: TokenKind::String, lexeme: s, span: Span { start, end: i } });
            continue;
        }
        let two = text.get(i..i + 2).unwrap_or("");
        if matches!(two, "<>" | "!=" | "!>" | "!<" | "<=" | ">=") {
            i += 2;
            out.push(Token { kind: TokenKind::Operator, lexeme: two.to_string(), span: Span { start, end: i } });
            continue;
        }
        match c {
            b'=' | b'<' | b'>' | b'+' | b'-' | b'*' | b'/' | b'%' => {
                i += 1;
                out.push(Token { kind: TokenKind::Operator, lexeme: (c as char).to_string(), span: Span { start, end: i } });
            }
            b'(' | b')' | b',' | b'.' | b';' => {
                i += 1;
                out.push(Token { kind: TokenKind::Punct, lexeme: (c as char).to_string(), span: Span { start, end: i } });
            }
            _ => {
                let ch = text[i..].chars().next().expect("in bounds");
                return Err(SqlError::Lex {
                    message: format!("illegal character {ch:?}"),
                    span: Span { start, end: i + ch.len_utf8() },
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<(TokenKind, String)> {
        tokenize(text).unwrap().into_iter().map(|t| (t.kind, t.lexeme)).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(kinds("SELECT 1"), vec![(TokenKind::Keyword, "SELECT".into()), (TokenKind::Number, "1".into())]);
        let t = kinds("select C_CUSTKEY from CUSTOMER where a >= 5");
        assert_eq!(t[0], (TokenKind::Keyword, "SELECT".into()));
        assert_eq!(t[1], (TokenKind::Identifier, "C_CUSTKEY".into()));
        assert_eq!(t[2], (TokenKind::Keyword, "FROM".into()));
        assert_eq!(t[6], (TokenKind::Operator, ">=".into()));
        assert_eq!(t[7], (TokenKind::Number, "5".into()));
    }

    #[test]
    fn strings_and_numbers() {
        assert_eq!(kinds("'it''s'"), vec![(TokenKind::String, "it's".into())]);
        assert_eq!(kinds("0.05"), vec![(TokenKind::Number, "0.05".into())]);
        assert_eq!(kinds("t.c"), vec![
            (TokenKind::Identifier, "t".into()),
            (TokenKind::Punct, ".".into()),
            (TokenKind::Identifier, "c".into())
        ]);
        assert_eq!(kinds("a !> 3 -- note"), vec![
            (TokenKind::Identifier, "a".into()),
            (TokenKind::Operator, "!>".into()),
            (TokenKind::Number, "3".into())
        ]);
    }

    #[test]
    fn lex_errors_carry_spans() {
        match tokenize("SELECT 'abc") {
            Err(SqlError::Lex { span, .. }) => assert_eq!(span, Span { start: 7, end: 11 }),
            other => panic!("{other:?}"),
        }
        match tokenize("SELECT a ? b") {
            Err(SqlError::Lex { span, .. }) => assert_eq!(span.start, 9),
            other => panic!("{other:?}"),
        }
        assert!(matches!(tokenize("SELECT my_subQuery FROM t"), Err(SqlError::Lex { .. })));
        assert!(matches!(tokenize("SELECT 12ab"), Err(SqlError::Lex { .. })));
    }
}
