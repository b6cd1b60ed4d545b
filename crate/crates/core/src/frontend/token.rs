//! Lexer for the supported C subset.
//!
//! Whitespace and comments are skipped but never lost: every token carries its
//! byte span, so the gaps between consecutive spans are exactly the skipped
//! trivia and the source can be rebuilt from the token list.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    IntLiteral,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Range<usize>,
}

impl Token {
    pub fn is(&self, text: &str) -> bool {
        self.text == text
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` at {}", self.text, self.span.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unexpected character {ch:?} at offset {position}")]
    UnexpectedChar { position: usize, ch: char },
    #[error("unterminated block comment starting at offset {position}")]
    UnterminatedComment { position: usize },
}

impl LexError {
    pub fn position(&self) -> usize {
        match self {
            LexError::UnexpectedChar { position, .. } | LexError::UnterminatedComment { position } => {
                *position
            }
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "int", "short", "long", "char", "unsigned", "signed", "void", "if", "else", "while", "for",
    "return",
];

pub const TYPE_KEYWORDS: &[&str] = &["int", "short", "long", "char", "unsigned", "signed", "void"];

// Longest match first.
const OPERATORS: &[&str] = &[
    "<<=", ">>=", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "++", "--", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", "^", "~",
];

const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ';', ','];

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;

    while pos < bytes.len() {
        let rest = &source[pos..];
        let ch = rest.chars().next().expect("non-empty remainder");

        if ch.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if rest.starts_with("//") {
            pos += rest.find('\n').unwrap_or(rest.len());
            continue;
        }
        if rest.starts_with("/*") {
            match rest[2..].find("*/") {
                Some(end) => pos += end + 4,
                None => return Err(LexError::UnterminatedComment { position: pos }),
            }
            continue;
        }

        let start = pos;
        let kind = if ch.is_ascii_alphabetic() || ch == '_' {
            pos += rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            if KEYWORDS.contains(&&source[start..pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if ch.is_ascii_digit() {
            let len = if rest.starts_with("0x") || rest.starts_with("0X") {
                2 + rest[2..]
                    .find(|c: char| !c.is_ascii_hexdigit())
                    .unwrap_or(rest.len() - 2)
            } else {
                rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len())
            };
            // `12abc` is not a literal followed by an identifier.
            if let Some(next) = rest[len..].chars().next() {
                if next.is_ascii_alphanumeric() || next == '_' {
                    return Err(LexError::UnexpectedChar { position: pos + len, ch: next });
                }
            }
            pos += len;
            TokenKind::IntLiteral
        } else if PUNCTUATION.contains(&ch) {
            pos += 1;
            TokenKind::Punctuation
        } else if let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) {
            pos += op.len();
            TokenKind::Operator
        } else {
            return Err(LexError::UnexpectedChar { position: pos, ch });
        };

        tokens.push(Token { kind, text: source[start..pos].to_string(), span: start..pos });
    }

    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds_and_text(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.text)).collect()
    }

    #[test]
    fn smallest_statement() {
        use TokenKind::*;
        assert_eq!(
            kinds_and_text("a=1;"),
            vec![
                (Identifier, "a".into()),
                (Operator, "=".into()),
                (IntLiteral, "1".into()),
                (Punctuation, ";".into()),
            ]
        );
    }

    #[test]
    fn function_header() {
        use TokenKind::*;
        let toks = kinds_and_text("short add (short b) {");
        let expected = [
            (Keyword, "short"),
            (Identifier, "add"),
            (Punctuation, "("),
            (Keyword, "short"),
            (Identifier, "b"),
            (Punctuation, ")"),
            (Punctuation, "{"),
        ];
        assert_eq!(toks.len(), expected.len());
        for ((k, t), (ek, et)) in toks.iter().zip(expected) {
            assert_eq!((k, t.as_str()), (&ek, et));
        }
    }

    #[test]
    fn illegal_character() {
        assert_eq!(
            tokenize("a @ b"),
            Err(LexError::UnexpectedChar { position: 2, ch: '@' })
        );
    }

    #[test]
    fn comments_are_stripped_with_spans_kept() {
        let src = "a /* x */ = // tail\n 1;";
        let toks = tokenize(src).unwrap();
        assert_eq!(toks.len(), 4);
        assert_eq!(&src[toks[1].span.clone()], "=");
        assert_eq!(toks[2].span, 21..22);
    }

    #[test]
    fn multi_char_operators() {
        let toks = kinds_and_text("a<=b==c&&d");
        let ops: Vec<_> = toks
            .iter()
            .filter(|(k, _)| *k == TokenKind::Operator)
            .map(|(_, t)| t.as_str())
            .collect();
        assert_eq!(ops, ["<=", "==", "&&"]);
    }

    #[test]
    fn unterminated_comment() {
        assert_eq!(tokenize("a /* b"), Err(LexError::UnterminatedComment { position: 2 }));
    }

    #[test]
    fn malformed_number() {
        assert!(matches!(tokenize("x = 12ab;"), Err(LexError::UnexpectedChar { position: 6, .. })));
    }
}
