//! Lossless SMT-LIB 2.6 lexer.
//!
//! Tokens carry their exact source lexeme and byte span so that a token
//! stream can be re-serialized byte-for-byte, comments included.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    LParen,
    RParen,
    Symbol,
    Keyword,
    StringLit,
    Numeral,
    Decimal,
    Hex,
    Binary,
    Comment,
}

/// Byte span into the source: (offset, length).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("unterminated string literal at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated quoted symbol at byte {0}")]
    UnterminatedQuotedSymbol(usize),
    #[error("unbalanced parenthesis at byte {0}")]
    UnbalancedParens(usize),
}

fn is_symbol_char(b: u8) -> bool {
    b.is_ascii_alphanumeric()
        || matches!(
            b,
            b'~' | b'!'
                | b'@'
                | b'$'
                | b'%'
                | b'^'
                | b'&'
                | b'*'
                | b'_'
                | b'-'
                | b'+'
                | b'='
                | b'<'
                | b'>'
                | b'.'
                | b'?'
                | b'/'
        )
        || b >= 0x80 // be lenient with non-ASCII bytes inside symbols
}

/// Tokenize an SMT-LIB script. Comments are retained as tokens; whitespace
/// is recoverable from the gaps between spans. Parenthesis balance is
/// checked so downstream indexing can assume a well-formed nesting.
pub fn tokenize(input: &str) -> Result<Vec<Token>, LexError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut depth: i64 = 0;
    let mut open_stack: Vec<usize> = Vec::new();

    let push = |tokens: &mut Vec<Token>, kind, start: usize, end: usize| {
        tokens.push(Token {
            kind,
            text: input[start..end].to_string(),
            span: Span {
                offset: start,
                len: end - start,
            },
        });
    };

    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                push(&mut tokens, TokenKind::LParen, i, i + 1);
                depth += 1;
                open_stack.push(i);
                i += 1;
            }
            b')' => {
                if depth == 0 {
                    return Err(LexError::UnbalancedParens(i));
                }
                push(&mut tokens, TokenKind::RParen, i, i + 1);
                depth -= 1;
                open_stack.pop();
                i += 1;
            }
            b';' => {
                let start = i;
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                push(&mut tokens, TokenKind::Comment, start, i);
            }
            b'"' => {
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() {
                        return Err(LexError::UnterminatedString(start));
                    }
                    if bytes[i] == b'"' {
                        // "" is an escaped quote, not a terminator
                        if i + 1 < bytes.len() && bytes[i + 1] == b'"' {
                            i += 2;
                        } else {
                            i += 1;
                            break;
                        }
                    } else {
                        i += 1;
                    }
                }
                push(&mut tokens, TokenKind::StringLit, start, i);
            }
            b'|' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'|' {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(LexError::UnterminatedQuotedSymbol(start));
                }
                i += 1;
                push(&mut tokens, TokenKind::Symbol, start, i);
            }
            b':' => {
                let start = i;
                i += 1;
                while i < bytes.len() && is_symbol_char(bytes[i]) {
                    i += 1;
                }
                push(&mut tokens, TokenKind::Keyword, start, i);
            }
            b'#' if i + 1 < bytes.len() && (bytes[i + 1] == b'x' || bytes[i + 1] == b'b') => {
                let start = i;
                let kind = if bytes[i + 1] == b'x' {
                    TokenKind::Hex
                } else {
                    TokenKind::Binary
                };
                i += 2;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                push(&mut tokens, kind, start, i);
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut kind = TokenKind::Numeral;
                if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                    kind = TokenKind::Decimal;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                } else if i < bytes.len() && bytes[i] == b'.' {
                    // trailing-dot decimals like "1." occur in the wild
                    kind = TokenKind::Decimal;
                    i += 1;
                }
                push(&mut tokens, kind, start, i);
            }
            _ if is_symbol_char(b) => {
                let start = i;
                while i < bytes.len() && is_symbol_char(bytes[i]) {
                    i += 1;
                }
                push(&mut tokens, TokenKind::Symbol, start, i);
            }
            _ => {
                // Unknown single byte; keep it as a one-byte symbol so the
                // round trip still holds.
                push(&mut tokens, TokenKind::Symbol, i, i + 1);
                i += 1;
            }
        }
    }

    if depth != 0 {
        return Err(LexError::UnbalancedParens(
            open_stack.last().copied().unwrap_or(0),
        ));
    }
    Ok(tokens)
}

/// Re-serialize a token stream against its original source, restoring the
/// interstitial whitespace from the span gaps.
pub fn serialize(input: &str, tokens: &[Token]) -> String {
    let mut out = String::with_capacity(input.len());
    let mut pos = 0usize;
    for tok in tokens {
        out.push_str(&input[pos..tok.span.offset]);
        out.push_str(&tok.text);
        pos = tok.span.end();
    }
    out.push_str(&input[pos..]);
    out
}
