//! Token-level reading, writing, and operator-occurrence indexing of
//! SMT-LIB 2.6 scripts.

mod document;
mod lexer;

pub use document::{DocumentError, FormulaDocument, OperatorOccurrence};
pub use lexer::{serialize, tokenize, LexError, Span, Token, TokenKind};
