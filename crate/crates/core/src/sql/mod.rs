//! Front end for the supported DML subset: tokens, statement trees,
//! parsing, canonical rendering and validation against the manifest.

use std::fmt;

use thiserror::Error;

pub mod ast;
pub mod lexer;
pub mod like;
pub mod parser;
pub mod render;
pub mod validate;

pub use ast::*;
pub use lexer::{is_keyword, tokenize, Span, Token, TokenKind};
pub use like::{parse_like_pattern, LikePattern, PatternAtom};
pub use parser::{parse, parse_statement, MAX_NESTING};
pub use render::{render_cond, render_expr, render_select, render_statement};
pub use validate::{item_headers, literal_value, validate_statement};

/// Constructs the translator cannot carry over to ciphertexts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Feature {
    Arithmetic,
    BuiltinFunction(String),
    Distinct,
    SumVsSum,
    CrossDomain(String),
    CorrelatedSubquery,
    GroupByAll,
    SelfJoin,
    /// SUM/AVG on a column without an extension companion.
    SumWithoutExtension(String),
    /// LIKE on a column not stored under the fuzzy rule.
    LikeEncoding(String),
    Other(String),
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Arithmetic => write!(f, "arithmetic expressions"),
            Feature::BuiltinFunction(n) => write!(f, "built-in function {n}"),
            Feature::Distinct => write!(f, "DISTINCT"),
            Feature::SumVsSum => write!(f, "comparing two SUM/AVG aggregates"),
            Feature::CrossDomain(d) => write!(f, "comparison across domains or encodings ({d})"),
            Feature::CorrelatedSubquery => write!(f, "correlated subqueries"),
            Feature::GroupByAll => write!(f, "GROUP BY ALL"),
            Feature::SelfJoin => write!(f, "a table appearing twice in FROM"),
            Feature::SumWithoutExtension(c) => write!(f, "SUM/AVG on {c}, which has no extension column"),
            Feature::LikeEncoding(c) => write!(f, "LIKE on {c}, which is not fuzzy-encoded"),
            Feature::Other(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("lex error at {span}: {message}")]
    Lex { message: String, span: Span },
    #[error("parse error at {span}: expected {expected}, found {found}")]
    Parse { expected: String, found: String, span: Span },
    #[error("unknown identifier {0}")]
    UnknownIdentifier(String),
    #[error("ambiguous column {0}")]
    Ambiguous(String),
    #[error("unsupported: {0}")]
    UnsupportedFeature(Feature),
    #[error("principal {principal} may not access {table}")]
    PermissionDenied { principal: String, table: String },
    #[error("type error: {0}")]
    Type(String),
}
