//! Filter-expression language: the predicate fragment of a SQL `WHERE`
//! clause over one table, with `fPhotoFlags` for flag bit names.
//!
//! Grammar (see `docs/filterql.md`):
//!
//! ```text
//! expr    = or ;
//! or      = and { "OR" and } ;
//! and     = not { "AND" not } ;
//! not     = "NOT" not | cmp ;
//! cmp     = bitand { ("<" | ">" | "<=" | ">=" | "=" | "!=" | "<>") bitand } ;
//! bitand  = add { "&" add } ;
//! add     = mul { ("+" | "-") mul } ;
//! mul     = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | primary ;
//! primary = number | string | ident [ "(" [ expr { "," expr } ] ")" ] | "(" expr ")" ;
//! ```

mod ast;
mod compile;
mod parser;

pub use ast::{BinaryOp, Expr, Literal, UnaryOp};
pub use compile::{Checked, Scalar, Type};
pub use parser::parse;

use crate::store::{flags, TableSchema};

/// Functions callable from expressions.
pub const FUNCTIONS: [&str; 1] = ["fPhotoFlags"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("syntax error at line {line}, column {column}: {message}{}", expected_list(.expected))]
    Syntax { line: usize, column: usize, message: String, expected: Vec<String> },
    #[error("unknown function '{name}' at line {line}, column {column}")]
    UnknownFunction { name: String, line: usize, column: usize },
    #[error("unknown column '{name}' in {table}")]
    UnknownColumn { name: String, table: String },
    #[error("type error in {expr}: {message}")]
    Type { expr: String, message: String },
    #[error("unknown flag '{name}'; valid flags: {}", flags::NAMES.map(|(n, _)| n).join(", "))]
    UnknownFlag { name: String },
}

fn expected_list(e: &[String]) -> String {
    if e.is_empty() {
        String::new()
    } else {
        format!("; expected one of: {}", e.join(", "))
    }
}

/// Bit assigned to a photometric flag name (case-insensitive).
pub fn f_photo_flags(name: &str) -> Result<i64, FilterError> {
    flags::by_name(name).ok_or_else(|| FilterError::UnknownFlag { name: name.to_string() })
}

/// Parses and typechecks a predicate against `schema`.
pub fn compile(text: &str, schema: &'static TableSchema) -> Result<Checked, FilterError> {
    Checked::predicate(&parse(text)?, schema)
}
