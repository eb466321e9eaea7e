//! The mini-language: syntax tree, parser, printer and patch application.

mod ast;
mod parser;
mod patch;
mod printer;

pub use ast::*;
pub use parser::{check_program, parse, parse_with_spans, SpanMap};
pub use patch::{apply_patch, LocMap, Patch, PatchKind};
pub use printer::{bool_expr, operand, pretty_print, print_function, stmt_inline};
