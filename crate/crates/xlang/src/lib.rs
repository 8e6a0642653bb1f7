//! A complete toy compiler for the X query language, written as rule data
//! over the [`hors`] rewriting workbench.
//!
//! The pipeline has four stages, each driven by a shipped `.crs` rule set:
//! parsing to higher-order abstract syntax ([`frontend`]), normalization to
//! nested-relational algebra, algebraic optimization, and dataflow code
//! emission ([`schemes`]). The [`vm`] module executes emitted code over a
//! toy document store and also evaluates algebra terms directly, so the
//! two routes check each other.
//!
//! ```
//! use xlang::schemes::compile;
//! use xlang::vm::{run_target, Store, Value};
//!
//! let code = compile("for $x in child(doc()) return plus($x, $x)")?;
//! let out = run_target(&code, &Store::with_children(&[1, 2, 3]))?;
//! assert_eq!(out, vec![Value::Num(2), Value::Num(4), Value::Num(6)]);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod frontend;
pub mod schemes;
pub mod vm;

pub use frontend::{lex, parse_program, parse_source, validate_ast, XError, XToken};
pub use schemes::{compile, emit_code, infer_type, normalize_query, optimize_algebra, PipelineError};
pub use vm::{eval_algebra, run_target, Store, Stream, Value, VmError};
