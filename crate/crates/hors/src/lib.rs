//! A workbench for higher-order term rewriting.
//!
//! Terms are constructions over binder-carrying scopes with an associative
//! environment component; rules are data, written in `.crs` files as
//! `name[options] : pattern → contraction` units; a deterministic
//! leftmost-innermost engine normalizes terms under a rule set. Pattern
//! matching is binder-aware: meta-applications track which bound variables
//! the matched fragment may use, so rules can substitute, rename, and test
//! for non-occurrence without touching object-level names.
//!
//! ```
//! use hors::engine::{RuleSet, Session, StrategyConfig};
//! use hors::syntax::{parse_rule_file, parse_term};
//!
//! let rules = RuleSet::from_file(&parse_rule_file(
//!     "Beta : App[Lam[x . #b[x]], #a] → #b[#a] ;",
//! )?);
//! let term = parse_term("App[Lam[y . Pair[y, y]], Zero]")?;
//! let mut session = Session::new();
//! let out = session.normalize(&rules, &term, &StrategyConfig::default())?;
//! assert_eq!(out.term.render(), "Pair[Zero, Zero]");
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod engine;
pub mod gen;
pub mod props;
mod render;
pub mod rule;
pub mod syntax;
pub mod term;

pub use engine::{EngineError, Normalized, RuleSet, Session, StrategyConfig};
pub use rule::{Rule, RuleOptions, Valuation};
pub use syntax::{parse_rule_file, parse_term, render_rule, ParseError, RuleFile, SourceSpan};
pub use term::{Constructor, EnvKey, Environment, Scope, Term, Variable};
