//! The compiler pipeline: rule sets as data, stages as normalizations.
//!
//! The four rule sets ship as `.crs` files embedded in the crate:
//!
//! * `N` — normalize an X AST into nested-relational algebra;
//! * `R` — algebraic optimizations (`RemoveDepMap`, `SelectFuse`);
//! * `E` — emit dataflow code from optimized algebra;
//! * `T` — a small type-inference demo over environments.
//!
//! Each stage is one deterministic normalization in a fresh session. A
//! stage is *stuck* when scheme markers (or vocabulary from the previous
//! stage) survive in its output; that is reported with the residual term
//! rather than silently accepted.

use crate::frontend::AST_TAGS;
use hors::{
    parse_rule_file, EngineError, Environment, RuleSet, Scope, Session, StrategyConfig, Term,
};
use std::sync::OnceLock;
use thiserror::Error;

pub const N_RULES: &str = include_str!("../rules/N.crs");
pub const R_RULES: &str = include_str!("../rules/R.crs");
pub const E_RULES: &str = include_str!("../rules/E.crs");
pub const T_RULES: &str = include_str!("../rules/T.crs");

/// Default rewrite budget for pipeline stages.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Frontend {
        stage: &'static str,
        #[source]
        source: crate::frontend::XError,
    },
    #[error("{stage}: {source}")]
    Engine {
        stage: &'static str,
        #[source]
        source: EngineError,
    },
    #[error("{stage}: stuck with residual term: {}", .term.render())]
    Stuck { stage: &'static str, term: Term },
    #[error("no derivation: normal form is not a \"⊢!\" result: {}", .term.render())]
    NoDerivation { term: Term },
}

fn load(name: &str, src: &str) -> RuleSet {
    let file =
        parse_rule_file(src).unwrap_or_else(|e| panic!("shipped rule set {name} is invalid: {e}"));
    RuleSet::from_file(&file)
}

pub fn rules_n() -> &'static RuleSet {
    static CELL: OnceLock<RuleSet> = OnceLock::new();
    CELL.get_or_init(|| load("N", N_RULES))
}

pub fn rules_r() -> &'static RuleSet {
    static CELL: OnceLock<RuleSet> = OnceLock::new();
    CELL.get_or_init(|| load("R", R_RULES))
}

/// The R rules without the reconstructed `SelectFuse` rule.
pub fn rules_r_without_fuse() -> &'static RuleSet {
    static CELL: OnceLock<RuleSet> = OnceLock::new();
    CELL.get_or_init(|| {
        let file = parse_rule_file(R_RULES).expect("shipped rule set R is invalid");
        RuleSet::new(
            file.rules
                .into_iter()
                .filter(|r| r.name != "SelectFuse")
                .collect(),
        )
    })
}

pub fn rules_e() -> &'static RuleSet {
    static CELL: OnceLock<RuleSet> = OnceLock::new();
    CELL.get_or_init(|| load("E", E_RULES))
}

pub fn rules_t() -> &'static RuleSet {
    static CELL: OnceLock<RuleSet> = OnceLock::new();
    CELL.get_or_init(|| load("T", T_RULES))
}

/// Scheme markers and stage vocabularies, used for stuck detection.
const N_SCHEMES: &[&str] = &["N", "NQ"];
const E_SCHEMES: &[&str] = &["E", "E2", "D", "V"];
pub const ALGEBRA_HEADS: &[&str] = &[
    "Algebraic",
    "Dep",
    "Map",
    "MapConcat",
    "Select",
    "Product",
    "Tuple",
    "ACons",
    "ANil",
    "Extract",
    "Concat",
    "Call",
    "Empty",
    "If",
    "Elem",
];

fn contains_head(t: &Term, heads: &[&str]) -> bool {
    let names = t.constructor_names();
    heads.iter().any(|h| names.contains(*h))
}

fn run_stage(
    stage: &'static str,
    rules: &RuleSet,
    term: &Term,
    cfg: &StrategyConfig,
) -> Result<(Term, Session), PipelineError> {
    let mut session = Session::new();
    let out = session
        .normalize(rules, term, cfg)
        .map_err(|source| PipelineError::Engine { stage, source })?;
    Ok((out.term, session))
}

fn default_cfg() -> StrategyConfig {
    StrategyConfig::with_max_steps(DEFAULT_MAX_STEPS)
}

/// N-normalizes a parsed program into algebra, checking that no AST
/// vocabulary and no scheme markers survive.
pub fn normalize_query(ast: &Term) -> Result<Term, PipelineError> {
    normalize_query_with(ast, &default_cfg()).map(|(t, _)| t)
}

pub fn normalize_query_with(
    ast: &Term,
    cfg: &StrategyConfig,
) -> Result<(Term, Session), PipelineError> {
    let (out, session) = run_stage("normalize", rules_n(), ast, cfg)?;
    if contains_head(&out, N_SCHEMES) || contains_head(&out, AST_TAGS) {
        return Err(PipelineError::Stuck {
            stage: "normalize",
            term: out,
        });
    }
    Ok((out, session))
}

/// R-normalizes an algebra term.
pub fn optimize_algebra(term: &Term, fuse: bool) -> Result<Term, PipelineError> {
    optimize_algebra_with(term, fuse, &default_cfg()).map(|(t, _)| t)
}

pub fn optimize_algebra_with(
    term: &Term,
    fuse: bool,
    cfg: &StrategyConfig,
) -> Result<(Term, Session), PipelineError> {
    let rules = if fuse { rules_r() } else { rules_r_without_fuse() };
    run_stage("optimize", rules, term, cfg)
}

/// E-normalizes an optimized algebra term into dataflow code. Leftover
/// scheme markers or algebra vocabulary signal a missed optimization (the
/// MapConcat emission rule deliberately blocks binder-independent bodies).
pub fn emit_code(term: &Term) -> Result<Term, PipelineError> {
    emit_code_with(term, &default_cfg()).map(|(t, _)| t)
}

pub fn emit_code_with(
    term: &Term,
    cfg: &StrategyConfig,
) -> Result<(Term, Session), PipelineError> {
    let wrapped = Term::cons("E", vec![Scope::plain(term.clone())]);
    let (out, session) = run_stage("emit", rules_e(), &wrapped, cfg)?;
    if contains_head(&out, E_SCHEMES) || contains_head(&out, ALGEBRA_HEADS) {
        return Err(PipelineError::Stuck {
            stage: "emit",
            term: out,
        });
    }
    Ok((out, session))
}

/// The whole pipeline: parse, normalize, optimize, emit.
pub fn compile(src: &str) -> Result<Term, PipelineError> {
    compile_with(src, true)
}

pub fn compile_with(src: &str, fuse: bool) -> Result<Term, PipelineError> {
    let ast = crate::frontend::parse_source(src).map_err(|source| PipelineError::Frontend {
        stage: "parse",
        source,
    })?;
    let algebra = normalize_query(&ast)?;
    let optimized = optimize_algebra(&algebra, fuse)?;
    emit_code(&optimized)
}

/// Runs the type-inference demo: normalizes `{env}"⊢?"[term]` under the T
/// rules and expects a `"⊢!"[t]` result.
pub fn infer_type(env: &Environment, term: &Term) -> Result<Term, PipelineError> {
    let (out, _steps) = infer_type_with_steps(env, term)?;
    Ok(out)
}

pub fn infer_type_with_steps(
    env: &Environment,
    term: &Term,
) -> Result<(Term, u64), PipelineError> {
    let query = Term::cons_env(env.clone(), "⊢?", vec![Scope::plain(term.clone())]);
    let mut session = Session::new();
    let out = session
        .normalize(rules_t(), &query, &default_cfg())
        .map_err(|source| PipelineError::Engine {
            stage: "infer",
            source,
        })?;
    if out.term.head_name() == Some("⊢!") {
        Ok((out.term, out.steps))
    } else {
        Err(PipelineError::NoDerivation { term: out.term })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use hors::parse_term;

    #[test]
    fn shipped_rule_sets_parse_and_validate() {
        assert_eq!(rules_n().rules().len(), 13);
        assert_eq!(rules_r().rules().len(), 2);
        assert_eq!(rules_r_without_fuse().rules().len(), 1);
        assert_eq!(rules_e().rules().len(), 17);
        assert_eq!(rules_t().rules().len(), 7);
    }

    #[test]
    fn normalizes_empty_to_empty_relation() {
        let ast = Term::cons(
            "program",
            vec![Scope::plain(Term::leaf("empty"))],
        );
        let out = normalize_query(&ast).unwrap();
        assert_eq!(out.render(), "Algebraic[(Dep id . Empty)]");
    }

    #[test]
    fn normalize_literal_passthrough() {
        let out = normalize_query(&parse_source("1").unwrap()).unwrap();
        assert_eq!(out.render(), "Algebraic[(Dep id . \"1\")]");
    }

    #[test]
    fn select_fuse_combines_stacked_filters() {
        let t = parse_term("Select[Dep i . A, Select[Dep j . B, P]]").unwrap();
        let fused = optimize_algebra(&t, true).unwrap();
        assert_eq!(
            fused.render(),
            "Select[(Dep i . Call[\"and\", Concat[A, B]]), P]"
        );
        let untouched = optimize_algebra(&t, false).unwrap();
        assert!(untouched.alpha_eq_by_name(&t));
    }

    #[test]
    fn optimizer_leaves_terms_without_mapconcat() {
        let t = parse_term("Map[(Dep i . Extract[i, f]), rel]").unwrap();
        let out = optimize_algebra(&t, true).unwrap();
        assert!(out.alpha_eq_by_name(&t));
    }

    #[test]
    fn emit_trivial_program() {
        let t = parse_term("Algebraic[(Dep id . Empty)]").unwrap();
        let out = emit_code(&t).unwrap();
        assert_eq!(
            out.render(),
            "TMain[in out . TPipe[h . TCopy[in, h], id . TNoop]]"
        );
    }

    #[test]
    fn emit_gets_stuck_on_unoptimized_independent_mapconcat() {
        // A body independent of its binder must block emission.
        let t = parse_term("Algebraic[(Dep id . MapConcat[(Dep i . Empty), id])]").unwrap();
        match emit_code(&t) {
            Err(PipelineError::Stuck { stage, .. }) => assert_eq!(stage, "emit"),
            other => panic!("expected stuck emission, got {other:?}"),
        }
    }

    #[test]
    fn compile_literal_program() {
        let out = compile("1").unwrap();
        assert_eq!(
            out.render(),
            "TMain[in out . TPipe[h . TCopy[in, h], id . TLiteral[\"1\", out]]]"
        );
    }

    #[test]
    fn infer_type_of_map_over_empty() {
        let term = parse_term("Map[Dep i . i, Empty]").unwrap();
        let (out, steps) = infer_type_with_steps(&Environment::new(), &term).unwrap();
        assert_eq!(out.render(), "\"⊢!\"[\"none\"]");
        assert!(steps <= 10, "took {steps} steps");
    }

    #[test]
    fn annotation_scheme_reads_environment() {
        let t = parse_term("{i: \"int\"}Type[i]").unwrap();
        let mut session = Session::new();
        let out = session
            .normalize(rules_t(), &t, &StrategyConfig::default())
            .unwrap();
        assert_eq!(out.term.render(), "\"int\"");
        assert_eq!(out.steps, 1);
    }

    #[test]
    fn infer_type_fails_without_binding() {
        let t = parse_term("Extract[i, f]").unwrap();
        match infer_type(&Environment::new(), &t) {
            Err(PipelineError::NoDerivation { .. }) => {}
            other => panic!("expected no derivation, got {other:?}"),
        }
    }
}
