//! Rules, rule options, and rule validation.
//!
//! A rule is strict by default: every meta-variable occurs exactly once in
//! the pattern and once in the contraction, every pattern meta-application
//! lists all in-scope bound variables, and every variable is bound or
//! declared. Options relax specific requirements per name:
//!
//! * `Free[v]` — `v` may match a free variable of the subject;
//! * `Fresh[v]` — `v` denotes a brand-new variable per application;
//! * `Weak[#m]` — `#m` may omit binders, asserting their non-occurrence;
//! * `Copy[#m]` — `#m` may occur more than once (or not at all);
//! * `Discard[#m]` — `#m` may be unused in the contraction;
//! * `Literal[#m]` — `#m` matches only literal constant constructors.

use crate::term::{EnvKey, Term, Variable};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Free,
    Fresh,
    Weak,
    Copy,
    Discard,
    Literal,
}

/// The option sets of one rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleOptions {
    pub free: BTreeSet<String>,
    pub fresh: BTreeSet<String>,
    pub weak: BTreeSet<String>,
    pub copy: BTreeSet<String>,
    pub discard: BTreeSet<String>,
    pub literal: BTreeSet<String>,
}

impl RuleOptions {
    pub fn add(&mut self, kind: OptionKind, name: String) {
        match kind {
            OptionKind::Free => self.free.insert(name),
            OptionKind::Fresh => self.fresh.insert(name),
            OptionKind::Weak => self.weak.insert(name),
            OptionKind::Copy => self.copy.insert(name),
            OptionKind::Discard => self.discard.insert(name),
            OptionKind::Literal => self.literal.insert(name),
        };
    }

    pub fn merge(&mut self, other: RuleOptions) {
        self.free.extend(other.free);
        self.fresh.extend(other.fresh);
        self.weak.extend(other.weak);
        self.copy.extend(other.copy);
        self.discard.extend(other.discard);
        self.literal.extend(other.literal);
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
            && self.fresh.is_empty()
            && self.weak.is_empty()
            && self.copy.is_empty()
            && self.discard.is_empty()
            && self.literal.is_empty()
    }

    /// `[Free[a, b], Weak[#m]]`-style rendering; empty when no options.
    pub fn render(&self) -> String {
        let mut groups = Vec::new();
        for (label, set) in [
            ("Free", &self.free),
            ("Fresh", &self.fresh),
            ("Weak", &self.weak),
            ("Copy", &self.copy),
            ("Discard", &self.discard),
            ("Literal", &self.literal),
        ] {
            if !set.is_empty() {
                let names: Vec<&str> = set.iter().map(String::as_str).collect();
                groups.push(format!("{label}[{}]", names.join(", ")));
            }
        }
        if groups.is_empty() {
            String::new()
        } else {
            format!("[{}]", groups.join(", "))
        }
    }
}

/// A named rewrite rule `name[options] : pattern → contraction`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub name: String,
    pub options: RuleOptions,
    pub pattern: Term,
    pub contraction: Term,
}

/// What a successful match produced.
#[derive(Debug, Clone, Default)]
pub struct Valuation {
    /// Meta-variable name → matched term abstracted over the listed
    /// subject variables. Matched terms contain no meta-applications.
    pub metas: HashMap<String, MetaBinding>,
    /// Declared-free name → the subject variable it matched.
    pub frees: HashMap<String, Variable>,
    /// Environment meta-variable name → residual entries of the matched
    /// environment.
    pub envs: HashMap<String, Vec<(EnvKey, Term)>>,
    /// Pattern binder name → the subject binder it corresponded to, used
    /// for display-name hints when the contraction reuses the binder.
    pub binders: HashMap<String, Variable>,
}

#[derive(Debug, Clone)]
pub struct MetaBinding {
    pub params: Vec<Variable>,
    pub body: Term,
}

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("pattern must be a construction at the root")]
    PatternNotConstruction,
    #[error("meta-variable {name} occurs {count} times in the pattern without Copy")]
    NonlinearPattern { name: String, count: usize },
    #[error("meta-variable {name} occurs {count} times in the contraction without Copy")]
    DuplicatedMeta { name: String, count: usize },
    #[error("meta-variable {name} is unused in the contraction without Discard")]
    UnusedMeta { name: String },
    #[error("variable {name} is not scoped and not declared Free or Fresh")]
    UnscopedVariable { name: String },
    #[error("pattern meta-application {name} omits in-scope binder {binder} without Weak")]
    IncompleteBinders { name: String, binder: String },
    #[error("pattern meta-application {name} must be applied to distinct bound variables")]
    BadMetaArguments { name: String },
    #[error("free variable {name} is used in the contraction but never matched")]
    FreeNeverMatched { name: String },
    #[error("fresh variable {name} may not occur in the pattern")]
    FreshInPattern { name: String },
    #[error("option names a symbol that does not appear in the rule: {name}")]
    UnknownOptionName { name: String },
    #[error("Literal meta-variable {name} may not take arguments")]
    LiteralWithArguments { name: String },
    #[error("unsupported $[...] pattern primitive: only $[NotMatch, p, q] is recognized")]
    UnsupportedPrimitive,
    #[error("$[NotMatch, ...] may only appear in the pattern")]
    NotMatchInContraction,
}

/// The `$[NotMatch, q, r]` pattern primitive, recognized structurally.
pub(crate) fn as_not_match(t: &Term) -> Option<(&Term, &Term)> {
    match t {
        Term::Cons { env, head, args }
            if env.is_empty() && head.name() == "$" && args.len() == 3 =>
        {
            let is_marker = matches!(
                &args[0].body,
                Term::Cons { env, head, args }
                    if env.is_empty() && head.name() == "NotMatch" && args.is_empty()
            );
            if is_marker
                && args.iter().all(|s| s.binders.is_empty())
            {
                Some((&args[1].body, &args[2].body))
            } else {
                None
            }
        }
        _ => None,
    }
}

fn is_dollar_primitive(t: &Term) -> bool {
    matches!(t, Term::Cons { head, .. } if head.name() == "$")
}

struct Analysis {
    /// Binding occurrences per meta name (NotMatch negative sides excluded).
    pattern_metas: BTreeMap<String, usize>,
    contraction_metas: BTreeMap<String, usize>,
    /// Env capture metas are counted with the ordinary metas.
    /// Free-variable names occurring in the pattern outside any binder.
    pattern_free_names: BTreeSet<String>,
    contraction_free_names: BTreeSet<String>,
    pattern_binder_names: BTreeSet<String>,
    contraction_binder_names: BTreeSet<String>,
}

/// Accepts the rule iff all shape requirements hold under its options;
/// reports the first violation otherwise.
///
/// Variables used as environment keys in the pattern are implicitly
/// matchable as free variables (the key position is the only way to write
/// such a pattern); they are added to the returned rule's `Free` set.
pub fn validate_rule(rule: Rule) -> Result<Rule, RuleError> {
    let mut rule = rule;
    match &rule.pattern {
        Term::Cons { head, .. } if head.name() != "$" => {}
        _ => return Err(RuleError::PatternNotConstruction),
    }

    let mut env_keys = BTreeSet::new();
    collect_unbound_env_keys(&rule.pattern, &mut Vec::new(), &mut env_keys);
    for name in env_keys {
        rule.options.add(crate::rule::OptionKind::Free, name);
    }

    let mut analysis = Analysis {
        pattern_metas: BTreeMap::new(),
        contraction_metas: BTreeMap::new(),
        pattern_free_names: BTreeSet::new(),
        contraction_free_names: BTreeSet::new(),
        pattern_binder_names: BTreeSet::new(),
        contraction_binder_names: BTreeSet::new(),
    };
    walk_pattern(&rule.pattern, &rule.options, &mut Vec::new(), &mut analysis, false)?;
    walk_contraction(
        &rule.contraction,
        &rule.options,
        &mut Vec::new(),
        &mut analysis,
    )?;

    for (name, count) in &analysis.pattern_metas {
        if *count != 1 && !rule.options.copy.contains(name) {
            return Err(RuleError::NonlinearPattern {
                name: name.clone(),
                count: *count,
            });
        }
    }
    for (name, count) in &analysis.contraction_metas {
        if *count > 1 && !rule.options.copy.contains(name) {
            return Err(RuleError::DuplicatedMeta {
                name: name.clone(),
                count: *count,
            });
        }
    }
    for name in analysis.pattern_metas.keys() {
        let used = analysis.contraction_metas.get(name).copied().unwrap_or(0);
        if used == 0
            && !rule.options.discard.contains(name)
            && !rule.options.copy.contains(name)
        {
            return Err(RuleError::UnusedMeta { name: name.clone() });
        }
    }

    // Free names in the contraction must have been matched by the pattern.
    for name in &analysis.contraction_free_names {
        if rule.options.fresh.contains(name) {
            continue;
        }
        if !analysis.pattern_free_names.contains(name) {
            return Err(RuleError::FreeNeverMatched { name: name.clone() });
        }
    }

    // Every option must refer to a name that occurs somewhere in the rule.
    let all_vars: BTreeSet<&String> = analysis
        .pattern_free_names
        .iter()
        .chain(&analysis.contraction_free_names)
        .chain(&analysis.pattern_binder_names)
        .chain(&analysis.contraction_binder_names)
        .collect();
    for name in rule.options.free.iter().chain(&rule.options.fresh) {
        if !all_vars.contains(name) {
            return Err(RuleError::UnknownOptionName { name: name.clone() });
        }
    }
    let all_metas: BTreeSet<&String> = analysis
        .pattern_metas
        .keys()
        .chain(analysis.contraction_metas.keys())
        .collect();
    for name in rule
        .options
        .weak
        .iter()
        .chain(&rule.options.copy)
        .chain(&rule.options.discard)
        .chain(&rule.options.literal)
    {
        if !all_metas.contains(name) {
            return Err(RuleError::UnknownOptionName { name: name.clone() });
        }
    }

    Ok(rule)
}

fn collect_unbound_env_keys(t: &Term, scope: &mut Vec<Variable>, out: &mut BTreeSet<String>) {
    if let Term::Cons { env, args, .. } = t {
        for (k, v) in &env.entries {
            if let EnvKey::Var(var) = k {
                if !scope.iter().any(|b| b == var) {
                    out.insert(var.name().to_string());
                }
            }
            collect_unbound_env_keys(v, scope, out);
        }
        for s in args {
            scope.extend(s.binders.iter().cloned());
            collect_unbound_env_keys(&s.body, scope, out);
            scope.truncate(scope.len() - s.binders.len());
        }
    }
}

/// Walks a pattern, checking its local shape. `negative` marks the test
/// side of a NotMatch, whose meta-applications neither bind nor count and
/// may omit binders freely.
fn walk_pattern(
    t: &Term,
    opts: &RuleOptions,
    scope: &mut Vec<Variable>,
    analysis: &mut Analysis,
    negative: bool,
) -> Result<(), RuleError> {
    match t {
        Term::Var(v) => {
            if scope.iter().any(|b| b == v) {
                return Ok(());
            }
            if opts.fresh.contains(v.name()) {
                return Err(RuleError::FreshInPattern {
                    name: v.name().to_string(),
                });
            }
            if !opts.free.contains(v.name()) {
                return Err(RuleError::UnscopedVariable {
                    name: v.name().to_string(),
                });
            }
            analysis.pattern_free_names.insert(v.name().to_string());
            Ok(())
        }
        Term::Meta { name, args } => {
            if !negative {
                *analysis.pattern_metas.entry(name.clone()).or_insert(0) += 1;
            }
            if opts.literal.contains(name) && !args.is_empty() {
                return Err(RuleError::LiteralWithArguments { name: name.clone() });
            }
            // Arguments must be distinct bound variables.
            let mut seen = BTreeSet::new();
            for a in args {
                match a {
                    Term::Var(v) if scope.iter().any(|b| b == v) => {
                        if !seen.insert(v.uid()) {
                            return Err(RuleError::BadMetaArguments { name: name.clone() });
                        }
                    }
                    _ => return Err(RuleError::BadMetaArguments { name: name.clone() }),
                }
            }
            // All in-scope binders must be listed unless Weak (or inside a
            // NotMatch test, which asserts non-occurrence by omission).
            if !negative && !opts.weak.contains(name) && !opts.literal.contains(name) {
                for b in scope.iter() {
                    if !seen.contains(&b.uid()) {
                        return Err(RuleError::IncompleteBinders {
                            name: name.clone(),
                            binder: b.name().to_string(),
                        });
                    }
                }
            }
            Ok(())
        }
        Term::Cons { env, head, args } => {
            if head.name() == "$" {
                let (neg, pos) = as_not_match(t).ok_or(RuleError::UnsupportedPrimitive)?;
                walk_pattern(pos, opts, scope, analysis, negative)?;
                walk_pattern(neg, opts, scope, analysis, true)?;
                return Ok(());
            }
            if let Some(capture) = &env.capture {
                if !negative {
                    *analysis.pattern_metas.entry(capture.clone()).or_insert(0) += 1;
                }
            }
            for (k, v) in &env.entries {
                if let EnvKey::Var(var) = k {
                    if !scope.iter().any(|b| b == var) {
                        if !opts.free.contains(var.name()) {
                            return Err(RuleError::UnscopedVariable {
                                name: var.name().to_string(),
                            });
                        }
                        analysis.pattern_free_names.insert(var.name().to_string());
                    }
                }
                walk_pattern(v, opts, scope, analysis, negative)?;
            }
            for s in args {
                for b in &s.binders {
                    analysis.pattern_binder_names.insert(b.name().to_string());
                }
                scope.extend(s.binders.iter().cloned());
                walk_pattern(&s.body, opts, scope, analysis, negative)?;
                scope.truncate(scope.len() - s.binders.len());
            }
            Ok(())
        }
    }
}

fn walk_contraction(
    t: &Term,
    opts: &RuleOptions,
    scope: &mut Vec<Variable>,
    analysis: &mut Analysis,
) -> Result<(), RuleError> {
    match t {
        Term::Var(v) => {
            if scope.iter().any(|b| b == v) {
                return Ok(());
            }
            let name = v.name().to_string();
            if !opts.free.contains(&name) && !opts.fresh.contains(&name) {
                return Err(RuleError::UnscopedVariable { name });
            }
            analysis.contraction_free_names.insert(name);
            Ok(())
        }
        Term::Meta { name, args } => {
            *analysis.contraction_metas.entry(name.clone()).or_insert(0) += 1;
            for a in args {
                walk_contraction(a, opts, scope, analysis)?;
            }
            Ok(())
        }
        Term::Cons { env, args, .. } => {
            if is_dollar_primitive(t) && as_not_match(t).is_some() {
                return Err(RuleError::NotMatchInContraction);
            }
            if let Some(capture) = &env.capture {
                *analysis
                    .contraction_metas
                    .entry(capture.clone())
                    .or_insert(0) += 1;
            }
            for (k, v) in &env.entries {
                if let EnvKey::Var(var) = k {
                    if !scope.iter().any(|b| b == var) {
                        let name = var.name().to_string();
                        if !opts.free.contains(&name) && !opts.fresh.contains(&name) {
                            return Err(RuleError::UnscopedVariable { name });
                        }
                        analysis.contraction_free_names.insert(name);
                    }
                }
                walk_contraction(v, opts, scope, analysis)?;
            }
            for s in args {
                for b in &s.binders {
                    analysis
                        .contraction_binder_names
                        .insert(b.name().to_string());
                }
                scope.extend(s.binders.iter().cloned());
                walk_contraction(&s.body, opts, scope, analysis)?;
                scope.truncate(scope.len() - s.binders.len());
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_rule_file;

    fn first_error(src: &str) -> RuleError {
        match parse_rule_file(src) {
            Err(crate::syntax::ParseError::InvalidRule { source, .. }) => source,
            Ok(_) => panic!("rule unexpectedly valid: {src}"),
            Err(e) => panic!("unexpected parse error for {src}: {e}"),
        }
    }

    #[test]
    fn rejects_duplicated_meta_without_copy() {
        let err = first_error("F[#a] → G[#a, #a] ;");
        assert!(matches!(err, RuleError::DuplicatedMeta { name, .. } if name == "#a"));
    }

    #[test]
    fn accepts_duplicated_meta_with_copy() {
        let file = parse_rule_file("-[Copy[#a]] : F[#a] → G[#a, #a] ;").unwrap();
        assert_eq!(file.rules.len(), 1);
    }

    #[test]
    fn rejects_incomplete_binders_without_weak() {
        let err = first_error("Map[Dep id . #dop] → Map[Dep id . #dop] ;");
        assert!(
            matches!(err, RuleError::IncompleteBinders { name, binder } if name == "#dop" && binder == "id")
        );
    }

    #[test]
    fn accepts_incomplete_binders_with_weak() {
        let file =
            parse_rule_file("-[Weak[#dop]] : MapConcat[Dep id1 . #dop, #p] → Product[#dop, #p] ;")
                .unwrap();
        assert_eq!(file.rules.len(), 1);
    }

    #[test]
    fn rejects_unscoped_variable() {
        let err = first_error("N[Empty, id] → Empty ;");
        assert!(matches!(err, RuleError::UnscopedVariable { name } if name == "id"));
    }

    #[test]
    fn rejects_unused_meta_without_discard() {
        let err = first_error("F[#a] → G ;");
        assert!(matches!(err, RuleError::UnusedMeta { name } if name == "#a"));
    }
}
