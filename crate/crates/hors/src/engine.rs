//! Pattern matching, contraction, and the normalization strategy.
//!
//! Matching is structural: constructors, arities, and binder counts must
//! agree, binders correspond positionally, and a meta-application
//! `#m[x1..xk]` matches a subterm `s` exactly when every in-scope pattern
//! binder occurring free in `s` is among `x1..xk` (so a Weak meta that
//! omits a binder asserts the binder does not occur). Declared-free
//! variables match any subject variable not bound inside the redex,
//! consistently across occurrences. Explicit environment keys must be
//! present with matching values; the residual environment binds the
//! pattern's capture meta-variable. `$[NotMatch, q, r]` matches when `r`
//! matches and `q`, tested against the same subterm with fresh bindings,
//! does not.
//!
//! Normalization is deterministic leftmost-innermost: children first, then
//! rules in declaration order at each node, repeated to a fixed point.
//! Rules are indexed by the root constructor of their pattern.

use crate::rule::{as_not_match, MetaBinding, Rule, RuleOptions, Valuation};
use crate::syntax::RuleFile;
use crate::term::{EnvKey, Environment, Scope, Term, Variable};
use std::collections::{HashMap, HashSet};
use std::fmt;
use thiserror::Error;

/// An immutable, shareable collection of rules indexed by pattern head.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Rule>,
    by_head: HashMap<String, Vec<usize>>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        let mut by_head: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, rule) in rules.iter().enumerate() {
            let head = rule
                .pattern
                .head_name()
                .expect("validated patterns are constructions")
                .to_string();
            by_head.entry(head).or_default().push(i);
        }
        RuleSet { rules, by_head }
    }

    pub fn from_file(file: &RuleFile) -> Self {
        RuleSet::new(file.rules.clone())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    fn candidates(&self, head: &str) -> &[usize] {
        self.by_head.get(head).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Strategy knobs for one normalization run.
#[derive(Debug, Clone, Default)]
pub struct StrategyConfig {
    /// Give up after this many rewrite steps; `None` is unlimited.
    pub max_steps: Option<u64>,
    /// Record one [`TraceStep`] per rewrite.
    pub trace: bool,
}

impl StrategyConfig {
    pub fn with_max_steps(max_steps: u64) -> Self {
        StrategyConfig {
            max_steps: Some(max_steps),
            trace: false,
        }
    }
}

/// One line of trace output: which rule fired where.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub rule: String,
    pub path: String,
    pub redex: String,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {} : {}", self.rule, self.path, self.redex)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("step limit of {limit} exceeded; stopped at: {}", .term.render())]
    StepLimit { limit: u64, term: Term },
    #[error("no binding for {name} while instantiating a contraction")]
    MissingBinding { name: String },
    #[error("substitution targets {name}, which was matched as a free variable")]
    FreeMatchedSubstitution { name: String },
    #[error("path addresses no subterm")]
    InvalidPath,
}

/// The result of a normalization run.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub term: Term,
    pub steps: u64,
}

/// A rewriting session: owns the fresh-name registry and the trace.
///
/// Display names handed out by [`Session::fresh_var`] are unique within the
/// session; variables created elsewhere (parsers, hand-built terms) do not
/// register their names. Distinct sessions may run concurrently; uid
/// generation is process-global and atomic.
#[derive(Debug, Default)]
pub struct Session {
    used_names: HashSet<String>,
    free_matched: HashSet<u64>,
    trace: Vec<TraceStep>,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    /// A new variable whose display name is `hint` when no fresh variable
    /// of this session took that name yet, otherwise `hint_k` for the
    /// smallest unused `k ≥ 1`.
    pub fn fresh_var(&mut self, hint: &str) -> Variable {
        let name = if self.used_names.insert(hint.to_string()) {
            hint.to_string()
        } else {
            let mut k = 1u64;
            loop {
                let cand = format!("{hint}_{k}");
                if self.used_names.insert(cand.clone()) {
                    break cand;
                }
                k += 1;
            }
        };
        Variable::new(name)
    }

    pub fn take_trace(&mut self) -> Vec<TraceStep> {
        std::mem::take(&mut self.trace)
    }

    /// Rewrites the leftmost-innermost redex repeatedly until no rule
    /// applies or the step limit is reached.
    pub fn normalize(
        &mut self,
        rules: &RuleSet,
        term: &Term,
        cfg: &StrategyConfig,
    ) -> Result<Normalized, EngineError> {
        let mut steps = 0u64;
        let mut path = Vec::new();
        let term = self.norm(rules, term, cfg, &mut steps, &mut path)?;
        Ok(Normalized { term, steps })
    }

    fn norm(
        &mut self,
        rules: &RuleSet,
        term: &Term,
        cfg: &StrategyConfig,
        steps: &mut u64,
        path: &mut Vec<PathSeg>,
    ) -> Result<Term, EngineError> {
        let mut current = match term {
            Term::Var(_) | Term::Meta { .. } => return Ok(term.clone()),
            Term::Cons { env, head, args } => {
                let mut new_env = Environment {
                    entries: Vec::with_capacity(env.entries.len()),
                    capture: env.capture.clone(),
                };
                for (i, (k, v)) in env.entries.iter().enumerate() {
                    path.push(PathSeg::Env(i));
                    let v = self.norm(rules, v, cfg, steps, path)?;
                    path.pop();
                    new_env.entries.push((k.clone(), v));
                }
                let mut new_args = Vec::with_capacity(args.len());
                for (i, s) in args.iter().enumerate() {
                    path.push(PathSeg::Arg(i));
                    let body = self.norm(rules, &s.body, cfg, steps, path)?;
                    path.pop();
                    new_args.push(Scope {
                        binders: s.binders.clone(),
                        body,
                    });
                }
                Term::Cons {
                    env: new_env,
                    head: head.clone(),
                    args: new_args,
                }
            }
        };
        // Children are normal; try the rules here. A successful step can
        // expose new redexes anywhere in the contracted result, so it is
        // re-normalized in full before returning.
        'retry: loop {
            let head = match current.head_name() {
                Some(h) => h.to_string(),
                None => return Ok(current),
            };
            for &idx in rules.candidates(&head) {
                let rule = &rules.rules()[idx];
                if let Some(val) = match_rule(rule, &current) {
                    if let Some(limit) = cfg.max_steps {
                        if *steps >= limit {
                            return Err(EngineError::StepLimit {
                                limit,
                                term: current,
                            });
                        }
                    }
                    *steps += 1;
                    if cfg.trace {
                        self.trace.push(TraceStep {
                            rule: rule.name.clone(),
                            path: render_path(path),
                            redex: current.render(),
                        });
                    }
                    let contracted = self.instantiate_rule(rule, &val)?;
                    current = self.norm(rules, &contracted, cfg, steps, path)?;
                    continue 'retry;
                }
            }
            return Ok(current);
        }
    }

    /// Applies the first matching rule at the subterm addressed by `path`
    /// (a sequence of argument positions). Returns `None` when no rule
    /// matches there.
    pub fn apply_rule_at(
        &mut self,
        rules: &RuleSet,
        term: &Term,
        path: &[usize],
    ) -> Result<Option<Term>, EngineError> {
        let target = resolve_path(term, path).ok_or(EngineError::InvalidPath)?;
        let head = match target.head_name() {
            Some(h) => h,
            None => return Ok(None),
        };
        for &idx in rules.candidates(head) {
            let rule = &rules.rules()[idx];
            if let Some(val) = match_rule(rule, target) {
                let contracted = self.instantiate_rule(rule, &val)?;
                let replaced = replace_path(term, path, &contracted);
                return Ok(Some(replaced));
            }
        }
        Ok(None)
    }

    fn instantiate_rule(&mut self, rule: &Rule, val: &Valuation) -> Result<Term, EngineError> {
        self.free_matched.extend(val.frees.values().map(Variable::uid));
        instantiate(self, val, &rule.contraction, &rule.options)
    }
}

#[derive(Debug, Clone)]
enum PathSeg {
    Arg(usize),
    Env(usize),
}

fn render_path(path: &[PathSeg]) -> String {
    if path.is_empty() {
        return "ε".to_string();
    }
    path.iter()
        .map(|s| match s {
            PathSeg::Arg(i) => i.to_string(),
            PathSeg::Env(i) => format!("{{{i}}}"),
        })
        .collect::<Vec<_>>()
        .join(".")
}

fn resolve_path<'a>(t: &'a Term, path: &[usize]) -> Option<&'a Term> {
    let mut cur = t;
    for &i in path {
        match cur {
            Term::Cons { args, .. } => cur = &args.get(i)?.body,
            _ => return None,
        }
    }
    Some(cur)
}

fn replace_path(t: &Term, path: &[usize], replacement: &Term) -> Term {
    if path.is_empty() {
        return replacement.clone();
    }
    match t {
        Term::Cons { env, head, args } => {
            let mut args = args.clone();
            args[path[0]].body = replace_path(&args[path[0]].body, &path[1..], replacement);
            Term::Cons {
                env: env.clone(),
                head: head.clone(),
                args,
            }
        }
        _ => unreachable!("resolve_path checked the spine"),
    }
}

/// Matches a rule's pattern against a plain data term.
pub fn match_rule(rule: &Rule, subject: &Term) -> Option<Valuation> {
    match_pattern(&rule.pattern, subject, &rule.options)
}

/// Matches a validated pattern against a plain data term.
pub fn match_pattern(pattern: &Term, subject: &Term, opts: &RuleOptions) -> Option<Valuation> {
    let mut m = Matcher {
        opts,
        val: Valuation::default(),
        pairs: Vec::new(),
        bound_subject: Vec::new(),
    };
    if m.term(pattern, subject) {
        Some(m.val)
    } else {
        None
    }
}

struct Matcher<'a> {
    opts: &'a RuleOptions,
    val: Valuation,
    /// Pattern binder uid → subject binder, innermost last.
    pairs: Vec<(u64, Variable)>,
    /// Subject binder uids introduced inside the redex.
    bound_subject: Vec<u64>,
}

impl<'a> Matcher<'a> {
    fn term(&mut self, p: &Term, s: &Term) -> bool {
        match p {
            Term::Var(v) => {
                if let Some((_, sv)) = self.pairs.iter().rev().find(|(uid, _)| *uid == v.uid()) {
                    return matches!(s, Term::Var(w) if w == sv);
                }
                if self.opts.free.contains(v.name()) {
                    return self.match_free(v.name(), s);
                }
                false
            }
            Term::Meta { name, args } => self.match_meta(name, args, s),
            Term::Cons { .. } => {
                if let Some((neg, pos)) = as_not_match(p) {
                    if !self.term(pos, s) {
                        return false;
                    }
                    // Probe the forbidden pattern with the same binder
                    // correspondences but fresh bindings, discarding them.
                    let mut probe = Matcher {
                        opts: self.opts,
                        val: Valuation::default(),
                        pairs: self.pairs.clone(),
                        bound_subject: self.bound_subject.clone(),
                    };
                    return !probe.term(neg, s);
                }
                let (p_env, p_head, p_args) = match p {
                    Term::Cons { env, head, args } => (env, head, args),
                    _ => unreachable!(),
                };
                let (s_env, s_head, s_args) = match s {
                    Term::Cons { env, head, args } => (env, head, args),
                    _ => return false,
                };
                if p_head.name() != s_head.name() || p_args.len() != s_args.len() {
                    return false;
                }
                for (ps, ss) in p_args.iter().zip(s_args) {
                    if ps.binders.len() != ss.binders.len() {
                        return false;
                    }
                    for (pb, sb) in ps.binders.iter().zip(&ss.binders) {
                        self.pairs.push((pb.uid(), sb.clone()));
                        self.bound_subject.push(sb.uid());
                        self.val
                            .binders
                            .insert(pb.name().to_string(), sb.clone());
                    }
                    let ok = self.term(&ps.body, &ss.body);
                    self.pairs.truncate(self.pairs.len() - ps.binders.len());
                    self.bound_subject
                        .truncate(self.bound_subject.len() - ps.binders.len());
                    if !ok {
                        return false;
                    }
                }
                self.environment(p_env, s_env)
            }
        }
    }

    fn match_free(&mut self, name: &str, s: &Term) -> bool {
        let w = match s {
            Term::Var(w) => w,
            _ => return false,
        };
        if self.bound_subject.contains(&w.uid()) {
            return false;
        }
        match self.val.frees.get(name) {
            Some(prev) => prev == w,
            None => {
                self.val.frees.insert(name.to_string(), w.clone());
                true
            }
        }
    }

    fn match_meta(&mut self, name: &str, args: &[Term], s: &Term) -> bool {
        if self.opts.literal.contains(name) {
            let ok = matches!(
                s,
                Term::Cons { env, head, args }
                    if env.is_empty() && head.is_literal() && args.is_empty()
            );
            if !ok {
                return false;
            }
        }
        // Arguments are bound pattern variables; map them to the subject
        // binders they correspond to.
        let mut params = Vec::with_capacity(args.len());
        for a in args {
            match a {
                Term::Var(v) => {
                    match self.pairs.iter().rev().find(|(uid, _)| *uid == v.uid()) {
                        Some((_, sv)) => params.push(sv.clone()),
                        None => return false,
                    }
                }
                _ => return false,
            }
        }
        // Binders not listed must not occur free in the matched subterm.
        let s_free = s.free_vars();
        for uid in &self.bound_subject {
            if s_free.iter().any(|v| v.uid() == *uid) && !params.iter().any(|p| p.uid() == *uid)
            {
                return false;
            }
        }
        match self.val.metas.get(name) {
            Some(prev) => {
                // A meta matched twice (pattern Copy) must bind alpha-equal
                // fragments modulo its parameters.
                prev.params.len() == params.len()
                    && wrap(&prev.params, &prev.body).alpha_eq(&wrap(&params, s))
            }
            None => {
                self.val.metas.insert(
                    name.to_string(),
                    MetaBinding {
                        params,
                        body: s.clone(),
                    },
                );
                true
            }
        }
    }

    fn environment(&mut self, p: &Environment, s: &Environment) -> bool {
        if p.is_empty() && s.is_empty() {
            return true;
        }
        let mut consumed = vec![false; s.entries.len()];
        for (pk, pv) in &p.entries {
            let found = match pk {
                EnvKey::Con(c) => s.entries.iter().position(|(k, _)| {
                    matches!(k, EnvKey::Con(sc) if sc == c)
                }),
                EnvKey::Var(v) => {
                    // A bound or already-matched key must hit its exact
                    // counterpart; an unbound free key takes the first
                    // variable-keyed entry whose value matches.
                    let target =
                        if let Some((_, sv)) =
                            self.pairs.iter().rev().find(|(uid, _)| *uid == v.uid())
                        {
                            Some(sv.clone())
                        } else {
                            self.val.frees.get(v.name()).cloned()
                        };
                    match target {
                        Some(sv) => s.entries.iter().position(|(k, _)| {
                            matches!(k, EnvKey::Var(w) if *w == sv)
                        }),
                        None if self.opts.free.contains(v.name()) => {
                            let mut choice = None;
                            for (i, (k, val)) in s.entries.iter().enumerate() {
                                if consumed[i] {
                                    continue;
                                }
                                if let EnvKey::Var(w) = k {
                                    if !self.bound_subject.contains(&w.uid())
                                        && self.term(pv, val)
                                    {
                                        self.val.frees.insert(v.name().to_string(), w.clone());
                                        choice = Some(i);
                                        break;
                                    }
                                }
                            }
                            match choice {
                                Some(i) => {
                                    consumed[i] = true;
                                    continue;
                                }
                                None => return false,
                            }
                        }
                        None => None,
                    }
                }
            };
            match found {
                Some(i) if !consumed[i] => {
                    consumed[i] = true;
                    if !self.term(pv, &s.entries[i].1) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        if let Some(capture) = &p.capture {
            let residual: Vec<(EnvKey, Term)> = s
                .entries
                .iter()
                .zip(&consumed)
                .filter(|(_, c)| !**c)
                .map(|((k, v), _)| (k.clone(), v.clone()))
                .collect();
            match self.val.envs.get(capture) {
                Some(prev) => {
                    let same = prev.len() == residual.len()
                        && prev.iter().zip(&residual).all(|((k1, v1), (k2, v2))| {
                            render_env_key(k1) == render_env_key(k2) && v1.alpha_eq(v2)
                        });
                    if !same {
                        return false;
                    }
                }
                None => {
                    self.val.envs.insert(capture.clone(), residual);
                }
            }
        }
        true
    }
}

fn render_env_key(k: &EnvKey) -> String {
    match k {
        EnvKey::Con(c) => format!("c:{}", c.name()),
        EnvKey::Var(v) => format!("v:{}", v.uid()),
    }
}

/// Wraps a meta binding as a single scope so alpha-equivalence can compare
/// two bindings modulo their parameters.
fn wrap(params: &[Variable], body: &Term) -> Term {
    Term::Cons {
        env: Environment::new(),
        head: crate::term::Constructor::new("§binding"),
        args: vec![Scope {
            binders: params.to_vec(),
            body: body.clone(),
        }],
    }
}

/// Builds the replacement term for a matched rule: meta-applications are
/// replaced by their matched bodies with parameters substituted
/// capture-avoidingly, declared-fresh names become new variables (one per
/// application), free names stand for the variables they matched, and
/// contraction binders are freshly created with a display-name hint taken
/// from the subject binder when the contraction reuses a pattern binder's
/// name.
pub fn instantiate(
    session: &mut Session,
    val: &Valuation,
    contraction: &Term,
    opts: &RuleOptions,
) -> Result<Term, EngineError> {
    // Fresh variables take their display hint from the subject variable
    // matched at the position where the contraction substitutes them, when
    // there is one: for `#Q[f]` with Fresh[f], the hint is the name of the
    // binder that `#Q`'s parameter matched.
    let mut fresh_map: HashMap<String, Variable> = HashMap::new();
    for name in &opts.fresh {
        let mut hint = name.clone();
        'scan: for (meta, arg_idx) in fresh_positions(contraction, name) {
            if let Some(binding) = val.metas.get(&meta) {
                if let Some(param) = binding.params.get(arg_idx) {
                    hint = param.name().to_string();
                    break 'scan;
                }
            }
        }
        fresh_map.insert(name.clone(), session.fresh_var(&hint));
    }
    let mut inst = Instantiator {
        session,
        val,
        fresh_map,
        benv: Vec::new(),
    };
    inst.term(contraction)
}

/// Pre-order scan for meta-applications using `name` as an argument;
/// returns (meta name, argument index) pairs, leftmost first.
fn fresh_positions(t: &Term, name: &str) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    t.walk(&mut |t| {
        if let Term::Meta { name: m, args } = t {
            for (i, a) in args.iter().enumerate() {
                if matches!(a, Term::Var(v) if v.name() == name) {
                    out.push((m.clone(), i));
                }
            }
        }
    });
    out
}

struct Instantiator<'a> {
    session: &'a mut Session,
    val: &'a Valuation,
    fresh_map: HashMap<String, Variable>,
    /// Contraction binder uid → the fresh variable standing for it.
    benv: Vec<(u64, Variable)>,
}

impl<'a> Instantiator<'a> {
    fn term(&mut self, t: &Term) -> Result<Term, EngineError> {
        match t {
            Term::Var(v) => Ok(Term::Var(self.variable(v)?)),
            Term::Meta { name, args } => {
                let binding = self.val.metas.get(name).ok_or_else(|| {
                    EngineError::MissingBinding { name: name.clone() }
                })?;
                let args: Vec<Term> = args
                    .iter()
                    .map(|a| self.term(a))
                    .collect::<Result<_, _>>()?;
                if binding.params.len() != args.len() {
                    return Err(EngineError::MissingBinding { name: name.clone() });
                }
                for param in &binding.params {
                    if self.session.free_matched.contains(&param.uid()) {
                        return Err(EngineError::FreeMatchedSubstitution {
                            name: param.name().to_string(),
                        });
                    }
                }
                let map: HashMap<Variable, Term> = binding
                    .params
                    .iter()
                    .cloned()
                    .zip(args)
                    .collect();
                Ok(binding.body.substitute(&map))
            }
            Term::Cons { env, head, args } => {
                let mut new_env = Environment::new();
                if let Some(capture) = &env.capture {
                    let residual = self.val.envs.get(capture).ok_or_else(|| {
                        EngineError::MissingBinding {
                            name: capture.clone(),
                        }
                    })?;
                    new_env.entries = residual.clone();
                }
                for (k, v) in &env.entries {
                    let key = match k {
                        EnvKey::Con(c) => EnvKey::Con(c.clone()),
                        EnvKey::Var(var) => EnvKey::Var(self.variable(var)?),
                    };
                    let value = self.term(v)?;
                    new_env.insert(key, value);
                }
                let mut new_args = Vec::with_capacity(args.len());
                for s in args {
                    let mut binders = Vec::with_capacity(s.binders.len());
                    for b in &s.binders {
                        // Reusing a pattern binder's name pulls the hint
                        // from the subject binder it matched.
                        let hint = self
                            .val
                            .binders
                            .get(b.name())
                            .map(|sv| sv.name().to_string())
                            .unwrap_or_else(|| b.name().to_string());
                        let fresh = self.session.fresh_var(&hint);
                        self.benv.push((b.uid(), fresh.clone()));
                        binders.push(fresh);
                    }
                    let body = self.term(&s.body)?;
                    self.benv.truncate(self.benv.len() - s.binders.len());
                    new_args.push(Scope { binders, body });
                }
                Ok(Term::Cons {
                    env: new_env,
                    head: head.clone(),
                    args: new_args,
                })
            }
        }
    }

    fn variable(&mut self, v: &Variable) -> Result<Variable, EngineError> {
        if let Some((_, fresh)) = self.benv.iter().rev().find(|(uid, _)| *uid == v.uid()) {
            return Ok(fresh.clone());
        }
        if let Some(fresh) = self.fresh_map.get(v.name()) {
            return Ok(fresh.clone());
        }
        if let Some(matched) = self.val.frees.get(v.name()) {
            return Ok(matched.clone());
        }
        Err(EngineError::MissingBinding {
            name: v.name().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_rule_file, parse_term};

    fn ruleset(src: &str) -> RuleSet {
        RuleSet::from_file(&parse_rule_file(src).expect("rule file parses"))
    }

    #[test]
    fn fresh_names_take_numeric_suffixes() {
        let mut s = Session::new();
        assert_eq!(s.fresh_var("id1").name(), "id1");
        assert_eq!(s.fresh_var("id1").name(), "id1_1");
        assert_eq!(s.fresh_var("id1").name(), "id1_2");
        assert_eq!(s.fresh_var("$x").name(), "$x");
        assert_eq!(s.fresh_var("$x").name(), "$x_1");
    }

    #[test]
    fn matches_map_pattern() {
        let rules = ruleset("-[Free[h]] : E2[Map[Dep i . #b[i], #p], h] → TPipe[h1 . E2[#p, h1], i . E2[#b[i], h]] ;");
        let subject = parse_term("E2[Map[(Dep id1 . Call[\"plus\", Extract[id1, f]]), Sel], out]")
            .unwrap();
        let val = match_rule(&rules.rules()[0], &subject).expect("should match");
        assert_eq!(val.metas["#b"].params.len(), 1);
        assert_eq!(val.metas["#b"].params[0].name(), "id1");
        assert_eq!(val.frees["h"].name(), "out");
        assert!(val.metas["#p"].body.alpha_eq_by_name(&parse_term("Sel").unwrap()));
    }

    #[test]
    fn weak_meta_requires_binder_absence() {
        let rules = ruleset(
            "RemoveDepMap[Weak[#dop]] : MapConcat[Dep id1 . #dop, #p] → Product[#dop, #p] ;",
        );
        let dependent =
            parse_term("MapConcat[(Dep id . Extract[id, f]), rel]").unwrap();
        assert!(match_rule(&rules.rules()[0], &dependent).is_none());
        let independent = parse_term("MapConcat[(Dep id . Map[(Dep j . Tuple[ACons[(f j), ANil]]), Call[\"child\", Empty]]), rel]").unwrap();
        let val = match_rule(&rules.rules()[0], &independent).expect("independent body matches");
        assert!(val.metas["#dop"].params.is_empty());
    }

    #[test]
    fn normalizes_with_rule_order_and_step_count() {
        let rules =
            ruleset("A : F[#a] → G[#a] ;\nB[Discard[#a]] : G[#a] → H ;\n-[Discard[#a]] : H[#a] → Bad ;");
        let mut s = Session::new();
        let out = s
            .normalize(
                &rules,
                &parse_term("F[One]").unwrap(),
                &StrategyConfig::default(),
            )
            .unwrap();
        assert_eq!(out.term.render(), "H");
        assert_eq!(out.steps, 2);
    }

    #[test]
    fn normalize_is_innermost() {
        let rules = ruleset("A : F[#a] → Done[#a] ;");
        let mut s = Session::new();
        let cfg = StrategyConfig {
            trace: true,
            ..Default::default()
        };
        let out = s
            .normalize(&rules, &parse_term("F[F[X]]").unwrap(), &cfg)
            .unwrap();
        assert_eq!(out.term.render(), "Done[Done[X]]");
        let trace = s.take_trace();
        assert_eq!(trace.len(), 2);
        // The inner redex fires first.
        assert_eq!(trace[0].path, "0");
        assert_eq!(trace[0].redex, "F[X]");
    }

    #[test]
    fn step_limit_reports_term() {
        let rules = ruleset("Loop : F[#a] → F[F[#a]] ;");
        let mut s = Session::new();
        let err = s
            .normalize(
                &rules,
                &parse_term("F[X]").unwrap(),
                &StrategyConfig::with_max_steps(5),
            )
            .unwrap_err();
        match err {
            EngineError::StepLimit { limit, .. } => assert_eq!(limit, 5),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn redex_free_term_normalizes_in_zero_steps() {
        let rules = ruleset("A : F[#a] → G[#a] ;");
        let mut s = Session::new();
        let t = parse_term("Extract[id, f]").unwrap();
        let out = s.normalize(&rules, &t, &StrategyConfig::default()).unwrap();
        assert_eq!(out.steps, 0);
        assert!(out.term.alpha_eq_by_name(&t));
    }

    #[test]
    fn apply_rule_at_path() {
        let rules = ruleset("A : F[#a] → G[#a] ;");
        let mut s = Session::new();
        let t = parse_term("Top[F[X], F[Y]]").unwrap();
        let out = s.apply_rule_at(&rules, &t, &[1]).unwrap().unwrap();
        assert_eq!(out.render(), "Top[F[X], G[Y]]");
        assert!(s.apply_rule_at(&rules, &t, &[0, 0]).unwrap().is_none());
        assert!(matches!(
            s.apply_rule_at(&rules, &t, &[7]),
            Err(EngineError::InvalidPath)
        ));
    }

    #[test]
    fn instantiate_fresh_takes_hint_from_substituted_binder() {
        let rules = ruleset(
            "NQFor[Fresh[f]] : NQ[\"for\"[#src, x . #Q[x]], #acc] → NQ[#Q[f], Keep[f, #src, #acc]] ;",
        );
        let subject =
            parse_term("NQ[\"for\"[Src, v\"$x\" . \"return\"[v\"$x\"]], acc0]").unwrap();
        let rule = &rules.rules()[0];
        let val = match_rule(rule, &subject).unwrap();
        let mut s = Session::new();
        let out = instantiate(&mut s, &val, &rule.contraction, &rule.options).unwrap();
        // The fresh variable is named after the matched binder `$x` and is
        // substituted into the continuation.
        let rendered = out.render();
        assert!(
            rendered.contains("\"return\"[v\"$x\"]") && rendered.contains("Keep[v\"$x\""),
            "unexpected instantiation: {rendered}"
        );
        // The new $x is free (the original binder is gone).
        assert!(out.free_vars().iter().any(|v| v.name() == "$x"));
    }

    #[test]
    fn not_match_guard_blocks_independent_bodies() {
        let rules = ruleset(
            "EMapConcat[Free[h]] : E2[MapConcat[Dep id.$[NotMatch,#dop[],#dop[id]], #], h]\n→ TPipe[h1.E2[#, h1], c1.TPipe[h2.E2[#dop[c1], h2], c2.TMerge[c1, c2, h]]] ;",
        );
        let rule = &rules.rules()[0];
        let dependent =
            parse_term("E2[MapConcat[(Dep id . Extract[id, f]), rel], out]").unwrap();
        assert!(match_rule(rule, &dependent).is_some());
        let independent = parse_term("E2[MapConcat[(Dep id . Empty), rel], out]").unwrap();
        assert!(match_rule(rule, &independent).is_none());
    }

    #[test]
    fn environment_capture_and_extension() {
        let rules = ruleset(
            "T[Free[i], Copy[#rho], Copy[#t]] : {#rho}Check[i, #t] → {#rho; i: #t}Done[#t] ;",
        );
        let subject = parse_term("{j: \"int\"; Flag: On}Check[k, \"bool\"]").unwrap();
        let rule = &rules.rules()[0];
        let val = match_rule(rule, &subject).unwrap();
        assert_eq!(val.envs["#rho"].len(), 2);
        let mut s = Session::new();
        let out = instantiate(&mut s, &val, &rule.contraction, &rule.options).unwrap();
        let rendered = out.render();
        assert!(rendered.contains("k: \"bool\""), "missing extension: {rendered}");
        assert!(rendered.contains("Flag: On"), "missing residual: {rendered}");
    }

    #[test]
    fn env_lookup_rule() {
        let rules = ruleset("TVar[Free[i]] : {i:#t}Check[i] → Got[#t] ;");
        let subject = parse_term("{k: \"int\"}Check[k]").unwrap();
        let val = match_rule(&rules.rules()[0], &subject).unwrap();
        assert!(val.metas["#t"].body.alpha_eq_by_name(&parse_term("\"int\"").unwrap()));
        let missing = parse_term("{m: \"int\"}Check[k]").unwrap();
        assert!(match_rule(&rules.rules()[0], &missing).is_none());
    }

    #[test]
    fn match_instantiate_roundtrip_on_pattern() {
        let rules = ruleset("-[Free[h]] : E2[Select[Dep i . #c[i], #p], h] → E2[Select[Dep i . #c[i], #p], h] ;");
        // Identity rule: instantiating the contraction (== pattern) must
        // reproduce the subject up to alpha.
        let subject = parse_term(
            "E2[Select[(Dep id1 . Call[\"eq\", Concat[Extract[id1, v\"$x\"], Extract[id1, v\"$y\"]]]), rel], out]",
        )
        .unwrap();
        let rule = &rules.rules()[0];
        let val = match_rule(rule, &subject).unwrap();
        let mut s = Session::new();
        let out = instantiate(&mut s, &val, &rule.contraction, &rule.options).unwrap();
        assert!(out.alpha_eq(&subject), "got {}", out.render());
    }
}
