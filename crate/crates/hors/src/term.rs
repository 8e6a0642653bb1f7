//! The term language: variables, constructions with binder-carrying scopes
//! and environments, and meta-applications for use in rewrite rules.
//!
//! A term is one of three things:
//!
//! * a variable occurrence,
//! * a construction `{env}C[s1, ..., sn]` whose arguments are [`Scope`]s
//!   (each scope may bind a vector of variables over its body; this is the
//!   only place abstraction happens), or
//! * a meta-application `#m[t1, ..., tn]`, which only appears in rule
//!   patterns and contractions.
//!
//! Plain data terms contain no meta-applications and no environment capture
//! slots; terms containing either are pattern/contraction terms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

/// A variable. Identity is the globally unique `uid`; the name is a display
/// hint and may be any text (`$x` is a fine name). Two variables with equal
/// names but different uids are distinct.
#[derive(Debug, Clone, Eq)]
pub struct Variable {
    name: String,
    uid: u64,
}

impl Variable {
    /// Creates a variable with a brand-new uid.
    pub fn new(name: impl Into<String>) -> Self {
        Variable {
            name: name.into(),
            uid: NEXT_UID.fetch_add(1, Ordering::Relaxed),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    /// Same uid, different display name. Used when substitution has to
    /// rename a binder out of the way.
    pub(crate) fn renamed(&self, name: impl Into<String>) -> Self {
        Variable::new(name)
    }

    /// `true` when the name renders without the `v"..."` quoting.
    pub fn renders_bare(&self) -> bool {
        let mut chars = self.name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_lowercase() => {
                chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
            }
            _ => false,
        }
    }
}

impl PartialEq for Variable {
    fn eq(&self, other: &Self) -> bool {
        self.uid == other.uid
    }
}

impl std::hash::Hash for Variable {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.uid.hash(state);
    }
}

impl PartialOrd for Variable {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Variable {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.uid.cmp(&other.uid)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.renders_bare() {
            write!(f, "{}", self.name)
        } else {
            write!(f, "v\"{}\"", escape_name(&self.name))
        }
    }
}

/// A constructor name. Literal constants (numerals) are constructors too;
/// a constructor is a literal exactly when its name is all digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constructor(String);

impl Constructor {
    pub fn new(name: impl Into<String>) -> Self {
        Constructor(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// Numeric literal constants are constructors with all-digit names.
    pub fn is_literal(&self) -> bool {
        !self.0.is_empty() && self.0.chars().all(|c| c.is_ascii_digit())
    }

    /// `true` when the name renders without quotes: `[A-Z$][A-Za-z0-9_]*`.
    pub fn renders_bare(&self) -> bool {
        let mut chars = self.0.chars();
        match chars.next() {
            Some(c) if c.is_ascii_uppercase() || c == '$' => {
                chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
            }
            _ => false,
        }
    }
}

impl fmt::Display for Constructor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.renders_bare() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "\"{}\"", escape_name(&self.0))
        }
    }
}

pub(crate) fn escape_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out
}

/// One construction argument: an optional vector of pairwise-distinct
/// binders in scope exactly over `body`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scope {
    pub binders: Vec<Variable>,
    pub body: Term,
}

impl Scope {
    pub fn new(binders: Vec<Variable>, body: Term) -> Self {
        debug_assert!(
            binders
                .iter()
                .map(Variable::uid)
                .collect::<BTreeSet<_>>()
                .len()
                == binders.len(),
            "scope binders must be pairwise distinct"
        );
        Scope { binders, body }
    }

    pub fn plain(body: Term) -> Self {
        Scope {
            binders: Vec::new(),
            body,
        }
    }
}

/// An environment key: a constructor or a variable.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvKey {
    Con(Constructor),
    Var(Variable),
}

impl fmt::Display for EnvKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKey::Con(c) => write!(f, "{c}"),
            EnvKey::Var(v) => write!(f, "{v}"),
        }
    }
}

/// The associative component of a construction: ordered `key: term` entries
/// with pairwise-distinct keys, plus an optional capture slot naming an
/// environment meta-variable. The capture slot only appears in rule
/// patterns and contractions, never in plain data.
///
/// Entries are kept in insertion order for deterministic rendering but the
/// environment compares as a key-set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Environment {
    pub entries: Vec<(EnvKey, Term)>,
    pub capture: Option<String>,
}

impl Environment {
    pub fn new() -> Self {
        Environment::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.capture.is_none()
    }

    pub fn with_entries(entries: Vec<(EnvKey, Term)>) -> Self {
        Environment {
            entries,
            capture: None,
        }
    }

    /// Looks up a variable key by uid.
    pub fn get_var(&self, uid: u64) -> Option<&Term> {
        self.entries.iter().find_map(|(k, t)| match k {
            EnvKey::Var(v) if v.uid() == uid => Some(t),
            _ => None,
        })
    }

    /// Inserts or replaces an entry, keeping keys pairwise distinct.
    pub fn insert(&mut self, key: EnvKey, value: Term) {
        self.entries.retain(|(k, _)| !same_key(k, &key));
        self.entries.push((key, value));
    }
}

fn same_key(a: &EnvKey, b: &EnvKey) -> bool {
    match (a, b) {
        (EnvKey::Con(x), EnvKey::Con(y)) => x == y,
        (EnvKey::Var(x), EnvKey::Var(y)) => x == y,
        _ => false,
    }
}

/// A term.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// A variable occurrence.
    Var(Variable),
    /// A construction `{env}C[s1, ..., sn]`.
    Cons {
        env: Environment,
        head: Constructor,
        args: Vec<Scope>,
    },
    /// A meta-application `#m[t1, ..., tn]`. The name contains a `#`.
    /// Arguments carry no binders.
    Meta { name: String, args: Vec<Term> },
}

impl Term {
    pub fn var(v: Variable) -> Self {
        Term::Var(v)
    }

    /// A construction with an empty environment.
    pub fn cons(head: impl Into<String>, args: Vec<Scope>) -> Self {
        Term::Cons {
            env: Environment::new(),
            head: Constructor::new(head),
            args,
        }
    }

    pub fn cons_env(env: Environment, head: impl Into<String>, args: Vec<Scope>) -> Self {
        Term::Cons {
            env,
            head: Constructor::new(head),
            args,
        }
    }

    /// A nullary construction.
    pub fn leaf(head: impl Into<String>) -> Self {
        Term::cons(head, Vec::new())
    }

    /// The application sugar `(a b)`, i.e. `@[a, b]`.
    pub fn apply(a: Term, b: Term) -> Self {
        Term::cons("@", vec![Scope::plain(a), Scope::plain(b)])
    }

    /// Builds a `$Cons`/`$Nil` list from the given elements.
    pub fn list(items: Vec<Term>) -> Self {
        let mut out = Term::leaf("$Nil");
        for item in items.into_iter().rev() {
            out = Term::cons("$Cons", vec![Scope::plain(item), Scope::plain(out)]);
        }
        out
    }

    pub fn meta(name: impl Into<String>, args: Vec<Term>) -> Self {
        let name = name.into();
        debug_assert!(name.contains('#'), "meta-variable names contain '#'");
        Term::Meta { name, args }
    }

    /// The constructor name at the root, when the root is a construction.
    pub fn head_name(&self) -> Option<&str> {
        match self {
            Term::Cons { head, .. } => Some(head.name()),
            _ => None,
        }
    }

    /// `true` when the term contains no meta-application and no environment
    /// capture slot.
    pub fn is_plain_data(&self) -> bool {
        match self {
            Term::Var(_) => true,
            Term::Meta { .. } => false,
            Term::Cons { env, args, .. } => {
                env.capture.is_none()
                    && env.entries.iter().all(|(_, t)| t.is_plain_data())
                    && args.iter().all(|s| s.body.is_plain_data())
            }
        }
    }

    /// The variables occurring free in this term, including variables used
    /// as environment keys.
    pub fn free_vars(&self) -> BTreeSet<Variable> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<u64>, out: &mut BTreeSet<Variable>) {
        match self {
            Term::Var(v) => {
                if !bound.contains(&v.uid()) {
                    out.insert(v.clone());
                }
            }
            Term::Meta { args, .. } => {
                for a in args {
                    a.collect_free(bound, out);
                }
            }
            Term::Cons { env, args, .. } => {
                for (k, t) in &env.entries {
                    if let EnvKey::Var(v) = k {
                        if !bound.contains(&v.uid()) {
                            out.insert(v.clone());
                        }
                    }
                    t.collect_free(bound, out);
                }
                for scope in args {
                    let n = scope.binders.len();
                    bound.extend(scope.binders.iter().map(Variable::uid));
                    scope.body.collect_free(bound, out);
                    bound.truncate(bound.len() - n);
                }
            }
        }
    }

    /// Simultaneous capture-avoiding substitution. Binders that would
    /// capture a free variable of a replacement are renamed; occurrences of
    /// bound variables are never replaced.
    pub fn substitute(&self, map: &HashMap<Variable, Term>) -> Term {
        if map.is_empty() {
            return self.clone();
        }
        let repl_free: BTreeSet<Variable> = map.values().flat_map(Term::free_vars).collect();
        self.subst(map, &repl_free)
    }

    /// Substitutes a single variable.
    pub fn substitute1(&self, var: &Variable, replacement: &Term) -> Term {
        let mut map = HashMap::new();
        map.insert(var.clone(), replacement.clone());
        self.substitute(&map)
    }

    fn subst(&self, map: &HashMap<Variable, Term>, repl_free: &BTreeSet<Variable>) -> Term {
        match self {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Meta { name, args } => Term::Meta {
                name: name.clone(),
                args: args.iter().map(|a| a.subst(map, repl_free)).collect(),
            },
            Term::Cons { env, head, args } => {
                let env = Environment {
                    entries: env
                        .entries
                        .iter()
                        .map(|(k, t)| {
                            let k = match k {
                                EnvKey::Var(v) => match map.get(v) {
                                    Some(Term::Var(w)) => EnvKey::Var(w.clone()),
                                    Some(other) => panic!(
                                        "cannot substitute non-variable {} for environment key {}",
                                        other.render_compact(),
                                        v
                                    ),
                                    None => k.clone(),
                                },
                                EnvKey::Con(_) => k.clone(),
                            };
                            (k, t.subst(map, repl_free))
                        })
                        .collect(),
                    capture: env.capture.clone(),
                };
                let args = args
                    .iter()
                    .map(|scope| self.subst_scope(scope, map, repl_free))
                    .collect();
                Term::Cons {
                    env,
                    head: head.clone(),
                    args,
                }
            }
        }
    }

    fn subst_scope(
        &self,
        scope: &Scope,
        map: &HashMap<Variable, Term>,
        repl_free: &BTreeSet<Variable>,
    ) -> Scope {
        // Binders shadow any substitution for the same variable.
        let mut inner: HashMap<Variable, Term> = map
            .iter()
            .filter(|(v, _)| !scope.binders.contains(v))
            .map(|(v, t)| (v.clone(), t.clone()))
            .collect();
        if inner.is_empty() {
            return scope.clone();
        }
        let mut binders = scope.binders.clone();
        let mut body = scope.body.clone();
        for b in binders.iter_mut() {
            if repl_free.contains(b) {
                // The binder would capture a free variable of a
                // replacement: rename it to a fresh variable first.
                let taken: BTreeSet<String> = body
                    .free_vars()
                    .iter()
                    .chain(repl_free.iter())
                    .map(|v| v.name().to_string())
                    .collect();
                let mut k = 1;
                let fresh_name = loop {
                    let cand = format!("{}_{}", b.name(), k);
                    if !taken.contains(&cand) {
                        break cand;
                    }
                    k += 1;
                };
                let fresh = b.renamed(fresh_name);
                body = body.substitute1(b, &Term::Var(fresh.clone()));
                *b = fresh;
            }
        }
        let body = body.subst(&std::mem::take(&mut inner), repl_free);
        Scope { binders, body }
    }

    /// Alpha-equivalence: identical up to consistent renaming of bound
    /// variables. Free variables compare by uid, environments compare as
    /// key-sets with alpha-equal values, constructor names compare exactly.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        alpha_eq_impl(self, other, &mut Vec::new(), FreeCmp::Uid)
    }

    /// Alpha-equivalence with free variables compared by display name
    /// instead of uid. This is the comparison used for golden fixtures,
    /// where the two terms come from independent parses and cannot share
    /// uids.
    pub fn alpha_eq_by_name(&self, other: &Term) -> bool {
        alpha_eq_impl(self, other, &mut Vec::new(), FreeCmp::Name)
    }

    /// Every constructor name occurring in the term.
    pub fn constructor_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |t| {
            if let Term::Cons { head, .. } = t {
                out.insert(head.name().to_string());
            }
        });
        out
    }

    /// Pre-order traversal over the term and all its subterms, including
    /// environment values.
    pub fn walk(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self {
            Term::Var(_) => {}
            Term::Meta { args, .. } => {
                for a in args {
                    a.walk(f);
                }
            }
            Term::Cons { env, args, .. } => {
                for (_, t) in &env.entries {
                    t.walk(f);
                }
                for s in args {
                    s.body.walk(f);
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum FreeCmp {
    Uid,
    Name,
}

/// Stack of binder correspondences; a pair `(a, b)` means the binders were
/// introduced together at the same depth.
type Pairing = Vec<(u64, u64)>;

fn var_corresponds(a: &Variable, b: &Variable, stack: &Pairing, free: FreeCmp) -> bool {
    let pos_a = stack.iter().rposition(|(x, _)| *x == a.uid());
    let pos_b = stack.iter().rposition(|(_, y)| *y == b.uid());
    match (pos_a, pos_b) {
        (Some(i), Some(j)) => i == j,
        (None, None) => match free {
            FreeCmp::Uid => a.uid() == b.uid(),
            FreeCmp::Name => a.name() == b.name(),
        },
        _ => false,
    }
}

fn alpha_eq_impl(a: &Term, b: &Term, stack: &mut Pairing, free: FreeCmp) -> bool {
    match (a, b) {
        (Term::Var(x), Term::Var(y)) => var_corresponds(x, y, stack, free),
        (
            Term::Meta {
                name: n1,
                args: a1,
            },
            Term::Meta {
                name: n2,
                args: a2,
            },
        ) => {
            n1 == n2
                && a1.len() == a2.len()
                && a1
                    .iter()
                    .zip(a2)
                    .all(|(x, y)| alpha_eq_impl(x, y, stack, free))
        }
        (
            Term::Cons {
                env: e1,
                head: h1,
                args: a1,
            },
            Term::Cons {
                env: e2,
                head: h2,
                args: a2,
            },
        ) => {
            if h1 != h2 || a1.len() != a2.len() || !env_alpha_eq(e1, e2, stack, free) {
                return false;
            }
            a1.iter().zip(a2).all(|(s1, s2)| {
                if s1.binders.len() != s2.binders.len() {
                    return false;
                }
                for (x, y) in s1.binders.iter().zip(&s2.binders) {
                    stack.push((x.uid(), y.uid()));
                }
                let ok = alpha_eq_impl(&s1.body, &s2.body, stack, free);
                stack.truncate(stack.len() - s1.binders.len());
                ok
            })
        }
        _ => false,
    }
}

fn env_alpha_eq(a: &Environment, b: &Environment, stack: &mut Pairing, free: FreeCmp) -> bool {
    if a.capture != b.capture || a.entries.len() != b.entries.len() {
        return false;
    }
    // Key-set semantics: every entry of `a` has a matching key in `b` with
    // an alpha-equal value. Keys are pairwise distinct on both sides.
    a.entries.iter().all(|(k1, v1)| {
        b.entries.iter().any(|(k2, v2)| {
            let keys_match = match (k1, k2) {
                (EnvKey::Con(c1), EnvKey::Con(c2)) => c1 == c2,
                (EnvKey::Var(x), EnvKey::Var(y)) => var_corresponds(x, y, stack, free),
                _ => false,
            };
            keys_match && alpha_eq_impl(v1, v2, stack, free)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dep(v: &Variable, body: Term) -> Term {
        Term::cons("Dep", vec![Scope::new(vec![v.clone()], body)])
    }

    #[test]
    fn alpha_eq_renames_bound() {
        let x = Variable::new("x");
        let y = Variable::new("y");
        let a = dep(&x, Term::var(x.clone()));
        let b = dep(&y, Term::var(y.clone()));
        assert!(a.alpha_eq(&b));
    }

    #[test]
    fn alpha_eq_same_free_different_binders() {
        let f = Variable::new("f");
        let r = Variable::new("r");
        let mk = |i: &Variable| {
            Term::cons(
                "Map",
                vec![
                    Scope::plain(dep(
                        i,
                        Term::cons(
                            "Extract",
                            vec![
                                Scope::plain(Term::var(i.clone())),
                                Scope::plain(Term::var(f.clone())),
                            ],
                        ),
                    )),
                    Scope::plain(Term::var(r.clone())),
                ],
            )
        };
        let i = Variable::new("i");
        let j = Variable::new("j");
        assert!(mk(&i).alpha_eq(&mk(&j)));
    }

    #[test]
    fn alpha_eq_distinct_free_vars() {
        let i = Variable::new("i");
        let f = Variable::new("f");
        let g = Variable::new("g");
        let ex = |v: &Variable| {
            Term::cons(
                "Extract",
                vec![
                    Scope::plain(Term::var(i.clone())),
                    Scope::plain(Term::var(v.clone())),
                ],
            )
        };
        assert!(!ex(&f).alpha_eq(&ex(&g)));
        // By name they differ as well; same-named free variables from
        // independent parses compare equal.
        assert!(!ex(&f).alpha_eq_by_name(&ex(&g)));
        let f2 = Variable::new("f");
        assert!(ex(&f).alpha_eq_by_name(&ex(&f2)));
        assert!(!ex(&f).alpha_eq(&ex(&f2)));
    }

    #[test]
    fn free_vars_examples() {
        let x = Variable::new("x");
        let f = Variable::new("f");
        // Dep[x.Extract[x, f]] → {f}
        let t = dep(
            &x,
            Term::cons(
                "Extract",
                vec![
                    Scope::plain(Term::var(x.clone())),
                    Scope::plain(Term::var(f.clone())),
                ],
            ),
        );
        let fv = t.free_vars();
        assert_eq!(fv.len(), 1);
        assert!(fv.contains(&f));

        assert!(Term::leaf("Empty").free_vars().is_empty());

        // Map[Dep i.Tuple[ACons[(f i), ANil]], id] → {f, id}
        let i = Variable::new("i");
        let id = Variable::new("id");
        let row = Term::cons(
            "ACons",
            vec![
                Scope::plain(Term::apply(Term::var(f.clone()), Term::var(i.clone()))),
                Scope::plain(Term::leaf("ANil")),
            ],
        );
        let t = Term::cons(
            "Map",
            vec![
                Scope::plain(dep(&i, Term::cons("Tuple", vec![Scope::plain(row)]))),
                Scope::plain(Term::var(id.clone())),
            ],
        );
        let fv = t.free_vars();
        assert_eq!(fv.len(), 2);
        assert!(fv.contains(&f) && fv.contains(&id));
    }

    #[test]
    fn substitute_duplicates_replacement() {
        let x = Variable::new("x");
        let t = Term::cons(
            "Concat",
            vec![
                Scope::plain(Term::var(x.clone())),
                Scope::plain(Term::var(x.clone())),
            ],
        );
        let out = t.substitute1(&x, &Term::leaf("Empty"));
        let expect = Term::cons(
            "Concat",
            vec![
                Scope::plain(Term::leaf("Empty")),
                Scope::plain(Term::leaf("Empty")),
            ],
        );
        assert!(out.alpha_eq(&expect));
    }

    #[test]
    fn substitute_avoids_capture() {
        // substitute(Dep[y.Call["f", x]], x ↦ y) renames the binder.
        let x = Variable::new("x");
        let y = Variable::new("y");
        let t = dep(
            &y,
            Term::cons(
                "Call",
                vec![
                    Scope::plain(Term::leaf("f")),
                    Scope::plain(Term::var(x.clone())),
                ],
            ),
        );
        let out = t.substitute1(&x, &Term::var(y.clone()));
        // y stays free in the result.
        let fv = out.free_vars();
        assert!(fv.contains(&y));
        assert_eq!(fv.len(), 1);
        match &out {
            Term::Cons { args, .. } => {
                let binder = &args[0].binders[0];
                assert_ne!(binder.uid(), y.uid());
            }
            _ => panic!("expected construction"),
        }
    }

    #[test]
    fn substitute_leaves_bound_occurrences() {
        let y = Variable::new("y");
        let t = dep(&y, Term::var(y.clone()));
        let out = t.substitute1(&y, &Term::leaf("Empty"));
        assert!(out.alpha_eq(&t));
    }

    #[test]
    fn substitute_identity() {
        let x = Variable::new("x");
        let f = Variable::new("f");
        let t = Term::cons(
            "Pair",
            vec![
                Scope::plain(Term::var(x.clone())),
                Scope::new(vec![f.clone()], Term::var(x.clone())),
            ],
        );
        let out = t.substitute1(&x, &Term::var(x.clone()));
        assert!(out.alpha_eq(&t));
    }
}
