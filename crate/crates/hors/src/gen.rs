//! Randomized term and pattern generation for property tests.
//!
//! [`plain_term`] builds closed-ish data terms over a small vocabulary;
//! [`pattern_for`] derives from a given subject a pattern guaranteed to
//! match it, generalizing random subterms to meta-applications (sometimes
//! weakly) and declaring encountered free variables.

use crate::rule::{OptionKind, RuleOptions};
use crate::term::{EnvKey, Environment, Scope, Term, Variable};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashMap;

const CONSTRUCTORS: &[(&str, usize)] = &[
    ("F", 1),
    ("G", 2),
    ("Pair", 2),
    ("Triple", 3),
    ("Map", 2),
    ("Sel", 1),
    ("Wrap", 1),
];

const LEAVES: &[&str] = &["Empty", "Zero", "One", "tagged", "7", "42"];

const FREE_NAMES: &[&str] = &["f", "g", "r", "acc"];

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_depth: usize,
    /// Attach occasional constructor-keyed environment entries.
    pub envs: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 5,
            envs: false,
        }
    }
}

/// A pool of distinctly named free variables for one generated term.
pub fn free_pool() -> Vec<Variable> {
    FREE_NAMES.iter().map(|n| Variable::new(*n)).collect()
}

/// A random plain data term whose root is a construction.
pub fn plain_term(rng: &mut impl Rng, cfg: &GenConfig, pool: &[Variable]) -> Term {
    let mut scope = Vec::new();
    construction(rng, cfg, cfg.max_depth, &mut scope, pool, 0)
}

fn any_term(
    rng: &mut impl Rng,
    cfg: &GenConfig,
    depth: usize,
    scope: &mut Vec<Variable>,
    pool: &[Variable],
    next_binder: usize,
) -> Term {
    if depth == 0 || rng.gen_bool(0.25) {
        // Leaf: a variable when one is available, else a nullary constructor.
        if !scope.is_empty() && rng.gen_bool(0.5) {
            return Term::Var(scope.choose(rng).unwrap().clone());
        }
        if !pool.is_empty() && rng.gen_bool(0.3) {
            return Term::Var(pool.choose(rng).unwrap().clone());
        }
        return Term::leaf(*LEAVES.choose(rng).unwrap());
    }
    construction(rng, cfg, depth, scope, pool, next_binder)
}

fn construction(
    rng: &mut impl Rng,
    cfg: &GenConfig,
    depth: usize,
    scope: &mut Vec<Variable>,
    pool: &[Variable],
    next_binder: usize,
) -> Term {
    let (head, arity) = *CONSTRUCTORS.choose(rng).unwrap();
    let mut args = Vec::with_capacity(arity);
    let mut binder_counter = next_binder;
    for _ in 0..arity {
        let n_binders = if rng.gen_bool(0.4) { 1 } else { 0 };
        let binders: Vec<Variable> = (0..n_binders)
            .map(|_| {
                let v = Variable::new(format!("b{binder_counter}"));
                binder_counter += 1;
                v
            })
            .collect();
        scope.extend(binders.iter().cloned());
        let body = any_term(rng, cfg, depth - 1, scope, pool, binder_counter);
        scope.truncate(scope.len() - binders.len());
        args.push(Scope::new(binders, body));
    }
    let mut env = Environment::new();
    if cfg.envs && rng.gen_bool(0.2) {
        let value = any_term(rng, cfg, depth.saturating_sub(2), scope, pool, binder_counter);
        env.entries
            .push((EnvKey::Con(crate::term::Constructor::new("Key")), value));
    }
    Term::Cons {
        env,
        head: crate::term::Constructor::new(head),
        args,
    }
}

/// Derives a pattern that matches `subject`, together with the options it
/// needs. The root stays a construction; environment components are kept
/// verbatim only when empty (generate subjects with `envs: false`).
pub fn pattern_for(rng: &mut impl Rng, subject: &Term) -> (Term, RuleOptions) {
    let mut state = PatternState {
        opts: RuleOptions::default(),
        counter: 0,
        binder_map: HashMap::new(),
    };
    let mut scope = Vec::new();
    let pattern = state.walk(rng, subject, &mut scope, true);
    (pattern, state.opts)
}

struct PatternState {
    opts: RuleOptions,
    counter: usize,
    /// Subject binder uid → pattern binder.
    binder_map: HashMap<u64, Variable>,
}

impl PatternState {
    fn walk(
        &mut self,
        rng: &mut impl Rng,
        t: &Term,
        scope: &mut Vec<Variable>,
        is_root: bool,
    ) -> Term {
        if !is_root && rng.gen_bool(0.3) {
            return self.metaize(rng, t, scope);
        }
        match t {
            Term::Var(v) => {
                if let Some(pb) = self.binder_map.get(&v.uid()) {
                    Term::Var(pb.clone())
                } else {
                    // A free occurrence: declare it and match it by name.
                    self.opts.add(OptionKind::Free, v.name().to_string());
                    Term::Var(Variable::new(v.name()))
                }
            }
            Term::Meta { .. } => unreachable!("subjects are plain data"),
            Term::Cons { env, head, args } => {
                let args = args
                    .iter()
                    .map(|s| {
                        let binders: Vec<Variable> = s
                            .binders
                            .iter()
                            .map(|b| {
                                let pb = Variable::new(b.name());
                                self.binder_map.insert(b.uid(), pb.clone());
                                pb
                            })
                            .collect();
                        scope.extend(s.binders.iter().cloned());
                        let body = self.walk(rng, &s.body, scope, false);
                        scope.truncate(scope.len() - s.binders.len());
                        Scope::new(binders, body)
                    })
                    .collect();
                Term::Cons {
                    env: env.clone(),
                    head: head.clone(),
                    args,
                }
            }
        }
    }

    fn metaize(&mut self, rng: &mut impl Rng, t: &Term, scope: &[Variable]) -> Term {
        let name = format!("#m{}", self.counter);
        self.counter += 1;
        let free = t.free_vars();
        let mut omitted_any = false;
        let args: Vec<&Variable> = scope
            .iter()
            .filter(|b| {
                // Binders occurring free in the fragment must be listed;
                // unused ones may be omitted, which needs Weak.
                if free.contains(*b) {
                    true
                } else if rng.gen_bool(0.5) {
                    true
                } else {
                    omitted_any = true;
                    false
                }
            })
            .collect();
        if omitted_any {
            self.opts.add(OptionKind::Weak, name.clone());
        }
        let args = args
            .into_iter()
            .map(|b| {
                Term::Var(
                    self.binder_map
                        .get(&b.uid())
                        .expect("binder seen before use")
                        .clone(),
                )
            })
            .collect();
        Term::Meta { name, args }
    }
}
