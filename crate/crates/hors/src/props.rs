//! Randomized property suites over the engine, runnable at any case count.
//!
//! Each suite returns `Err` with a rendered counterexample on the first
//! failing case. Generation is seeded, so a given `(seed, cases)` pair is
//! fully deterministic.

use crate::engine::{match_pattern, instantiate, RuleSet, Session, StrategyConfig};
use crate::gen::{self, GenConfig};
use crate::rule::{OptionKind, RuleOptions};
use crate::syntax::parse_rule_file;
use crate::term::{Scope, Term, Variable};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeSet;

/// Deriving a pattern from a subject, matching it, and instantiating the
/// pattern under the resulting valuation reproduces the subject up to
/// alpha-equivalence.
pub fn match_instantiate_roundtrip(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for case in 0..cases {
        let pool = gen::free_pool();
        let subject = gen::plain_term(&mut rng, &GenConfig::default(), &pool);
        let (pattern, opts) = gen::pattern_for(&mut rng, &subject);
        let val = match_pattern(&pattern, &subject, &opts).ok_or_else(|| {
            format!(
                "case {case}: derived pattern failed to match\n  pattern: {}\n  subject: {}",
                pattern.render(),
                subject.render()
            )
        })?;
        let mut session = Session::new();
        let rebuilt = instantiate(&mut session, &val, &pattern, &opts)
            .map_err(|e| format!("case {case}: instantiate failed: {e}"))?;
        if !rebuilt.alpha_eq(&subject) {
            return Err(format!(
                "case {case}: round trip differs\n  pattern: {}\n  subject: {}\n  rebuilt: {}",
                pattern.render(),
                subject.render(),
                rebuilt.render()
            ));
        }
    }
    Ok(())
}

/// A weak meta-application omitting a binder matches exactly when the
/// binder does not occur free in the subterm.
pub fn weak_omission_iff_absence(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    // Wrap[Dep x . #m] with Weak[#m]: the omitted binder must not occur.
    let pattern_src = "W[Weak[#m], Discard[#m]] : Wrap[Dep x . #m] → Wrap[Dep x . #m] ;";
    let rules = parse_rule_file(pattern_src).expect("probe rule parses");
    let rule = &rules.rules[0];
    for case in 0..cases {
        let binder = Variable::new("u");
        let pool = {
            let mut p = gen::free_pool();
            // Half of the time the binder is available to the generator, so
            // bodies that do mention it are common.
            if rng.gen_bool(0.5) {
                p.push(binder.clone());
            }
            p
        };
        let body = gen::plain_term(&mut rng, &GenConfig { max_depth: 3, envs: false }, &pool);
        let subject = Term::cons(
            "Wrap",
            vec![Scope::plain(Term::cons(
                "Dep",
                vec![Scope::new(vec![binder.clone()], body.clone())],
            ))],
        );
        let occurs = body.free_vars().contains(&binder);
        let matched = crate::engine::match_rule(rule, &subject).is_some();
        if matched == occurs {
            return Err(format!(
                "case {case}: weak match disagrees with occurrence\n  body: {}\n  occurs: {occurs}, matched: {matched}",
                body.render()
            ));
        }
    }
    Ok(())
}

/// Capture-avoiding substitution invariants.
pub fn substitution_invariants(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    for case in 0..cases {
        let pool = gen::free_pool();
        let x = pool[rng.gen_range(0..pool.len())].clone();
        let t = gen::plain_term(&mut rng, &GenConfig::default(), &pool);
        // Replacement built over a pool that excludes x.
        let s_pool: Vec<Variable> = pool.iter().filter(|v| **v != x).cloned().collect();
        let s = gen::plain_term(
            &mut rng,
            &GenConfig { max_depth: 3, envs: false },
            &s_pool,
        );

        let out = t.substitute1(&x, &s);
        let fv_t = t.free_vars();
        let fv_s = s.free_vars();
        let fv_out = out.free_vars();

        if fv_out.contains(&x) {
            return Err(format!(
                "case {case}: x stayed free after substitution\n  t: {}\n  s: {}",
                t.render(),
                s.render()
            ));
        }
        let mut upper: BTreeSet<Variable> = fv_t.clone();
        upper.remove(&x);
        upper.extend(fv_s.iter().cloned());
        if !fv_out.is_subset(&upper) {
            return Err(format!(
                "case {case}: free variables grew\n  t: {}\n  s: {}\n  out: {}",
                t.render(),
                s.render(),
                out.render()
            ));
        }
        if fv_t.contains(&x) && fv_out != upper {
            return Err(format!(
                "case {case}: expected exact free-variable set when x occurs\n  t: {}\n  s: {}",
                t.render(),
                s.render()
            ));
        }
        let identity = t.substitute1(&x, &Term::Var(x.clone()));
        if !identity.alpha_eq(&t) {
            return Err(format!(
                "case {case}: t[x↦x] is not alpha-equal to t\n  t: {}",
                t.render()
            ));
        }
    }
    Ok(())
}

fn probe_rules() -> RuleSet {
    RuleSet::from_file(
        &parse_rule_file(
            "RF[Fresh[w]] : F[#a] → Wrap[Pair[w, #a]] ;\n\
             RG : G[#a, #b] → Pair[#a, #b] ;\n\
             RSel : Sel[#m] → Wrap[#m] ;\n\
             RTriple[Copy[#b], Discard[#c]] : Triple[#a, #b, #c] → G[Pair[#a, #b], #b] ;",
        )
        .expect("probe rules parse"),
    )
}

/// Variables created during a normalization never collide by uid with
/// variables of the input, and rewriting introduces no free variables
/// beyond the input's and the freshly created ones.
pub fn fresh_uid_disjointness(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let rules = probe_rules();
    for case in 0..cases {
        let pool = gen::free_pool();
        let t = gen::plain_term(&mut rng, &GenConfig::default(), &pool);
        let mut input_uids = BTreeSet::new();
        collect_uids(&t, &mut input_uids);
        let mut session = Session::new();
        let out = session
            .normalize(&rules, &t, &StrategyConfig::default())
            .map_err(|e| format!("case {case}: normalize failed: {e}"))?;
        let mut out_uids = BTreeSet::new();
        collect_uids(&out.term, &mut out_uids);
        let created: BTreeSet<u64> = out_uids.difference(&input_uids).copied().collect();
        // Fresh variables must be new; free variables of the result must
        // come from the input or from the created set.
        for v in out.term.free_vars() {
            if !input_uids.contains(&v.uid()) && !created.contains(&v.uid()) {
                return Err(format!(
                    "case {case}: unexpected free variable {} in result",
                    v.name()
                ));
            }
        }
        let input_free = t.free_vars();
        for v in out.term.free_vars() {
            if input_uids.contains(&v.uid()) && !input_free.contains(&v) {
                return Err(format!(
                    "case {case}: rewriting freed a bound variable {}\n  input: {}\n  output: {}",
                    v.name(),
                    t.render(),
                    out.term.render()
                ));
            }
        }
    }
    Ok(())
}

/// Normalizing the same input twice in fresh sessions gives byte-identical
/// renderings, including fresh-name choices.
pub fn normalize_determinism(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let rules = probe_rules();
    for case in 0..cases {
        let pool = gen::free_pool();
        let t = gen::plain_term(&mut rng, &GenConfig::default(), &pool);
        let run = |t: &Term| -> Result<String, String> {
            let mut session = Session::new();
            session
                .normalize(&rules, t, &StrategyConfig::default())
                .map(|n| n.term.render())
                .map_err(|e| format!("case {case}: normalize failed: {e}"))
        };
        let a = run(&t)?;
        let b = run(&t)?;
        if a != b {
            return Err(format!(
                "case {case}: renders differ\n  first:  {a}\n  second: {b}"
            ));
        }
    }
    Ok(())
}

/// Declared-free names match consistently: two occurrences only unify when
/// the subject holds the same variable at both positions.
pub fn free_match_consistency(cases: u64, seed: u64) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut opts = RuleOptions::default();
    opts.add(OptionKind::Free, "z".to_string());
    let z = Variable::new("z");
    let pattern = Term::cons(
        "Pair",
        vec![
            Scope::plain(Term::Var(z.clone())),
            Scope::plain(Term::Var(z.clone())),
        ],
    );
    for case in 0..cases {
        let a = Variable::new("a");
        let b = if rng.gen_bool(0.5) { a.clone() } else { Variable::new("a") };
        let subject = Term::cons(
            "Pair",
            vec![
                Scope::plain(Term::Var(a.clone())),
                Scope::plain(Term::Var(b.clone())),
            ],
        );
        let matched = match_pattern(&pattern, &subject, &opts).is_some();
        if matched != (a == b) {
            return Err(format!(
                "case {case}: free consistency violated (same: {}, matched: {matched})",
                a == b
            ));
        }
    }
    Ok(())
}

fn collect_uids(t: &Term, out: &mut BTreeSet<u64>) {
    t.walk(&mut |t| match t {
        Term::Var(v) => {
            out.insert(v.uid());
        }
        Term::Cons { env, args, .. } => {
            for (k, _) in &env.entries {
                if let crate::term::EnvKey::Var(v) = k {
                    out.insert(v.uid());
                }
            }
            for s in args {
                for b in &s.binders {
                    out.insert(b.uid());
                }
            }
        }
        Term::Meta { .. } => {}
    });
}
