//! Canonical text rendering.
//!
//! The renderer emits the abbreviations of the term notation so output is
//! comparable with rule files and fixtures:
//!
//! * a construction with an empty environment and a single one-binder scope
//!   renders with the abstraction sugar `(C x . body)`, collapsing chains of
//!   the same constructor into `(C x y . body)`;
//! * the application constructor `@` renders as juxtaposition `(a b c)`;
//! * `$Cons`/`$Nil` chains render with the `;` list sugar `(a;b;)`;
//! * empty argument brackets are omitted;
//! * variables and constructors quote themselves per their naming rules.
//!
//! Rendering is deterministic. Binders whose display name would shadow a
//! distinct variable visible in their scope are display-renamed with a
//! numeric suffix so the output re-parses to an alpha-equal term.

use crate::term::{Constructor, EnvKey, Environment, Scope, Term, Variable};
use std::collections::BTreeSet;

impl Term {
    /// Canonical single-line rendering with spaces after separators.
    pub fn render(&self) -> String {
        let mut r = Renderer {
            out: String::new(),
            display: Vec::new(),
            compact: false,
        };
        r.term(self);
        r.out
    }

    /// Like [`Term::render`] but without any blanks.
    pub fn render_compact(&self) -> String {
        let mut r = Renderer {
            out: String::new(),
            display: Vec::new(),
            compact: true,
        };
        r.term(self);
        r.out
    }
}

struct Renderer {
    out: String,
    /// Binder uid → display name, innermost last.
    display: Vec<(u64, String)>,
    compact: bool,
}

impl Renderer {
    fn sep(&mut self) {
        if !self.compact {
            self.out.push(' ');
        }
    }

    fn var(&mut self, v: &Variable) {
        let name = self
            .display
            .iter()
            .rev()
            .find(|(uid, _)| *uid == v.uid())
            .map(|(_, n)| n.clone())
            .unwrap_or_else(|| v.name().to_string());
        push_var_name(&mut self.out, &name);
    }

    /// Chooses display names for binders, renaming away from names that a
    /// free variable of the body (or a sibling binder) already uses.
    fn enter_scope(&mut self, scope: &Scope) -> usize {
        let free_names: BTreeSet<String> = scope
            .body
            .free_vars()
            .iter()
            .filter(|v| !scope.binders.contains(v))
            .map(|v| {
                // A free occurrence may itself be an outer binder with a
                // display rename in effect.
                self.display
                    .iter()
                    .rev()
                    .find(|(uid, _)| *uid == v.uid())
                    .map(|(_, n)| n.clone())
                    .unwrap_or_else(|| v.name().to_string())
            })
            .collect();
        let mut chosen: BTreeSet<String> = free_names;
        let n = scope.binders.len();
        for b in &scope.binders {
            let mut name = b.name().to_string();
            if chosen.contains(&name) {
                let mut k = 1;
                name = loop {
                    let cand = format!("{}_{}", b.name(), k);
                    if !chosen.contains(&cand) {
                        break cand;
                    }
                    k += 1;
                };
            }
            chosen.insert(name.clone());
            self.display.push((b.uid(), name));
        }
        n
    }

    fn exit_scope(&mut self, n: usize) {
        self.display.truncate(self.display.len() - n);
    }

    fn term(&mut self, t: &Term) {
        match t {
            Term::Var(v) => self.var(v),
            Term::Meta { name, args } => {
                self.out.push_str(name);
                if !args.is_empty() {
                    self.out.push('[');
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            self.out.push(',');
                            self.sep();
                        }
                        self.term(a);
                    }
                    self.out.push(']');
                }
            }
            Term::Cons { env, head, args } => self.construction(env, head, args),
        }
    }

    fn construction(&mut self, env: &Environment, head: &Constructor, args: &[Scope]) {
        if env.is_empty() {
            if head.name() == "@" && args.len() == 2 && args.iter().all(|s| s.binders.is_empty()) {
                return self.application(args);
            }
            if head.name() == "$Cons"
                && args.len() == 2
                && args.iter().all(|s| s.binders.is_empty())
            {
                return self.cons_list(args);
            }
            if args.len() == 1 && args[0].binders.len() == 1 {
                return self.abstraction(head, &args[0]);
            }
        } else {
            self.environment(env);
        }
        self.out.push_str(&head.to_string());
        if !args.is_empty() {
            self.out.push('[');
            for (i, s) in args.iter().enumerate() {
                if i > 0 {
                    self.out.push(',');
                    self.sep();
                }
                self.scope(s);
            }
            self.out.push(']');
        }
    }

    fn scope(&mut self, s: &Scope) {
        if s.binders.is_empty() {
            self.term(&s.body);
        } else {
            let n = self.enter_scope(s);
            for b in &s.binders {
                self.var(b);
                self.sep();
            }
            if self.compact {
                self.out.push('.');
            } else {
                self.out.push_str(". ");
            }
            self.term(&s.body);
            self.exit_scope(n);
        }
    }

    /// `(C x . body)`, collapsing same-constructor chains.
    fn abstraction(&mut self, head: &Constructor, scope: &Scope) {
        self.out.push('(');
        self.out.push_str(&head.to_string());
        self.sep();
        let mut entered = 0;
        let mut current = scope.clone();
        loop {
            entered += self.enter_scope(&current);
            let binder = current.binders[0].clone();
            self.var(&binder);
            self.sep();
            match &current.body {
                Term::Cons {
                    env,
                    head: h2,
                    args,
                } if env.is_empty()
                    && h2 == head
                    && args.len() == 1
                    && args[0].binders.len() == 1 =>
                {
                    current = args[0].clone();
                }
                _ => break,
            }
        }
        if self.compact {
            self.out.push('.');
        } else {
            self.out.push_str(". ");
        }
        self.term(&current.body);
        self.exit_scope(entered);
        self.out.push(')');
    }

    /// `(f a b)` for a left-nested `@` spine.
    fn application(&mut self, args: &[Scope]) {
        let mut spine = vec![&args[1].body];
        let mut fun = &args[0].body;
        while let Term::Cons {
            env,
            head,
            args: inner,
        } = fun
        {
            if env.is_empty()
                && head.name() == "@"
                && inner.len() == 2
                && inner.iter().all(|s| s.binders.is_empty())
            {
                spine.push(&inner[1].body);
                fun = &inner[0].body;
            } else {
                break;
            }
        }
        spine.push(fun);
        spine.reverse();
        self.out.push('(');
        for (i, t) in spine.iter().enumerate() {
            if i > 0 {
                self.out.push(' ');
            }
            self.term(t);
        }
        self.out.push(')');
    }

    /// `(a;b;)` for `$Cons` chains; a non-`$Nil` tail renders `(a;b;tail)`.
    fn cons_list(&mut self, args: &[Scope]) {
        self.out.push('(');
        self.term(&args[0].body);
        self.out.push(';');
        let mut rest = &args[1].body;
        loop {
            match rest {
                Term::Cons {
                    env,
                    head,
                    args: inner,
                } if env.is_empty()
                    && head.name() == "$Cons"
                    && inner.len() == 2
                    && inner.iter().all(|s| s.binders.is_empty()) =>
                {
                    self.term(&inner[0].body);
                    self.out.push(';');
                    rest = &inner[1].body;
                }
                Term::Cons { env, head, args } if env.is_empty()
                    && head.name() == "$Nil"
                    && args.is_empty() =>
                {
                    break;
                }
                other => {
                    self.term(other);
                    break;
                }
            }
        }
        self.out.push(')');
    }

    fn environment(&mut self, env: &Environment) {
        self.out.push('{');
        let mut first = true;
        if let Some(capture) = &env.capture {
            self.out.push_str(capture);
            first = false;
        }
        for (k, v) in &env.entries {
            if !first {
                self.out.push(';');
                self.sep();
            }
            first = false;
            match k {
                EnvKey::Con(c) => self.out.push_str(&c.to_string()),
                EnvKey::Var(var) => self.var(var),
            }
            self.out.push(':');
            self.sep();
            self.term(v);
        }
        self.out.push('}');
    }
}

fn push_var_name(out: &mut String, name: &str) {
    let bare = {
        let mut chars = name.chars();
        matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && name.chars().skip(1).all(|c| c.is_ascii_alphanumeric() || c == '_')
    };
    if bare {
        out.push_str(name);
    } else {
        out.push_str("v\"");
        out.push_str(&crate::term::escape_name(name));
        out.push('"');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{Scope, Term, Variable};

    #[test]
    fn renders_dep_sugar() {
        let i = Variable::new("i");
        let t = Term::cons("Dep", vec![Scope::new(vec![i.clone()], Term::var(i))]);
        assert_eq!(t.render(), "(Dep i . i)");
    }

    #[test]
    fn renders_application() {
        let y = Variable::new("$y");
        let id1 = Variable::new("id1");
        let t = Term::apply(Term::var(y), Term::var(id1));
        assert_eq!(t.render(), "(v\"$y\" id1)");
    }

    #[test]
    fn renders_list_sugar() {
        let t = Term::list(vec![Term::leaf("Empty")]);
        assert_eq!(t.render(), "(Empty;)");
        let t2 = Term::list(vec![Term::leaf("A"), Term::leaf("B")]);
        assert_eq!(t2.render(), "(A;B;)");
        assert_eq!(Term::leaf("$Nil").render(), "$Nil");
    }

    #[test]
    fn quotes_constructors() {
        let t = Term::cons("program", vec![Scope::plain(Term::leaf("1"))]);
        assert_eq!(t.render(), "\"program\"[\"1\"]");
    }

    #[test]
    fn multi_binder_scope_keeps_brackets() {
        let a = Variable::new("in");
        let b = Variable::new("out");
        let t = Term::cons(
            "TMain",
            vec![Scope::new(vec![a, b], Term::leaf("TNoop"))],
        );
        assert_eq!(t.render(), "TMain[in out . TNoop]");
    }

    #[test]
    fn display_renames_shadowing_binder() {
        // Dep[y. Pair[y_outer, y_inner]] where a distinct free y occurs in
        // the scope body: the binder is display-renamed.
        let y_free = Variable::new("y");
        let y_bound = Variable::new("y");
        let t = Term::cons(
            "Dep",
            vec![Scope::new(
                vec![y_bound.clone()],
                Term::cons(
                    "Pair",
                    vec![
                        Scope::plain(Term::var(y_free.clone())),
                        Scope::plain(Term::var(y_bound)),
                    ],
                ),
            )],
        );
        assert_eq!(t.render(), "(Dep y_1 . Pair[y, y_1])");
    }
}
