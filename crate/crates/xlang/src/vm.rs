//! Execution: a dataflow interpreter for emitted target code and a direct
//! evaluator for algebra terms. The two take entirely different routes to
//! the same streams, which is what makes them useful as oracles for each
//! other.
//!
//! Values are ordered streams throughout (list semantics, not bag), so
//! stream equality is exact.

use hors::{Scope, Term, Variable};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// A runtime value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(i64),
    Str(String),
    Bool(bool),
    Element { tag: String, children: Vec<Value> },
    /// A tuple: ordered field-tag → value pairs with distinct tags.
    Tuple(Vec<(Variable, Value)>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "\"{s}\""),
            Value::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            Value::Element { tag, children } => {
                write!(f, "{tag}[")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "]")
            }
            Value::Tuple(fields) => {
                write!(f, "Tuple[")?;
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "({} {v})", k.name())?;
                }
                write!(f, "]")
            }
        }
    }
}

/// An ordered sequence of values.
pub type Stream = Vec<Value>;

/// The toy document store: `doc()` returns its document.
#[derive(Debug, Clone)]
pub struct Store {
    pub document: Value,
}

impl Store {
    /// One integer per line becomes a `Num` child of the root element.
    pub fn from_text(text: &str) -> Result<Store, VmError> {
        let mut children = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let n: i64 = line.parse().map_err(|_| VmError::BadStore {
                line: i + 1,
                text: line.to_string(),
            })?;
            children.push(Value::Num(n));
        }
        Ok(Store {
            document: Value::Element {
                tag: "doc".to_string(),
                children,
            },
        })
    }

    pub fn with_children(nums: &[i64]) -> Store {
        Store {
            document: Value::Element {
                tag: "doc".to_string(),
                children: nums.iter().map(|n| Value::Num(*n)).collect(),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum VmError {
    #[error("store line {line}: not an integer: {text}")]
    BadStore { line: usize, text: String },
    #[error("unbound {role} {name}")]
    Unbound { role: &'static str, name: String },
    #[error("{context}: expected a single value, got {count}")]
    NotSingle { context: &'static str, count: usize },
    #[error("{context}: expected a tuple, got {value}")]
    NotATuple { context: &'static str, value: Value },
    #[error("missing field {field} in {tuple}")]
    MissingField { field: String, tuple: Value },
    #[error("non-boolean condition: {value}")]
    NonBooleanCondition { value: Value },
    #[error("unknown builtin {name}")]
    UnknownBuiltin { name: String },
    #[error("builtin {name}: {message}")]
    BadCall { name: String, message: String },
    #[error("element tag must be atomic, got {value}")]
    BadElementTag { value: Value },
    #[error("tuple field count {values} does not match descriptor {fields}")]
    TupleShape { fields: usize, values: usize },
    #[error("not executable target code: {}", .term.render())]
    NotTarget { term: Term },
    #[error("not an algebra term: {}", .term.render())]
    NotAlgebra { term: Term },
}

const UNIT_TUPLE: Value = Value::Tuple(Vec::new());

/// The fixed builtin table, shared by both execution routes.
pub fn apply_builtin(name: &str, args: &[Value]) -> Result<Stream, VmError> {
    match name {
        "doc" => Err(VmError::BadCall {
            name: "doc".into(),
            message: "takes no arguments".into(),
        }),
        "child" => {
            let mut out = Vec::new();
            for a in args {
                match a {
                    Value::Element { children, .. } => out.extend(children.iter().cloned()),
                    other => {
                        return Err(VmError::BadCall {
                            name: "child".into(),
                            message: format!("expected an element, got {other}"),
                        })
                    }
                }
            }
            Ok(out)
        }
        "eq" => match args {
            [a, b] => Ok(vec![Value::Bool(a == b)]),
            _ => Err(VmError::BadCall {
                name: "eq".into(),
                message: format!("expected 2 arguments, got {}", args.len()),
            }),
        },
        "plus" => match args {
            [Value::Num(a), Value::Num(b)] => Ok(vec![Value::Num(a + b)]),
            _ => Err(VmError::BadCall {
                name: "plus".into(),
                message: "expected 2 numbers".into(),
            }),
        },
        "and" => {
            let mut acc = true;
            for a in args {
                match a {
                    Value::Bool(b) => acc &= b,
                    other => {
                        return Err(VmError::BadCall {
                            name: "and".into(),
                            message: format!("expected booleans, got {other}"),
                        })
                    }
                }
            }
            Ok(vec![Value::Bool(acc)])
        }
        other => Err(VmError::UnknownBuiltin { name: other.into() }),
    }
}

fn builtin(name: &str, args: &[Value], store: &Store) -> Result<Stream, VmError> {
    if name == "doc" {
        return if args.is_empty() {
            Ok(vec![store.document.clone()])
        } else {
            Err(VmError::BadCall {
                name: "doc".into(),
                message: "takes no arguments".into(),
            })
        };
    }
    apply_builtin(name, args)
}

fn literal_value(name: &str) -> Value {
    if let Ok(n) = name.parse::<i64>() {
        Value::Num(n)
    } else {
        Value::Str(name.to_string())
    }
}

fn tag_text(v: &Value) -> Result<String, VmError> {
    match v {
        Value::Str(s) => Ok(s.clone()),
        Value::Num(n) => Ok(n.to_string()),
        other => Err(VmError::BadElementTag {
            value: other.clone(),
        }),
    }
}

/// Right-biased field union of two tuples.
fn merge(left: &Value, right: &Value, context: &'static str) -> Result<Value, VmError> {
    let (a, b) = match (left, right) {
        (Value::Tuple(a), Value::Tuple(b)) => (a, b),
        (Value::Tuple(_), other) | (other, _) => {
            return Err(VmError::NotATuple {
                context,
                value: other.clone(),
            })
        }
    };
    let mut out = a.clone();
    for (k, v) in b {
        if let Some(slot) = out.iter_mut().find(|(k2, _)| k2 == k) {
            slot.1 = v.clone();
        } else {
            out.push((k.clone(), v.clone()));
        }
    }
    Ok(Value::Tuple(out))
}

// ---------------------------------------------------------------------
// Direct algebra evaluation
// ---------------------------------------------------------------------

/// Evaluates an `Algebraic[Dep id . body]` term over the store, with the
/// ambient tuple relation `[Tuple[]]` bound to the dependency binder.
pub fn eval_algebra(term: &Term, store: &Store) -> Result<Stream, VmError> {
    match term {
        Term::Cons { head, args, .. } if head.name() == "Algebraic" && args.len() == 1 => {
            let dep = &args[0].body;
            match dep {
                Term::Cons { head, args, .. }
                    if head.name() == "Dep" && args.len() == 1 && args[0].binders.len() == 1 =>
                {
                    let binder = &args[0].binders[0];
                    let mut env = HashMap::new();
                    env.insert(binder.uid(), vec![UNIT_TUPLE]);
                    AlgebraEval { store }.eval(&args[0].body, &env)
                }
                other => Err(VmError::NotAlgebra { term: other.clone() }),
            }
        }
        other => Err(VmError::NotAlgebra { term: other.clone() }),
    }
}

struct AlgebraEval<'a> {
    store: &'a Store,
}

type AlgebraEnv = HashMap<u64, Stream>;

impl<'a> AlgebraEval<'a> {
    fn eval(&self, t: &Term, env: &AlgebraEnv) -> Result<Stream, VmError> {
        match t {
            Term::Var(v) => env.get(&v.uid()).cloned().ok_or_else(|| VmError::Unbound {
                role: "variable",
                name: v.name().to_string(),
            }),
            Term::Cons { head, args, .. } => {
                let name = head.name();
                match name {
                    _ if head.is_literal() && args.is_empty() => {
                        Ok(vec![literal_value(name)])
                    }
                    "Empty" => Ok(Vec::new()),
                    "Map" => {
                        let (binder, body, rel) = dep_node(t)?;
                        let mut out = Vec::new();
                        for v in self.eval(rel, env)? {
                            let mut env = env.clone();
                            env.insert(binder.uid(), vec![v]);
                            out.extend(self.eval(body, &env)?);
                        }
                        Ok(out)
                    }
                    "Select" => {
                        let (binder, cond, rel) = dep_node(t)?;
                        let mut out = Vec::new();
                        for v in self.eval(rel, env)? {
                            let mut inner = env.clone();
                            inner.insert(binder.uid(), vec![v.clone()]);
                            match self.eval(cond, &inner)?.as_slice() {
                                [Value::Bool(true)] => out.push(v),
                                [Value::Bool(false)] => {}
                                other => {
                                    return Err(VmError::NonBooleanCondition {
                                        value: other
                                            .first()
                                            .cloned()
                                            .unwrap_or(Value::Bool(false)),
                                    })
                                }
                            }
                        }
                        Ok(out)
                    }
                    "MapConcat" => {
                        let (binder, body, rel) = dep_node(t)?;
                        let outer = self.eval(rel, env)?;
                        if body.free_vars().contains(binder) {
                            // Dependent nesting: per outer tuple, the body's
                            // tuples merge onto it.
                            let mut out = Vec::new();
                            for v in outer {
                                let mut inner = env.clone();
                                inner.insert(binder.uid(), vec![v.clone()]);
                                for w in self.eval(body, &inner)? {
                                    out.push(merge(&v, &w, "MapConcat")?);
                                }
                            }
                            Ok(out)
                        } else {
                            // Independent nesting is exactly a product with
                            // the body on the left; emission order follows
                            // the product's (body-major), which keeps the
                            // rewrite to Product order-preserving.
                            let dop = self.eval(body, env)?;
                            let mut out = Vec::new();
                            for w in &dop {
                                for v in &outer {
                                    out.push(merge(w, v, "MapConcat")?);
                                }
                            }
                            Ok(out)
                        }
                    }
                    "Product" => {
                        let (p, q) = two_plain(t)?;
                        let left = self.eval(p, env)?;
                        let right = self.eval(q, env)?;
                        let mut out = Vec::new();
                        for a in &left {
                            for b in &right {
                                out.push(merge(a, b, "Product")?);
                            }
                        }
                        Ok(out)
                    }
                    "Tuple" => {
                        let row = one_plain(t)?;
                        let mut fields: Vec<(Variable, Value)> = Vec::new();
                        let mut rest = row;
                        loop {
                            match rest {
                                Term::Cons { head, args, .. }
                                    if head.name() == "ACons" && args.len() == 2 =>
                                {
                                    let (tag, item) = field_pair(&args[0].body)?;
                                    let values = self.eval(item, env)?;
                                    if values.len() != 1 {
                                        return Err(VmError::NotSingle {
                                            context: "tuple field",
                                            count: values.len(),
                                        });
                                    }
                                    if fields.iter().any(|(k, _)| k == tag) {
                                        return Err(VmError::BadCall {
                                            name: "Tuple".into(),
                                            message: format!(
                                                "duplicate field tag {}",
                                                tag.name()
                                            ),
                                        });
                                    }
                                    fields.push((tag.clone(), values.into_iter().next().unwrap()));
                                    rest = &args[1].body;
                                }
                                Term::Cons { head, args, .. }
                                    if head.name() == "ANil" && args.is_empty() =>
                                {
                                    break;
                                }
                                other => {
                                    return Err(VmError::NotAlgebra {
                                        term: other.clone(),
                                    })
                                }
                            }
                        }
                        Ok(vec![Value::Tuple(fields)])
                    }
                    "Extract" => {
                        let (tup, tag) = two_plain(t)?;
                        let tag = match tag {
                            Term::Var(v) => v,
                            other => {
                                return Err(VmError::NotAlgebra {
                                    term: other.clone(),
                                })
                            }
                        };
                        let stream = self.eval(tup, env)?;
                        match stream.as_slice() {
                            [Value::Tuple(fields)] => fields
                                .iter()
                                .find(|(k, _)| k == tag)
                                .map(|(_, v)| vec![v.clone()])
                                .ok_or_else(|| VmError::MissingField {
                                    field: tag.name().to_string(),
                                    tuple: Value::Tuple(fields.clone()),
                                }),
                            [other] => Err(VmError::NotATuple {
                                context: "Extract",
                                value: other.clone(),
                            }),
                            other => Err(VmError::NotSingle {
                                context: "Extract",
                                count: other.len(),
                            }),
                        }
                    }
                    "Concat" => {
                        let (a, b) = two_plain(t)?;
                        let mut out = self.eval(a, env)?;
                        out.extend(self.eval(b, env)?);
                        Ok(out)
                    }
                    "Call" => {
                        let (f, args_term) = two_plain(t)?;
                        let fname = match f {
                            Term::Cons { head, args, .. } if args.is_empty() => head.name(),
                            other => {
                                return Err(VmError::NotAlgebra {
                                    term: other.clone(),
                                })
                            }
                        };
                        let args = self.eval(args_term, env)?;
                        builtin(fname, &args, self.store)
                    }
                    "If" => {
                        let (c, th, el) = three_plain(t)?;
                        match self.eval(c, env)?.as_slice() {
                            [Value::Bool(true)] => self.eval(th, env),
                            [Value::Bool(false)] => self.eval(el, env),
                            other => Err(VmError::NonBooleanCondition {
                                value: other.first().cloned().unwrap_or(Value::Bool(false)),
                            }),
                        }
                    }
                    "Elem" => {
                        let (n, content) = two_plain(t)?;
                        let tags = self.eval(n, env)?;
                        if tags.len() != 1 {
                            return Err(VmError::NotSingle {
                                context: "Elem tag",
                                count: tags.len(),
                            });
                        }
                        let tag = tag_text(&tags[0])?;
                        let children = self.eval(content, env)?;
                        Ok(vec![Value::Element { tag, children }])
                    }
                    _ => Err(VmError::NotAlgebra { term: t.clone() }),
                }
            }
            Term::Meta { .. } => Err(VmError::NotAlgebra { term: t.clone() }),
        }
    }
}

/// Splits `Op[Dep x . body, rel]`.
fn dep_node(t: &Term) -> Result<(&Variable, &Term, &Term), VmError> {
    if let Term::Cons { args, .. } = t {
        if args.len() == 2 && args.iter().all(|s| s.binders.is_empty()) {
            if let Term::Cons { head, args: dep_args, .. } = &args[0].body {
                if head.name() == "Dep"
                    && dep_args.len() == 1
                    && dep_args[0].binders.len() == 1
                {
                    return Ok((
                        &dep_args[0].binders[0],
                        &dep_args[0].body,
                        &args[1].body,
                    ));
                }
            }
        }
    }
    Err(VmError::NotAlgebra { term: t.clone() })
}

fn one_plain(t: &Term) -> Result<&Term, VmError> {
    if let Term::Cons { args, .. } = t {
        if args.len() == 1 && args[0].binders.is_empty() {
            return Ok(&args[0].body);
        }
    }
    Err(VmError::NotAlgebra { term: t.clone() })
}

fn two_plain(t: &Term) -> Result<(&Term, &Term), VmError> {
    if let Term::Cons { args, .. } = t {
        if args.len() == 2 && args.iter().all(|s| s.binders.is_empty()) {
            return Ok((&args[0].body, &args[1].body));
        }
    }
    Err(VmError::NotAlgebra { term: t.clone() })
}

fn three_plain(t: &Term) -> Result<(&Term, &Term, &Term), VmError> {
    if let Term::Cons { args, .. } = t {
        if args.len() == 3 && args.iter().all(|s| s.binders.is_empty()) {
            return Ok((&args[0].body, &args[1].body, &args[2].body));
        }
    }
    Err(VmError::NotAlgebra { term: t.clone() })
}

/// Splits the `(f t)` application pair of an `ACons` row entry.
fn field_pair(t: &Term) -> Result<(&Variable, &Term), VmError> {
    if let Term::Cons { head, args, .. } = t {
        if head.name() == "@" && args.len() == 2 && args.iter().all(|s| s.binders.is_empty()) {
            if let Term::Var(v) = &args[0].body {
                return Ok((v, &args[1].body));
            }
        }
    }
    Err(VmError::NotAlgebra { term: t.clone() })
}

// ---------------------------------------------------------------------
// Target execution
// ---------------------------------------------------------------------

/// Runs a `TMain[in out . body]` program: `in` carries a stream holding one
/// empty tuple, `out` collects the result.
pub fn run_target(prog: &Term, store: &Store) -> Result<Stream, VmError> {
    let scope = match prog {
        Term::Cons { head, args, .. }
            if head.name() == "TMain" && args.len() == 1 && args[0].binders.len() == 2 =>
        {
            &args[0]
        }
        other => return Err(VmError::NotTarget { term: other.clone() }),
    };
    let mut vm = Vm {
        store,
        sinks: vec![Vec::new()],
    };
    let out_sink = 0usize;
    let mut env = TargetEnv::new();
    env.insert(scope.binders[0].uid(), Binding::Input);
    env.insert(scope.binders[1].uid(), Binding::Sink(out_sink));
    vm.exec(&scope.body, &env, out_sink)?;
    Ok(std::mem::take(&mut vm.sinks[out_sink]))
}

#[derive(Debug, Clone)]
enum Binding {
    /// The input stream cursor bound by TMain.
    Input,
    /// A cursor holding the current value of an iteration.
    Value(Value),
    /// A handler that receives values.
    Sink(usize),
}

type TargetEnv = HashMap<u64, Binding>;

struct Vm<'a> {
    store: &'a Store,
    sinks: Vec<Vec<Value>>,
}

impl<'a> Vm<'a> {
    fn new_sink(&mut self) -> usize {
        self.sinks.push(Vec::new());
        self.sinks.len() - 1
    }

    fn sink_of(&self, env: &TargetEnv, v: &Variable) -> Result<usize, VmError> {
        match env.get(&v.uid()) {
            Some(Binding::Sink(i)) => Ok(*i),
            _ => Err(VmError::Unbound {
                role: "handler",
                name: v.name().to_string(),
            }),
        }
    }

    fn cursor_values(&self, env: &TargetEnv, v: &Variable) -> Result<Stream, VmError> {
        match env.get(&v.uid()) {
            Some(Binding::Value(val)) => Ok(vec![val.clone()]),
            Some(Binding::Input) => Ok(vec![UNIT_TUPLE]),
            _ => Err(VmError::Unbound {
                role: "cursor",
                name: v.name().to_string(),
            }),
        }
    }

    fn cursor_single(&self, env: &TargetEnv, v: &Variable) -> Result<Value, VmError> {
        match env.get(&v.uid()) {
            Some(Binding::Value(val)) => Ok(val.clone()),
            _ => Err(VmError::Unbound {
                role: "cursor",
                name: v.name().to_string(),
            }),
        }
    }

    /// Executes one instruction. `dyn_sink` is the handler of the nearest
    /// enclosing producer position; instructions without an explicit result
    /// handler (TMakeElement, two-argument TCall) emit there.
    fn exec(&mut self, t: &Term, env: &TargetEnv, dyn_sink: usize) -> Result<(), VmError> {
        let (head, args) = match t {
            Term::Cons { head, args, .. } => (head.name(), args),
            other => return Err(VmError::NotTarget { term: other.clone() }),
        };
        match head {
            "TNoop" | "TEmpty" => Ok(()),
            "TSeq" => {
                let (a, b) = two_plain(t)?;
                self.exec(a, env, dyn_sink)?;
                self.exec(b, env, dyn_sink)
            }
            "TPipe" => {
                // TPipe[h . producer, c . consumer]: the producer fills the
                // handler's buffer, then the consumer runs once per value.
                if args.len() != 2
                    || args[0].binders.len() != 1
                    || args[1].binders.len() != 1
                {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let buffer = self.new_sink();
                let mut penv = env.clone();
                penv.insert(args[0].binders[0].uid(), Binding::Sink(buffer));
                self.exec(&args[0].body, &penv, buffer)?;
                let values = std::mem::take(&mut self.sinks[buffer]);
                for v in values {
                    let mut cenv = env.clone();
                    cenv.insert(args[1].binders[0].uid(), Binding::Value(v));
                    self.exec(&args[1].body, &cenv, dyn_sink)?;
                }
                Ok(())
            }
            "TCopy" => {
                let (src, h) = two_vars(t)?;
                let values = self.cursor_values(env, src)?;
                let sink = self.sink_of(env, h)?;
                self.sinks[sink].extend(values);
                Ok(())
            }
            "TLiteral" => {
                let (lit, h) = two_plain(t)?;
                let value = match lit {
                    Term::Cons { head, args, .. } if args.is_empty() => {
                        literal_value(head.name())
                    }
                    other => return Err(VmError::NotTarget { term: other.clone() }),
                };
                let h = as_var(h)?;
                let sink = self.sink_of(env, h)?;
                self.sinks[sink].push(value);
                Ok(())
            }
            "TCall" => {
                // TCall[f, argsh . A, h?]: buffer the argument code's
                // emissions, apply the builtin, and send the results to the
                // explicit handler or the dynamically enclosing one.
                if args.len() < 2 || args.len() > 3 || !args[0].binders.is_empty() {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let fname = match &args[0].body {
                    Term::Cons { head, args, .. } if args.is_empty() => head.name(),
                    other => return Err(VmError::NotTarget { term: other.clone() }),
                };
                if args[1].binders.len() != 1 {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let buffer = self.new_sink();
                let mut aenv = env.clone();
                aenv.insert(args[1].binders[0].uid(), Binding::Sink(buffer));
                self.exec(&args[1].body, &aenv, buffer)?;
                let arg_values = std::mem::take(&mut self.sinks[buffer]);
                let results = builtin(fname, &arg_values, self.store)?;
                let sink = if args.len() == 3 {
                    self.sink_of(env, as_var(&args[2].body)?)?
                } else {
                    dyn_sink
                };
                self.sinks[sink].extend(results);
                Ok(())
            }
            "TMakeTuple" => {
                // TMakeTuple[desc, vh . V, h]: zip the descriptor's field
                // tags positionally with the buffered values.
                if args.len() != 3 || !args[0].binders.is_empty() || args[1].binders.len() != 1
                {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let fields = descriptor_fields(&args[0].body)?;
                let buffer = self.new_sink();
                let mut venv = env.clone();
                venv.insert(args[1].binders[0].uid(), Binding::Sink(buffer));
                self.exec(&args[1].body, &venv, buffer)?;
                let values = std::mem::take(&mut self.sinks[buffer]);
                if values.len() != fields.len() {
                    return Err(VmError::TupleShape {
                        fields: fields.len(),
                        values: values.len(),
                    });
                }
                let tuple = Value::Tuple(fields.into_iter().zip(values).collect());
                let sink = self.sink_of(env, as_var(&args[2].body)?)?;
                self.sinks[sink].push(tuple);
                Ok(())
            }
            "TPick" => {
                // Register lookup: field of the tuple held by a cursor.
                if args.len() != 3 || args.iter().any(|s| !s.binders.is_empty()) {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let cur = as_var(&args[0].body)?;
                let field = as_var(&args[1].body)?;
                let h = as_var(&args[2].body)?;
                let value = self.cursor_single(env, cur)?;
                let fields = match &value {
                    Value::Tuple(fields) => fields,
                    other => {
                        return Err(VmError::NotATuple {
                            context: "TPick",
                            value: other.clone(),
                        })
                    }
                };
                let picked = fields
                    .iter()
                    .find(|(k, _)| k == field)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| VmError::MissingField {
                        field: field.name().to_string(),
                        tuple: value.clone(),
                    })?;
                let sink = self.sink_of(env, h)?;
                self.sinks[sink].push(picked);
                Ok(())
            }
            "TMerge" => {
                // Frame merge: the right cursor's fields win.
                if args.len() != 3 || args.iter().any(|s| !s.binders.is_empty()) {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let left = self.cursor_single(env, as_var(&args[0].body)?)?;
                let right = self.cursor_single(env, as_var(&args[1].body)?)?;
                let merged = merge(&left, &right, "TMerge")?;
                let sink = self.sink_of(env, as_var(&args[2].body)?)?;
                self.sinks[sink].push(merged);
                Ok(())
            }
            "TSwitch" => {
                // TSwitch[caseh . scrutinee, cases]: the single buffered
                // value selects a case by tag, else TOtherwise.
                if args.len() != 2 || args[0].binders.len() != 1 || !args[1].binders.is_empty()
                {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let buffer = self.new_sink();
                let mut senv = env.clone();
                senv.insert(args[0].binders[0].uid(), Binding::Sink(buffer));
                self.exec(&args[0].body, &senv, buffer)?;
                let values = std::mem::take(&mut self.sinks[buffer]);
                if values.len() != 1 {
                    return Err(VmError::NotSingle {
                        context: "TSwitch scrutinee",
                        count: values.len(),
                    });
                }
                let scrutinee = values.into_iter().next().unwrap();
                let mut case = &args[1].body;
                loop {
                    match case {
                        Term::Cons { head, args, .. }
                            if head.name() == "TCase" && args.len() == 3 =>
                        {
                            if value_matches_tag(&scrutinee, &args[0].body) {
                                return self.exec(&args[1].body, env, dyn_sink);
                            }
                            case = &args[2].body;
                        }
                        Term::Cons { head, args, .. }
                            if head.name() == "TOtherwise" && args.len() == 1 =>
                        {
                            return self.exec(&args[0].body, env, dyn_sink);
                        }
                        other => return Err(VmError::NotTarget { term: other.clone() }),
                    }
                }
            }
            "TMakeElement" => {
                // TMakeElement[lh . L, ch . C]: L's single value is the tag,
                // C's buffered values are the children; the element goes to
                // the dynamically enclosing handler.
                if args.len() != 2 || args[0].binders.len() != 1 || args[1].binders.len() != 1
                {
                    return Err(VmError::NotTarget { term: t.clone() });
                }
                let lbuf = self.new_sink();
                let mut lenv = env.clone();
                lenv.insert(args[0].binders[0].uid(), Binding::Sink(lbuf));
                self.exec(&args[0].body, &lenv, lbuf)?;
                let tags = std::mem::take(&mut self.sinks[lbuf]);
                if tags.len() != 1 {
                    return Err(VmError::NotSingle {
                        context: "TMakeElement tag",
                        count: tags.len(),
                    });
                }
                let tag = tag_text(&tags[0])?;
                let cbuf = self.new_sink();
                let mut cenv = env.clone();
                cenv.insert(args[1].binders[0].uid(), Binding::Sink(cbuf));
                self.exec(&args[1].body, &cenv, cbuf)?;
                let children = std::mem::take(&mut self.sinks[cbuf]);
                self.sinks[dyn_sink].push(Value::Element { tag, children });
                Ok(())
            }
            _ => Err(VmError::NotTarget { term: t.clone() }),
        }
    }
}

fn as_var(t: &Term) -> Result<&Variable, VmError> {
    match t {
        Term::Var(v) => Ok(v),
        other => Err(VmError::NotTarget { term: other.clone() }),
    }
}

fn two_vars(t: &Term) -> Result<(&Variable, &Variable), VmError> {
    let (a, b) = two_plain(t)?;
    Ok((as_var(a)?, as_var(b)?))
}

/// Walks `TDCons[f, ...]`/`TDNil` into the ordered field-tag list.
fn descriptor_fields(t: &Term) -> Result<Vec<Variable>, VmError> {
    let mut out = Vec::new();
    let mut cur = t;
    loop {
        match cur {
            Term::Cons { head, args, .. } if head.name() == "TDCons" && args.len() == 2 => {
                out.push(as_var(&args[0].body)?.clone());
                cur = &args[1].body;
            }
            Term::Cons { head, args, .. } if head.name() == "TDNil" && args.is_empty() => {
                return Ok(out)
            }
            other => return Err(VmError::NotTarget { term: other.clone() }),
        }
    }
}

/// Bool true matches the tag `True`; elements match by tag; literals by
/// their value.
fn value_matches_tag(v: &Value, tag: &Term) -> bool {
    let name = match tag {
        Term::Cons { head, args, .. } if args.is_empty() => head.name(),
        _ => return false,
    };
    match v {
        Value::Bool(true) => name == "True",
        Value::Bool(false) => name == "False",
        Value::Num(n) => name == n.to_string(),
        Value::Str(s) => name == s,
        Value::Element { tag, .. } => name == tag,
        Value::Tuple(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hors::parse_term;

    #[test]
    fn store_from_text() {
        let store = Store::from_text("1\n2\n3\n").unwrap();
        match &store.document {
            Value::Element { tag, children } => {
                assert_eq!(tag, "doc");
                assert_eq!(children.len(), 3);
            }
            _ => panic!(),
        }
        assert!(Store::from_text("1\nx\n").is_err());
    }

    #[test]
    fn eval_empty_program_is_empty_stream() {
        let t = parse_term("Algebraic[(Dep id . Empty)]").unwrap();
        let out = eval_algebra(&t, &Store::with_children(&[1])).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn run_noop_program_is_empty_stream() {
        let t = parse_term("TMain[in out . TPipe[h . TCopy[in, h], id . TNoop]]").unwrap();
        let out = run_target(&t, &Store::with_children(&[1, 2])).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn run_literal_program() {
        let t =
            parse_term("TMain[in out . TPipe[h . TCopy[in, h], id . TLiteral[\"7\", out]]]")
                .unwrap();
        let out = run_target(&t, &Store::with_children(&[])).unwrap();
        assert_eq!(out, vec![Value::Num(7)]);
    }

    #[test]
    fn eval_figure_algebra_gives_doubled_diagonal() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/fig4.term"
        ))
        .unwrap();
        let t = parse_term(&text).unwrap();
        let store = Store::with_children(&[1, 2, 3]);
        let out = eval_algebra(&t, &store).unwrap();
        assert_eq!(out, vec![Value::Num(2), Value::Num(4), Value::Num(6)]);
    }

    #[test]
    fn eval_optimized_figure_agrees() {
        let fig4 = parse_term(
            &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fig4.term"))
                .unwrap(),
        )
        .unwrap();
        let fig6 = parse_term(
            &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fig6.term"))
                .unwrap(),
        )
        .unwrap();
        let store = Store::with_children(&[4, 7]);
        assert_eq!(
            eval_algebra(&fig4, &store).unwrap(),
            eval_algebra(&fig6, &store).unwrap()
        );
    }

    #[test]
    fn product_cardinality_is_multiplicative() {
        let t = parse_term(
            "Algebraic[(Dep id . Product[Map[(Dep i . Tuple[ACons[(f i), ANil]]), Call[\"child\", Call[\"doc\", Empty]]], Map[(Dep j . Tuple[ACons[(g j), ANil]]), Call[\"child\", Call[\"doc\", Empty]]]])]",
        )
        .unwrap();
        let store = Store::with_children(&[1, 2, 3]);
        let out = eval_algebra(&t, &store).unwrap();
        assert_eq!(out.len(), 9);
    }

    #[test]
    fn unknown_builtin_errors() {
        let t = parse_term("Algebraic[(Dep id . Call[\"frobnicate\", Empty])]").unwrap();
        match eval_algebra(&t, &Store::with_children(&[])) {
            Err(VmError::UnknownBuiltin { name }) => assert_eq!(name, "frobnicate"),
            other => panic!("expected unknown builtin, got {other:?}"),
        }
    }

    #[test]
    fn tpick_missing_field_errors() {
        let t = parse_term(
            "TMain[in out . TPipe[h . TCopy[in, h], id . TPick[id, f, out]]]",
        )
        .unwrap();
        match run_target(&t, &Store::with_children(&[])) {
            Err(VmError::MissingField { field, .. }) => assert_eq!(field, "f"),
            other => panic!("expected missing field, got {other:?}"),
        }
    }
}
