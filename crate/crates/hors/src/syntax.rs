//! Textual notation for terms and rule files.
//!
//! Term notation, with all abbreviations accepted on input:
//!
//! * `(t)` is `t`; `C v1 v2 . t` nests to `C[v1.C[v2.t]]`; juxtaposition
//!   `t1 t2` is `@[t1, t2]`, left recursive; `(a;b;)` builds
//!   `$Cons`/`$Nil` lists, right recursive with omitted segments reading as
//!   `$Nil`; `[]` may be omitted.
//! * `{e}` environment prefixes attach to the construction that follows.
//! * `v"..."` quotes variable names, `"..."` quotes constructor names, and
//!   names containing `#` are meta-variables.
//! * Bare integers are literal constructors.
//!
//! Rule files (`.crs`) hold units terminated by `;`. A unit is either a
//! `$Check[Name]` declaration or a rule
//! `name[options] : pattern → contraction` where the name may be `-` (or
//! missing entirely) to get a generated default name, and `→` is U+2192.
//! `//` introduces comments.

use crate::rule::{OptionKind, Rule, RuleOptions};
use crate::term::{Constructor, EnvKey, Environment, Scope, Term, Variable};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// A region of source text, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    fn point(line: u32, col: u32) -> Self {
        SourceSpan {
            line,
            col,
            end_line: line,
            end_col: col,
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{span}: {message}")]
    Syntax { span: SourceSpan, message: String },
    #[error("rule {rule}: {source}")]
    InvalidRule {
        rule: String,
        #[source]
        source: crate::rule::RuleError,
    },
}

impl ParseError {
    fn at(span: SourceSpan, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            span,
            message: message.into(),
        }
    }
}

/// A parsed rule file: declarations followed by validated rules.
#[derive(Debug, Clone)]
pub struct RuleFile {
    pub declarations: Vec<String>,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Dot,
    Arrow,
    Hyphen,
    /// Bare identifier: variable, constructor, or meta-variable.
    Ident(String),
    /// `"..."` quoted constructor name.
    QuotedCon(String),
    /// `v"..."` quoted variable name.
    QuotedVar(String),
    /// Integer literal constructor.
    Num(String),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::LBrack => write!(f, "'['"),
            Tok::RBrack => write!(f, "']'"),
            Tok::LBrace => write!(f, "'{{'"),
            Tok::RBrace => write!(f, "'}}'"),
            Tok::Comma => write!(f, "','"),
            Tok::Semi => write!(f, "';'"),
            Tok::Colon => write!(f, "':'"),
            Tok::Dot => write!(f, "'.'"),
            Tok::Arrow => write!(f, "'→'"),
            Tok::Hyphen => write!(f, "'-'"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::QuotedCon(s) => write!(f, "'\"{s}\"'"),
            Tok::QuotedVar(s) => write!(f, "'v\"{s}\"'"),
            Tok::Num(s) => write!(f, "'{s}'"),
        }
    }
}

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$' || c == '#'
}

fn lex(src: &str) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    loop {
        let (l0, c0) = (line, col);
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(ParseError::at(
                        SourceSpan::point(l0, c0),
                        "expected '//' comment",
                    ));
                }
            }
            '(' | ')' | '[' | ']' | '{' | '}' | ',' | ';' | ':' | '.' | '-' | '@' => {
                bump!();
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBrack,
                    ']' => Tok::RBrack,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    ':' => Tok::Colon,
                    '.' => Tok::Dot,
                    '-' => Tok::Hyphen,
                    _ => Tok::Ident("@".to_string()),
                };
                out.push((tok, SourceSpan::point(l0, c0)));
            }
            '→' => {
                bump!();
                out.push((Tok::Arrow, SourceSpan::point(l0, c0)));
            }
            '"' => {
                bump!();
                let name = lex_quoted(&mut || bump!(), l0, c0)?;
                out.push((
                    Tok::QuotedCon(name),
                    SourceSpan {
                        line: l0,
                        col: c0,
                        end_line: line,
                        end_col: col,
                    },
                ));
            }
            '∀' => {
                bump!();
                out.push((Tok::Ident("∀".to_string()), SourceSpan::point(l0, c0)));
            }
            _ if c == 'v' => {
                // Could be a quoted variable v"..." or an ordinary name.
                bump!();
                if chars.peek() == Some(&'"') {
                    bump!();
                    let name = lex_quoted(&mut || bump!(), l0, c0)?;
                    out.push((
                        Tok::QuotedVar(name),
                        SourceSpan {
                            line: l0,
                            col: c0,
                            end_line: line,
                            end_col: col,
                        },
                    ));
                } else {
                    let mut name = String::from("v");
                    while let Some(&c) = chars.peek() {
                        if ident_char(c) {
                            name.push(c);
                            bump!();
                        } else {
                            break;
                        }
                    }
                    out.push((Tok::Ident(name), SourceSpan::point(l0, c0)));
                }
            }
            _ if c.is_ascii_digit() => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                if chars.peek().map(|&c| ident_char(c)).unwrap_or(false) {
                    return Err(ParseError::at(
                        SourceSpan::point(l0, c0),
                        "malformed number",
                    ));
                }
                out.push((Tok::Num(text), SourceSpan::point(l0, c0)));
            }
            _ if ident_char(c) => {
                let mut name = String::new();
                while let Some(&c) = chars.peek() {
                    if ident_char(c) {
                        name.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(name), SourceSpan::point(l0, c0)));
            }
            other => {
                return Err(ParseError::at(
                    SourceSpan::point(l0, c0),
                    format!("unexpected character '{other}'"),
                ));
            }
        }
    }
    Ok(out)
}

fn lex_quoted(
    bump: &mut impl FnMut() -> Option<char>,
    line: u32,
    col: u32,
) -> Result<String, ParseError> {
    let mut name = String::new();
    loop {
        match bump() {
            Some('"') => return Ok(name),
            Some('\\') => match bump() {
                Some('"') => name.push('"'),
                Some('\\') => name.push('\\'),
                other => {
                    return Err(ParseError::at(
                        SourceSpan::point(line, col),
                        format!("bad escape {other:?} in quoted name"),
                    ))
                }
            },
            Some(c) => name.push(c),
            None => {
                return Err(ParseError::at(
                    SourceSpan::point(line, col),
                    "unterminated quoted name",
                ))
            }
        }
    }
}

/// Parses one term. Free variable occurrences with the same name resolve to
/// the same [`Variable`] within this call.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks);
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

/// Parses a rule file. Every rule is validated before acceptance; rules
/// named `-` (or written without a name) get the default name
/// `rule@<index>`.
pub fn parse_rule_file(src: &str) -> Result<RuleFile, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser::new(&toks);
    p.rule_file()
}

struct Parser<'a> {
    toks: &'a [(Tok, SourceSpan)],
    pos: usize,
    /// Lexical scopes for binder resolution, innermost last.
    scopes: Vec<Vec<Variable>>,
    /// Free variables interned by name for the duration of the parse.
    free: HashMap<String, Variable>,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [(Tok, SourceSpan)]) -> Self {
        Parser {
            toks,
            pos: 0,
            scopes: Vec::new(),
            free: HashMap::new(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.pos + n).map(|(t, _)| t)
    }

    fn span(&self) -> SourceSpan {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, s)| s.clone())
            .unwrap_or_else(|| SourceSpan::point(1, 1))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(ParseError::at(
                self.span(),
                match self.peek() {
                    Some(t) => format!("expected {tok}, found {t}"),
                    None => format!("expected {tok}, found end of input"),
                },
            ))
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(ParseError::at(
                self.span(),
                format!("unexpected {}", self.peek().unwrap()),
            ))
        }
    }

    fn lookup_var(&mut self, name: &str) -> Term {
        for scope in self.scopes.iter().rev() {
            for v in scope.iter().rev() {
                if v.name() == name {
                    return Term::Var(v.clone());
                }
            }
        }
        let v = self
            .free
            .entry(name.to_string())
            .or_insert_with(|| Variable::new(name))
            .clone();
        Term::Var(v)
    }

    fn starts_term(&self) -> bool {
        matches!(
            self.peek(),
            Some(
                Tok::LParen
                    | Tok::LBrace
                    | Tok::Ident(_)
                    | Tok::QuotedCon(_)
                    | Tok::QuotedVar(_)
                    | Tok::Num(_)
            )
        )
    }

    /// A full term: one or more primaries combined by juxtaposition.
    fn term(&mut self) -> Result<Term, ParseError> {
        let mut t = self.primary()?;
        while self.starts_term() {
            let rhs = self.primary()?;
            t = Term::apply(t, rhs);
        }
        Ok(t)
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        let span = self.span();
        match self.next() {
            Some(Tok::LParen) => {
                if self.eat(&Tok::RParen) {
                    return Ok(Term::leaf("$Nil"));
                }
                let first = self.term()?;
                if self.peek() == Some(&Tok::Semi) {
                    let mut items = vec![first];
                    let mut tail = Term::leaf("$Nil");
                    while self.eat(&Tok::Semi) {
                        if self.eat(&Tok::RParen) {
                            return Ok(build_list(items, tail));
                        }
                        items.push(self.term()?);
                    }
                    // `(a;b;tail)` without a trailing semicolon: the last
                    // item is the tail.
                    tail = items.pop().unwrap();
                    self.expect(Tok::RParen)?;
                    Ok(build_list(items, tail))
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            Some(Tok::LBrace) => {
                let env = self.environment()?;
                let head = match self.next() {
                    Some(Tok::Ident(name)) if classify(&name) == Class::Con => name,
                    Some(Tok::QuotedCon(name)) => name,
                    Some(Tok::Num(name)) => name,
                    other => {
                        return Err(ParseError::at(
                            span,
                            format!(
                                "environment prefix must precede a construction, found {}",
                                other.map(|t| t.to_string()).unwrap_or("end of input".into())
                            ),
                        ))
                    }
                };
                self.construction(env, head)
            }
            Some(Tok::Ident(name)) => match classify(&name) {
                Class::Meta => {
                    let args = if self.peek() == Some(&Tok::LBrack) {
                        self.meta_args()?
                    } else {
                        Vec::new()
                    };
                    Ok(Term::Meta { name, args })
                }
                Class::Var => Ok(self.lookup_var(&name)),
                Class::Con => self.construction(Environment::new(), name),
            },
            Some(Tok::QuotedCon(name)) => self.construction(Environment::new(), name),
            Some(Tok::Num(name)) => self.construction(Environment::new(), name),
            Some(Tok::QuotedVar(name)) => Ok(self.lookup_var(&name)),
            other => Err(ParseError::at(
                span,
                match other {
                    Some(t) => format!("expected a term, found {t}"),
                    None => "expected a term, found end of input".to_string(),
                },
            )),
        }
    }

    /// Argument brackets or the `C v1 v2 . body` abstraction sugar after a
    /// constructor name.
    fn construction(&mut self, env: Environment, head: String) -> Result<Term, ParseError> {
        if let Some(n) = self.binder_lookahead() {
            let binders = self.binders(n)?;
            self.expect(Tok::Dot)?;
            self.scopes.push(binders.clone());
            let body = self.term()?;
            self.scopes.pop();
            let mut t = body;
            for v in binders.into_iter().rev() {
                t = Term::cons_env(
                    Environment::new(),
                    head.clone(),
                    vec![Scope::new(vec![v], t)],
                );
            }
            // The sugar can't carry the environment further in: attach it
            // to the outermost construction.
            if let (Term::Cons { env: e, .. }, false) = (&mut t, env.is_empty()) {
                *e = env;
            }
            return Ok(t);
        }
        if self.peek() == Some(&Tok::LBrack) {
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(&Tok::RBrack) {
                loop {
                    args.push(self.scope()?);
                    if self.eat(&Tok::RBrack) {
                        break;
                    }
                    self.expect(Tok::Comma)?;
                }
            }
            Ok(Term::cons_env(env, head, args))
        } else {
            Ok(Term::cons_env(env, head, Vec::new()))
        }
    }

    /// Counts leading variable tokens followed by a dot; zero means no
    /// binder sugar at this position.
    fn binder_lookahead(&self) -> Option<usize> {
        let mut n = 0;
        loop {
            match self.peek_at(n) {
                Some(Tok::Ident(name)) if classify(name) == Class::Var => n += 1,
                Some(Tok::QuotedVar(_)) => n += 1,
                Some(Tok::Dot) if n > 0 => return Some(n),
                _ => return None,
            }
        }
    }

    fn binders(&mut self, n: usize) -> Result<Vec<Variable>, ParseError> {
        let mut out: Vec<Variable> = Vec::with_capacity(n);
        for _ in 0..n {
            let span = self.span();
            let name = match self.next() {
                Some(Tok::Ident(name)) => name,
                Some(Tok::QuotedVar(name)) => name,
                _ => unreachable!("binder_lookahead checked"),
            };
            if out.iter().any(|v| v.name() == name) {
                return Err(ParseError::at(
                    span,
                    format!("binder name '{name}' reused within one scope"),
                ));
            }
            out.push(Variable::new(name));
        }
        Ok(out)
    }

    /// One construction argument: optional binders, then a body.
    fn scope(&mut self) -> Result<Scope, ParseError> {
        if let Some(n) = self.binder_lookahead() {
            let binders = self.binders(n)?;
            self.expect(Tok::Dot)?;
            self.scopes.push(binders.clone());
            let body = self.term()?;
            self.scopes.pop();
            Ok(Scope::new(binders, body))
        } else {
            Ok(Scope::plain(self.term()?))
        }
    }

    fn meta_args(&mut self) -> Result<Vec<Term>, ParseError> {
        self.expect(Tok::LBrack)?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RBrack) {
            loop {
                args.push(self.term()?);
                if self.eat(&Tok::RBrack) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(args)
    }

    /// `{#rho; key: value; ...}` with at most one capture meta-variable.
    fn environment(&mut self) -> Result<Environment, ParseError> {
        let mut env = Environment::new();
        if self.eat(&Tok::RBrace) {
            return Ok(env);
        }
        loop {
            let span = self.span();
            match self.next() {
                Some(Tok::Ident(name)) if classify(&name) == Class::Meta => {
                    if env.capture.replace(name).is_some() {
                        return Err(ParseError::at(
                            span,
                            "environment has more than one capture meta-variable",
                        ));
                    }
                }
                Some(tok) => {
                    let key = match tok {
                        Tok::Ident(name) => match classify(&name) {
                            Class::Var => match self.lookup_var(&name) {
                                Term::Var(v) => EnvKey::Var(v),
                                _ => unreachable!(),
                            },
                            Class::Con => EnvKey::Con(Constructor::new(name)),
                            Class::Meta => unreachable!(),
                        },
                        Tok::QuotedVar(name) => match self.lookup_var(&name) {
                            Term::Var(v) => EnvKey::Var(v),
                            _ => unreachable!(),
                        },
                        Tok::QuotedCon(name) | Tok::Num(name) => {
                            EnvKey::Con(Constructor::new(name))
                        }
                        other => {
                            return Err(ParseError::at(
                                span,
                                format!("expected environment key, found {other}"),
                            ))
                        }
                    };
                    self.expect(Tok::Colon)?;
                    let value = self.term()?;
                    if env
                        .entries
                        .iter()
                        .any(|(k, _)| render_key(k) == render_key(&key))
                    {
                        return Err(ParseError::at(span, "duplicate environment key"));
                    }
                    env.entries.push((key, value));
                }
                None => {
                    return Err(ParseError::at(span, "unterminated environment"));
                }
            }
            if self.eat(&Tok::RBrace) {
                return Ok(env);
            }
            self.expect(Tok::Semi)?;
            // Tolerate a trailing semicolon before the closing brace.
            if self.eat(&Tok::RBrace) {
                return Ok(env);
            }
        }
    }

    // ---- rule files ----

    fn rule_file(&mut self) -> Result<RuleFile, ParseError> {
        let mut declarations = Vec::new();
        let mut rules = Vec::new();
        while self.peek().is_some() {
            if let Some(Tok::Ident(name)) = self.peek() {
                if name == "$Check" && self.peek_at(1) == Some(&Tok::LBrack) {
                    self.pos += 2;
                    let span = self.span();
                    let what = match self.next() {
                        Some(Tok::Ident(n)) => n,
                        Some(Tok::QuotedCon(n)) => n,
                        other => {
                            return Err(ParseError::at(
                                span,
                                format!(
                                    "expected a name in $Check, found {}",
                                    other
                                        .map(|t| t.to_string())
                                        .unwrap_or("end of input".into())
                                ),
                            ))
                        }
                    };
                    self.expect(Tok::RBrack)?;
                    self.expect(Tok::Semi)?;
                    declarations.push(what);
                    continue;
                }
            }
            let index = rules.len();
            let rule = self.rule(index)?;
            let name = rule.name.clone();
            let rule = crate::rule::validate_rule(rule).map_err(|e| ParseError::InvalidRule {
                rule: name,
                source: e,
            })?;
            rules.push(rule);
        }
        Ok(RuleFile {
            declarations,
            rules,
        })
    }

    fn rule(&mut self, index: usize) -> Result<Rule, ParseError> {
        // Fresh name scopes per rule; pattern and contraction share interned
        // free variables.
        self.scopes.clear();
        self.free.clear();
        let (name, options) = self.rule_prefix(index)?;
        let pattern = self.term()?;
        self.expect(Tok::Arrow)?;
        let contraction = self.term()?;
        self.expect(Tok::Semi)?;
        Ok(Rule {
            name,
            options,
            pattern,
            contraction,
        })
    }

    /// Detects and consumes `name[options] :` or `name :` or the same with
    /// `-` in place of the name. Returns defaults when no prefix is present.
    fn rule_prefix(&mut self, index: usize) -> Result<(String, RuleOptions), ParseError> {
        let start = self.pos;
        let name = match self.peek() {
            Some(Tok::Hyphen) => {
                self.pos += 1;
                None
            }
            Some(Tok::Ident(n)) if !n.contains('#') => {
                let mut n = n.clone();
                self.pos += 1;
                // Generated default names look like `rule@3`.
                if self.peek() == Some(&Tok::Ident("@".to_string())) {
                    if let Some(Tok::Num(k)) = self.peek_at(1) {
                        n = format!("{n}@{k}");
                        self.pos += 2;
                    }
                }
                Some(n)
            }
            _ => {
                return Ok((format!("rule@{index}"), RuleOptions::default()));
            }
        };
        // Options bracket?
        let mut options = RuleOptions::default();
        if self.peek() == Some(&Tok::LBrack) {
            // Only a prefix if a colon follows the balanced bracket.
            let mut depth = 0usize;
            let mut probe = self.pos;
            loop {
                match self.toks.get(probe).map(|(t, _)| t) {
                    Some(Tok::LBrack) => depth += 1,
                    Some(Tok::RBrack) => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    Some(_) => {}
                    None => break,
                }
                probe += 1;
            }
            if self.toks.get(probe + 1).map(|(t, _)| t) == Some(&Tok::Colon) {
                self.pos += 1;
                loop {
                    options.merge(self.option()?);
                    if self.eat(&Tok::RBrack) {
                        break;
                    }
                    self.expect(Tok::Comma)?;
                }
                self.expect(Tok::Colon)?;
                return Ok((name.unwrap_or_else(|| format!("rule@{index}")), options));
            }
            self.pos = start;
            return Ok((format!("rule@{index}"), options));
        }
        if self.eat(&Tok::Colon) {
            return Ok((name.unwrap_or_else(|| format!("rule@{index}")), options));
        }
        // Not a prefix after all (e.g. a pattern starting with a bare
        // constructor): rewind.
        self.pos = start;
        Ok((format!("rule@{index}"), options))
    }

    fn option(&mut self) -> Result<RuleOptions, ParseError> {
        let span = self.span();
        let kind = match self.next() {
            Some(Tok::Ident(n)) => match n.as_str() {
                "Free" => OptionKind::Free,
                "Fresh" => OptionKind::Fresh,
                "Weak" => OptionKind::Weak,
                "Copy" => OptionKind::Copy,
                "Discard" => OptionKind::Discard,
                "Literal" => OptionKind::Literal,
                other => {
                    return Err(ParseError::at(span, format!("unknown option '{other}'")))
                }
            },
            other => {
                return Err(ParseError::at(
                    span,
                    format!(
                        "expected an option, found {}",
                        other.map(|t| t.to_string()).unwrap_or("end of input".into())
                    ),
                ))
            }
        };
        self.expect(Tok::LBrack)?;
        let mut opts = RuleOptions::default();
        loop {
            let span = self.span();
            match self.next() {
                Some(Tok::Ident(n)) => opts.add(kind, n),
                Some(Tok::QuotedVar(n)) => opts.add(kind, n),
                other => {
                    return Err(ParseError::at(
                        span,
                        format!(
                            "expected a name in option, found {}",
                            other.map(|t| t.to_string()).unwrap_or("end of input".into())
                        ),
                    ))
                }
            }
            if self.eat(&Tok::RBrack) {
                break;
            }
            self.expect(Tok::Comma)?;
        }
        Ok(opts)
    }
}

#[derive(PartialEq, Clone, Copy)]
enum Class {
    Var,
    Con,
    Meta,
}

fn classify(name: &str) -> Class {
    if name.contains('#') {
        Class::Meta
    } else if name.chars().next().map(|c| c.is_ascii_lowercase()) == Some(true) {
        Class::Var
    } else {
        Class::Con
    }
}

fn render_key(k: &EnvKey) -> String {
    match k {
        EnvKey::Con(c) => format!("c:{}", c.name()),
        EnvKey::Var(v) => format!("v:{}", v.uid()),
    }
}

fn build_list(items: Vec<Term>, tail: Term) -> Term {
    let mut out = tail;
    for item in items.into_iter().rev() {
        out = Term::cons("$Cons", vec![Scope::plain(item), Scope::plain(out)]);
    }
    out
}

/// Renders a rule as text that re-parses to a structurally identical rule.
pub fn render_rule(rule: &Rule) -> String {
    let mut out = String::new();
    out.push_str(&rule.name);
    let opts = rule.options.render();
    if !opts.is_empty() {
        out.push_str(&opts);
    }
    out.push_str(" : ");
    out.push_str(&rule.pattern.render());
    out.push_str(" → ");
    out.push_str(&rule.contraction.render());
    out.push_str(" ;");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_abstraction_sugar() {
        let t = parse_term("(Dep id . Map[#f, #p])").unwrap();
        match &t {
            Term::Cons { head, args, .. } => {
                assert_eq!(head.name(), "Dep");
                assert_eq!(args.len(), 1);
                assert_eq!(args[0].binders.len(), 1);
                assert_eq!(args[0].binders[0].name(), "id");
                match &args[0].body {
                    Term::Cons { head, args, .. } => {
                        assert_eq!(head.name(), "Map");
                        assert!(matches!(&args[0].body, Term::Meta { name, args } if name == "#f" && args.is_empty()));
                    }
                    _ => panic!("expected Map"),
                }
            }
            _ => panic!("expected construction"),
        }
    }

    #[test]
    fn parses_list_sugar() {
        let t = parse_term("(a;b;)").unwrap();
        let a = Variable::new("a");
        let b = Variable::new("b");
        let expect = Term::list(vec![Term::var(a), Term::var(b)]);
        assert!(t.alpha_eq_by_name(&expect));
        assert_eq!(t.render(), "(a;b;)");
    }

    #[test]
    fn application_is_left_recursive() {
        let t = parse_term("f x y").unwrap();
        assert_eq!(t.render(), "(f x y)");
        let explicit = parse_term("@[@[f, x], y]").unwrap();
        assert!(t.alpha_eq_by_name(&explicit));
    }

    #[test]
    fn binds_innermost_scope() {
        let t = parse_term("C[x . D[x . x]]").unwrap();
        match &t {
            Term::Cons { args, .. } => {
                let outer = &args[0].binders[0];
                match &args[0].body {
                    Term::Cons { args, .. } => {
                        let inner = &args[0].binders[0];
                        match &args[0].body {
                            Term::Var(v) => {
                                assert_eq!(v.uid(), inner.uid());
                                assert_ne!(v.uid(), outer.uid());
                            }
                            _ => panic!(),
                        }
                    }
                    _ => panic!(),
                }
            }
            _ => panic!(),
        }
    }

    #[test]
    fn roundtrips_via_render() {
        for src in [
            "Map[(Dep i . Extract[i, f]), r]",
            "\"program\"[\"query\"[\"return\"[v\"$x\"]]]",
            "{#rho; i: \"int\"}\"⊢?\"[i]",
            "Tuple[ACons[(f i), ANil]]",
            "(A;(f x);C)",
            "TMain[in out . TPipe[h . TCopy[in, h], id . TNoop]]",
            "$[NotMatch, #dop, #dop[id]]",
            "\"17\"",
        ] {
            let t = parse_term(src).unwrap();
            let t2 = parse_term(&t.render()).unwrap();
            assert!(
                t.alpha_eq_by_name(&t2),
                "round trip failed for {src}: {} vs {}",
                t.render(),
                t2.render()
            );
        }
    }

    #[test]
    fn bare_numbers_are_literal_constructors() {
        let t = parse_term("17").unwrap();
        match &t {
            Term::Cons { head, args, .. } => {
                assert_eq!(head.name(), "17");
                assert!(head.is_literal());
                assert!(args.is_empty());
            }
            _ => panic!(),
        }
        assert_eq!(t.render(), "\"17\"");
    }

    #[test]
    fn rejects_reused_binder_names() {
        let err = parse_term("C[x x . x]").unwrap_err();
        assert!(err.to_string().contains("reused"));
    }

    #[test]
    fn parses_rule_with_option() {
        let file = parse_rule_file("-[Free[id]] : N[Empty, id] → Empty ;").unwrap();
        assert_eq!(file.rules.len(), 1);
        let rule = &file.rules[0];
        assert_eq!(rule.name, "rule@0");
        assert!(rule.options.free.contains("id"));
    }

    #[test]
    fn parses_env_key_rule_without_name() {
        let file = parse_rule_file("{id:#cType}Type[id] → #cType ;").unwrap();
        assert_eq!(file.rules.len(), 1);
        match &file.rules[0].pattern {
            Term::Cons { env, head, .. } => {
                assert_eq!(head.name(), "Type");
                assert_eq!(env.entries.len(), 1);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn parses_empty_rule_file() {
        let file = parse_rule_file("").unwrap();
        assert!(file.rules.is_empty());
        let file = parse_rule_file("// nothing here\n").unwrap();
        assert!(file.rules.is_empty());
    }

    #[test]
    fn render_rule_roundtrip() {
        let src = "{id:#cType}Type[id] → #cType ;";
        let file = parse_rule_file(src).unwrap();
        let text = render_rule(&file.rules[0]);
        let again = parse_rule_file(&text).unwrap();
        assert_eq!(file.rules[0].name, again.rules[0].name);
        assert!(file.rules[0]
            .pattern
            .alpha_eq_by_name(&again.rules[0].pattern));
        assert!(file.rules[0]
            .contraction
            .alpha_eq_by_name(&again.rules[0].contraction));
    }
}
