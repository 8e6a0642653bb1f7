//! Lexing and parsing of X source into higher-order abstract syntax.
//!
//! The AST is an ordinary term over quoted-string constructors
//! (`"program"`, `"query"`, `"for"`, ...), with one twist: the variables
//! bound by `for` and `let` are real binders. A `"for"`/`"let"` node has
//! exactly two scopes, `[source, v . continuation]`, so the continuation is
//! the binder's scope and every `$`-variable occurrence refers to an
//! enclosing binder. Unbound occurrences are parse errors.

use hors::{Scope, SourceSpan, Term, Variable};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// `$`-prefixed variable occurrence or binding position.
    Var,
    Num,
    Ident,
    Keyword,
    Punct,
}

#[derive(Debug, Clone)]
pub struct XToken {
    pub kind: TokenKind,
    pub text: String,
    pub span: SourceSpan,
}

#[derive(Debug, Error)]
pub enum XError {
    #[error("{span}: {message}")]
    Lex { span: SourceSpan, message: String },
    #[error("{span}: {message}")]
    Parse { span: SourceSpan, message: String },
}

const KEYWORDS: &[&str] = &[
    "for", "in", "let", "where", "return", "if", "then", "else", "element",
];

/// Splits X source into tokens. `--` starts an end-of-line comment.
pub fn lex(src: &str) -> Result<Vec<XToken>, XError> {
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
        let span = SourceSpan {
            line: l0,
            col: c0,
            end_line: l0,
            end_col: c0,
        };
        let c = match chars.peek().copied() {
            Some(c) => c,
            None => break,
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(XError::Lex {
                        span,
                        message: "expected '--' comment".into(),
                    });
                }
            }
            '$' => {
                bump!();
                let mut text = String::from("$");
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                if text.len() == 1 {
                    return Err(XError::Lex {
                        span,
                        message: "expected a name after '$'".into(),
                    });
                }
                out.push(XToken {
                    kind: TokenKind::Var,
                    text,
                    span,
                });
            }
            '(' | ')' | '{' | '}' | ',' => {
                bump!();
                out.push(XToken {
                    kind: TokenKind::Punct,
                    text: c.to_string(),
                    span,
                });
            }
            ':' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push(XToken {
                        kind: TokenKind::Punct,
                        text: ":=".into(),
                        span,
                    });
                } else {
                    return Err(XError::Lex {
                        span,
                        message: "expected ':='".into(),
                    });
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
                out.push(XToken {
                    kind: TokenKind::Num,
                    text,
                    span,
                });
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let kind = if KEYWORDS.contains(&text.as_str()) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Ident
                };
                out.push(XToken { kind, text, span });
            }
            other => {
                return Err(XError::Lex {
                    span,
                    message: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    Ok(out)
}

/// Parses a token stream into the AST term.
pub fn parse_program(tokens: &[XToken]) -> Result<Term, XError> {
    let mut p = XParser {
        toks: tokens,
        pos: 0,
        scopes: Vec::new(),
    };
    let e = p.expr()?;
    p.expect_eof()?;
    let ast = Term::cons("program", vec![Scope::plain(e)]);
    validate_ast(&ast).map_err(|message| XError::Parse {
        span: SourceSpan {
            line: 1,
            col: 1,
            end_line: 1,
            end_col: 1,
        },
        message,
    })?;
    Ok(ast)
}

/// Lexes and parses in one go.
pub fn parse_source(src: &str) -> Result<Term, XError> {
    let tokens = lex(src)?;
    parse_program(&tokens)
}

struct XParser<'a> {
    toks: &'a [XToken],
    pos: usize,
    scopes: Vec<Variable>,
}

impl<'a> XParser<'a> {
    fn peek(&self) -> Option<&XToken> {
        self.toks.get(self.pos)
    }

    fn span(&self) -> SourceSpan {
        self.peek()
            .or(self.toks.last())
            .map(|t| t.span.clone())
            .unwrap_or(SourceSpan {
                line: 1,
                col: 1,
                end_line: 1,
                end_col: 1,
            })
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, XError> {
        Err(XError::Parse {
            span: self.span(),
            message: message.into(),
        })
    }

    fn eat_punct(&mut self, text: &str) -> bool {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Punct && t.text == text => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn expect_punct(&mut self, text: &str) -> Result<(), XError> {
        if self.eat_punct(text) {
            Ok(())
        } else {
            self.err(format!(
                "expected '{text}', found {}",
                self.describe_current()
            ))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Keyword && t.text == kw => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), XError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.err(format!("expected '{kw}', found {}", self.describe_current()))
        }
    }

    fn describe_current(&self) -> String {
        match self.peek() {
            Some(t) => format!("'{}'", t.text),
            None => "end of input".into(),
        }
    }

    fn expect_eof(&self) -> Result<(), XError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.err(format!("unexpected {}", self.describe_current()))
        }
    }

    fn at_query_start(&self) -> bool {
        matches!(
            self.peek(),
            Some(t) if t.kind == TokenKind::Keyword
                && matches!(t.text.as_str(), "for" | "let" | "where" | "return")
        )
    }

    /// E → S ("," E)?  — a comma sequence, or just the single expression.
    fn expr(&mut self) -> Result<Term, XError> {
        let s = self.single()?;
        if self.eat_punct(",") {
            let rest = self.expr()?;
            Ok(Term::cons(
                ",",
                vec![Scope::plain(s), Scope::plain(rest)],
            ))
        } else {
            Ok(s)
        }
    }

    /// S → Q | F  — a query gets its "query" tag here; everything else is
    /// passed through untagged.
    fn single(&mut self) -> Result<Term, XError> {
        if self.at_query_start() {
            let q = self.query()?;
            Ok(Term::cons("query", vec![Scope::plain(q)]))
        } else {
            self.factor()
        }
    }

    fn query(&mut self) -> Result<Term, XError> {
        if self.eat_keyword("for") {
            let var = self.variable_binding()?;
            self.expect_keyword("in")?;
            let source = self.single()?;
            self.scopes.push(var.clone());
            let cont = self.query()?;
            self.scopes.pop();
            Ok(Term::cons(
                "for",
                vec![Scope::plain(source), Scope::new(vec![var], cont)],
            ))
        } else if self.eat_keyword("let") {
            let var = self.variable_binding()?;
            self.expect_punct(":=")?;
            let source = self.single()?;
            self.scopes.push(var.clone());
            let cont = self.query()?;
            self.scopes.pop();
            Ok(Term::cons(
                "let",
                vec![Scope::plain(source), Scope::new(vec![var], cont)],
            ))
        } else if self.eat_keyword("where") {
            let cond = self.single()?;
            let cont = self.query()?;
            Ok(Term::cons(
                "where",
                vec![Scope::plain(cond), Scope::plain(cont)],
            ))
        } else if self.eat_keyword("return") {
            let body = self.single()?;
            Ok(Term::cons("return", vec![Scope::plain(body)]))
        } else {
            self.err(format!(
                "expected a query clause, found {}",
                self.describe_current()
            ))
        }
    }

    fn variable_binding(&mut self) -> Result<Variable, XError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Var => {
                let name = t.text.clone();
                self.pos += 1;
                Ok(Variable::new(name))
            }
            _ => self.err(format!(
                "expected a $-variable, found {}",
                self.describe_current()
            )),
        }
    }

    fn factor(&mut self) -> Result<Term, XError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.err("expected an expression, found end of input"),
        };
        match tok.kind {
            TokenKind::Var => {
                self.pos += 1;
                for v in self.scopes.iter().rev() {
                    if v.name() == tok.text {
                        return Ok(Term::Var(v.clone()));
                    }
                }
                Err(XError::Parse {
                    span: tok.span,
                    message: format!("unbound variable {}", tok.text),
                })
            }
            TokenKind::Num => {
                self.pos += 1;
                Ok(Term::leaf(tok.text))
            }
            TokenKind::Ident => {
                self.pos += 1;
                self.expect_punct("(")?;
                let args = if self.eat_punct(")") {
                    Term::leaf("empty")
                } else {
                    let e = self.expr()?;
                    self.expect_punct(")")?;
                    e
                };
                Ok(Term::cons(
                    "call",
                    vec![Scope::plain(Term::leaf(tok.text)), Scope::plain(args)],
                ))
            }
            TokenKind::Keyword if tok.text == "if" => {
                self.pos += 1;
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                self.expect_keyword("then")?;
                let then = self.single()?;
                self.expect_keyword("else")?;
                let els = self.single()?;
                Ok(Term::cons(
                    "if",
                    vec![Scope::plain(cond), Scope::plain(then), Scope::plain(els)],
                ))
            }
            TokenKind::Keyword if tok.text == "element" => {
                self.pos += 1;
                let name = self.factor()?;
                self.expect_punct("{")?;
                let content = if self.eat_punct("}") {
                    Term::leaf("empty")
                } else {
                    let e = self.expr()?;
                    self.expect_punct("}")?;
                    e
                };
                Ok(Term::cons(
                    "element",
                    vec![Scope::plain(name), Scope::plain(content)],
                ))
            }
            TokenKind::Punct if tok.text == "(" => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => self.err(format!(
                "expected an expression, found {}",
                self.describe_current()
            )),
        }
    }
}

/// AST constructors the frontend may produce (numerals aside).
pub const AST_TAGS: &[&str] = &[
    "program", "query", "for", "let", "where", "return", ",", "call", "empty", "if", "element",
];

/// Checks the invariants every parse result must satisfy: known tags, the
/// two-scope shape of `for`/`let` with the binder on the continuation, a
/// nullary name in call position, and no unbound variable occurrences.
pub fn validate_ast(ast: &Term) -> Result<(), String> {
    fn go(t: &Term, scope: &mut Vec<u64>) -> Result<(), String> {
        match t {
            Term::Var(v) => {
                if scope.contains(&v.uid()) {
                    Ok(())
                } else {
                    Err(format!("unbound variable occurrence {}", v.name()))
                }
            }
            Term::Meta { name, .. } => Err(format!("meta-application {name} in AST")),
            Term::Cons { env, head, args } => {
                if !env.is_empty() {
                    return Err(format!("AST node {} carries an environment", head.name()));
                }
                let tag = head.name();
                if !AST_TAGS.contains(&tag) && !head.is_literal() {
                    return Err(format!("unknown AST constructor {tag}"));
                }
                match tag {
                    "for" | "let" => {
                        if args.len() != 2
                            || !args[0].binders.is_empty()
                            || args[1].binders.len() != 1
                        {
                            return Err(format!("malformed {tag} node"));
                        }
                    }
                    "call" => {
                        // The function name is a nullary constructor that is
                        // not itself AST vocabulary.
                        let ok = args.len() == 2
                            && args.iter().all(|s| s.binders.is_empty())
                            && matches!(
                                &args[0].body,
                                Term::Cons { head, args, .. } if args.is_empty() && !head.is_literal()
                            );
                        if !ok {
                            return Err("malformed call node".into());
                        }
                        return go(&args[1].body, scope);
                    }
                    _ => {}
                }
                for s in args {
                    scope.extend(s.binders.iter().map(Variable::uid));
                    go(&s.body, scope)?;
                    scope.truncate(scope.len() - s.binders.len());
                }
                Ok(())
            }
        }
    }
    go(ast, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_token_classes() {
        let toks = lex("$x").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].kind, TokenKind::Var);
        assert_eq!(toks[0].text, "$x");

        let toks = lex("for").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Keyword);

        let toks = lex("child(").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Ident);
        assert_eq!(toks[1].kind, TokenKind::Punct);

        assert!(lex("^").is_err());
    }

    #[test]
    fn comments_are_skipped() {
        let toks = lex("-- a comment\n1").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].kind, TokenKind::Num);
    }

    #[test]
    fn parses_minimal_program() {
        let ast = parse_source("1").unwrap();
        assert_eq!(ast.render(), "\"program\"[\"1\"]");
    }

    #[test]
    fn parses_sample_query_shape() {
        let ast = parse_source(
            "for $x in child(doc()) for $y in child(doc()) where eq($x,$y) return plus($x,$y)",
        )
        .unwrap();
        let rendered = ast.render();
        assert!(rendered.starts_with("\"program\"[\"query\"[\"for\"["));
        // One "query" tag only: nested for-clauses stay inside it.
        assert_eq!(rendered.matches("\"query\"").count(), 1);
        assert!(rendered.contains("v\"$x\" ."));
        validate_ast(&ast).unwrap();
    }

    #[test]
    fn rejects_unbound_variable() {
        let err = parse_source("return $x").unwrap_err();
        assert!(err.to_string().contains("unbound variable $x"));
    }

    #[test]
    fn binders_scope_over_continuation_only() {
        let ast = parse_source("for $x in child(doc()) return $x").unwrap();
        // Substituting the binder changes exactly the return occurrence.
        match &ast {
            Term::Cons { args, .. } => match &args[0].body {
                Term::Cons { args, .. } => match &args[0].body {
                    Term::Cons { args, .. } => {
                        let binder = args[1].binders[0].clone();
                        let marker = Term::leaf("Marker");
                        let out = args[1].body.substitute1(&binder, &marker);
                        assert_eq!(out.render(), "\"return\"[Marker]");
                    }
                    _ => panic!(),
                },
                _ => panic!(),
            },
            _ => panic!(),
        }
    }

    #[test]
    fn comma_sequences_nest_right() {
        let ast = parse_source("1, 2, 3").unwrap();
        assert_eq!(
            ast.render(),
            "\"program\"[\",\"[\"1\", \",\"[\"2\", \"3\"]]]"
        );
    }

    #[test]
    fn nested_query_in_parentheses() {
        let ast = parse_source("for $x in (for $y in child(doc()) return $y) return $x").unwrap();
        assert_eq!(ast.render().matches("\"query\"").count(), 2);
        validate_ast(&ast).unwrap();
    }
}
