//! Text formats: the declaration DSL for schemas, constraints, and queries,
//! plus CSV / JSON instance files.
//!
//! The DSL is line-oriented only by convention — declarations are
//! self-delimiting, `#` starts a comment, and whitespace is free. Symbolic
//! constants are single-quoted (doubled quote escapes a quote); bare
//! identifiers are variables in constraints and queries, and names
//! elsewhere. Every parse error carries a [`SourceSpan`].
//!
//! ```text
//! relation Person(name: sym, city: sym, street: sym)
//! primary key Person: name
//! fd Person: name -> city, street
//! ind Manager[ssn] <= Employee[ssn]
//! denial not [ Emp(n, s, m), Emp(m, s2, m2), s > s2 ]
//! exists x, y, z: R(x, y, 'c') and R(z, y, 'c2')
//! ```
//!
//! Instances travel either as one CSV file per relation (file stem =
//! relation name, header = attribute names in schema order) or as a single
//! JSON bundle `{relation: [[row values]]}`. Serialization is canonical:
//! facts sorted, LF line endings, quotes only where needed — byte-identical
//! output for equal instances.

use crate::model::{
    validate_fact, BuiltinAtom, CmpOp, ConjunctiveQuery, ConstraintAtom, ConstraintSet,
    DenialConstraint, Fact, Fd, GroundFormula, Ind, Instance, KeyDecl, ModelError, Query,
    RelationSchema, Schema, Sort, Term, Value,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Location of a construct in an input file, 1-based, columns in
/// characters. Attached to every parse error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl SourceSpan {
    fn new(file: &str, line: usize, col_start: usize, col_end: usize) -> Self {
        SourceSpan {
            file: file.to_string(),
            line,
            col_start,
            col_end,
        }
    }
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col_start)?;
        if self.col_end > self.col_start + 1 {
            write!(f, "-{}", self.col_end)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TextError {
    #[error("{span}: {message}")]
    Syntax { span: SourceSpan, message: String },
    #[error("{span}: {source}")]
    Semantic {
        span: SourceSpan,
        source: ModelError,
    },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

impl TextError {
    pub fn span(&self) -> Option<&SourceSpan> {
        match self {
            TextError::Syntax { span, .. } | TextError::Semantic { span, .. } => Some(span),
            TextError::Io { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

const KEYWORDS: [&str; 12] = [
    "relation", "key", "primary", "fd", "ind", "denial", "not", "exists", "and", "or", "sym",
    "num",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Kw(&'static str),
    SymLit(String),
    IntLit(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Arrow,
    Op(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Kw(k) => format!("`{k}`"),
            Tok::SymLit(_) => "symbolic constant".into(),
            Tok::IntLit(n) => format!("number `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Op(op) => format!("`{op}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    len: usize,
}

fn lex(text: &str, file: &str) -> Result<Vec<Token>, TextError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;
    let err = |line: usize, col: usize, len: usize, message: String| TextError::Syntax {
        span: SourceSpan::new(file, line, col, col + len),
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |i: &mut usize, line: &mut usize, col: &mut usize| {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => advance(&mut i, &mut line, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(&mut i, &mut line, &mut col);
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    advance(&mut i, &mut line, &mut col);
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => Tok::Kw(k),
                    None => Tok::Ident(word.clone()),
                };
                toks.push(Token {
                    tok,
                    line: tl,
                    col: tc,
                    len: word.chars().count(),
                });
            }
            '\'' => {
                advance(&mut i, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    if i >= chars.len() {
                        return Err(err(tl, tc, 1, "unterminated symbolic constant".into()));
                    }
                    if chars[i] == '\'' {
                        if i + 1 < chars.len() && chars[i + 1] == '\'' {
                            s.push('\'');
                            advance(&mut i, &mut line, &mut col);
                            advance(&mut i, &mut line, &mut col);
                        } else {
                            advance(&mut i, &mut line, &mut col);
                            break;
                        }
                    } else {
                        s.push(chars[i]);
                        advance(&mut i, &mut line, &mut col);
                    }
                }
                toks.push(Token {
                    tok: Tok::SymLit(s),
                    line: tl,
                    col: tc,
                    len: col.saturating_sub(tc).max(1),
                });
            }
            '0'..='9' | '-' => {
                if c == '-' && i + 1 < chars.len() && chars[i + 1] == '>' {
                    advance(&mut i, &mut line, &mut col);
                    advance(&mut i, &mut line, &mut col);
                    toks.push(Token {
                        tok: Tok::Arrow,
                        line: tl,
                        col: tc,
                        len: 2,
                    });
                    continue;
                }
                if c == '-' && (i + 1 >= chars.len() || !chars[i + 1].is_ascii_digit()) {
                    return Err(err(tl, tc, 1, "expected `->` or a number after `-`".into()));
                }
                let start = i;
                advance(&mut i, &mut line, &mut col);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(&mut i, &mut line, &mut col);
                }
                let text: String = chars[start..i].iter().collect();
                let n: i64 = text.parse().map_err(|_| {
                    err(tl, tc, text.len(), format!("integer `{text}` out of range"))
                })?;
                toks.push(Token {
                    tok: Tok::IntLit(n),
                    line: tl,
                    col: tc,
                    len: text.chars().count(),
                });
            }
            _ => {
                let simple = match c {
                    '(' => Some(Tok::LParen),
                    ')' => Some(Tok::RParen),
                    '[' => Some(Tok::LBracket),
                    ']' => Some(Tok::RBracket),
                    ':' => Some(Tok::Colon),
                    ',' => Some(Tok::Comma),
                    _ => None,
                };
                if let Some(tok) = simple {
                    advance(&mut i, &mut line, &mut col);
                    toks.push(Token {
                        tok,
                        line: tl,
                        col: tc,
                        len: 1,
                    });
                    continue;
                }
                let two = |a: char| i + 1 < chars.len() && chars[i + 1] == a;
                let (tok, len) = match c {
                    '<' if two('=') => (Tok::Op(CmpOp::Le), 2),
                    '<' => (Tok::Op(CmpOp::Lt), 1),
                    '>' if two('=') => (Tok::Op(CmpOp::Ge), 2),
                    '>' => (Tok::Op(CmpOp::Gt), 1),
                    '=' => (Tok::Op(CmpOp::Eq), 1),
                    '!' if two('=') => (Tok::Op(CmpOp::Ne), 2),
                    _ => return Err(err(tl, tc, 1, format!("unexpected character `{c}`"))),
                };
                for _ in 0..len {
                    advance(&mut i, &mut line, &mut col);
                }
                toks.push(Token {
                    tok,
                    line: tl,
                    col: tc,
                    len,
                });
            }
        }
    }
    toks.push(Token {
        tok: Tok::Eof,
        line,
        col,
        len: 1,
    });
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    file: String,
}

impl Parser {
    fn new(text: &str, file: &str) -> Result<Self, TextError> {
        Ok(Parser {
            toks: lex(text, file)?,
            pos: 0,
            file: file.to_string(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn cur(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn span_of(&self, t: &Token) -> SourceSpan {
        SourceSpan::new(&self.file, t.line, t.col, t.col + t.len)
    }

    fn here(&self) -> SourceSpan {
        self.span_of(self.cur())
    }

    fn err_here(&self, message: impl Into<String>) -> TextError {
        TextError::Syntax {
            span: self.here(),
            message: message.into(),
        }
    }

    fn semantic(&self, span: SourceSpan, source: ModelError) -> TextError {
        TextError::Semantic { span, source }
    }

    fn expect(&mut self, want: Tok) -> Result<Token, TextError> {
        if self.peek() == &want {
            Ok(self.next())
        } else {
            Err(self.err_here(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn expect_kw(&mut self, kw: &'static str) -> Result<Token, TextError> {
        self.expect(Tok::Kw(kw))
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan), TextError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let t = self.next();
                Ok((s, self.span_of(&t)))
            }
            other => Err(self.err_here(format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn ident_list(&mut self, what: &str) -> Result<Vec<(String, SourceSpan)>, TextError> {
        let mut out = vec![self.ident(what)?];
        while self.peek() == &Tok::Comma {
            self.next();
            out.push(self.ident(what)?);
        }
        Ok(out)
    }

    /// A constant or variable in constraint/query position.
    fn term(&mut self) -> Result<(Term, SourceSpan), TextError> {
        match self.peek().clone() {
            Tok::Ident(v) => {
                let t = self.next();
                Ok((Term::Var(v), self.span_of(&t)))
            }
            Tok::SymLit(s) => {
                let t = self.next();
                Ok((Term::Const(Value::Sym(s)), self.span_of(&t)))
            }
            Tok::IntLit(n) => {
                let t = self.next();
                Ok((Term::Const(Value::Int(n)), self.span_of(&t)))
            }
            other => Err(self.err_here(format!(
                "expected a variable or constant, found {}",
                other.describe()
            ))),
        }
    }
}

/// Parse relation and key declarations into a [`Schema`]. `file` labels
/// error locations.
pub fn parse_schema(text: &str, file: &str) -> Result<Schema, TextError> {
    let mut p = Parser::new(text, file)?;
    let mut schema = Schema::default();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Kw("relation") => {
                p.next();
                let (name, name_span) = p.ident("a relation name")?;
                if schema.relation(&name).is_some() {
                    return Err(p.semantic(name_span, ModelError::DuplicateRelation(name)));
                }
                p.expect(Tok::LParen)?;
                let mut attributes = Vec::new();
                loop {
                    let (attr, attr_span) = p.ident("an attribute name")?;
                    if attributes.iter().any(|a: &(String, Sort)| a.0 == attr) {
                        return Err(p.semantic(
                            attr_span,
                            ModelError::DuplicateAttribute {
                                relation: name.clone(),
                                attribute: attr,
                            },
                        ));
                    }
                    p.expect(Tok::Colon)?;
                    let sort = match p.peek() {
                        Tok::Kw("sym") => Sort::Symbolic,
                        Tok::Kw("num") => Sort::Numeric,
                        other => {
                            return Err(p.err_here(format!(
                                "expected `sym` or `num`, found {}",
                                other.describe()
                            )))
                        }
                    };
                    p.next();
                    attributes.push((attr, sort));
                    if p.peek() == &Tok::Comma {
                        p.next();
                    } else {
                        break;
                    }
                }
                p.expect(Tok::RParen)?;
                schema.relations.push(RelationSchema::new(name, attributes));
            }
            Tok::Kw("key") | Tok::Kw("primary") => {
                let primary = p.peek() == &Tok::Kw("primary");
                if primary {
                    p.next();
                    p.expect_kw("key")?;
                } else {
                    p.next();
                }
                let (rel_name, rel_span) = p.ident("a relation name")?;
                p.expect(Tok::Colon)?;
                let attrs = p.ident_list("an attribute name")?;
                let Some(rel) = schema
                    .relations
                    .iter_mut()
                    .find(|r| r.name == rel_name)
                else {
                    return Err(
                        p.semantic(rel_span, ModelError::UnknownRelation(rel_name))
                    );
                };
                for (a, a_span) in &attrs {
                    if rel.attr_index(a).is_none() {
                        return Err(p.semantic(
                            a_span.clone(),
                            ModelError::UnknownAttribute {
                                relation: rel_name.clone(),
                                attribute: a.clone(),
                            },
                        ));
                    }
                }
                if primary && rel.keys.iter().any(|k| k.primary) {
                    return Err(p.semantic(
                        rel_span,
                        ModelError::MultiplePrimaryKeys { relation: rel_name },
                    ));
                }
                rel.keys.push(KeyDecl {
                    attrs: attrs.into_iter().map(|(a, _)| a).collect(),
                    primary,
                });
            }
            other => {
                return Err(p.err_here(format!(
                    "expected a `relation` or `key` declaration, found {}",
                    other.describe()
                )))
            }
        }
    }
    Ok(schema)
}

/// Parse `fd` / `ind` / `denial` declarations against a known schema.
/// Vacuous functional dependencies (dependent set ⊆ determinant) are
/// dropped.
pub fn parse_constraints(text: &str, schema: &Schema, file: &str) -> Result<ConstraintSet, TextError> {
    let mut p = Parser::new(text, file)?;
    let mut ics = ConstraintSet::default();
    loop {
        let decl_span = p.here();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Kw("fd") => {
                p.next();
                let (rel, _) = p.ident("a relation name")?;
                p.expect(Tok::Colon)?;
                let lhs = p.ident_list("an attribute name")?;
                p.expect(Tok::Arrow)?;
                let rhs = p.ident_list("an attribute name")?;
                let fd = Fd::new(
                    rel,
                    lhs.into_iter().map(|(a, _)| a),
                    rhs.into_iter().map(|(a, _)| a),
                );
                fd.validate(schema).map_err(|e| p.semantic(decl_span, e))?;
                if !fd.is_vacuous() {
                    ics.fds.push(fd);
                }
            }
            Tok::Kw("ind") => {
                p.next();
                let (src, _) = p.ident("a relation name")?;
                p.expect(Tok::LBracket)?;
                let src_attrs = p.ident_list("an attribute name")?;
                p.expect(Tok::RBracket)?;
                p.expect(Tok::Op(CmpOp::Le))?;
                let (tgt, _) = p.ident("a relation name")?;
                p.expect(Tok::LBracket)?;
                let tgt_attrs = p.ident_list("an attribute name")?;
                p.expect(Tok::RBracket)?;
                let ind = Ind::new(
                    src,
                    src_attrs.into_iter().map(|(a, _)| a).collect(),
                    tgt,
                    tgt_attrs.into_iter().map(|(a, _)| a).collect(),
                );
                ind.validate(schema).map_err(|e| p.semantic(decl_span, e))?;
                ics.inds.push(ind);
            }
            Tok::Kw("denial") => {
                p.next();
                p.expect_kw("not")?;
                p.expect(Tok::LBracket)?;
                let mut atoms = Vec::new();
                let mut builtins = Vec::new();
                loop {
                    if matches!(p.peek(), Tok::Ident(_)) && p.peek2() == &Tok::LParen {
                        let (relation, _) = p.ident("a relation name")?;
                        p.expect(Tok::LParen)?;
                        let mut terms = vec![p.term()?.0];
                        while p.peek() == &Tok::Comma {
                            p.next();
                            terms.push(p.term()?.0);
                        }
                        p.expect(Tok::RParen)?;
                        atoms.push(ConstraintAtom { relation, terms });
                    } else {
                        let (lhs, _) = p.term()?;
                        let op = match p.peek() {
                            Tok::Op(op) => *op,
                            other => {
                                return Err(p.err_here(format!(
                                    "expected a comparison operator, found {}",
                                    other.describe()
                                )))
                            }
                        };
                        p.next();
                        let (rhs, _) = p.term()?;
                        builtins.push(BuiltinAtom::new(lhs, op, rhs));
                    }
                    if p.peek() == &Tok::Comma {
                        p.next();
                    } else {
                        break;
                    }
                }
                p.expect(Tok::RBracket)?;
                let denial = DenialConstraint { atoms, builtins };
                denial
                    .validate(schema)
                    .map_err(|e| p.semantic(decl_span, e))?;
                ics.denials.push(denial);
            }
            other => {
                return Err(p.err_here(format!(
                    "expected an `fd`, `ind`, or `denial` declaration, found {}",
                    other.describe()
                )))
            }
        }
    }
    Ok(ics)
}

// --- query parsing ---------------------------------------------------------

#[derive(Debug)]
enum RawQ {
    Atom {
        relation: String,
        terms: Vec<Term>,
        span: SourceSpan,
    },
    Builtin {
        b: BuiltinAtom,
        span: SourceSpan,
    },
    Not(Box<RawQ>, SourceSpan),
    And(Vec<RawQ>),
    Or(Vec<RawQ>, SourceSpan),
}

impl RawQ {
    fn has_vars(&self) -> bool {
        fn term_has_var(t: &Term) -> bool {
            matches!(t, Term::Var(_))
        }
        match self {
            RawQ::Atom { terms, .. } => terms.iter().any(term_has_var),
            RawQ::Builtin { b, .. } => term_has_var(&b.lhs) || term_has_var(&b.rhs),
            RawQ::Not(g, _) => g.has_vars(),
            RawQ::And(gs) => gs.iter().any(|g| g.has_vars()),
            RawQ::Or(gs, _) => gs.iter().any(|g| g.has_vars()),
        }
    }
}

impl Parser {
    fn query_or(&mut self) -> Result<RawQ, TextError> {
        let first = self.query_and()?;
        if self.peek() != &Tok::Kw("or") {
            return Ok(first);
        }
        let span = self.here();
        let mut parts = vec![first];
        while self.peek() == &Tok::Kw("or") {
            self.next();
            parts.push(self.query_and()?);
        }
        Ok(RawQ::Or(parts, span))
    }

    fn query_and(&mut self) -> Result<RawQ, TextError> {
        let mut parts = vec![self.query_not()?];
        while self.peek() == &Tok::Kw("and") {
            self.next();
            parts.push(self.query_not()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            RawQ::And(parts)
        })
    }

    fn query_not(&mut self) -> Result<RawQ, TextError> {
        if self.peek() == &Tok::Kw("not") {
            let span = self.here();
            self.next();
            return Ok(RawQ::Not(Box::new(self.query_not()?), span));
        }
        if self.peek() == &Tok::LParen {
            self.next();
            let inner = self.query_or()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        // relational atom iff identifier directly followed by `(`
        if matches!(self.peek(), Tok::Ident(_)) && self.peek2() == &Tok::LParen {
            let (relation, span) = self.ident("a relation name")?;
            self.expect(Tok::LParen)?;
            let mut terms = vec![self.term()?.0];
            while self.peek() == &Tok::Comma {
                self.next();
                terms.push(self.term()?.0);
            }
            let close = self.expect(Tok::RParen)?;
            let span = SourceSpan::new(
                &self.file,
                span.line,
                span.col_start,
                close.col + close.len,
            );
            return Ok(RawQ::Atom {
                relation,
                terms,
                span,
            });
        }
        let (lhs, lspan) = self.term()?;
        let op = match self.peek() {
            Tok::Op(op) => *op,
            other => {
                return Err(self.err_here(format!(
                    "expected a comparison operator, found {}",
                    other.describe()
                )))
            }
        };
        self.next();
        let (rhs, rspan) = self.term()?;
        let span = SourceSpan::new(&self.file, lspan.line, lspan.col_start, rspan.col_end);
        Ok(RawQ::Builtin {
            b: BuiltinAtom::new(lhs, op, rhs),
            span,
        })
    }
}

fn raw_to_ground(raw: RawQ, schema: &Schema) -> Result<GroundFormula, TextError> {
    match raw {
        RawQ::Atom {
            relation,
            terms,
            span,
        } => {
            let values = terms
                .into_iter()
                .map(|t| match t {
                    Term::Const(c) => c,
                    Term::Var(_) => unreachable!("ground path rejects variables"),
                })
                .collect();
            let fact = Fact::new(relation, values);
            validate_fact(schema, &fact).map_err(|e| TextError::Semantic { span, source: e })?;
            Ok(GroundFormula::Fact(fact))
        }
        RawQ::Builtin { b, span } => {
            let g = GroundFormula::Builtin(b);
            g.validate(schema)
                .map_err(|e| TextError::Semantic { span, source: e })?;
            Ok(g)
        }
        RawQ::Not(inner, _) => Ok(GroundFormula::Not(Box::new(raw_to_ground(*inner, schema)?))),
        RawQ::And(parts) => Ok(GroundFormula::And(
            parts
                .into_iter()
                .map(|g| raw_to_ground(g, schema))
                .collect::<Result<_, _>>()?,
        )),
        RawQ::Or(parts, _) => Ok(GroundFormula::Or(
            parts
                .into_iter()
                .map(|g| raw_to_ground(g, schema))
                .collect::<Result<_, _>>()?,
        )),
    }
}

/// Flatten a conjunction tree into atoms + comparisons; `not` / `or` are
/// rejected (only ground sentences may use them).
fn raw_to_conj(
    raw: RawQ,
    atoms: &mut Vec<(String, Vec<Term>)>,
    builtins: &mut Vec<BuiltinAtom>,
) -> Result<(), TextError> {
    match raw {
        RawQ::Atom {
            relation, terms, ..
        } => {
            atoms.push((relation, terms));
            Ok(())
        }
        RawQ::Builtin { b, .. } => {
            builtins.push(b);
            Ok(())
        }
        RawQ::And(parts) => {
            for part in parts {
                raw_to_conj(part, atoms, builtins)?;
            }
            Ok(())
        }
        RawQ::Not(_, span) | RawQ::Or(_, span) => Err(TextError::Syntax {
            span,
            message: "queries with variables must be conjunctions of atoms and comparisons \
                      (`not` and `or` need a ground sentence)"
                .into(),
        }),
    }
}

/// Parse one query. Fully ground inputs (no variables, no `exists`) become
/// boolean [`GroundFormula`] sentences; anything with variables must be a
/// conjunction and becomes a normalized [`ConjunctiveQuery`], closed when
/// every variable is bound by `exists`.
pub fn parse_query(text: &str, schema: &Schema, file: &str) -> Result<Query, TextError> {
    let mut p = Parser::new(text, file)?;
    let start = p.here();
    let mut bound: Vec<String> = Vec::new();
    if p.peek() == &Tok::Kw("exists") {
        p.next();
        for (v, span) in p.ident_list("a variable name")? {
            if bound.contains(&v) {
                return Err(TextError::Syntax {
                    span,
                    message: format!("variable `{v}` quantified twice"),
                });
            }
            bound.push(v);
        }
        p.expect(Tok::Colon)?;
    }
    let raw = p.query_or()?;
    if p.peek() != &Tok::Eof {
        return Err(p.err_here(format!(
            "unexpected {} after the query",
            p.peek().describe()
        )));
    }
    if bound.is_empty() && !raw.has_vars() {
        return Ok(Query::Ground(raw_to_ground(raw, schema)?));
    }
    let mut atoms = Vec::new();
    let mut builtins = Vec::new();
    raw_to_conj(raw, &mut atoms, &mut builtins)?;
    let q = ConjunctiveQuery::from_raw(atoms, builtins, &bound).map_err(|e| TextError::Semantic {
        span: start.clone(),
        source: e,
    })?;
    q.validate(schema).map_err(|e| TextError::Semantic {
        span: start,
        source: e,
    })?;
    Ok(Query::Conjunctive(q))
}

// ---------------------------------------------------------------------------
// DSL serialization (canonical; parse ∘ serialize = identity)
// ---------------------------------------------------------------------------

pub fn serialize_schema(schema: &Schema) -> String {
    let mut out = String::new();
    for rel in &schema.relations {
        out.push_str(&format!(
            "relation {}({})\n",
            rel.name,
            rel.attributes
                .iter()
                .map(|a| format!("{}: {}", a.name, a.sort))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        for key in &rel.keys {
            out.push_str(&format!(
                "{}key {}: {}\n",
                if key.primary { "primary " } else { "" },
                rel.name,
                key.attrs.join(", ")
            ));
        }
    }
    out
}

pub fn serialize_constraints(ics: &ConstraintSet) -> String {
    let mut out = String::new();
    for fd in &ics.fds {
        if !fd.is_vacuous() {
            out.push_str(&format!("{fd}\n"));
        }
    }
    for ind in &ics.inds {
        out.push_str(&format!("{ind}\n"));
    }
    for denial in &ics.denials {
        out.push_str(&format!("denial {denial}\n"));
    }
    out
}

pub fn serialize_query(q: &Query) -> String {
    match q {
        Query::Ground(g) => render_ground(g),
        Query::Conjunctive(cq) => render_conjunctive(cq),
    }
}

fn render_ground(g: &GroundFormula) -> String {
    fn leafish(g: &GroundFormula) -> bool {
        matches!(
            g,
            GroundFormula::Fact(_) | GroundFormula::Builtin(_) | GroundFormula::Not(_)
        )
    }
    match g {
        GroundFormula::Fact(f) => f.to_string(),
        GroundFormula::Builtin(b) => b.to_string(),
        GroundFormula::Not(inner) => {
            if leafish(inner) {
                format!("not {}", render_ground(inner))
            } else {
                format!("not ({})", render_ground(inner))
            }
        }
        GroundFormula::And(parts) => parts
            .iter()
            .map(|p| {
                if leafish(p) {
                    render_ground(p)
                } else {
                    format!("({})", render_ground(p))
                }
            })
            .collect::<Vec<_>>()
            .join(" and "),
        GroundFormula::Or(parts) => parts
            .iter()
            .map(|p| match p {
                GroundFormula::Or(_) => format!("({})", render_ground(p)),
                _ => render_ground(p),
            })
            .collect::<Vec<_>>()
            .join(" or "),
    }
}

fn render_conjunctive(q: &ConjunctiveQuery) -> String {
    // Give every internal variable a printable name: free variables keep
    // their surface names; the rest get prefix+index with a prefix no free
    // name can collide with.
    let free_names: Vec<&str> = q.free.iter().map(|f| f.name.as_str()).collect();
    let prefix = ["v", "u", "w", "b", "t"]
        .into_iter()
        .find(|p| {
            !free_names.iter().any(|n| {
                n.strip_prefix(p)
                    .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
            })
        })
        .expect("five candidate prefixes cannot all collide");
    let mut names: BTreeMap<&str, String> = BTreeMap::new();
    for fv in &q.free {
        names.insert(fv.var.as_str(), fv.name.clone());
    }
    let mut bound: Vec<String> = Vec::new();
    let mut counter = 0;
    for atom in &q.atoms {
        for var in &atom.vars {
            if !names.contains_key(var.as_str()) {
                let name = format!("{prefix}{counter}");
                counter += 1;
                bound.push(name.clone());
                names.insert(var.as_str(), name);
            }
        }
    }
    let name_of = |t: &Term| -> String {
        match t {
            Term::Var(v) => names
                .get(v.as_str())
                .cloned()
                .unwrap_or_else(|| v.clone()),
            Term::Const(c) => c.to_string(),
        }
    };
    let mut parts: Vec<String> = q
        .atoms
        .iter()
        .map(|a| {
            format!(
                "{}({})",
                a.relation,
                a.vars
                    .iter()
                    .map(|v| names[v.as_str()].clone())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    parts.extend(
        q.builtins
            .iter()
            .map(|b| format!("{} {} {}", name_of(&b.lhs), b.op, name_of(&b.rhs))),
    );
    let body = parts.join(" and ");
    if bound.is_empty() {
        body
    } else {
        format!("exists {}: {}", bound.join(", "), body)
    }
}

// ---------------------------------------------------------------------------
// Instance files
// ---------------------------------------------------------------------------

/// Parse one relation's CSV text. The header row must repeat the relation's
/// attribute names in schema order; numeric columns require integer cells.
/// Empty or whitespace-only text is an empty relation.
pub fn parse_relation_csv(
    text: &str,
    rel: &RelationSchema,
    file: &str,
) -> Result<Vec<Fact>, TextError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let data_err = |line: usize, message: String| TextError::Syntax {
        span: SourceSpan::new(file, line, 1, 1),
        message,
    };
    let header = match rows.next() {
        Some(h) => h.map_err(|e| data_err(1, e.to_string()))?,
        None => return Ok(Vec::new()),
    };
    let want: Vec<&str> = rel.attributes.iter().map(|a| a.name.as_str()).collect();
    let got: Vec<&str> = header.iter().collect();
    if got != want {
        return Err(data_err(
            1,
            format!(
                "header [{}] does not match the attributes of `{}` [{}]",
                got.join(", "),
                rel.name,
                want.join(", ")
            ),
        ));
    }
    let mut facts = Vec::new();
    for record in rows {
        let record = record.map_err(|e| data_err(0, e.to_string()))?;
        let line = record
            .position()
            .map(|pos| pos.line() as usize)
            .unwrap_or(0);
        if record.len() != rel.arity() {
            return Err(data_err(
                line,
                format!(
                    "row has {} cells, relation `{}` has {} attributes",
                    record.len(),
                    rel.name,
                    rel.arity()
                ),
            ));
        }
        let mut values = Vec::with_capacity(rel.arity());
        for (cell, attr) in record.iter().zip(&rel.attributes) {
            values.push(match attr.sort {
                Sort::Symbolic => Value::Sym(cell.to_string()),
                Sort::Numeric => Value::Int(cell.parse().map_err(|_| {
                    data_err(
                        line,
                        format!(
                            "cell `{cell}` in numeric column `{}` is not an integer",
                            attr.name
                        ),
                    )
                })?),
            });
        }
        facts.push(Fact::new(rel.name.clone(), values));
    }
    Ok(facts)
}

/// Read an instance from a directory of `<Relation>.csv` files. Relations
/// without a file are empty; file stems must name schema relations.
pub fn read_instance_dir(dir: &Path, schema: &Schema) -> Result<Instance, TextError> {
    let io_err = |e: std::io::Error| TextError::Io {
        file: dir.display().to_string(),
        source: e,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    let mut inst = Instance::empty();
    for path in paths {
        let file = path.display().to_string();
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| TextError::Syntax {
                span: SourceSpan::new(&file, 1, 1, 1),
                message: "file name is not valid UTF-8".into(),
            })?;
        let rel = schema.relation(stem).ok_or_else(|| TextError::Semantic {
            span: SourceSpan::new(&file, 1, 1, 1),
            source: ModelError::UnknownRelation(stem.to_string()),
        })?;
        let text = std::fs::read_to_string(&path).map_err(|e| TextError::Io {
            file: file.clone(),
            source: e,
        })?;
        for fact in parse_relation_csv(&text, rel, &file)? {
            inst.insert(fact);
        }
    }
    Ok(inst)
}

/// Parse a JSON instance bundle: `{relation: [[cell, …], …]}` with strings
/// in symbolic columns and integers in numeric columns.
pub fn parse_instance_json(text: &str, schema: &Schema, file: &str) -> Result<Instance, TextError> {
    let bundle: BTreeMap<String, Vec<Vec<serde_json::Value>>> = serde_json::from_str(text)
        .map_err(|e| TextError::Syntax {
            span: SourceSpan::new(file, e.line().max(1), e.column().max(1), e.column().max(1) + 1),
            message: e.to_string(),
        })?;
    let err = |source: ModelError| TextError::Semantic {
        span: SourceSpan::new(file, 1, 1, 1),
        source,
    };
    let mut inst = Instance::empty();
    for (rel_name, rows) in bundle {
        let rel = schema
            .relation(&rel_name)
            .ok_or_else(|| err(ModelError::UnknownRelation(rel_name.clone())))?;
        for row in rows {
            if row.len() != rel.arity() {
                return Err(err(ModelError::ArityMismatch {
                    relation: rel.name.clone(),
                    fact: format!("{rel_name}{row:?}"),
                    got: row.len(),
                    want: rel.arity(),
                }));
            }
            let mut values = Vec::with_capacity(row.len());
            for (cell, attr) in row.into_iter().zip(&rel.attributes) {
                let sort_err = || {
                    err(ModelError::SortMismatch {
                        relation: rel.name.clone(),
                        attribute: attr.name.clone(),
                        value: cell.to_string(),
                        sort: attr.sort,
                    })
                };
                values.push(match (&cell, attr.sort) {
                    (serde_json::Value::String(s), Sort::Symbolic) => Value::Sym(s.clone()),
                    (serde_json::Value::Number(n), Sort::Numeric) => {
                        Value::Int(n.as_i64().ok_or_else(sort_err)?)
                    }
                    _ => return Err(sort_err()),
                });
            }
            inst.insert(Fact::new(rel.name.clone(), values));
        }
    }
    Ok(inst)
}

/// Read an instance from `path`: a directory of CSV files or a `.json`
/// bundle.
pub fn read_instance(path: &Path, schema: &Schema) -> Result<Instance, TextError> {
    if path.is_dir() {
        return read_instance_dir(path, schema);
    }
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| TextError::Io {
            file: path.display().to_string(),
            source: e,
        })?;
        return parse_instance_json(&text, schema, &path.display().to_string());
    }
    Err(TextError::Io {
        file: path.display().to_string(),
        source: std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "expected a directory of CSV files or a .json bundle",
        ),
    })
}

/// Canonical CSV serialization: one entry per nonempty relation, facts
/// sorted, LF line endings, quotes only where needed.
pub fn csv_files(inst: &Instance, schema: &Schema) -> Result<BTreeMap<String, String>, ModelError> {
    inst.validate(schema)?;
    let mut out = BTreeMap::new();
    for rel in &schema.relations {
        let facts: Vec<&Fact> = inst.relation(&rel.name).collect();
        if facts.is_empty() {
            continue;
        }
        let mut writer = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Necessary)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer
            .write_record(rel.attributes.iter().map(|a| a.name.as_str()))
            .expect("in-memory write");
        for fact in facts {
            writer
                .write_record(fact.values.iter().map(|v| match v {
                    Value::Sym(s) => s.clone(),
                    Value::Int(n) => n.to_string(),
                }))
                .expect("in-memory write");
        }
        let bytes = writer.into_inner().expect("in-memory flush");
        out.insert(
            rel.name.clone(),
            String::from_utf8(bytes).expect("CSV output is UTF-8"),
        );
    }
    Ok(out)
}

/// Write the canonical CSV files into `dir` (created if missing); returns
/// the written paths, sorted.
pub fn write_instance_csv(
    inst: &Instance,
    schema: &Schema,
    dir: &Path,
) -> Result<Vec<PathBuf>, TextError> {
    let files = csv_files(inst, schema).map_err(|e| TextError::Semantic {
        span: SourceSpan::new(&dir.display().to_string(), 1, 1, 1),
        source: e,
    })?;
    std::fs::create_dir_all(dir).map_err(|e| TextError::Io {
        file: dir.display().to_string(),
        source: e,
    })?;
    let mut paths = Vec::new();
    for (rel, text) in files {
        let path = dir.join(format!("{rel}.csv"));
        std::fs::write(&path, text).map_err(|e| TextError::Io {
            file: path.display().to_string(),
            source: e,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Canonical JSON serialization: relations sorted by name (nonempty only),
/// facts sorted, pretty-printed, trailing newline.
pub fn instance_json(inst: &Instance, schema: &Schema) -> Result<String, ModelError> {
    inst.validate(schema)?;
    let mut bundle: BTreeMap<&str, Vec<Vec<serde_json::Value>>> = BTreeMap::new();
    for fact in inst.iter() {
        bundle.entry(fact.relation.as_str()).or_default().push(
            fact.values
                .iter()
                .map(|v| match v {
                    Value::Sym(s) => serde_json::Value::String(s.clone()),
                    Value::Int(n) => serde_json::Value::Number((*n).into()),
                })
                .collect(),
        );
    }
    let mut text = serde_json::to_string_pretty(&bundle).expect("JSON serialization");
    text.push('\n');
    Ok(text)
}
