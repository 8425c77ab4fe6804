//! Tokenizer and recursive-descent parser for concept programs and
//! library blocks.

use std::collections::{HashMap, HashSet};

use super::{ConceptProgram, DslError, Family, ObjectKind, ObjectStatement, PointSpec, RefProblem};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Star,
    Eq,
    LParen,
    RParen,
    Comma,
    LBrace,
    RBrace,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Star => "`*`".into(),
            Tok::Eq => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, DslError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (l, cl) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let ch = chars.next().unwrap();
            if ch == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '#' {
            while let Some(&c2) = chars.peek() {
                if c2 == '\n' {
                    break;
                }
                bump(&mut chars);
            }
            continue;
        }
        let single = match c {
            '*' => Some(Tok::Star),
            '=' => Some(Tok::Eq),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            _ => None,
        };
        if let Some(tok) = single {
            bump(&mut chars);
            out.push(Spanned { tok, line: l, col: cl });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(&c2) = chars.peek() {
                if c2.is_ascii_alphanumeric() || c2 == '_' || c2 == '-' {
                    ident.push(c2);
                    bump(&mut chars);
                } else {
                    break;
                }
            }
            out.push(Spanned {
                tok: Tok::Ident(ident),
                line: l,
                col: cl,
            });
            continue;
        }
        return Err(DslError::Syntax {
            line: l,
            col: cl,
            expected: "identifier or punctuation".into(),
            found: format!("`{c}`"),
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

pub(crate) struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Decl {
    Point,
    Object,
}

impl Parser {
    pub(crate) fn new(toks: Vec<Spanned>) -> Self {
        Parser { toks, pos: 0 }
    }

    pub(crate) fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn syntax(&self, expected: &str) -> DslError {
        let t = self.peek();
        DslError::Syntax {
            line: t.line,
            col: t.col,
            expected: expected.into(),
            found: t.tok.describe(),
        }
    }

    pub(crate) fn expect(&mut self, tok: Tok) -> Result<Spanned, DslError> {
        if self.peek().tok == tok {
            Ok(self.next())
        } else {
            Err(self.syntax(&tok.describe()))
        }
    }

    pub(crate) fn ident(&mut self, what: &str) -> Result<Spanned, DslError> {
        match self.peek().tok {
            Tok::Ident(_) => Ok(self.next()),
            _ => Err(self.syntax(what)),
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    /// Statements until `}` or end of input. Identifier checks run after
    /// the syntax pass so a forward reference can be told apart from a
    /// name that is never declared.
    pub(crate) fn statements(&mut self) -> Result<Vec<ObjectStatement>, DslError> {
        let mut raw = Vec::new();
        while !matches!(self.peek().tok, Tok::RBrace | Tok::Eof) {
            raw.push(self.statement()?);
        }
        resolve(raw)
    }

    fn statement(&mut self) -> Result<RawStatement, DslError> {
        let id = self.ident("statement identifier")?;
        let visible = if self.peek().tok == Tok::Star {
            self.next();
            false
        } else {
            true
        };
        self.expect(Tok::Eq)?;
        let kind_tok = self.ident("`line` or `circle`")?;
        let kind = match &kind_tok.tok {
            Tok::Ident(k) if k == "line" => ObjectKind::Line,
            Tok::Ident(k) if k == "circle" => ObjectKind::Circle,
            other => {
                return Err(DslError::Syntax {
                    line: kind_tok.line,
                    col: kind_tok.col,
                    expected: "`line` or `circle`".into(),
                    found: other.describe(),
                })
            }
        };
        self.expect(Tok::LParen)?;
        let p1 = self.point()?;
        self.expect(Tok::Comma)?;
        let p2 = self.point()?;
        self.expect(Tok::RParen)?;
        Ok(RawStatement {
            id,
            kind,
            visible,
            points: [p1, p2],
        })
    }

    fn point(&mut self) -> Result<RawPoint, DslError> {
        let id = self.ident("point identifier")?;
        if self.peek().tok != Tok::LParen {
            return Ok(RawPoint {
                id,
                refs: None,
            });
        }
        self.next();
        let mut refs = Vec::new();
        if self.peek().tok != Tok::RParen {
            refs.push(self.ident("object reference")?);
            while self.peek().tok == Tok::Comma {
                self.next();
                refs.push(self.ident("object reference")?);
            }
        }
        self.expect(Tok::RParen)?;
        Ok(RawPoint {
            id,
            refs: Some(refs),
        })
    }
}

pub(crate) struct RawPoint {
    id: Spanned,
    /// `None` for a bare reuse, `Some` for a declaration.
    refs: Option<Vec<Spanned>>,
}

pub(crate) struct RawStatement {
    id: Spanned,
    kind: ObjectKind,
    visible: bool,
    points: [RawPoint; 2],
}

fn name(s: &Spanned) -> &str {
    match &s.tok {
        Tok::Ident(n) => n,
        _ => unreachable!("identifier token"),
    }
}

fn ref_err(s: &Spanned, problem: RefProblem) -> DslError {
    DslError::Reference {
        line: s.line,
        col: s.col,
        ident: name(s).to_string(),
        problem,
    }
}

fn resolve(raw: Vec<RawStatement>) -> Result<Vec<ObjectStatement>, DslError> {
    let later_objects: HashSet<&str> = raw.iter().map(|s| name(&s.id)).collect();
    let mut declared: HashMap<String, Decl> = HashMap::new();
    let mut out = Vec::with_capacity(raw.len());
    for stmt in &raw {
        let mut pts = Vec::with_capacity(2);
        for rp in &stmt.points {
            let pid = name(&rp.id);
            match &rp.refs {
                None => {
                    match declared.get(pid) {
                        Some(Decl::Point) => {}
                        Some(Decl::Object) => return Err(ref_err(&rp.id, RefProblem::WrongKind)),
                        None => {
                            // declared as the other endpoint of this statement?
                            if pts.iter().any(|p: &PointSpec| p.id == pid) {
                                return Err(ref_err(&rp.id, RefProblem::SameEndpoints));
                            }
                            return Err(ref_err(&rp.id, RefProblem::Undeclared));
                        }
                    }
                    if pts.iter().any(|p: &PointSpec| p.id == pid) {
                        return Err(ref_err(&rp.id, RefProblem::SameEndpoints));
                    }
                    pts.push(PointSpec {
                        id: pid.to_string(),
                        refs: Vec::new(),
                        reuse: true,
                    });
                }
                Some(refs) => {
                    if refs.len() > 2 {
                        return Err(DslError::Arity {
                            line: rp.id.line,
                            col: rp.id.col,
                            point: pid.to_string(),
                            count: refs.len(),
                        });
                    }
                    let mut names = Vec::with_capacity(refs.len());
                    for r in refs {
                        let rn = name(r);
                        match declared.get(rn) {
                            Some(Decl::Object) => {}
                            Some(Decl::Point) => return Err(ref_err(r, RefProblem::WrongKind)),
                            None if later_objects.contains(rn) => {
                                return Err(ref_err(r, RefProblem::Forward))
                            }
                            None => return Err(ref_err(r, RefProblem::Undeclared)),
                        }
                        if names.contains(&rn) {
                            return Err(ref_err(r, RefProblem::Duplicate));
                        }
                        names.push(rn);
                    }
                    if declared.contains_key(pid) || pts.iter().any(|p: &PointSpec| p.id == pid) {
                        return Err(ref_err(&rp.id, RefProblem::Duplicate));
                    }
                    pts.push(PointSpec {
                        id: pid.to_string(),
                        refs: names.into_iter().map(String::from).collect(),
                        reuse: false,
                    });
                }
            }
        }
        for p in &pts {
            if !p.reuse {
                declared.insert(p.id.clone(), Decl::Point);
            }
        }
        let sid = name(&stmt.id);
        if declared.contains_key(sid) {
            return Err(ref_err(&stmt.id, RefProblem::Duplicate));
        }
        declared.insert(sid.to_string(), Decl::Object);
        let p2 = pts.pop().unwrap();
        let p1 = pts.pop().unwrap();
        out.push(ObjectStatement {
            id: sid.to_string(),
            kind: stmt.kind,
            p1,
            p2,
            visible: stmt.visible,
        });
    }
    Ok(out)
}

/// Parse a bare program (no `concept` header). The result is named
/// `anonymous` in the `constraints` family.
pub fn parse_concept(source: &str) -> Result<ConceptProgram, DslError> {
    let mut p = Parser::new(tokenize(source)?);
    let stmts = p.statements()?;
    if !p.at_eof() {
        return Err(p.syntax("statement identifier"));
    }
    if stmts.is_empty() {
        return Err(p.syntax("at least one statement"));
    }
    Ok(ConceptProgram {
        name: "anonymous".into(),
        family: Family::Constraints,
        statements: stmts,
    })
}
