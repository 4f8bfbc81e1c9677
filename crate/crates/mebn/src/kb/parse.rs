//! Parser for the KB text format.
//!
//! ```text
//! entity Company = p ;              # optional instance-id prefix
//! hyptype CoSubType ( p:Company ) values [ armorCo, mechCo, teamCo ] ;
//! fragment CompanyFrag ( p:Company ) {
//!   resident CoSubType(p) ;
//!   cpt CoSubType : [ 0.34, 0.33, 0.33 ] ;
//!   star_prior Company = 0.4 ;
//! }
//! ```
//!
//! `#` comments run to end of line; whitespace is insignificant.

use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use super::{FragmentNodeRef, FragmentSpec, KbError, MebnKb};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: {source}")]
    Semantic {
        line: usize,
        col: usize,
        #[source]
        source: KbError,
    },
}

impl ParseError {
    pub fn line_col(&self) -> (usize, usize) {
        match self {
            ParseError::Syntax { line, col, .. } => (*line, *col),
            ParseError::Semantic { line, col, .. } => (*line, *col),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Punct(char),
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "`{n}`"),
            Tok::Punct(c) => write!(f, "`{c}`"),
            Tok::Arrow => write!(f, "`->`"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

type Spanned = (Tok, usize, usize);

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut lx = Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    while lx.pos < lx.src.len() {
        let c = lx.src[lx.pos] as char;
        match c {
            ' ' | '\t' | '\r' => lx.bump(),
            '\n' => {
                lx.pos += 1;
                lx.line += 1;
                lx.col = 1;
            }
            '#' => {
                while lx.pos < lx.src.len() && lx.src[lx.pos] != b'\n' {
                    lx.bump();
                }
            }
            '-' => {
                let (line, col) = (lx.line, lx.col);
                if lx.src.get(lx.pos + 1) == Some(&b'>') {
                    lx.bump();
                    lx.bump();
                    out.push((Tok::Arrow, line, col));
                } else {
                    lx.number(&mut out)?;
                }
            }
            '(' | ')' | '[' | ']' | '{' | '}' | ';' | ':' | ',' | '=' | '|' => {
                out.push((Tok::Punct(c), lx.line, lx.col));
                lx.bump();
            }
            _ if c.is_ascii_digit() || c == '.' => lx.number(&mut out)?,
            _ if c.is_ascii_alphabetic() || c == '_' || c == '*' => {
                let (line, col) = (lx.line, lx.col);
                let start = lx.pos;
                while lx.pos < lx.src.len() {
                    let d = lx.src[lx.pos] as char;
                    if d.is_ascii_alphanumeric() || d == '_' || d == '*' {
                        lx.bump();
                    } else {
                        break;
                    }
                }
                let word = std::str::from_utf8(&lx.src[start..lx.pos]).unwrap().to_string();
                out.push((Tok::Ident(word), line, col));
            }
            _ => {
                return Err(ParseError::Syntax {
                    line: lx.line,
                    col: lx.col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

impl Lexer<'_> {
    fn bump(&mut self) {
        self.pos += 1;
        self.col += 1;
    }

    fn number(&mut self, out: &mut Vec<Spanned>) -> Result<(), ParseError> {
        let (line, col) = (self.line, self.col);
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.bump();
        }
        while self.pos < self.src.len() {
            let d = self.src[self.pos] as char;
            if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E'
                || ((d == '-' || d == '+')
                    && matches!(self.src.get(self.pos - 1), Some(b'e') | Some(b'E')))
            {
                self.bump();
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value = text.parse::<f64>().map_err(|_| ParseError::Syntax {
            line,
            col,
            msg: format!("malformed number `{text}`"),
        })?;
        out.push((Tok::Number(value), line, col));
        Ok(())
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self
            .peek()
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or_else(|| self.toks.last().map(|(_, l, c)| (*l, *c)).unwrap_or((1, 1)));
        ParseError::Syntax { line, col, msg: msg.into() }
    }

    fn next(&mut self, what: &str) -> Result<Spanned, ParseError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err_here(format!("expected {what}, found end of input")))?;
        self.pos += 1;
        Ok(t)
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        match self.next(what)? {
            (Tok::Ident(s), l, c) => Ok((s, l, c)),
            (t, l, c) => Err(ParseError::Syntax {
                line: l,
                col: c,
                msg: format!("expected {what}, found {t}"),
            }),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.next("number")? {
            (Tok::Number(n), _, _) => Ok(n),
            (t, l, c) => Err(ParseError::Syntax {
                line: l,
                col: c,
                msg: format!("expected number, found {t}"),
            }),
        }
    }

    fn punct(&mut self, p: char) -> Result<(), ParseError> {
        match self.next(&format!("`{p}`"))? {
            (Tok::Punct(q), _, _) if q == p => Ok(()),
            (t, l, c) => Err(ParseError::Syntax {
                line: l,
                col: c,
                msg: format!("expected `{p}`, found {t}"),
            }),
        }
    }

    fn eat_punct(&mut self, p: char) -> bool {
        if matches!(self.peek(), Some((Tok::Punct(q), _, _)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// `( name:Type, ... )`
    fn typed_attr_list(&mut self) -> Result<Vec<(String, String)>, ParseError> {
        self.punct('(')?;
        let mut out = Vec::new();
        loop {
            let (name, _, _) = self.ident("attribute name")?;
            self.punct(':')?;
            let (ty, _, _) = self.ident("entity type")?;
            out.push((name, ty));
            if !self.eat_punct(',') {
                break;
            }
        }
        self.punct(')')?;
        Ok(out)
    }

    /// `Hyp(attr, ...)`
    fn node_ref(&mut self) -> Result<FragmentNodeRef, ParseError> {
        let (hyp, _, _) = self.ident("hypothesis type")?;
        self.punct('(')?;
        let mut attrs = Vec::new();
        loop {
            let (a, _, _) = self.ident("fragment attribute")?;
            attrs.push(a);
            if !self.eat_punct(',') {
                break;
            }
        }
        self.punct(')')?;
        Ok(FragmentNodeRef { hyp_type: hyp, attrs })
    }

    /// `[ p1, p2, ... ]`
    fn number_list(&mut self) -> Result<Vec<f64>, ParseError> {
        self.punct('[')?;
        let mut out = Vec::new();
        loop {
            out.push(self.number()?);
            if !self.eat_punct(',') {
                break;
            }
        }
        self.punct(']')?;
        Ok(out)
    }
}

/// Parses KB text into a validated [`MebnKb`]. Semantic errors carry the
/// line/column of the declaration that caused them.
pub fn parse_kb(src: &str) -> Result<MebnKb, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut kb = MebnKb::new();
    while let Some((tok, line, col)) = p.peek().cloned() {
        let keyword = match tok {
            Tok::Ident(s) => s,
            t => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("expected declaration keyword, found {t}"),
                })
            }
        };
        match keyword.as_str() {
            "entity" => {
                p.pos += 1;
                let (label, l, c) = p.ident("entity label")?;
                let prefix = if p.eat_punct('=') {
                    Some(p.ident("id prefix")?.0)
                } else {
                    None
                };
                p.punct(';')?;
                let res = match prefix {
                    Some(pre) => kb.declare_entity_type_with_prefix(&label, &pre),
                    None => kb.declare_entity_type(&label),
                };
                res.map_err(|e| ParseError::Semantic { line: l, col: c, source: e })?;
            }
            "hyptype" => {
                p.pos += 1;
                let (label, l, c) = p.ident("hypothesis type label")?;
                let attrs = p.typed_attr_list()?;
                let (kw, kl, kc) = p.ident("`values`")?;
                if kw != "values" {
                    return Err(ParseError::Syntax {
                        line: kl,
                        col: kc,
                        msg: format!("expected `values`, found `{kw}`"),
                    });
                }
                p.punct('[')?;
                let mut values = Vec::new();
                loop {
                    values.push(p.ident("value label")?.0);
                    if !p.eat_punct(',') {
                        break;
                    }
                }
                p.punct(']')?;
                p.punct(';')?;
                let attrs_ref: Vec<(&str, &str)> =
                    attrs.iter().map(|(a, e)| (a.as_str(), e.as_str())).collect();
                let values_ref: Vec<&str> = values.iter().map(|v| v.as_str()).collect();
                kb.declare_hypothesis_type(&label, &attrs_ref, &values_ref)
                    .map_err(|e| ParseError::Semantic { line: l, col: c, source: e })?;
            }
            "fragment" => {
                p.pos += 1;
                let (fid, l, c) = p.ident("fragment id")?;
                let attrs = p.typed_attr_list()?;
                p.punct('{')?;
                let mut spec = FragmentSpec {
                    id: fid,
                    attrs,
                    inputs: Vec::new(),
                    residents: Vec::new(),
                    edges: Vec::new(),
                    cpt_rows: Vec::new(),
                    star_priors: BTreeMap::new(),
                };
                loop {
                    if p.eat_punct('}') {
                        break;
                    }
                    let (kw, kl, kc) = p.ident("fragment item")?;
                    match kw.as_str() {
                        "input" => {
                            spec.inputs.push(p.node_ref()?);
                            p.punct(';')?;
                        }
                        "resident" => {
                            spec.residents.push(p.node_ref()?);
                            p.punct(';')?;
                        }
                        "edge" => {
                            let from = p.node_ref()?;
                            match p.next("`->`")? {
                                (Tok::Arrow, _, _) => {}
                                (t, l2, c2) => {
                                    return Err(ParseError::Syntax {
                                        line: l2,
                                        col: c2,
                                        msg: format!("expected `->`, found {t}"),
                                    })
                                }
                            }
                            let to = p.node_ref()?;
                            p.punct(';')?;
                            check_edge_binding(&spec, &from, kl, kc)?;
                            check_edge_binding(&spec, &to, kl, kc)?;
                            spec.edges.push((from.hyp_type, to.hyp_type));
                        }
                        "cpt" => {
                            let (hyp, _, _) = p.ident("resident hypothesis type")?;
                            let mut conds = BTreeMap::new();
                            if p.eat_punct('|') {
                                loop {
                                    let (parent, _, _) = p.ident("parent type")?;
                                    p.punct('=')?;
                                    let (state, _, _) = p.ident("parent state")?;
                                    conds.insert(parent, state);
                                    if !p.eat_punct(',') {
                                        break;
                                    }
                                }
                            }
                            p.punct(':')?;
                            let dist = p.number_list()?;
                            p.punct(';')?;
                            spec.cpt_rows.push((hyp, conds, dist));
                        }
                        "star_prior" => {
                            let (entity, _, _) = p.ident("entity type")?;
                            p.punct('=')?;
                            let v = p.number()?;
                            p.punct(';')?;
                            spec.star_priors.insert(entity, v);
                        }
                        other => {
                            return Err(ParseError::Syntax {
                                line: kl,
                                col: kc,
                                msg: format!(
                                    "expected `input`, `resident`, `edge`, `cpt` or `star_prior`, found `{other}`"
                                ),
                            })
                        }
                    }
                }
                kb.declare_fragment_type(spec)
                    .map_err(|e| ParseError::Semantic { line: l, col: c, source: e })?;
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!(
                        "expected `entity`, `hyptype` or `fragment`, found `{other}`"
                    ),
                })
            }
        }
    }
    Ok(kb)
}

/// Edge endpoints repeat the node's attribute binding; require consistency
/// with the `input`/`resident` declaration.
fn check_edge_binding(
    spec: &FragmentSpec,
    endpoint: &FragmentNodeRef,
    line: usize,
    col: usize,
) -> Result<(), ParseError> {
    let declared = spec
        .inputs
        .iter()
        .chain(&spec.residents)
        .find(|r| r.hyp_type == endpoint.hyp_type);
    match declared {
        None => Err(ParseError::Semantic {
            line,
            col,
            source: KbError::EdgeUnknownNode {
                frag: spec.id.clone(),
                hyp: endpoint.hyp_type.clone(),
            },
        }),
        Some(r) if r.attrs != endpoint.attrs => Err(ParseError::Semantic {
            line,
            col,
            source: KbError::EdgeBindingMismatch {
                frag: spec.id.clone(),
                hyp: endpoint.hyp_type.clone(),
            },
        }),
        Some(_) => Ok(()),
    }
}
