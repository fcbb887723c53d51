//! Textual syntax for constraints, zones and unions.
//!
//! Comparisons relate two linear expressions over clocks and parameters,
//! e.g. `x - y <= 2*p + 3/2` or `1 < x`; chained comparisons such as
//! `p <= x <= p + eps` are accepted. Conjunctions use `&&`, unions `||`
//! (between parenthesized conjunctions). `true` denotes the universal zone
//! and `false` the empty union. `#` starts a line comment.

use super::{Atom, ConvexZone, Dims, LinearTerm, Q, Rel, ZoneError, ZoneUnion};
use num::{BigInt, One, Signed, Zero};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(BigInt),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
pub(crate) struct SpannedTok {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: &[&str] = &[
    "&&", "||", "->", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "(", ")", "{", "}", ",",
    ";", ":", "@",
];

pub(crate) fn lex(src: &str) -> Result<Vec<SpannedTok>, ZoneError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();
    let advance = |c: char, line: &mut usize, col: &mut usize| {
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                advance(c, &mut line, &mut col);
            }
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            advance(c, &mut line, &mut col);
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    s.push(c);
                    chars.next();
                    advance(c, &mut line, &mut col);
                } else {
                    break;
                }
            }
            out.push(SpannedTok { tok: Tok::Ident(s), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    s.push(c);
                    chars.next();
                    advance(c, &mut line, &mut col);
                } else {
                    break;
                }
            }
            let n: BigInt = s.parse().expect("digits parse as an integer");
            out.push(SpannedTok { tok: Tok::Int(n), line: tl, col: tc });
            continue;
        }
        let mut matched = None;
        for sym in SYMBOLS {
            let mut it = chars.clone();
            if sym.chars().all(|sc| it.next() == Some(sc)) {
                matched = Some(*sym);
                break;
            }
        }
        match matched {
            Some(sym) => {
                for sc in sym.chars() {
                    chars.next();
                    advance(sc, &mut line, &mut col);
                }
                out.push(SpannedTok { tok: Tok::Sym(sym), line: tl, col: tc });
            }
            None => {
                return Err(ZoneError::Parse {
                    line: tl,
                    col: tc,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

/// Token cursor shared by the constraint and model parsers.
pub(crate) struct Cursor {
    toks: Vec<SpannedTok>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<SpannedTok>) -> Cursor {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn next_tok(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    pub fn error(&self, msg: impl Into<String>) -> ZoneError {
        let (line, col) = self.here();
        ZoneError::Parse { line, col, msg: msg.into() }
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, sym: &'static str) -> Result<(), ZoneError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`")))
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek() == Some(&Tok::Ident(kw.to_string())) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_ident(&mut self) -> Result<String, ZoneError> {
        match self.next_tok() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error("expected an identifier"))
            }
        }
    }
}

/// A parsed linear expression over clocks and parameters.
struct GenLin {
    clocks: Vec<Q>,
    term: LinearTerm,
}

impl GenLin {
    fn zero(dims: &Dims) -> GenLin {
        GenLin { clocks: vec![Q::zero(); dims.n_clocks()], term: LinearTerm::zero() }
    }

    fn sub(&self, other: &GenLin) -> GenLin {
        GenLin {
            clocks: self.clocks.iter().zip(&other.clocks).map(|(a, b)| a - b).collect(),
            term: self.term.sub(&other.term),
        }
    }
}

fn parse_rational(cur: &mut Cursor) -> Result<Q, ZoneError> {
    match cur.next_tok() {
        Some(Tok::Int(n)) => {
            if cur.eat_sym("/") {
                match cur.next_tok() {
                    Some(Tok::Int(d)) if !d.is_zero() => Ok(Q::new(n, d)),
                    _ => Err(cur.error("expected a non-zero denominator")),
                }
            } else {
                Ok(Q::from_integer(n))
            }
        }
        _ => {
            cur.pos = cur.pos.saturating_sub(1);
            Err(cur.error("expected a number"))
        }
    }
}

fn parse_expr(cur: &mut Cursor, dims: &Dims) -> Result<GenLin, ZoneError> {
    let mut acc = GenLin::zero(dims);
    let mut sign = Q::one();
    let mut first = true;
    loop {
        if !first {
            if cur.eat_sym("+") {
                sign = Q::one();
            } else if cur.eat_sym("-") {
                sign = -Q::one();
            } else {
                break;
            }
        } else if cur.eat_sym("-") {
            sign = -Q::one();
        }
        first = false;
        // one summand: coefficient, variable, or coefficient '*' variable
        let coef = match cur.peek() {
            Some(Tok::Int(_)) => {
                let c = parse_rational(cur)?;
                if cur.eat_sym("*") {
                    Some(c)
                } else {
                    acc.term.constant += &sign * c;
                    continue;
                }
            }
            _ => None,
        };
        let name = cur.expect_ident()?;
        let c = coef.unwrap_or_else(Q::one) * &sign;
        if let Some(idx) = dims.clock(&name) {
            acc.clocks[idx] += c;
        } else if let Some(idx) = dims.param(&name) {
            let entry = acc.term.coeffs.entry(idx).or_insert_with(Q::zero);
            *entry += c;
            if entry.is_zero() {
                acc.term.coeffs.remove(&idx);
            }
        } else {
            return Err(ZoneError::UnknownVariable(name));
        }
    }
    Ok(acc)
}

fn rel_from_sym(sym: &str) -> Option<Rel> {
    match sym {
        "<" => Some(Rel::Lt),
        "<=" => Some(Rel::Le),
        "=" => Some(Rel::Eq),
        ">=" => Some(Rel::Ge),
        ">" => Some(Rel::Gt),
        _ => None,
    }
}

fn peek_rel(cur: &Cursor) -> Option<Rel> {
    match cur.peek() {
        Some(Tok::Sym(s)) => rel_from_sym(s),
        _ => None,
    }
}

/// Turn `lhs rel rhs` into a stored constraint; the clock part of
/// `lhs - rhs` must involve at most two clocks with coefficients +1/-1.
fn comparison_atom(lhs: &GenLin, rel: Rel, rhs: &GenLin, dims: &Dims) -> Result<Atom, ZoneError> {
    let d = lhs.sub(rhs);
    let nz: Vec<usize> = (0..dims.n_clocks()).filter(|i| !d.clocks[*i].is_zero()).collect();
    let reject = |msg: &str| Err(ZoneError::NotAZoneConstraint(msg.to_string()));
    match nz.as_slice() {
        [] => Ok(Atom::Param {
            lhs: LinearTerm { constant: Q::zero(), coeffs: d.term.coeffs.clone() },
            rel,
            rhs: LinearTerm::constant(-d.term.constant.clone()),
        }),
        [x] => {
            let c = &d.clocks[*x];
            let term = d.term.scale(&(-c.clone().recip()));
            if c.is_positive() {
                if !c.is_one() {
                    return reject("clock coefficient must be 1");
                }
                Ok(Atom::Clock { clock: *x, rel, term })
            } else {
                if *c != -Q::one() {
                    return reject("clock coefficient must be -1");
                }
                Ok(Atom::Clock { clock: *x, rel: rel.flipped(), term })
            }
        }
        [x, y] => {
            let (cx, cy) = (&d.clocks[*x], &d.clocks[*y]);
            if !(cx.is_one() && *cy == -Q::one()) && !(*cx == -Q::one() && cy.is_one()) {
                return reject("clock difference must have coefficients +1/-1");
            }
            // left = the clock with coefficient +1; moving the parameter
            // part to the right-hand side negates it
            let (l, r) = if cx.is_one() { (*x, *y) } else { (*y, *x) };
            Ok(Atom::Diag { left: l, right: r, rel, term: d.term.neg() })
        }
        _ => reject("at most two clocks may appear in one constraint"),
    }
}

/// One (possibly chained) comparison, yielding one or more atoms.
pub(crate) fn parse_comparison(cur: &mut Cursor, dims: &Dims) -> Result<Vec<Atom>, ZoneError> {
    let mut lhs = parse_expr(cur, dims)?;
    let mut atoms = Vec::new();
    let mut any = false;
    while let Some(rel) = peek_rel(cur) {
        cur.next_tok();
        let rhs = parse_expr(cur, dims)?;
        atoms.push(comparison_atom(&lhs, rel, &rhs, dims)?);
        lhs = rhs;
        any = true;
    }
    if !any {
        return Err(cur.error("expected a comparison operator"));
    }
    Ok(atoms)
}

/// Conjunction of comparisons (or `true`), with optional parentheses.
pub(crate) fn parse_conj(cur: &mut Cursor, dims: &Arc<Dims>) -> Result<ConvexZone, ZoneError> {
    if cur.eat_sym("(") {
        let z = parse_conj(cur, dims)?;
        cur.expect_sym(")")?;
        return Ok(z);
    }
    if cur.eat_keyword("true") {
        return Ok(ConvexZone::top(dims.clone()));
    }
    let mut atoms = parse_comparison(cur, dims)?;
    while cur.eat_sym("&&") {
        if cur.eat_sym("(") {
            let inner = parse_conj(cur, dims)?;
            cur.expect_sym(")")?;
            atoms.extend(inner.atoms);
        } else if cur.eat_keyword("true") {
            // neutral element
        } else {
            atoms.extend(parse_comparison(cur, dims)?);
        }
    }
    Ok(ConvexZone::new(dims.clone(), atoms))
}

pub(crate) fn parse_union_cursor(
    cur: &mut Cursor,
    dims: &Arc<Dims>,
) -> Result<ZoneUnion, ZoneError> {
    if cur.eat_keyword("false") {
        return Ok(ZoneUnion::empty(dims.clone()));
    }
    let mut pieces = vec![parse_conj(cur, dims)?];
    while cur.eat_sym("||") {
        pieces.push(parse_conj(cur, dims)?);
    }
    Ok(ZoneUnion::from_pieces(dims.clone(), pieces))
}

/// Parses a full string as a convex zone.
pub fn parse_zone(src: &str, dims: &Arc<Dims>) -> Result<ConvexZone, ZoneError> {
    let mut cur = Cursor::new(lex(src)?);
    let z = parse_conj(&mut cur, dims)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after zone"));
    }
    Ok(z)
}

/// Parses a full string as a union of convex zones.
pub fn parse_union(src: &str, dims: &Arc<Dims>) -> Result<ZoneUnion, ZoneError> {
    let mut cur = Cursor::new(lex(src)?);
    let u = parse_union_cursor(&mut cur, dims)?;
    if !cur.at_end() {
        return Err(cur.error("trailing input after union"));
    }
    Ok(u)
}

pub fn format_term(term: &LinearTerm, dims: &Dims) -> String {
    let mut parts: Vec<(bool, String)> = Vec::new();
    for (idx, coef) in &term.coeffs {
        let name = &dims.params[*idx];
        let mag = coef.abs();
        let body = if mag.is_one() { name.clone() } else { format!("{}*{}", super::format_q(&mag), name) };
        parts.push((coef.is_negative(), body));
    }
    if !term.constant.is_zero() || parts.is_empty() {
        parts.push((term.constant.is_negative(), super::format_q(&term.constant.abs())));
    }
    let mut out = String::new();
    for (i, (neg, body)) in parts.iter().enumerate() {
        if i == 0 {
            if *neg {
                out.push('-');
            }
        } else {
            out.push_str(if *neg { " - " } else { " + " });
        }
        out.push_str(body);
    }
    out
}

pub fn format_atom(atom: &Atom, dims: &Dims) -> String {
    match atom {
        Atom::Clock { clock, rel, term } => {
            format!("{} {} {}", dims.clocks[*clock], rel.symbol(), format_term(term, dims))
        }
        Atom::Diag { left, right, rel, term } => format!(
            "{} - {} {} {}",
            dims.clocks[*left],
            dims.clocks[*right],
            rel.symbol(),
            format_term(term, dims)
        ),
        Atom::Param { lhs, rel, rhs } => {
            format!("{} {} {}", format_term(lhs, dims), rel.symbol(), format_term(rhs, dims))
        }
    }
}

pub fn format_zone(z: &ConvexZone) -> String {
    if z.atoms.is_empty() {
        return "true".to_string();
    }
    z.atoms.iter().map(|a| format_atom(a, &z.dims)).collect::<Vec<_>>().join(" && ")
}

pub fn format_union(u: &ZoneUnion) -> String {
    match u.pieces.len() {
        0 => "false".to_string(),
        1 => format_zone(&u.pieces[0]),
        _ => u
            .pieces
            .iter()
            .map(|p| format!("({})", format_zone(p)))
            .collect::<Vec<_>>()
            .join(" || "),
    }
}
