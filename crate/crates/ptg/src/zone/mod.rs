//! Parametric zones: conjunctions of linear constraints over clocks and
//! rational-valued parameters, plus finite unions of such conjunctions.
//!
//! A convex zone is a set of constraints of the shapes `x ~ plt`,
//! `x - y ~ plt` and `plt' ~ plt`, where `x`, `y` are clocks, `plt` is a
//! linear term over parameters with rational coefficients and `~` is one of
//! `<`, `<=`, `=`, `>=`, `>`. Every clock and every parameter is implicitly
//! non-negative; those bounds hold semantically even when no corresponding
//! constraint is stored. All arithmetic is exact (arbitrary-precision
//! rationals), so emptiness, inclusion and projection are decided without
//! rounding.

use num::{BigInt, BigRational, One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

mod fm;
mod ops;
mod temporal;
pub mod text;

pub use ops::*;
pub use temporal::*;

/// Exact rational scalar used throughout the crate.
pub type Q = BigRational;

/// Rational from an integer.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Rational from a numerator/denominator pair.
pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Renders a rational as `n` or `n/d`.
pub fn format_q(v: &Q) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Parses `n` or `n/d`, with an optional leading minus sign.
pub fn parse_q(s: &str) -> Result<Q, ZoneError> {
    let s = s.trim();
    let bad = || ZoneError::BadRational(s.to_string());
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        Ok(Q::new(n, d))
    } else {
        let n: BigInt = s.parse().map_err(|_| bad())?;
        Ok(Q::from_integer(n))
    }
}

/// Errors raised by zone construction and manipulation.
#[derive(Debug, thiserror::Error)]
pub enum ZoneError {
    #[error("malformed rational literal `{0}`")]
    BadRational(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("dimension mismatch between zones")]
    DimsMismatch,
    #[error("constraint is not expressible in the zone grammar: {0}")]
    NotAZoneConstraint(String),
    #[error("epsilon bounds requested on a zone with an upper bound on clock `{0}`")]
    EpsilonOnUpperBounded(String),
    #[error("parameter `{0}` already exists")]
    DuplicateParameter(String),
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
}

/// Variable context shared by all zones of one game: ordered clock names
/// followed by ordered parameter names.
///
/// Rows of the internal inequality systems index clocks first
/// (`0..n_clocks`) and parameters after them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    pub clocks: Vec<String>,
    pub params: Vec<String>,
}

impl Dims {
    pub fn new(clocks: Vec<String>, params: Vec<String>) -> Arc<Dims> {
        Arc::new(Dims { clocks, params })
    }

    pub fn n_clocks(&self) -> usize {
        self.clocks.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_vars(&self) -> usize {
        self.clocks.len() + self.params.len()
    }

    pub fn clock(&self, name: &str) -> Option<usize> {
        self.clocks.iter().position(|c| c == name)
    }

    pub fn param(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }

    /// A copy of this context with one extra parameter appended.
    pub fn with_param(&self, name: &str) -> Result<Arc<Dims>, ZoneError> {
        if self.clock(name).is_some() || self.param(name).is_some() {
            return Err(ZoneError::DuplicateParameter(name.to_string()));
        }
        let mut params = self.params.clone();
        params.push(name.to_string());
        Ok(Dims::new(self.clocks.clone(), params))
    }

    /// A copy of this context without any clocks, for parameter-only zones.
    pub fn params_only(&self) -> Arc<Dims> {
        Dims::new(Vec::new(), self.params.clone())
    }
}

/// Comparison operator of a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    pub fn is_strict(self) -> bool {
        matches!(self, Rel::Lt | Rel::Gt)
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Rel::Lt | Rel::Le | Rel::Eq)
    }

    pub fn is_lower(self) -> bool {
        matches!(self, Rel::Gt | Rel::Ge | Rel::Eq)
    }

    /// Logical negation; `Eq` has no single-relation negation and must be
    /// split by the caller first.
    pub fn negated(self) -> Rel {
        match self {
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Ge => Rel::Lt,
            Rel::Gt => Rel::Le,
            Rel::Eq => unreachable!("Eq must be split before negation"),
        }
    }

    /// Mirror image, as used when both sides of a comparison swap.
    pub fn flipped(self) -> Rel {
        match self {
            Rel::Lt => Rel::Gt,
            Rel::Le => Rel::Ge,
            Rel::Ge => Rel::Le,
            Rel::Gt => Rel::Lt,
            Rel::Eq => Rel::Eq,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }

    pub fn holds(self, lhs: &Q, rhs: &Q) -> bool {
        match self {
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Gt => lhs > rhs,
        }
    }
}

/// Linear term over parameters: a rational constant plus rational multiples
/// of parameters (indexed into [`Dims::params`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearTerm {
    pub constant: Q,
    pub coeffs: BTreeMap<usize, Q>,
}

impl LinearTerm {
    pub fn zero() -> LinearTerm {
        LinearTerm { constant: Q::zero(), coeffs: BTreeMap::new() }
    }

    pub fn constant(c: Q) -> LinearTerm {
        LinearTerm { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn param(idx: usize) -> LinearTerm {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(idx, Q::one());
        LinearTerm { constant: Q::zero(), coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.coeffs.is_empty()
    }

    pub fn add(&self, other: &LinearTerm) -> LinearTerm {
        let mut out = self.clone();
        out.constant += &other.constant;
        for (i, c) in &other.coeffs {
            let entry = out.coeffs.entry(*i).or_insert_with(Q::zero);
            *entry += c;
        }
        out.coeffs.retain(|_, c| !c.is_zero());
        out
    }

    pub fn neg(&self) -> LinearTerm {
        LinearTerm {
            constant: -self.constant.clone(),
            coeffs: self.coeffs.iter().map(|(i, c)| (*i, -c.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &LinearTerm) -> LinearTerm {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: &Q) -> LinearTerm {
        if k.is_zero() {
            return LinearTerm::zero();
        }
        LinearTerm {
            constant: &self.constant * k,
            coeffs: self.coeffs.iter().map(|(i, c)| (*i, c * k)).collect(),
        }
    }

    pub fn plus_const(&self, k: &Q) -> LinearTerm {
        let mut out = self.clone();
        out.constant += k;
        out
    }

    pub fn eval(&self, params: &[Q]) -> Q {
        let mut v = self.constant.clone();
        for (i, c) in &self.coeffs {
            v += c * &params[*i];
        }
        v
    }
}

/// One stored constraint of a convex zone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Atom {
    /// `x ~ plt`
    Clock { clock: usize, rel: Rel, term: LinearTerm },
    /// `left - right ~ plt`
    Diag { left: usize, right: usize, rel: Rel, term: LinearTerm },
    /// `lhs ~ rhs`, both linear terms over parameters only
    Param { lhs: LinearTerm, rel: Rel, rhs: LinearTerm },
}

impl Atom {
    pub fn rel(&self) -> Rel {
        match self {
            Atom::Clock { rel, .. } | Atom::Diag { rel, .. } | Atom::Param { rel, .. } => *rel,
        }
    }

    pub fn with_rel(&self, rel: Rel) -> Atom {
        let mut a = self.clone();
        match &mut a {
            Atom::Clock { rel: r, .. } | Atom::Diag { rel: r, .. } | Atom::Param { rel: r, .. } => {
                *r = rel
            }
        }
        a
    }

    /// Splits an equality into its two inequality halves; any other relation
    /// is returned unchanged as a singleton.
    pub fn split_eq(&self) -> Vec<Atom> {
        if self.rel() == Rel::Eq {
            vec![self.with_rel(Rel::Le), self.with_rel(Rel::Ge)]
        } else {
            vec![self.clone()]
        }
    }

    /// Negation of a non-equality atom.
    pub fn negated(&self) -> Atom {
        self.with_rel(self.rel().negated())
    }

    /// True when the atom is a temporal constraint (single-clock bound);
    /// diagonals and parameter-only constraints are invariant under delay.
    pub fn is_temporal(&self) -> bool {
        matches!(self, Atom::Clock { .. })
    }

    pub fn holds(&self, val: &Valuation) -> bool {
        match self {
            Atom::Clock { clock, rel, term } => {
                rel.holds(&val.clocks[*clock], &term.eval(&val.params))
            }
            Atom::Diag { left, right, rel, term } => {
                let lhs = &val.clocks[*left] - &val.clocks[*right];
                rel.holds(&lhs, &term.eval(&val.params))
            }
            Atom::Param { lhs, rel, rhs } => {
                rel.holds(&lhs.eval(&val.params), &rhs.eval(&val.params))
            }
        }
    }
}

/// A concrete assignment of non-negative rationals to clocks and parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Valuation {
    pub clocks: Vec<Q>,
    pub params: Vec<Q>,
}

impl Valuation {
    pub fn zero_clocks(dims: &Dims, params: Vec<Q>) -> Valuation {
        Valuation { clocks: vec![Q::zero(); dims.n_clocks()], params }
    }

    /// The valuation after `delay` time units.
    pub fn elapse(&self, delay: &Q) -> Valuation {
        Valuation {
            clocks: self.clocks.iter().map(|c| c + delay).collect(),
            params: self.params.clone(),
        }
    }

    /// The valuation with clocks in `resets` set to zero.
    pub fn reset(&self, resets: &[usize]) -> Valuation {
        let mut clocks = self.clocks.clone();
        for r in resets {
            clocks[*r] = Q::zero();
        }
        Valuation { clocks, params: self.params.clone() }
    }
}

/// Convex parametric zone: a conjunction of stored [`Atom`]s interpreted
/// together with implicit non-negativity of all clocks and parameters.
#[derive(Debug, Clone)]
pub struct ConvexZone {
    pub dims: Arc<Dims>,
    pub atoms: Vec<Atom>,
}

impl ConvexZone {
    /// The universal zone (only the implicit non-negativity bounds).
    pub fn top(dims: Arc<Dims>) -> ConvexZone {
        ConvexZone { dims, atoms: Vec::new() }
    }

    pub fn new(dims: Arc<Dims>, atoms: Vec<Atom>) -> ConvexZone {
        ConvexZone { dims, atoms }
    }

    pub fn with_atom(&self, atom: Atom) -> ConvexZone {
        let mut z = self.clone();
        z.atoms.push(atom);
        z
    }

    /// Conjunction of two zones over the same context.
    pub fn intersect(&self, other: &ConvexZone) -> ConvexZone {
        debug_assert_eq!(self.dims, other.dims);
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        ConvexZone { dims: self.dims.clone(), atoms }
    }

    pub fn satisfies(&self, val: &Valuation) -> bool {
        val.clocks.iter().all(|c| !c.is_negative())
            && val.params.iter().all(|p| !p.is_negative())
            && self.atoms.iter().all(|a| a.holds(val))
    }

    pub fn is_empty(&self) -> bool {
        fm::zone_is_empty(self)
    }

    pub fn to_union(&self) -> ZoneUnion {
        ZoneUnion::from_pieces(self.dims.clone(), vec![self.clone()])
    }
}

/// Finite union of convex zones. Empty member zones are pruned eagerly, so
/// `pieces.is_empty()` means the union denotes the empty set.
#[derive(Debug, Clone)]
pub struct ZoneUnion {
    pub dims: Arc<Dims>,
    pub pieces: Vec<ConvexZone>,
}

impl ZoneUnion {
    pub fn empty(dims: Arc<Dims>) -> ZoneUnion {
        ZoneUnion { dims, pieces: Vec::new() }
    }

    pub fn top(dims: Arc<Dims>) -> ZoneUnion {
        let piece = ConvexZone::top(dims.clone());
        ZoneUnion { dims, pieces: vec![piece] }
    }

    pub fn from_pieces(dims: Arc<Dims>, pieces: Vec<ConvexZone>) -> ZoneUnion {
        let pieces = pieces.into_iter().filter(|p| !p.is_empty()).collect();
        ZoneUnion { dims, pieces }
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn satisfies(&self, val: &Valuation) -> bool {
        self.pieces.iter().any(|p| p.satisfies(val))
    }

    pub fn union_with(&self, other: &ZoneUnion) -> ZoneUnion {
        debug_assert_eq!(self.dims, other.dims);
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        ZoneUnion { dims: self.dims.clone(), pieces }
    }

    pub fn intersect_zone(&self, z: &ConvexZone) -> ZoneUnion {
        let pieces = self.pieces.iter().map(|p| p.intersect(z)).collect();
        ZoneUnion::from_pieces(self.dims.clone(), pieces)
    }

    pub fn intersect(&self, other: &ZoneUnion) -> ZoneUnion {
        let mut pieces = Vec::new();
        for a in &self.pieces {
            for b in &other.pieces {
                pieces.push(a.intersect(b));
            }
        }
        ZoneUnion::from_pieces(self.dims.clone(), pieces)
    }

    /// Merges member zones pairwise whenever the constraints they share
    /// describe exactly their union, then drops subsumed members. Keeps
    /// results readable without changing the denoted set.
    pub fn coalesce(&self) -> ZoneUnion {
        let mut pieces: Vec<ConvexZone> =
            self.pieces.iter().filter(|p| !p.is_empty()).cloned().collect();
        'retry: loop {
            for i in 0..pieces.len() {
                for j in (i + 1)..pieces.len() {
                    if let Some(merged) = ops::convex_join(&pieces[i], &pieces[j]) {
                        pieces[i] = merged;
                        pieces.remove(j);
                        continue 'retry;
                    }
                }
            }
            break;
        }
        ZoneUnion { dims: self.dims.clone(), pieces }.reduce()
    }

    /// Drops member zones that are contained in another single member, a
    /// cheap measure against piece blow-up in fixpoint loops.
    pub fn reduce(&self) -> ZoneUnion {
        let mut kept: Vec<ConvexZone> = Vec::new();
        'outer: for (i, p) in self.pieces.iter().enumerate() {
            for (j, q) in self.pieces.iter().enumerate() {
                if i != j && ops::convex_subset(p, q) && !(j < i && ops::convex_subset(q, p)) {
                    continue 'outer;
                }
            }
            kept.push(p.clone());
        }
        ZoneUnion { dims: self.dims.clone(), pieces: kept }
    }
}

impl fmt::Display for ConvexZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", text::format_zone(self))
    }
}

impl fmt::Display for ZoneUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", text::format_union(self))
    }
}
