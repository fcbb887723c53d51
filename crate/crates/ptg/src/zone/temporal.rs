//! Temporal structure of zones: constraint classification, temporal
//! closures and bounds, urgency splitting and epsilon lower bounds.
//!
//! A clock bound `x ~ plt` is a temporal constraint: its truth changes as
//! time elapses. Diagonals and parameter-only constraints are invariant
//! under delay. The temporal upper closure of a zone is the set of limit
//! points reachable from inside the zone by letting a positive amount of
//! time accumulate; the temporal upper bound is the set of last instants at
//! which some upper constraint is tight. Both notions drive forced-move
//! detection and controller synthesis.

use super::fm;
use super::ops::normalize;
use super::{Atom, ConvexZone, Dims, LinearTerm, Q, Rel, ZoneError, ZoneUnion};
use num::One;
use std::sync::Arc;

/// Direction of a temporal closure or bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upper,
    Lower,
}

/// Constraint classification of a normalized zone.
#[derive(Debug, Clone)]
pub struct Classification {
    /// Stored upper temporal constraints (`<`, `<=`, and the upper half of `=`).
    pub upper: Vec<Atom>,
    /// Stored lower temporal constraints (`>`, `>=`, and the lower half of `=`).
    pub lower: Vec<Atom>,
    /// Clocks whose implicit `x >= 0` bound is not subsumed by any stored
    /// lower constraint.
    pub implicit_lower: Vec<usize>,
    /// Delay-invariant constraints (diagonals and parameter comparisons).
    pub diagonal: Vec<Atom>,
}

/// True when the zone, with implicit bounds on every variable except clock
/// `x`, still admits a point with `x < 0`; in that case the implicit bound
/// on `x` carries information of its own.
fn implicit_lower_needed(z: &ConvexZone, clock: usize) -> bool {
    let n = z.dims.n_vars();
    let mut rows = fm::zone_rows(z, n);
    for v in 0..n {
        if v != clock {
            rows.push(fm::nonneg_row(v, n));
        }
    }
    let neg = Atom::Clock { clock, rel: Rel::Lt, term: LinearTerm::zero() };
    rows.extend(fm::atom_rows(&neg, &z.dims, n));
    fm::feasible(rows, n)
}

/// Classify the stored constraints of `z` after normalization.
pub fn classify(z: &ConvexZone) -> Classification {
    let zn = normalize(z);
    let mut cls = Classification {
        upper: Vec::new(),
        lower: Vec::new(),
        implicit_lower: Vec::new(),
        diagonal: Vec::new(),
    };
    for atom in &zn.atoms {
        match atom {
            Atom::Clock { rel, .. } => {
                if rel.is_upper() {
                    cls.upper.push(atom.clone());
                }
                if rel.is_lower() {
                    cls.lower.push(atom.clone());
                }
            }
            other => cls.diagonal.push(other.clone()),
        }
    }
    for clock in 0..zn.dims.n_clocks() {
        if implicit_lower_needed(&zn, clock) {
            cls.implicit_lower.push(clock);
        }
    }
    cls
}

/// Equality-free view of the stored constraints of a normalized zone.
fn split_atoms(zn: &ConvexZone) -> Vec<Atom> {
    zn.atoms.iter().flat_map(|a| a.split_eq()).collect()
}

fn close_atom(atom: &Atom, dir: Direction) -> Atom {
    match atom {
        Atom::Clock { rel, .. } => {
            let new_rel = match (dir, rel) {
                (Direction::Upper, Rel::Lt | Rel::Le) => Rel::Le,
                (Direction::Upper, Rel::Gt | Rel::Ge) => Rel::Gt,
                (Direction::Lower, Rel::Lt | Rel::Le) => Rel::Lt,
                (Direction::Lower, Rel::Gt | Rel::Ge) => Rel::Ge,
                (_, Rel::Eq) => unreachable!("equalities are split before closing"),
            };
            atom.with_rel(new_rel)
        }
        other => other.clone(),
    }
}

/// Atoms of the temporal closure, aligned index-by-index with the
/// equality-free stored atoms, plus materialized strict implicit bounds in
/// the upper direction.
fn closure_atoms(zn: &ConvexZone, dir: Direction) -> Vec<Atom> {
    let mut atoms: Vec<Atom> = split_atoms(zn).iter().map(|a| close_atom(a, dir)).collect();
    if dir == Direction::Upper {
        // every accumulated positive delay pushes each clock strictly above
        // its infimum, so implicit lower bounds become strict
        for clock in 0..zn.dims.n_clocks() {
            if implicit_lower_needed(zn, clock) {
                atoms.push(Atom::Clock { clock, rel: Rel::Gt, term: LinearTerm::zero() });
            }
        }
    }
    atoms
}

/// Temporal closure of a zone.
///
/// Upward: upper temporal constraints become non-strict, lower ones strict;
/// this is the set of limits of points of `z` under an infinite sequence of
/// strictly positive delays. Downward is the mirror image. Delay-invariant
/// constraints are untouched.
pub fn temporal_closure(z: &ConvexZone, dir: Direction) -> ConvexZone {
    let zn = normalize(z);
    ConvexZone::new(zn.dims.clone(), closure_atoms(&zn, dir))
}

pub fn temporal_closure_union(u: &ZoneUnion, dir: Direction) -> ZoneUnion {
    ZoneUnion::from_pieces(
        u.dims.clone(),
        u.pieces.iter().map(|p| temporal_closure(p, dir)).collect(),
    )
}

/// Pieces of the temporal bound in direction `dir`, tagged with whether the
/// generating constraint was strict.
fn bound_pieces(zn: &ConvexZone, dir: Direction) -> Vec<(bool, ConvexZone)> {
    let plain = split_atoms(zn);
    let closed = closure_atoms(zn, dir);
    let relevant = |rel: Rel| match dir {
        Direction::Upper => rel.is_upper(),
        Direction::Lower => rel.is_lower(),
    };
    let mut out = Vec::new();
    for (i, atom) in plain.iter().enumerate() {
        let rel = match atom {
            Atom::Clock { rel, .. } if relevant(*rel) => *rel,
            _ => continue,
        };
        let piece = if rel.is_strict() {
            // tight instant exists only in the closure
            let mut atoms = closed.clone();
            atoms[i] = atoms[i].with_rel(Rel::Eq);
            ConvexZone::new(zn.dims.clone(), atoms)
        } else {
            let mut atoms = plain.clone();
            atoms[i] = atoms[i].with_rel(Rel::Eq);
            ConvexZone::new(zn.dims.clone(), atoms)
        };
        out.push((rel.is_strict(), piece));
    }
    out
}

/// Temporal bound of a zone: the union, over its temporal constraints in
/// direction `dir`, of the zone (or its closure, for strict constraints)
/// with that constraint made an equality.
pub fn temporal_bound(z: &ConvexZone, dir: Direction) -> ZoneUnion {
    let zn = normalize(z);
    let pieces = bound_pieces(&zn, dir).into_iter().map(|(_, p)| p).collect();
    ZoneUnion::from_pieces(zn.dims.clone(), pieces)
}

/// Splits the upper bound of an invariant into the part still inside the
/// invariant (from non-strict constraints) and the escaping limit part
/// (from strict constraints, taken in the closure).
pub fn utemp_split(z: &ConvexZone) -> (ZoneUnion, ZoneUnion) {
    let zn = normalize(z);
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (strict, piece) in bound_pieces(&zn, Direction::Upper) {
        if strict {
            outside.push(piece);
        } else {
            inside.push(piece);
        }
    }
    (
        ZoneUnion::from_pieces(zn.dims.clone(), inside),
        ZoneUnion::from_pieces(zn.dims.clone(), outside),
    )
}

/// True when the zone has any stored upper temporal constraint.
pub fn has_upper_temporal(z: &ConvexZone) -> bool {
    !classify(z).upper.is_empty()
}

/// Epsilon lower bounds: for each stored lower temporal constraint
/// `x ~ plt` of the normalized zone, the piece `z && x <= plt + eps`, in a
/// context extended with the fresh parameter `eps`.
///
/// Zones with an upper temporal constraint are rejected: they already bound
/// the time that may elapse, so no epsilon cap is needed (callers copy such
/// instructions through unchanged).
pub fn epsilon_lower_bounds(
    z: &ConvexZone,
    eps_name: &str,
) -> Result<(Arc<Dims>, Vec<ConvexZone>), ZoneError> {
    let zn = normalize(z);
    let dims = zn.dims.with_param(eps_name)?;
    let eps_idx = dims.n_params() - 1;
    let base = super::ops::embed(&zn, &dims)?;
    let mut pieces = Vec::new();
    for atom in &base.atoms {
        match atom {
            Atom::Clock { clock, rel, term } => {
                if rel.is_upper() {
                    return Err(ZoneError::EpsilonOnUpperBounded(
                        dims.clocks[*clock].clone(),
                    ));
                }
                let mut cap = term.clone();
                let entry = cap.coeffs.entry(eps_idx).or_insert_with(num::Zero::zero);
                *entry += Q::one();
                pieces.push(base.with_atom(Atom::Clock { clock: *clock, rel: Rel::Le, term: cap }));
            }
            _ => {}
        }
    }
    Ok((dims, pieces))
}
