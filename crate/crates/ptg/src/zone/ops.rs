//! Set-level operations on zones: inclusion, difference, time predecessors
//! and successors, clock resets and parameter projection.

use super::fm::{self, Row};
use super::{Atom, ConvexZone, LinearTerm, Q, Rel, ZoneError, ZoneUnion};
use num::One;
use std::sync::Arc;

/// Removes stored constraints implied by the remaining stored constraints
/// together with implicit parameter non-negativity.
///
/// Implicit clock bounds are deliberately left out of the implication test:
/// a stored `x >= 0` carries information for the stored-form-sensitive
/// operations (classification, epsilon lower bounds) even though it is
/// semantically redundant, so it must survive normalization unless another
/// stored constraint subsumes it.
pub fn normalize(z: &ConvexZone) -> ConvexZone {
    let n = z.dims.n_vars();
    let nc = z.dims.n_clocks();
    let mut atoms = fm::merge_equalities(z.atoms.clone());
    let mut i = 0;
    while i < atoms.len() {
        let candidate = atoms[i].clone();
        let mut rows: Vec<Row> = Vec::new();
        for (j, a) in atoms.iter().enumerate() {
            if j != i {
                rows.extend(fm::atom_rows(a, &z.dims, n));
            }
        }
        for p in 0..z.dims.n_params() {
            rows.push(fm::nonneg_row(nc + p, n));
        }
        // implied iff rest && !candidate is infeasible, for every
        // inequality half of the candidate
        let implied = candidate.split_eq().iter().all(|half| {
            let mut sys = rows.clone();
            sys.extend(fm::atom_rows(&half.negated(), &z.dims, n));
            !fm::feasible(sys, n)
        });
        if implied {
            atoms.remove(i);
        } else {
            i += 1;
        }
    }
    ConvexZone::new(z.dims.clone(), atoms)
}

/// Inclusion between convex zones (under implicit non-negativity).
pub fn convex_subset(a: &ConvexZone, b: &ConvexZone) -> bool {
    difference_convex(a, b).is_empty()
}

/// Exact convex union of two zones when one exists: the candidate built
/// from the constraints both zones satisfy is an over-approximation of
/// `a ∪ b`, so the join succeeds exactly when nothing else fits in it.
pub fn convex_join(a: &ConvexZone, b: &ConvexZone) -> Option<ConvexZone> {
    if convex_subset(a, b) {
        return Some(b.clone());
    }
    if convex_subset(b, a) {
        return Some(a.clone());
    }
    let top = ConvexZone::top(a.dims.clone());
    let mut candidate = top.clone();
    for atom in a.atoms.iter().chain(b.atoms.iter()) {
        let half = top.with_atom(atom.clone());
        if convex_subset(a, &half) && convex_subset(b, &half) {
            candidate.atoms.push(atom.clone());
        }
    }
    let leftover: Vec<ConvexZone> = difference_convex(&candidate, a)
        .into_iter()
        .flat_map(|p| difference_convex(&p, b))
        .collect();
    if leftover.iter().all(|p| p.is_empty()) {
        Some(normalize(&candidate))
    } else {
        None
    }
}

/// Convex difference `a \ b` as a list of pairwise-disjoint convex pieces.
pub fn difference_convex(a: &ConvexZone, b: &ConvexZone) -> Vec<ConvexZone> {
    if a.is_empty() {
        return Vec::new();
    }
    if a.intersect(b).is_empty() {
        return vec![a.clone()];
    }
    let b = normalize(b);
    let mut out = Vec::new();
    let mut carry = a.clone();
    for atom in b.atoms.iter().flat_map(|a| a.split_eq()) {
        let cut = carry.with_atom(atom.negated());
        if !cut.is_empty() {
            out.push(cut);
        }
        carry = carry.with_atom(atom);
        if carry.is_empty() {
            break;
        }
    }
    out
}

/// Union difference `a \ b`; the result's pieces are pairwise disjoint
/// whenever `a`'s pieces are.
pub fn subtract(a: &ZoneUnion, b: &ZoneUnion) -> ZoneUnion {
    let mut rest = a.pieces.clone();
    for piece in &b.pieces {
        let mut next = Vec::new();
        for r in &rest {
            next.extend(difference_convex(r, piece));
        }
        rest = next;
    }
    ZoneUnion { dims: a.dims.clone(), pieces: rest }
}

pub fn is_subset(a: &ZoneUnion, b: &ZoneUnion) -> bool {
    subtract(a, b).is_empty()
}

pub fn semantically_equal(a: &ZoneUnion, b: &ZoneUnion) -> bool {
    is_subset(a, b) && is_subset(b, a)
}

/// Splits a union into pairwise-disjoint pieces (later pieces minus the
/// earlier ones).
pub fn disjointify(u: &ZoneUnion) -> ZoneUnion {
    let mut out: Vec<ConvexZone> = Vec::new();
    for piece in &u.pieces {
        let mut rest = vec![piece.clone()];
        for seen in &out {
            let mut next = Vec::new();
            for r in &rest {
                next.extend(difference_convex(r, seen));
            }
            rest = next;
        }
        out.extend(rest);
    }
    ZoneUnion { dims: u.dims.clone(), pieces: out }
}

/// Shared body of the delay operators: substitute `x := x + dir * delta`
/// for every clock, constrain `delta >= 0`, then eliminate `delta`.
fn delay_transform(z: &ConvexZone, dir: i64, origin_nonneg: bool) -> ConvexZone {
    let n = z.dims.n_vars();
    let nc = z.dims.n_clocks();
    let delta = n; // temporary variable index
    let mut rows: Vec<Row> = Vec::new();
    for atom in &z.atoms {
        for mut row in fm::atom_rows(atom, &z.dims, n + 1) {
            let shift: Q = (0..nc).map(|c| row.coef[c].clone()).sum();
            row.coef[delta] = shift * super::qi(dir);
            rows.push(row);
        }
    }
    // delta >= 0
    rows.push(fm::nonneg_row(delta, n + 1));
    if origin_nonneg {
        // the pre-delay point must itself be a valuation: x - delta >= 0
        for c in 0..nc {
            let mut row = Row::new(n + 1);
            row.coef[c] = -Q::one();
            row.coef[delta] = Q::one();
            rows.push(row);
        }
    }
    let rows = fm::eliminate(rows, delta);
    let trimmed: Vec<Row> =
        rows.into_iter().map(|mut r| {
            r.coef.truncate(n);
            r
        }).collect();
    let zone = fm::rows_to_zone(&trimmed, &z.dims)
        .expect("delay elimination stays within the zone grammar");
    normalize(&zone)
}

/// Future of a zone: `{ v + d | v in z, d >= 0 }`.
pub fn time_elapse(z: &ConvexZone) -> ConvexZone {
    // substitute x := x - delta to speak about the post-delay point
    delay_transform(z, -1, true)
}

/// Past of a zone: `{ v | exists d >= 0, v + d in z }`.
pub fn time_past(z: &ConvexZone) -> ConvexZone {
    delay_transform(z, 1, false)
}

pub fn time_elapse_union(u: &ZoneUnion) -> ZoneUnion {
    ZoneUnion::from_pieces(u.dims.clone(), u.pieces.iter().map(time_elapse).collect())
}

pub fn time_past_union(u: &ZoneUnion) -> ZoneUnion {
    ZoneUnion::from_pieces(u.dims.clone(), u.pieces.iter().map(time_past).collect())
}

/// Clocks in `resets` are projected away (with their implicit lower bounds)
/// and re-introduced as `x = 0`.
pub fn reset(z: &ConvexZone, resets: &[usize]) -> ConvexZone {
    let n = z.dims.n_vars();
    let mut rows = fm::zone_rows(z, n);
    for r in resets {
        rows.push(fm::nonneg_row(*r, n));
    }
    for r in resets {
        rows = fm::eliminate(rows, *r);
    }
    let mut zone = fm::rows_to_zone(&rows, &z.dims)
        .expect("clock elimination stays within the zone grammar");
    zone = normalize(&zone);
    for r in resets {
        zone.atoms.push(Atom::Clock { clock: *r, rel: Rel::Eq, term: LinearTerm::zero() });
    }
    zone
}

/// Inverse of [`reset`]: the states whose reset image lies in `z`,
/// obtained by substituting 0 for every reset clock.
pub fn unreset(z: &ConvexZone, resets: &[usize]) -> ConvexZone {
    let in_resets = |c: &usize| resets.contains(c);
    let mut atoms = Vec::new();
    for atom in &z.atoms {
        let a = match atom {
            Atom::Clock { clock, rel, term } if in_resets(clock) => {
                Atom::Param { lhs: LinearTerm::zero(), rel: *rel, rhs: term.clone() }
            }
            Atom::Diag { left, right, rel, term } => match (in_resets(left), in_resets(right)) {
                (true, true) => {
                    Atom::Param { lhs: LinearTerm::zero(), rel: *rel, rhs: term.clone() }
                }
                (true, false) => {
                    // 0 - right ~ term
                    Atom::Clock { clock: *right, rel: rel.flipped(), term: term.neg() }
                }
                (false, true) => Atom::Clock { clock: *left, rel: *rel, term: term.clone() },
                (false, false) => atom.clone(),
            },
            other => other.clone(),
        };
        atoms.push(a);
    }
    normalize(&ConvexZone::new(z.dims.clone(), atoms))
}

pub fn reset_union(u: &ZoneUnion, resets: &[usize]) -> ZoneUnion {
    ZoneUnion::from_pieces(u.dims.clone(), u.pieces.iter().map(|p| reset(p, resets)).collect())
}

pub fn unreset_union(u: &ZoneUnion, resets: &[usize]) -> ZoneUnion {
    ZoneUnion::from_pieces(u.dims.clone(), u.pieces.iter().map(|p| unreset(p, resets)).collect())
}

/// Existential projection onto the parameters; the result lives in a
/// clock-free copy of the context.
pub fn project_params(z: &ConvexZone) -> ConvexZone {
    let n = z.dims.n_vars();
    let nc = z.dims.n_clocks();
    let mut rows = fm::zone_rows(z, n);
    for c in 0..nc {
        rows.push(fm::nonneg_row(c, n));
    }
    for c in 0..nc {
        rows = fm::eliminate(rows, c);
    }
    let pdims = z.dims.params_only();
    let shifted: Vec<Row> = rows
        .into_iter()
        .map(|r| Row { coef: r.coef[nc..n].to_vec(), cst: r.cst, strict: r.strict })
        .collect();
    let zone = fm::rows_to_zone(&shifted, &pdims)
        .expect("parameter rows have no clock part");
    normalize(&zone)
}

pub fn project_params_union(u: &ZoneUnion) -> ZoneUnion {
    let pdims = u.dims.params_only();
    ZoneUnion::from_pieces(pdims, u.pieces.iter().map(project_params).collect())
}

/// Re-expresses a zone in a larger variable context; every variable of the
/// old context must exist in the new one.
pub fn embed(z: &ConvexZone, dims: &Arc<super::Dims>) -> Result<ConvexZone, ZoneError> {
    let clock_map: Vec<usize> = z
        .dims
        .clocks
        .iter()
        .map(|c| dims.clock(c).ok_or_else(|| ZoneError::UnknownVariable(c.clone())))
        .collect::<Result<_, _>>()?;
    let param_map: Vec<usize> = z
        .dims
        .params
        .iter()
        .map(|p| dims.param(p).ok_or_else(|| ZoneError::UnknownVariable(p.clone())))
        .collect::<Result<_, _>>()?;
    let map_term = |t: &LinearTerm| LinearTerm {
        constant: t.constant.clone(),
        coeffs: t.coeffs.iter().map(|(i, c)| (param_map[*i], c.clone())).collect(),
    };
    let atoms = z
        .atoms
        .iter()
        .map(|a| match a {
            Atom::Clock { clock, rel, term } => {
                Atom::Clock { clock: clock_map[*clock], rel: *rel, term: map_term(term) }
            }
            Atom::Diag { left, right, rel, term } => Atom::Diag {
                left: clock_map[*left],
                right: clock_map[*right],
                rel: *rel,
                term: map_term(term),
            },
            Atom::Param { lhs, rel, rhs } => {
                Atom::Param { lhs: map_term(lhs), rel: *rel, rhs: map_term(rhs) }
            }
        })
        .collect();
    Ok(ConvexZone::new(dims.clone(), atoms))
}

pub fn embed_union(u: &ZoneUnion, dims: &Arc<super::Dims>) -> Result<ZoneUnion, ZoneError> {
    let pieces = u
        .pieces
        .iter()
        .map(|p| embed(p, dims))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ZoneUnion::from_pieces(dims.clone(), pieces))
}

/// States from which pure time elapse reaches `target` without ever passing
/// through `avoid` on the way (the target point itself must be outside
/// `avoid` as well).
///
/// Computed as a fixpoint over the convex decomposition of the complement of
/// `avoid`: within one complement piece, time moves freely, so each round
/// extends the safe set by its time past restricted to a piece. The chain
/// stabilizes after at most one round per piece.
pub fn safe_time_pred(target: &ZoneUnion, avoid: &ZoneUnion) -> ZoneUnion {
    if avoid.pieces.len() <= 1 {
        return safe_time_pred_convex_avoid(target, avoid);
    }
    safe_time_pred_fixpoint(target, avoid)
}

/// Closed form for a convex (or empty) avoid set: a forward time line meets
/// a convex set in a single interval, so a state is safe iff it either never
/// meets `avoid` at all, or reaches a target point lying strictly before the
/// interval.
pub fn safe_time_pred_convex_avoid(target: &ZoneUnion, avoid: &ZoneUnion) -> ZoneUnion {
    debug_assert!(avoid.pieces.len() <= 1);
    let past_target = time_past_union(target);
    let past_avoid = time_past_union(avoid);
    let unreachable_avoid = subtract(&past_target, &past_avoid);
    let before_avoid = subtract(&past_avoid, avoid);
    let early_target = time_past_union(&target.intersect(&before_avoid));
    unreachable_avoid.union_with(&early_target).reduce()
}

/// General fixpoint over the convex decomposition of the complement.
pub fn safe_time_pred_fixpoint(target: &ZoneUnion, avoid: &ZoneUnion) -> ZoneUnion {
    let complement = subtract(&ZoneUnion::top(target.dims.clone()), avoid);
    let mut safe = subtract(target, avoid);
    if safe.is_empty() {
        return safe;
    }
    for _ in 0..=complement.pieces.len() {
        let mut grown = safe.clone();
        for piece in &complement.pieces {
            let within = safe.intersect_zone(piece);
            if within.is_empty() {
                continue;
            }
            grown = grown.union_with(&time_past_union(&within).intersect_zone(piece));
        }
        grown = grown.reduce();
        if is_subset(&grown, &safe) {
            return safe;
        }
        safe = grown;
    }
    safe
}
