//! Fourier-Motzkin elimination over exact rationals.
//!
//! Every constraint is normalized into a row `sum(coef[i] * v_i) + cst <= 0`
//! (or `< 0` when `strict`). Eliminating a variable combines each row where
//! it occurs positively with each row where it occurs negatively; the
//! combination is strict when either side is strict. Feasibility of a system
//! is decided by eliminating all variables and checking the remaining
//! constant rows.

use super::{Atom, ConvexZone, Dims, LinearTerm, Q, Rel, ZoneError};
use num::{Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub coef: Vec<Q>,
    pub cst: Q,
    pub strict: bool,
}

impl Row {
    pub fn new(n: usize) -> Row {
        Row { coef: vec![Q::zero(); n], cst: Q::zero(), strict: false }
    }

    /// True when no variable occurs.
    pub fn is_constant(&self) -> bool {
        self.coef.iter().all(|c| c.is_zero())
    }

    /// For a constant row: is the inequality satisfied?
    pub fn constant_holds(&self) -> bool {
        if self.strict {
            self.cst.is_negative()
        } else {
            !self.cst.is_positive()
        }
    }

    /// Scale so that the coefficient of `var` becomes +1 or -1.
    fn normalized_on(&self, var: usize) -> Row {
        let c = &self.coef[var];
        debug_assert!(!c.is_zero());
        let k = c.abs().recip();
        Row {
            coef: self.coef.iter().map(|x| x * &k).collect(),
            cst: &self.cst * &k,
            strict: self.strict,
        }
    }
}

/// Emit rows for one atom. `n` is the row width; clock variables occupy
/// `0..n_clocks` and parameters follow. Equalities yield two rows.
pub fn atom_rows(atom: &Atom, dims: &Dims, n: usize) -> Vec<Row> {
    let nc = dims.n_clocks();
    let mut out = Vec::new();
    for a in atom.split_eq() {
        let mut row = Row::new(n);
        let (rel, term) = match &a {
            Atom::Clock { clock, rel, term } => {
                row.coef[*clock] = Q::from_integer(1.into());
                (*rel, term.clone())
            }
            Atom::Diag { left, right, rel, term } => {
                row.coef[*left] = Q::from_integer(1.into());
                row.coef[*right] = Q::from_integer((-1).into());
                (*rel, term.clone())
            }
            Atom::Param { lhs, rel, rhs } => (*rel, {
                // move everything into the term position: lhs - rhs ~ 0
                // handled below by treating the combined term as the bound
                // of an all-zero clock part
                rhs.sub(lhs).neg()
            }),
        };
        // lhs_rel_term with lhs encoded in row.coef (clock part); for the
        // Param case the whole comparison sits in `term` as `term rel 0`.
        let (term, zero_rhs) = match &a {
            Atom::Param { .. } => (term, true),
            _ => (term, false),
        };
        match rel {
            Rel::Lt | Rel::Le => {
                // clockpart - term <= 0  (or term <= 0 for Param)
                if zero_rhs {
                    apply_term(&mut row, &term, nc, false);
                } else {
                    apply_term(&mut row, &term, nc, true);
                }
                row.strict = rel == Rel::Lt;
                out.push(row);
            }
            Rel::Gt | Rel::Ge => {
                // term - clockpart <= 0
                for c in row.coef.iter_mut() {
                    *c = -c.clone();
                }
                if zero_rhs {
                    apply_term(&mut row, &term.neg(), nc, false);
                } else {
                    apply_term(&mut row, &term, nc, false);
                }
                row.strict = rel == Rel::Gt;
                out.push(row);
            }
            Rel::Eq => unreachable!("split above"),
        }
    }
    out
}

fn apply_term(row: &mut Row, term: &LinearTerm, nc: usize, negate: bool) {
    let t = if negate { term.neg() } else { term.clone() };
    row.cst += &t.constant;
    for (p, c) in &t.coeffs {
        row.coef[nc + p] += c;
    }
}

/// Implicit non-negativity row `-v <= 0` for variable `var`.
pub fn nonneg_row(var: usize, n: usize) -> Row {
    let mut row = Row::new(n);
    row.coef[var] = Q::from_integer((-1).into());
    row
}

/// Rows of a zone's stored constraints, width `n`.
pub fn zone_rows(z: &ConvexZone, n: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for a in &z.atoms {
        rows.extend(atom_rows(a, &z.dims, n));
    }
    rows
}

fn dedup(rows: &mut Vec<Row>) {
    rows.sort_by(|a, b| {
        a.coef
            .iter()
            .zip(&b.coef)
            .map(|(x, y)| x.cmp(y))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or_else(|| a.cst.cmp(&b.cst).then(a.strict.cmp(&b.strict)))
    });
    rows.dedup();
    // keep the tightest of rows that differ only in the constant
    let mut kept: Vec<Row> = Vec::new();
    for r in rows.drain(..) {
        if let Some(last) = kept.last_mut() {
            if last.coef == r.coef {
                let tighter = match r.cst.cmp(&last.cst) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Equal => r.strict && !last.strict,
                    std::cmp::Ordering::Less => false,
                };
                if tighter {
                    *last = r;
                }
                continue;
            }
        }
        kept.push(r);
    }
    *rows = kept;
}

/// Eliminate variable `var` from the system.
pub fn eliminate(rows: Vec<Row>, var: usize) -> Vec<Row> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut rest = Vec::new();
    for r in rows {
        if r.coef[var].is_positive() {
            pos.push(r.normalized_on(var));
        } else if r.coef[var].is_negative() {
            neg.push(r.normalized_on(var));
        } else if !r.is_constant() || !r.constant_holds() {
            rest.push(r);
        }
    }
    for p in &pos {
        for m in &neg {
            let mut row = Row::new(p.coef.len());
            for i in 0..row.coef.len() {
                row.coef[i] = &p.coef[i] + &m.coef[i];
            }
            row.cst = &p.cst + &m.cst;
            row.strict = p.strict || m.strict;
            if row.is_constant() && row.constant_holds() {
                continue;
            }
            rest.push(row);
        }
    }
    dedup(&mut rest);
    rest
}

/// Decide satisfiability of a system after eliminating every variable.
pub fn feasible(mut rows: Vec<Row>, n: usize) -> bool {
    for var in 0..n {
        if rows.iter().any(|r| r.is_constant() && !r.constant_holds()) {
            return false;
        }
        rows = eliminate(rows, var);
    }
    rows.iter().all(|r| r.constant_holds())
}

/// Emptiness of a convex zone, taking implicit non-negativity into account.
pub fn zone_is_empty(z: &ConvexZone) -> bool {
    let n = z.dims.n_vars();
    let mut rows = zone_rows(z, n);
    for v in 0..n {
        rows.push(nonneg_row(v, n));
    }
    !feasible(rows, n)
}

/// Convert a row back into a stored constraint. Fails when the clock part
/// does not match the zone grammar (at most two clocks with opposite equal
/// coefficients), which cannot arise from eliminating clock-like variables
/// out of well-formed zones.
pub fn row_to_atom(row: &Row, dims: &Dims) -> Result<Option<Atom>, ZoneError> {
    let nc = dims.n_clocks();
    if row.is_constant() && row.constant_holds() {
        return Ok(None);
    }
    let clocks: Vec<usize> = (0..nc).filter(|i| !row.coef[*i].is_zero()).collect();
    let rel = |strict: bool| if strict { Rel::Lt } else { Rel::Le };
    let term_of = |row: &Row, scale: &Q| -> LinearTerm {
        // bound term = -(param part + cst) * scale
        let mut t = LinearTerm::constant(-(&row.cst * scale));
        for p in 0..dims.n_params() {
            let c = &row.coef[nc + p];
            if !c.is_zero() {
                t.coeffs.insert(p, -(c * scale));
            }
        }
        t
    };
    match clocks.as_slice() {
        [] => {
            // param part + cst <= 0, present it as lhs <= rhs with the
            // parameter part on the left and the constant on the right
            let mut lhs = LinearTerm::zero();
            for p in 0..dims.n_params() {
                let c = &row.coef[nc + p];
                if !c.is_zero() {
                    lhs.coeffs.insert(p, c.clone());
                }
            }
            let rhs = LinearTerm::constant(-row.cst.clone());
            Ok(Some(Atom::Param { lhs, rel: rel(row.strict), rhs }))
        }
        [x] => {
            let c = &row.coef[*x];
            let scale = c.abs().recip();
            let term = term_of(row, &scale);
            if c.is_positive() {
                Ok(Some(Atom::Clock { clock: *x, rel: rel(row.strict), term }))
            } else {
                let r = if row.strict { Rel::Gt } else { Rel::Ge };
                Ok(Some(Atom::Clock { clock: *x, rel: r, term: term.neg() }))
            }
        }
        [x, y] => {
            let cx = row.coef[*x].clone();
            let cy = row.coef[*y].clone();
            if cx != -cy.clone() {
                return Err(ZoneError::NotAZoneConstraint(format!(
                    "clock coefficients {cx} and {cy} in projection result"
                )));
            }
            let scale = cx.abs().recip();
            let term = term_of(row, &scale);
            if cx.is_positive() {
                Ok(Some(Atom::Diag { left: *x, right: *y, rel: rel(row.strict), term }))
            } else {
                Ok(Some(Atom::Diag { left: *y, right: *x, rel: rel(row.strict), term }))
            }
        }
        _ => Err(ZoneError::NotAZoneConstraint(
            "more than two clocks in projection result".to_string(),
        )),
    }
}

/// Rebuild a zone from rows over the zone's own variables, merging matching
/// `<=`/`>=` pairs back into equalities for readability.
pub fn rows_to_zone(rows: &[Row], dims: &std::sync::Arc<Dims>) -> Result<ConvexZone, ZoneError> {
    let mut atoms = Vec::new();
    for row in rows {
        if let Some(a) = row_to_atom(row, dims)? {
            atoms.push(a);
        }
    }
    Ok(ConvexZone::new(dims.clone(), merge_equalities(atoms)))
}

fn same_shape(a: &Atom, b: &Atom) -> bool {
    match (a, b) {
        (Atom::Clock { clock: c1, term: t1, .. }, Atom::Clock { clock: c2, term: t2, .. }) => {
            c1 == c2 && t1 == t2
        }
        (
            Atom::Diag { left: l1, right: r1, term: t1, .. },
            Atom::Diag { left: l2, right: r2, term: t2, .. },
        ) => l1 == l2 && r1 == r2 && t1 == t2,
        (Atom::Param { lhs: l1, rhs: r1, .. }, Atom::Param { lhs: l2, rhs: r2, .. }) => {
            l1 == l2 && r1 == r2
        }
        _ => false,
    }
}

/// Merge `a <= b` and `a >= b` pairs into `a = b`.
pub fn merge_equalities(atoms: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::new();
    'next: for a in atoms {
        for b in out.iter_mut() {
            if same_shape(&a, b) {
                let (ra, rb) = (a.rel(), b.rel());
                if ra == rb || rb == Rel::Eq {
                    continue 'next;
                }
                if (ra == Rel::Le && rb == Rel::Ge) || (ra == Rel::Ge && rb == Rel::Le) {
                    *b = b.with_rel(Rel::Eq);
                    continue 'next;
                }
            }
        }
        out.push(a);
    }
    out
}
