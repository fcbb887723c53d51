//! Concrete and symbolic operational semantics: discrete and timed
//! successors and predecessors, strategy decisions as exact delay
//! intervals, run replay and coherence checking, and the forced-transition
//! constraint that keeps the environment from idling past an invariant.
//!
//! Run file format: a `params: p = 1, eps = 1/4` header followed by one
//! step per line, `delay 3/2 ; fire c2`.

use crate::model::{ModelError, Ptg, SymbolicState};
use crate::strategy::{Instruction, StrategySpecification};
use crate::zone::{
    format_q, reset, text, text::Cursor, time_elapse, unreset, Atom, ConvexZone, Q, Rel,
    Valuation, ZoneUnion,
};
use num::{Signed, Zero};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteState {
    pub location: usize,
    pub valuation: Valuation,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub delay: Q,
    pub transition: usize,
}

#[derive(Debug, Clone)]
pub struct Run {
    /// Parameter values, aligned with the game's parameter list.
    pub params: Vec<Q>,
    pub steps: Vec<Step>,
}

/// A non-empty delay interval with rational endpoints; `hi = None` means
/// unbounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayInterval {
    pub lo: Q,
    pub lo_strict: bool,
    pub hi: Option<Q>,
    pub hi_strict: bool,
}

impl DelayInterval {
    pub fn all() -> DelayInterval {
        DelayInterval { lo: Q::zero(), lo_strict: false, hi: None, hi_strict: false }
    }

    pub fn point(at: Q) -> DelayInterval {
        DelayInterval { lo: at.clone(), lo_strict: false, hi: Some(at), hi_strict: false }
    }

    pub fn contains(&self, d: &Q) -> bool {
        let above = if self.lo_strict { d > &self.lo } else { d >= &self.lo };
        let below = match &self.hi {
            None => true,
            Some(h) => {
                if self.hi_strict {
                    d < h
                } else {
                    d <= h
                }
            }
        };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        match &self.hi {
            None => false,
            Some(h) => h < &self.lo || (h == &self.lo && (self.lo_strict || self.hi_strict)),
        }
    }

    pub fn intersect(&self, other: &DelayInterval) -> Option<DelayInterval> {
        let (lo, lo_strict) = if self.lo > other.lo
            || (self.lo == other.lo && self.lo_strict)
        {
            (self.lo.clone(), self.lo_strict)
        } else {
            (other.lo.clone(), other.lo_strict)
        };
        let (hi, hi_strict) = match (&self.hi, &other.hi) {
            (None, None) => (None, false),
            (Some(h), None) => (Some(h.clone()), self.hi_strict),
            (None, Some(h)) => (Some(h.clone()), other.hi_strict),
            (Some(a), Some(b)) => {
                if a < b || (a == b && self.hi_strict) {
                    (Some(a.clone()), self.hi_strict)
                } else {
                    (Some(b.clone()), other.hi_strict)
                }
            }
        };
        let out = DelayInterval { lo, lo_strict, hi, hi_strict };
        if out.is_empty() {
            None
        } else {
            Some(out)
        }
    }

    /// Whether some element of the interval is ≥ `d`.
    pub fn reaches(&self, d: &Q) -> bool {
        match &self.hi {
            None => true,
            Some(h) => {
                if self.hi_strict {
                    d < h
                } else {
                    d <= h
                }
            }
        }
    }
}

/// One available choice of a strategy at a concrete state.
#[derive(Debug, Clone)]
pub enum Decision {
    /// Fire `transition` after any delay in `window`.
    Move { instruction: usize, transition: usize, window: DelayInterval },
    /// Let time pass forever.
    Stay,
}

/// The set of delays δ ≥ 0 with `v + δ ∈ z`, where clocks in `frozen`
/// do not advance. Along a time line a convex zone is met in at most one
/// interval.
pub fn delay_window(z: &ConvexZone, v: &Valuation, frozen: &[usize]) -> Option<DelayInterval> {
    let mut acc = DelayInterval::all();
    let advances = |c: usize| !frozen.contains(&c);
    for atom in &z.atoms {
        // written as coef·δ + base rel 0
        let (coef, base, rel) = match atom {
            Atom::Clock { clock, rel, term } => {
                let coef = if advances(*clock) { 1 } else { 0 };
                (coef, &v.clocks[*clock] - term.eval(&v.params), *rel)
            }
            Atom::Diag { left, right, rel, term } => {
                let coef = (advances(*left) as i64) - (advances(*right) as i64);
                let base = &v.clocks[*left] - &v.clocks[*right] - term.eval(&v.params);
                (coef, base, *rel)
            }
            Atom::Param { lhs, rel, rhs } => {
                (0, lhs.eval(&v.params) - rhs.eval(&v.params), *rel)
            }
        };
        for (coef, base, rel) in match rel {
            Rel::Eq => vec![(coef, base.clone(), Rel::Le), (coef, base, Rel::Ge)],
            r => vec![(coef, base, r)],
        } {
            let bound = match coef {
                0 => {
                    if rel.holds(&base, &Q::zero()) {
                        continue;
                    }
                    return None;
                }
                1 => {
                    // δ rel −base
                    let b = -base;
                    match rel {
                        Rel::Lt => DelayInterval {
                            lo: Q::zero(),
                            lo_strict: false,
                            hi: Some(b),
                            hi_strict: true,
                        },
                        Rel::Le => DelayInterval {
                            lo: Q::zero(),
                            lo_strict: false,
                            hi: Some(b),
                            hi_strict: false,
                        },
                        Rel::Ge => DelayInterval {
                            lo: b,
                            lo_strict: false,
                            hi: None,
                            hi_strict: false,
                        },
                        Rel::Gt => DelayInterval {
                            lo: b,
                            lo_strict: true,
                            hi: None,
                            hi_strict: false,
                        },
                        Rel::Eq => unreachable!("equalities were split"),
                    }
                }
                -1 => {
                    // −δ + base rel 0, i.e. δ flipped(rel) base
                    match rel {
                        Rel::Lt => DelayInterval {
                            lo: base,
                            lo_strict: true,
                            hi: None,
                            hi_strict: false,
                        },
                        Rel::Le => DelayInterval {
                            lo: base,
                            lo_strict: false,
                            hi: None,
                            hi_strict: false,
                        },
                        Rel::Ge => DelayInterval {
                            lo: Q::zero(),
                            lo_strict: false,
                            hi: Some(base),
                            hi_strict: false,
                        },
                        Rel::Gt => DelayInterval {
                            lo: Q::zero(),
                            lo_strict: false,
                            hi: Some(base),
                            hi_strict: true,
                        },
                        Rel::Eq => unreachable!("equalities were split"),
                    }
                }
                _ => unreachable!("clock coefficients are in {{-1, 0, 1}}"),
            };
            acc = acc.intersect(&bound)?;
        }
    }
    Some(acc)
}

/// Symbolic discrete successor: fire `t` from every state of `s`.
pub fn discrete_succ(g: &Ptg, s: &SymbolicState, t: usize) -> SymbolicState {
    let tr = &g.transitions[t];
    debug_assert_eq!(tr.source, s.location);
    let zone = reset(&s.zone.intersect(&tr.guard), &tr.resets)
        .intersect(&g.locations[tr.target].invariant);
    SymbolicState { location: tr.target, zone }
}

/// Symbolic temporal successor: let time pass within the invariant;
/// urgent locations admit no delay.
pub fn temp_succ(g: &Ptg, s: &SymbolicState) -> SymbolicState {
    if g.locations[s.location].urgent {
        return s.clone();
    }
    let zone = time_elapse(&s.zone).intersect(&g.locations[s.location].invariant);
    SymbolicState { location: s.location, zone }
}

/// Symbolic discrete predecessor of a zone union at `t`'s target.
pub fn discrete_pred(g: &Ptg, t: usize, target: &ZoneUnion) -> ZoneUnion {
    let tr = &g.transitions[t];
    let pieces = target
        .pieces
        .iter()
        .map(|p| {
            tr.guard
                .intersect(&unreset(p, &tr.resets))
                .intersect(&g.locations[tr.source].invariant)
        })
        .collect();
    ZoneUnion::from_pieces(g.dims.clone(), pieces)
}

/// Decisions of one instruction at a matching state (Wait gives Stay, a
/// move gives the exact delay window into the wait-until target).
pub fn decisions(i: &Instruction, s: &ConcreteState) -> Result<Vec<Decision>, ModelError> {
    if i.source.location != s.location || !i.source.zone.satisfies(&s.valuation) {
        return Err(ModelError::Invalid(format!(
            "state does not match instruction {}",
            i.index
        )));
    }
    match (&i.target, i.decision) {
        (None, None) => Ok(vec![Decision::Stay]),
        (Some(t), Some(d)) => Ok(delay_window(&t.zone, &s.valuation, &[])
            .map(|window| Decision::Move { instruction: i.index, transition: d, window })
            .into_iter()
            .collect()),
        _ => Err(ModelError::Invalid("malformed instruction".into())),
    }
}

/// The instruction matching a state, if any; sources are pairwise
/// disjoint, so there is at most one.
pub fn matched_instruction<'a>(
    l: &'a StrategySpecification,
    s: &ConcreteState,
) -> Option<&'a Instruction> {
    l.instructions
        .iter()
        .find(|i| i.source.location == s.location && i.source.zone.satisfies(&s.valuation))
}

/// Decisions of a whole strategy at a state: the matching instruction's
/// decisions, or Stay when nothing matches.
pub fn strategy_decision(
    l: &StrategySpecification,
    s: &ConcreteState,
) -> Result<Vec<Decision>, ModelError> {
    match matched_instruction(l, s) {
        None => Ok(vec![Decision::Stay]),
        Some(i) => decisions(i, s),
    }
}

/// Replays a run from the initial state, checking invariants (also at
/// firing time), guards, and urgency. Returns the visited states,
/// including the initial one.
pub fn replay(g: &Ptg, run: &Run) -> Result<Vec<ConcreteState>, ModelError> {
    let bad = |msg: String| ModelError::Invalid(msg);
    if run.params.len() != g.dims.n_params() {
        return Err(bad("parameter count mismatch".into()));
    }
    let mut v = Valuation::zero_clocks(&g.dims, run.params.clone());
    let mut loc = g.initial;
    if !g.locations[loc].invariant.satisfies(&v) {
        return Err(bad("initial state violates the invariant".into()));
    }
    let mut states = vec![ConcreteState { location: loc, valuation: v.clone() }];
    for (k, step) in run.steps.iter().enumerate() {
        let err = |msg: &str| bad(format!("step {k}: {msg}"));
        if step.delay.is_negative() {
            return Err(err("negative delay"));
        }
        if g.locations[loc].urgent && !step.delay.is_zero() {
            return Err(err("delay in an urgent location"));
        }
        let after = v.elapse(&step.delay);
        // invariants are convex, so holding at both ends of the delay
        // means holding throughout
        if !g.locations[loc].invariant.satisfies(&after) {
            return Err(err("delay leaves the invariant"));
        }
        let tr = g
            .transitions
            .get(step.transition)
            .ok_or_else(|| err("unknown transition"))?;
        if tr.source != loc {
            return Err(err("transition fired from the wrong location"));
        }
        if !tr.guard.satisfies(&after) {
            return Err(err("guard does not hold"));
        }
        let next = after.reset(&tr.resets);
        if !g.locations[tr.target].invariant.satisfies(&next) {
            return Err(err("target invariant does not hold"));
        }
        loc = tr.target;
        v = next;
        states.push(ConcreteState { location: loc, valuation: v.clone() });
    }
    Ok(states)
}

/// Checks a replayed run against a strategy: every step must either take a
/// decision of the strategy, be an environment move no later than some
/// decision's delay, or the run must end where staying forever is allowed.
/// Returns the index of the first offending step, if any.
pub fn check_coherent(
    g: &Ptg,
    l: &StrategySpecification,
    run: &Run,
) -> Result<Option<usize>, ModelError> {
    let states = replay(g, run)?;
    for (k, step) in run.steps.iter().enumerate() {
        let s = &states[k];
        let decs = strategy_decision(l, s)?;
        let tr = &g.transitions[step.transition];
        let ok = if tr.controllable {
            decs.iter().any(|d| match d {
                Decision::Move { transition, window, .. } => {
                    *transition == step.transition && window.contains(&step.delay)
                }
                Decision::Stay => false,
            })
        } else {
            // the environment may intercept at or before any decision delay
            decs.iter().any(|d| match d {
                Decision::Move { window, .. } => window.reaches(&step.delay),
                Decision::Stay => true,
            })
        };
        if !ok {
            return Ok(Some(k));
        }
    }
    let last = states.last().expect("replay returns at least the initial state");
    if g.is_goal(last.location) {
        return Ok(None);
    }
    let decs = strategy_decision(l, last)?;
    if decs.iter().any(|d| matches!(d, Decision::Stay)) {
        Ok(None)
    } else {
        Ok(Some(run.steps.len()))
    }
}

/// Whether a transition is available `delay` after the valuation: the
/// guard holds and the reset valuation satisfies the target invariant.
pub fn available_window(g: &Ptg, t: &crate::model::Transition, v: &Valuation) -> Option<DelayInterval> {
    let guard = delay_window(&t.guard, v, &[])?;
    let inv = delay_window(&g.locations[t.target].invariant, &v.reset(&t.resets), &t.resets)?;
    guard.intersect(&inv)
}

/// Decides the forced-transition constraint at the last state of a finite
/// run: stopping there is legitimate iff time can elapse forever within
/// the invariant, or from some admissible delay on, every reachable moment
/// offers a controllable action or no uncontrollable one.
pub fn check_forced_constraint(g: &Ptg, run: &Run) -> Result<bool, ModelError> {
    let states = replay(g, run)?;
    let s = states.last().expect("replay returns at least the initial state");
    Ok(forced_stop_allowed(g, s))
}

/// Whether a run may legitimately end at `s` under the forced-transition
/// constraint.
pub fn forced_stop_allowed(g: &Ptg, s: &ConcreteState) -> bool {
    let inv = &g.locations[s.location].invariant;
    let dwell = if g.locations[s.location].urgent {
        DelayInterval::point(Q::zero())
    } else {
        delay_window(inv, &s.valuation, &[]).expect("the current state satisfies the invariant")
    };
    if dwell.hi.is_none() {
        return true;
    }
    // moments within the dwell interval where the environment could be
    // forced: no controllable action available, some uncontrollable one is
    let mut bad: Vec<DelayInterval> = Vec::new();
    let ctrl: Vec<DelayInterval> = g
        .transitions_from(s.location)
        .filter(|(_, t)| t.controllable)
        .filter_map(|(_, t)| available_window(g, t, &s.valuation))
        .collect();
    for (_, t) in g.transitions_from(s.location).filter(|(_, t)| !t.controllable) {
        if let Some(w) = available_window(g, t, &s.valuation) {
            if let Some(w) = w.intersect(&dwell) {
                bad.extend(subtract_intervals(w, &ctrl));
            }
        }
    }
    // true iff some admissible delay lies at or beyond every bad moment
    let beyond = bad.iter().try_fold(DelayInterval::all(), |acc, b| {
        let floor = match &b.hi {
            None => return None,
            Some(h) => DelayInterval {
                lo: h.clone(),
                lo_strict: !b.hi_strict,
                hi: None,
                hi_strict: false,
            },
        };
        acc.intersect(&floor)
    });
    match beyond {
        None => false,
        Some(b) => b.intersect(&dwell).is_some(),
    }
}

/// The (at most two) parts of `w` not covered by any interval in `cover`.
fn subtract_intervals(w: DelayInterval, cover: &[DelayInterval]) -> Vec<DelayInterval> {
    let mut parts = vec![w];
    for c in cover {
        let mut next = Vec::new();
        for p in parts {
            // part below c
            let below = DelayInterval {
                lo: p.lo.clone(),
                lo_strict: p.lo_strict,
                hi: Some(c.lo.clone()),
                hi_strict: !c.lo_strict,
            };
            if !below.is_empty() {
                next.push(below);
            }
            if let Some(h) = &c.hi {
                let above = DelayInterval {
                    lo: h.clone(),
                    lo_strict: !c.hi_strict,
                    hi: p.hi.clone(),
                    hi_strict: p.hi_strict,
                };
                if !above.is_empty() {
                    next.push(above);
                }
            }
        }
        parts = next;
    }
    parts
}

pub fn serialize_run(g: &Ptg, run: &Run) -> String {
    let params: Vec<String> = g
        .dims
        .params
        .iter()
        .zip(&run.params)
        .map(|(n, v)| format!("{n} = {}", format_q(v)))
        .collect();
    let mut out = format!("params: {};\n", params.join(", "));
    for s in &run.steps {
        out.push_str(&format!(
            "delay {} ; fire {};\n",
            format_q(&s.delay),
            g.transitions[s.transition].label
        ));
    }
    out
}

pub fn parse_run(src: &str, g: &Ptg) -> Result<Run, ModelError> {
    let mut cur = Cursor::new(text::lex(src)?);
    if !cur.eat_keyword("params") {
        return Err(cur.error("expected `params`").into());
    }
    cur.expect_sym(":")?;
    let mut params = vec![None; g.dims.n_params()];
    if !cur.eat_sym(";") {
        loop {
            let name = cur.expect_ident()?;
            let idx = g
                .dims
                .param(&name)
                .ok_or_else(|| ModelError::Invalid(format!("unknown parameter `{name}`")))?;
            cur.expect_sym("=")?;
            params[idx] = Some(parse_signed_rational(&mut cur)?);
            if !cur.eat_sym(",") {
                cur.expect_sym(";")?;
                break;
            }
        }
    }
    let params = params
        .into_iter()
        .zip(&g.dims.params)
        .map(|(v, n)| v.ok_or_else(|| ModelError::Invalid(format!("missing parameter `{n}`"))))
        .collect::<Result<Vec<Q>, _>>()?;
    let mut steps = Vec::new();
    while !cur.at_end() {
        if !cur.eat_keyword("delay") {
            return Err(cur.error("expected `delay`").into());
        }
        let delay = parse_signed_rational(&mut cur)?;
        cur.expect_sym(";")?;
        if !cur.eat_keyword("fire") {
            return Err(cur.error("expected `fire`").into());
        }
        let label = cur.expect_ident()?;
        cur.eat_sym(";");
        let transition = g
            .transitions
            .iter()
            .position(|t| t.label == label)
            .ok_or_else(|| ModelError::Invalid(format!("unknown action `{label}`")))?;
        steps.push(Step { delay, transition });
    }
    Ok(Run { params, steps })
}

fn parse_signed_rational(cur: &mut Cursor) -> Result<Q, ModelError> {
    let neg = cur.eat_sym("-");
    let q = match cur.next_tok() {
        Some(text::Tok::Int(n)) => {
            if cur.eat_sym("/") {
                match cur.next_tok() {
                    Some(text::Tok::Int(d)) if !d.is_zero() => Q::new(n, d),
                    _ => return Err(cur.error("expected a non-zero denominator").into()),
                }
            } else {
                Q::from_integer(n)
            }
        }
        _ => return Err(cur.error("expected a number").into()),
    };
    Ok(if neg { -q } else { q })
}

/// Enabled uncontrollable labels at a concrete state (zero delay).
pub fn enabled_uncontrollable(g: &Ptg, s: &ConcreteState) -> Vec<String> {
    g.transitions_from(s.location)
        .filter(|(_, t)| !t.controllable)
        .filter(|(_, t)| {
            t.guard.satisfies(&s.valuation)
                && g.locations[t.target].invariant.satisfies(&s.valuation.reset(&t.resets))
        })
        .map(|(_, t)| t.label.clone())
        .collect()
}
