//! Parallel composition of a controller with its game, and closed-loop
//! verification: the composition is solved again as a game in which every
//! action belongs to the environment, so the parameter valuations under
//! which all composed runs reach the goal can be compared against the
//! winning set computed for the open game.

use crate::controller::ControllerPta;
use crate::model::{Location, ModelError, Ptg, Transition};
use crate::solver::{solve, SolveReport, SolverOptions};
use crate::zone::{
    embed, embed_union, is_subset, semantically_equal, text::parse_zone, ZoneUnion,
};
use std::collections::BTreeMap;
use std::fmt;

/// Builds the synchronized product of the controller and the game,
/// restricted to location pairs reachable through its own transitions.
/// Labels known to both components synchronize with conjoined guards and
/// the union of resets; the controller's internal selector labels
/// interleave. With `all_uncontrollable` the product is set up for
/// closed-loop verification: every action is handed to the environment
/// and the goal is every pair whose game location is a goal.
pub fn product(
    c: &ControllerPta,
    g: &Ptg,
    all_uncontrollable: bool,
) -> Result<Ptg, ModelError> {
    let dims = c.pta.dims.clone();
    let shared: BTreeMap<&str, bool> = g
        .actions
        .iter()
        .map(|(a, ctrl)| (a.as_str(), *ctrl))
        .collect();
    for (a, ctrl) in &c.pta.actions {
        if let Some(game_ctrl) = shared.get(a.as_str()) {
            if game_ctrl != ctrl {
                return Err(ModelError::Invalid(format!(
                    "label `{a}` is controllable in one component and uncontrollable in the other"
                )));
            }
        }
    }

    let mut locations: Vec<Location> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut frontier: Vec<(usize, usize)> = Vec::new();
    let mut goal = std::collections::BTreeSet::new();
    let add_pair = |q: usize,
                        l: usize,
                        locations: &mut Vec<Location>,
                        frontier: &mut Vec<(usize, usize)>,
                        index: &mut BTreeMap<(usize, usize), usize>|
     -> Result<usize, ModelError> {
        if let Some(&i) = index.get(&(q, l)) {
            return Ok(i);
        }
        let qc = &c.pta.locations[q];
        let lg = &g.locations[l];
        locations.push(Location {
            id: format!("{}__x__{}", qc.id, lg.id),
            invariant: qc.invariant.intersect(&embed(&lg.invariant, &dims)?),
            urgent: qc.urgent || lg.urgent,
        });
        index.insert((q, l), locations.len() - 1);
        frontier.push((q, l));
        Ok(locations.len() - 1)
    };

    add_pair(c.pta.initial, g.initial, &mut locations, &mut frontier, &mut index)?;
    while let Some((q, l)) = frontier.pop() {
        let here = index[&(q, l)];
        if g.is_goal(l) {
            goal.insert(here);
        }
        let mut outgoing: Vec<(usize, usize, Transition)> = Vec::new();
        for (_, tc) in c.pta.transitions_from(q) {
            if shared.contains_key(tc.label.as_str()) {
                for (_, tg) in g.transitions_from(l) {
                    if tg.label != tc.label {
                        continue;
                    }
                    let mut resets = tc.resets.clone();
                    for r in &tg.resets {
                        if !resets.contains(r) {
                            resets.push(*r);
                        }
                    }
                    outgoing.push((
                        tc.target,
                        tg.target,
                        Transition {
                            source: here,
                            target: 0,
                            label: tc.label.clone(),
                            guard: tc.guard.intersect(&embed(&tg.guard, &dims)?),
                            resets,
                            controllable: tc.controllable && !all_uncontrollable,
                        },
                    ));
                }
            } else {
                outgoing.push((
                    tc.target,
                    l,
                    Transition {
                        source: here,
                        target: 0,
                        label: tc.label.clone(),
                        guard: tc.guard.clone(),
                        resets: tc.resets.clone(),
                        controllable: tc.controllable && !all_uncontrollable,
                    },
                ));
            }
        }
        for (_, tg) in g.transitions_from(l) {
            if c.pta.actions.iter().all(|(a, _)| a != &tg.label) {
                outgoing.push((
                    q,
                    tg.target,
                    Transition {
                        source: here,
                        target: 0,
                        label: tg.label.clone(),
                        guard: embed(&tg.guard, &dims)?,
                        resets: tg.resets.clone(),
                        controllable: tg.controllable && !all_uncontrollable,
                    },
                ));
            }
        }
        for (qt, lt, mut t) in outgoing {
            t.target = add_pair(qt, lt, &mut locations, &mut frontier, &mut index)?;
            transitions.push(t);
        }
    }

    let actions = c
        .pta
        .actions
        .iter()
        .map(|(a, ctrl)| (a.clone(), *ctrl && !all_uncontrollable))
        .collect();
    Ok(Ptg {
        dims,
        locations,
        actions,
        transitions,
        initial: 0,
        goal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Match,
    ComputedSupersetOfExpected,
    ComputedSubsetOfExpected,
    Incomparable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Match => "match",
            Verdict::ComputedSupersetOfExpected => "computed⊃expected",
            Verdict::ComputedSubsetOfExpected => "computed⊂expected",
            Verdict::Incomparable => "incomparable",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Parameter valuations under which every composed run reaches the
    /// goal, over the game parameters plus ε.
    pub computed: ZoneUnion,
    /// The expectation being checked: the given parameter set with ε > 0
    /// conjoined.
    pub expected: ZoneUnion,
    pub verdict: Verdict,
    pub product_locations: usize,
    pub explored_states: usize,
    pub iterations: usize,
}

impl VerifyReport {
    pub fn render(&self) -> String {
        format!(
            "computed: {}\nexpected: {}\nverdict: {}\nproduct locations: {}\nexplored states: {}\niterations: {}\n",
            crate::zone::text::format_union(&self.computed),
            crate::zone::text::format_union(&self.expected),
            self.verdict,
            self.product_locations,
            self.explored_states,
            self.iterations,
        )
    }
}

/// Closed-loop verification: re-solves the composition as a game in which
/// the controller owns nothing, so `computed` is the set of parameter
/// valuations under which the environment cannot avoid the goal. The
/// expectation gets ε > 0 conjoined, since the controller is only obliged
/// to act within a positive reaction window.
pub fn verify(
    c: &ControllerPta,
    g: &Ptg,
    expected: &ZoneUnion,
    options: &SolverOptions,
) -> Result<(VerifyReport, SolveReport), ModelError> {
    let p = product(c, g, true)?;
    let report = solve(&p, options)?;
    let pd = p.dims.params_only();
    let positive = parse_zone(&format!("{} > 0", c.epsilon), &pd)?;
    let expected = embed_union(expected, &pd)?.intersect_zone(&positive);
    let computed = report.winning_param.clone();
    let verdict = if !report.exhausted_queues {
        Verdict::Inconclusive
    } else if semantically_equal(&computed, &expected) {
        Verdict::Match
    } else if is_subset(&expected, &computed) {
        Verdict::ComputedSupersetOfExpected
    } else if is_subset(&computed, &expected) {
        Verdict::ComputedSubsetOfExpected
    } else {
        Verdict::Incomparable
    };
    let verify_report = VerifyReport {
        computed,
        expected,
        verdict,
        product_locations: p.locations.len(),
        explored_states: report.explored_states,
        iterations: report.iterations,
    };
    Ok((verify_report, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::synthesize_controller;
    use crate::model::LabelRule;
    use crate::solver::tests::{FIG1, FIG3};
    use crate::zone::text::parse_union;

    fn pipeline(src: &str) -> (Ptg, ControllerPta, ZoneUnion) {
        let g = Ptg::parse(src, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let c = synthesize_controller(&g, &report.strategy, "eps").unwrap();
        (g, c, report.winning_param)
    }

    #[test]
    fn synchronized_guard_is_the_conjunction() {
        let (g, c, _) = pipeline(FIG3);
        let p = product(&c, &g, true).unwrap();
        let dims = p.dims.clone();
        let want =
            parse_zone("x > 1 && p <= x && x <= p + eps", &dims).unwrap();
        assert!(p.transitions.iter().any(|t| {
            t.label == "c1" && semantically_equal(&t.guard.to_union(), &want.to_union())
        }));
        assert!(p.transitions.iter().all(|t| !t.controllable));
        for gl in &p.goal {
            assert!(p.locations[*gl].id.ends_with("__x__Win"));
        }
    }

    #[test]
    fn closed_loop_recovers_the_winning_parameters() {
        let (g, c, winning) = pipeline(FIG3);
        let (report, _) = verify(&c, &g, &winning, &SolverOptions::default()).unwrap();
        // at eps = 0 with p > 1 the commitment window of the x <= p + eps
        // branch degenerates to the single reachable point x = p, where the
        // environment is still forced to fire, so the closed loop wins on
        // that boundary slice beyond the eps > 0 expectation
        assert_eq!(report.verdict, Verdict::ComputedSupersetOfExpected);
        let pd = c.pta.dims.params_only();
        assert!(semantically_equal(
            &report.computed,
            &parse_union("(eps > 0) || (p > 1)", &pd).unwrap()
        ));
        assert!(semantically_equal(
            &report.expected,
            &parse_union("p >= 0 && eps > 0", &pd).unwrap()
        ));
    }

    #[test]
    fn closed_loop_on_the_nonparametric_game() {
        let (g, c, winning) = pipeline(FIG1);
        let (report, _) = verify(&c, &g, &winning, &SolverOptions::default()).unwrap();
        // every branch here fires on bounds the environment cannot idle
        // past, so even a zero-width reaction window wins
        assert_eq!(report.verdict, Verdict::ComputedSupersetOfExpected);
        let pd = c.pta.dims.params_only();
        assert!(semantically_equal(&report.computed, &ZoneUnion::top(pd)));
    }

    #[test]
    fn corrupted_controller_is_flagged() {
        let (g, mut c, winning) = pipeline(FIG3);
        for t in &mut c.pta.transitions {
            if t.label == "c1" {
                t.guard = parse_zone("x > 2", &c.pta.dims).unwrap().intersect(&t.guard);
            }
        }
        let (report, _) = verify(&c, &g, &winning, &SolverOptions::default()).unwrap();
        assert_ne!(report.verdict, Verdict::Match);
    }

    #[test]
    fn budget_exhaustion_is_inconclusive() {
        let (g, c, winning) = pipeline(FIG3);
        let opts = SolverOptions { budget: 1, ..SolverOptions::default() };
        let (report, _) = verify(&c, &g, &winning, &opts).unwrap();
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn controllability_conflict_is_an_error() {
        let (g, mut c, _) = pipeline(FIG3);
        for (a, ctrl) in &mut c.pta.actions {
            if a == "u1" {
                *ctrl = true;
            }
        }
        assert!(product(&c, &g, true).is_err());
    }
}
