//! Winning-parameter synthesis with strategy extraction: an on-the-fly
//! forward exploration of symbolic states combined with backward
//! propagation of winning zones, including the forced-transition handling
//! that lets the controller win by cornering the environment against an
//! invariant bound.

use crate::model::{ModelError, Ptg, SymbolicState};
use crate::semantics::{discrete_pred, discrete_succ, temp_succ};
use crate::strategy::{Instruction, StrategySpecification};
use crate::zone::{
    is_subset, project_params_union, safe_time_pred, semantically_equal, subtract,
    temporal_closure, utemp_split, ConvexZone, Direction, ZoneUnion,
};
use std::collections::{BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    UpdateFirst,
    ExploreFirst,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub order: Order,
    /// Maximum number of explore/update steps before giving up.
    pub budget: usize,
}

impl Default for SolverOptions {
    fn default() -> SolverOptions {
        SolverOptions { order: Order::UpdateFirst, budget: 100_000 }
    }
}

/// One discovered symbolic state with its solver bookkeeping.
#[derive(Debug, Clone)]
pub struct StateRec {
    pub state: SymbolicState,
    pub win: ZoneUnion,
    pub forced_moves: ZoneUnion,
    pub depends: BTreeSet<usize>,
    pub explored: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Parameter valuations winning from the initial state, over the
    /// parameters-only dimensions.
    pub winning_param: ZoneUnion,
    pub strategy: StrategySpecification,
    pub iterations: usize,
    /// False when the iteration budget ran out; results are then only a
    /// lower bound.
    pub exhausted_queues: bool,
    pub states: Vec<StateRec>,
    pub explored_states: usize,
}

impl SolveReport {
    pub fn state_at(&self, g: &Ptg, location: &str) -> Option<&StateRec> {
        let loc = g.location(location)?;
        self.states.iter().find(|r| r.state.location == loc)
    }
}

struct Solver<'a> {
    g: &'a Ptg,
    states: Vec<StateRec>,
    waiting_explore: VecDeque<usize>,
    waiting_update: VecDeque<usize>,
    in_explore: BTreeSet<usize>,
    in_update: BTreeSet<usize>,
    instructions: Vec<Instruction>,
}

pub fn solve(g: &Ptg, options: &SolverOptions) -> Result<SolveReport, ModelError> {
    let mut s = Solver {
        g,
        states: Vec::new(),
        waiting_explore: VecDeque::new(),
        waiting_update: VecDeque::new(),
        in_explore: BTreeSet::new(),
        in_update: BTreeSet::new(),
        instructions: Vec::new(),
    };
    let xi0 = g.initial_symbolic_state();
    let start = s.find_or_add(temp_succ(g, &xi0));
    s.queue_explore(start);
    let mut iterations = 0usize;
    let mut explored_states = 0usize;
    while !s.waiting_explore.is_empty() || !s.waiting_update.is_empty() {
        if iterations >= options.budget {
            break;
        }
        iterations += 1;
        let do_update = match options.order {
            Order::UpdateFirst => !s.waiting_update.is_empty(),
            Order::ExploreFirst => s.waiting_explore.is_empty(),
        };
        if do_update {
            s.update_step();
        } else {
            s.explore_step();
            explored_states += 1;
        }
    }
    let exhausted_queues = s.waiting_explore.is_empty() && s.waiting_update.is_empty();
    let winning_param = s.winning_param(&xi0);
    let instructions = std::mem::take(&mut s.instructions);
    let strategy = StrategySpecification { dims: g.dims.clone(), instructions };
    if exhausted_queues {
        s.assert_win_coverage(&strategy);
    }
    strategy.validate(g)?;
    Ok(SolveReport {
        winning_param,
        strategy,
        iterations,
        exhausted_queues,
        states: s.states,
        explored_states,
    })
}

impl<'a> Solver<'a> {
    /// Symbolic states are identified up to semantic zone equality.
    fn find_or_add(&mut self, state: SymbolicState) -> usize {
        let zu = state.zone.to_union();
        for (i, r) in self.states.iter().enumerate() {
            if r.state.location == state.location
                && semantically_equal(&r.state.zone.to_union(), &zu)
            {
                return i;
            }
        }
        let dims = self.g.dims.clone();
        self.states.push(StateRec {
            state,
            win: ZoneUnion::empty(dims.clone()),
            forced_moves: ZoneUnion::empty(dims),
            depends: BTreeSet::new(),
            explored: false,
        });
        self.states.len() - 1
    }

    fn queue_explore(&mut self, idx: usize) {
        if self.in_explore.insert(idx) {
            self.waiting_explore.push_back(idx);
        }
    }

    fn queue_update(&mut self, idx: usize) {
        if self.in_update.insert(idx) {
            self.waiting_update.push_back(idx);
        }
    }

    fn explore_step(&mut self) {
        let idx = self.waiting_explore.pop_front().expect("explore queue is non-empty");
        self.in_explore.remove(&idx);
        let state = self.states[idx].state.clone();
        for (t, _) in self.g.transitions_from(state.location).collect::<Vec<_>>() {
            let succ = temp_succ(self.g, &discrete_succ(self.g, &state, t));
            if succ.zone.is_empty() {
                continue;
            }
            let sidx = self.find_or_add(succ);
            self.states[sidx].depends.insert(idx);
            if !self.states[sidx].explored {
                self.queue_explore(sidx);
            }
        }
        if self.g.is_goal(state.location) {
            self.states[idx].win = state.zone.to_union();
            let deps: Vec<usize> = self.states[idx].depends.iter().copied().collect();
            for d in deps {
                self.queue_update(d);
            }
            let mut fresh = state.zone.to_union();
            for solved in &self.instructions {
                if solved.source.location == state.location {
                    fresh = subtract(&fresh, &solved.source.zone.to_union());
                }
            }
            for piece in fresh.pieces.clone() {
                self.append_instruction(piece, state.location, None, None);
            }
        }
        self.states[idx].forced_moves = self.forced_moves(state.location);
        self.queue_update(idx);
        self.states[idx].explored = true;
    }

    /// States on the invariant's upper temporal bound where only the
    /// environment can act: on reachable bound points the uncontrollable
    /// guards count as-is, on limit-only bound points through their upper
    /// temporal closures.
    fn forced_moves(&self, location: usize) -> ZoneUnion {
        let dims = self.g.dims.clone();
        let collect = |ctrl: bool| -> Vec<ConvexZone> {
            self.g
                .transitions_from(location)
                .filter(|(_, t)| t.controllable == ctrl)
                .map(|(_, t)| t.guard.clone())
                .collect()
        };
        let unctrl = ZoneUnion::from_pieces(dims.clone(), collect(false));
        let ctrl = ZoneUnion::from_pieces(dims.clone(), collect(true));
        let closure = |u: &ZoneUnion| {
            ZoneUnion::from_pieces(
                dims.clone(),
                u.pieces.iter().map(|p| temporal_closure(p, Direction::Upper)).collect(),
            )
        };
        let inv = &self.g.locations[location].invariant;
        let (bound_in, bound_out) = if self.g.locations[location].urgent {
            (inv.to_union(), ZoneUnion::empty(dims.clone()))
        } else {
            utemp_split(inv)
        };
        let reached = subtract(&bound_in.intersect(&unctrl), &ctrl);
        let limit = subtract(&bound_out.intersect(&closure(&unctrl)), &closure(&ctrl));
        reached.union_with(&limit).coalesce()
    }

    fn update_step(&mut self) {
        let idx = self.waiting_update.pop_front().expect("update queue is non-empty");
        self.in_update.remove(&idx);
        let state = self.states[idx].state.clone();
        let dims = self.g.dims.clone();
        let mut unctrl = ZoneUnion::empty(dims.clone());
        for (t, tr) in self.g.transitions_from(state.location).collect::<Vec<_>>() {
            if tr.controllable {
                continue;
            }
            let succ = temp_succ(self.g, &discrete_succ(self.g, &state, t));
            if succ.zone.is_empty() {
                continue;
            }
            let win = self.win_of(&succ);
            let losing = subtract(&succ.zone.to_union(), &win);
            unctrl = unctrl.union_with(&discrete_pred(self.g, t, &losing));
        }
        let mut new_win = ZoneUnion::empty(dims.clone());
        let mut targets: Vec<(ZoneUnion, Option<usize>)> = Vec::new();
        for (t, tr) in self.g.transitions_from(state.location).collect::<Vec<_>>() {
            if !tr.controllable {
                continue;
            }
            let succ = temp_succ(self.g, &discrete_succ(self.g, &state, t));
            if succ.zone.is_empty() {
                continue;
            }
            let win = self.win_of(&succ);
            let winning_move = subtract(&discrete_pred(self.g, t, &win), &unctrl).coalesce();
            targets.push((winning_move, Some(t)));
        }
        targets.push((self.states[idx].forced_moves.clone(), None));
        let urgent = self.g.locations[state.location].urgent;
        for (winning_move, decision) in targets {
            for target in &winning_move.pieces {
                // in an urgent location no time passes, so the safe timed
                // predecessors collapse to the target minus the avoid set
                let safe = if urgent {
                    subtract(&target.to_union(), &unctrl)
                } else {
                    safe_time_pred(&target.to_union(), &unctrl)
                };
                let new_win_i = safe.intersect_zone(&state.zone);
                let mut fresh = new_win_i.clone();
                for solved in &self.instructions {
                    if solved.source.location == state.location {
                        fresh = subtract(&fresh, &solved.source.zone.to_union());
                    }
                }
                for piece in &fresh.coalesce().pieces {
                    self.append_instruction(
                        piece.clone(),
                        state.location,
                        decision.map(|_| target.clone()),
                        decision,
                    );
                }
                new_win = new_win.union_with(&new_win_i);
            }
        }
        if !is_subset(&new_win, &self.states[idx].win) {
            let grown = self.states[idx].win.union_with(&new_win).coalesce();
            debug_assert!(is_subset(&self.states[idx].win, &grown));
            self.states[idx].win = grown;
            let deps: Vec<usize> = self.states[idx].depends.iter().copied().collect();
            for d in deps {
                self.queue_update(d);
            }
        }
    }

    fn win_of(&self, state: &SymbolicState) -> ZoneUnion {
        let zu = state.zone.to_union();
        for r in &self.states {
            if r.state.location == state.location
                && semantically_equal(&r.state.zone.to_union(), &zu)
            {
                return r.win.clone();
            }
        }
        ZoneUnion::empty(self.g.dims.clone())
    }

    fn append_instruction(
        &mut self,
        source: ConvexZone,
        location: usize,
        target: Option<ConvexZone>,
        decision: Option<usize>,
    ) {
        if source.is_empty() {
            return;
        }
        debug_assert!(
            self.instructions
                .iter()
                .filter(|i| i.source.location == location)
                .all(|i| i.source.zone.intersect(&source).is_empty()),
            "instruction sources must stay pairwise disjoint"
        );
        self.instructions.push(Instruction {
            index: self.instructions.len(),
            source: SymbolicState { location, zone: crate::zone::normalize(&source) },
            target: target
                .map(|zone| SymbolicState { location, zone: crate::zone::normalize(&zone) }),
            decision,
        });
    }

    /// Parameter valuations for which some initial state is winning.
    fn winning_param(&self, xi0: &SymbolicState) -> ZoneUnion {
        let mut acc = ZoneUnion::empty(self.g.dims.params_only());
        for r in &self.states {
            if r.state.location != xi0.location {
                continue;
            }
            let w = r.win.intersect_zone(&xi0.zone);
            acc = acc.union_with(&project_params_union(&w));
        }
        acc.coalesce()
    }

    /// Every winning state must match some instruction at its location.
    fn assert_win_coverage(&self, strategy: &StrategySpecification) {
        for r in &self.states {
            if r.win.is_empty() {
                continue;
            }
            let sources = crate::strategy::source_union(strategy, r.state.location);
            assert!(
                is_subset(&r.win, &sources),
                "winning zone not covered by instruction sources at location {}",
                r.state.location
            );
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::LabelRule;
    use crate::zone::text::parse_union;

    pub(crate) const FIG1: &str = "\
        clocks: x;\n\
        actions: c1 controllable, c2 controllable, c3 controllable,\n\
                 u1 uncontrollable, u2 uncontrollable;\n\
        location L0 { }\n\
        location L1 { }\n\
        location L2 { }\n\
        location Win { }\n\
        transition L0 -> L1 { action: u1; }\n\
        transition L0 -> Win { action: c1; guard: x >= 2; }\n\
        transition L1 -> L2 { action: c2; guard: 1 < x && x <= 2; }\n\
        transition L2 -> L1 { action: u2; guard: x = 2; reset: { x }; }\n\
        transition L2 -> Win { action: c3; }\n\
        init: L0; goal: { Win };\n";

    pub(crate) const FIG3: &str = "\
        clocks: x; parameters: p;\n\
        actions: c1 controllable, c2 controllable, u1 uncontrollable;\n\
        location L0 { }\n\
        location L1 { }\n\
        location Lose { }\n\
        location Win { }\n\
        transition L0 -> L1 { action: c1; guard: x > 1; }\n\
        transition L1 -> Lose { action: u1; guard: x < p; }\n\
        transition L1 -> Win { action: c2; }\n\
        init: L0; goal: { Win };\n";

    pub(crate) const FIG4A: &str = "\
        clocks: x, y; parameters: p;\n\
        actions: u1 uncontrollable;\n\
        location L0 { invariant: x <= p; }\n\
        location Win { }\n\
        transition L0 -> Win { action: u1; guard: y >= p; }\n\
        init: L0; goal: { Win };\n";

    pub(crate) const FIG4B: &str = "\
        clocks: x, y; parameters: p;\n\
        actions: u1 uncontrollable;\n\
        location L0 { invariant: x < p; }\n\
        location Win { }\n\
        transition L0 -> Win { action: u1; guard: y >= p; }\n\
        init: L0; goal: { Win };\n";

    fn solved(src: &str, order: Order) -> (Ptg, SolveReport) {
        let g = Ptg::parse(src, LabelRule::GlobalUnique).unwrap();
        let report =
            solve(&g, &SolverOptions { order, budget: 100_000 }).unwrap();
        assert!(report.exhausted_queues);
        (g, report)
    }

    #[test]
    fn small_parametric_game_wins_for_all_parameters() {
        let (g, report) = solved(FIG3, Order::UpdateFirst);
        let pd = g.dims.params_only();
        assert!(semantically_equal(
            &report.winning_param,
            &parse_union("p >= 0", &pd).unwrap()
        ));
        let rows: Vec<&Instruction> = report
            .strategy
            .instructions
            .iter()
            .filter(|i| !i.is_wait())
            .collect();
        assert_eq!(rows.len(), 2);
        let expected = parse_union("p <= x && 1 < x", &g.dims).unwrap();
        for row in &rows {
            let t = &row.target.as_ref().unwrap().zone;
            assert!(semantically_equal(&t.to_union(), &expected));
        }
        let l1_row = rows.iter().find(|r| r.source.location == 1).unwrap();
        assert!(semantically_equal(&l1_row.source.zone.to_union(), &expected));
        let l0_row = rows.iter().find(|r| r.source.location == 0).unwrap();
        assert!(semantically_equal(
            &l0_row.source.zone.to_union(),
            &parse_union("x >= 0", &g.dims).unwrap()
        ));
    }

    #[test]
    fn forced_transition_game_with_reachable_bound_wins() {
        let (g, report) = solved(FIG4A, Order::UpdateFirst);
        let pd = g.dims.params_only();
        assert!(semantically_equal(
            &report.winning_param,
            &parse_union("p >= 0", &pd).unwrap()
        ));
        let init = report.state_at(&g, "L0").unwrap();
        assert!(semantically_equal(
            &init.forced_moves,
            &parse_union("x = p && y >= p", &g.dims).unwrap()
        ));
    }

    #[test]
    fn forced_transition_game_with_unreachable_bound_loses() {
        let (g, report) = solved(FIG4B, Order::UpdateFirst);
        assert!(report.winning_param.is_empty());
        let init = report.state_at(&g, "L0").unwrap();
        // the bound point lies on the open invariant's limit, so the
        // closure constrains it to strictly positive clock values
        assert!(semantically_equal(
            &init.forced_moves,
            &parse_union("x = p && y > p && x > 0", &g.dims).unwrap()
        ));
        assert!(!init.forced_moves.is_empty());
        assert!(init.win.is_empty());
    }

    #[test]
    fn staged_instructions_cover_the_loop_once() {
        let (g, report) = solved(FIG1, Order::UpdateFirst);
        let pd = g.dims.params_only();
        assert!(semantically_equal(&report.winning_param, &ZoneUnion::top(pd)));
        // L1 carries two staged rows: fire strictly inside (1, 2), or at
        // the boundary x = 2 reached after the loop reset
        let l1 = g.location("L1").unwrap();
        let l1_rows: Vec<&Instruction> = report
            .strategy
            .instructions
            .iter()
            .filter(|i| i.source.location == l1 && !i.is_wait())
            .collect();
        assert!(!l1_rows.is_empty());
        let sources = ZoneUnion::from_pieces(
            g.dims.clone(),
            l1_rows.iter().map(|r| r.source.zone.clone()).collect(),
        );
        assert!(semantically_equal(
            &sources,
            &parse_union("x <= 2", &g.dims).unwrap()
        ));
    }

    #[test]
    fn order_policies_agree() {
        for src in [FIG1, FIG3, FIG4A, FIG4B] {
            let (_, a) = solved(src, Order::UpdateFirst);
            let (_, b) = solved(src, Order::ExploreFirst);
            assert!(semantically_equal(&a.winning_param, &b.winning_param));
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = Ptg::parse(FIG1, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions { order: Order::UpdateFirst, budget: 2 }).unwrap();
        assert!(!report.exhausted_queues);
        assert_eq!(report.iterations, 2);
    }

    #[test]
    fn win_never_shrinks_and_instructions_stay_disjoint() {
        for src in [FIG1, FIG3, FIG4A, FIG4B] {
            let (_, report) = solved(src, Order::UpdateFirst);
            for (a, ia) in report.strategy.instructions.iter().enumerate() {
                for ib in report.strategy.instructions.iter().skip(a + 1) {
                    if ia.source.location == ib.source.location {
                        assert!(ia.source.zone.intersect(&ib.source.zone).is_empty());
                    }
                }
            }
        }
    }
}
