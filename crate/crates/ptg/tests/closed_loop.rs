//! Closed-loop properties of synthesized controllers on the bundled
//! models: every random-adversary run of the composition reaches the goal
//! within a linear step budget, instruction locations never disable an
//! uncontrollable game action, and the solver agrees with a brute-force
//! discretized game solver on non-parametric instances.

mod common;

use common::{load_model, q};
use ptg::compose::product;
use ptg::controller::synthesize_controller;
use ptg::model::{LabelRule, Ptg};
use ptg::semantics::{available_window, replay, ConcreteState};
use ptg::sim::{simulate_adversary, SimOptions};
use ptg::solver::{solve, SolverOptions};
use ptg::zone::{Q, Valuation};
use num::Zero;

fn winning_samples(name: &str) -> Vec<Vec<Q>> {
    match name {
        "fig1.ptg" => vec![vec![]],
        "fig3.ptg" => vec![vec![q(1, 1)], vec![q(3, 2)]],
        "fig4a.ptg" => vec![vec![q(1, 1)], vec![q(2, 1)]],
        "prodcell.ptg" => vec![vec![q(1, 1)], vec![q(5, 2)]],
        other => panic!("no samples for {other}"),
    }
}

fn closed_loop(name: &str) -> (Ptg, Ptg) {
    let g = load_model(name);
    let report = solve(&g, &SolverOptions::default()).unwrap();
    assert!(report.exhausted_queues);
    let c = synthesize_controller(&g, &report.strategy, "eps").unwrap();
    (product(&c, &g, true).unwrap(), g)
}

#[test]
fn every_composed_run_reaches_the_goal_within_the_step_budget() {
    for name in ["fig1.ptg", "fig3.ptg", "fig4a.ptg", "prodcell.ptg"] {
        let (p, _) = closed_loop(name);
        let budget = 10 * p.locations.len();
        for game_params in winning_samples(name) {
            for eps in [q(1, 4), q(1, 1)] {
                let mut params = game_params.clone();
                params.push(eps.clone());
                let sim = simulate_adversary(
                    &p,
                    &params,
                    &SimOptions { episodes: 500, seed: 17, max_steps: budget },
                );
                assert_eq!(
                    sim.goal_count, 500,
                    "{name} at {params:?}: {}",
                    sim.render()
                );
                assert!(sim.max_steps_seen <= budget, "{name}: {}", sim.max_steps_seen);
            }
        }
    }
}

/// At every simulated composed state whose controller side is committed to
/// an instruction, each uncontrollable game action enabled in the game
/// alone is also enabled in the composition. Mirror states are exempt:
/// they are urgent commitment points where no time passes.
#[test]
fn instruction_locations_never_disable_uncontrollable_game_actions() {
    for name in ["fig1.ptg", "fig3.ptg", "fig4a.ptg", "prodcell.ptg"] {
        let (p, g) = closed_loop(name);
        for game_params in winning_samples(name) {
            let mut params = game_params.clone();
            params.push(q(1, 4));
            let sim = simulate_adversary(
                &p,
                &params,
                &SimOptions { episodes: 100, seed: 23, max_steps: 10 * p.locations.len() },
            );
            for ep in &sim.episodes {
                for s in replay(&p, &ep.run).unwrap() {
                    check_enabledness(&p, &g, &s, &game_params);
                }
            }
        }
    }
}

fn check_enabledness(p: &Ptg, g: &Ptg, s: &ConcreteState, game_params: &[Q]) {
    let pair = &p.locations[s.location].id;
    let Some((ctrl_loc, game_loc)) = pair.split_once("__x__") else {
        return;
    };
    if !ctrl_loc.contains("__i") {
        return;
    }
    let gl = g.location(game_loc).expect("pair names a game location");
    let gv = Valuation {
        clocks: s.valuation.clocks.clone(),
        params: game_params.to_vec(),
    };
    for (t, tr) in g.transitions_from(gl) {
        if tr.controllable {
            continue;
        }
        let game_now = available_window(g, tr, &gv)
            .map_or(false, |w| w.contains(&Q::zero()));
        if !game_now {
            continue;
        }
        let _ = t;
        let composed_now = p
            .transitions_from(s.location)
            .filter(|(_, pt)| pt.label == tr.label)
            .any(|(_, pt)| {
                available_window(p, pt, &s.valuation)
                    .map_or(false, |w| w.contains(&Q::zero()))
            });
        assert!(
            composed_now,
            "label {} enabled in the game at {game_loc} but not in the composition at {pair}",
            tr.label
        );
    }
}

/// Discretized game solver on the 1/2 grid: clock values saturate above
/// the largest constant, the controller may fire an enabled controllable
/// action or wait one step, and the environment may preempt either choice
/// with any enabled uncontrollable action.
mod brute {
    use super::*;
    use std::collections::BTreeSet;

    const HALF_UNITS_CAP: i64 = 6;

    fn val(g: &Ptg, halves: &[i64]) -> Valuation {
        Valuation {
            clocks: halves.iter().map(|h| q(*h, 2)).collect(),
            params: vec![Q::zero(); g.dims.n_params()],
        }
    }

    fn enabled_now(g: &Ptg, t: usize, halves: &[i64]) -> bool {
        available_window(g, &g.transitions[t], &val(g, halves))
            .map_or(false, |w| w.contains(&Q::zero()))
    }

    fn step(g: &Ptg, t: usize, halves: &[i64]) -> (usize, Vec<i64>) {
        let tr = &g.transitions[t];
        let mut next = halves.to_vec();
        for c in &tr.resets {
            next[*c] = 0;
        }
        (tr.target, next)
    }

    pub fn initial_is_winning(g: &Ptg) -> bool {
        assert_eq!(g.dims.n_params(), 0, "brute force is for non-parametric games");
        let mut states: BTreeSet<(usize, Vec<i64>)> = BTreeSet::new();
        let mut frontier = vec![(g.initial, vec![0i64; g.dims.n_clocks()])];
        while let Some(s) = frontier.pop() {
            if !states.insert(s.clone()) {
                continue;
            }
            let (l, halves) = s;
            for (t, _) in g.transitions_from(l) {
                if enabled_now(g, t, &halves) {
                    frontier.push(step(g, t, &halves));
                }
            }
            let bumped: Vec<i64> =
                halves.iter().map(|h| (h + 1).min(HALF_UNITS_CAP)).collect();
            if g.locations[l].invariant.satisfies(&val(g, &bumped)) && !g.locations[l].urgent {
                frontier.push((l, bumped));
            }
        }
        let mut win: BTreeSet<(usize, Vec<i64>)> =
            states.iter().filter(|(l, _)| g.is_goal(*l)).cloned().collect();
        loop {
            let mut grew = false;
            for s in &states {
                if win.contains(s) {
                    continue;
                }
                let (l, halves) = s;
                let env_safe = g
                    .transitions_from(*l)
                    .filter(|(t, tr)| !tr.controllable && enabled_now(g, *t, halves))
                    .all(|(t, _)| win.contains(&step(g, t, halves)));
                let fire = g
                    .transitions_from(*l)
                    .filter(|(t, tr)| tr.controllable && enabled_now(g, *t, halves))
                    .any(|(t, _)| win.contains(&step(g, t, halves)));
                let bumped: Vec<i64> =
                    halves.iter().map(|h| (h + 1).min(HALF_UNITS_CAP)).collect();
                let wait = !g.locations[*l].urgent
                    && g.locations[*l].invariant.satisfies(&val(g, &bumped))
                    && win.contains(&(*l, bumped));
                if env_safe && (fire || wait) {
                    win.insert(s.clone());
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        win.contains(&(g.initial, vec![0; g.dims.n_clocks()]))
    }
}

#[test]
fn solver_agrees_with_discretized_brute_force_on_nonparametric_games() {
    let winning = load_model("fig1.ptg");
    let report = solve(&winning, &SolverOptions::default()).unwrap();
    assert!(report.exhausted_queues);
    assert_eq!(
        !report.winning_param.is_empty(),
        brute::initial_is_winning(&winning),
        "fig1 winning status"
    );

    let losing_src = "\
        clocks: x;\n\
        actions: c1 controllable;\n\
        location L0 { invariant: x <= 1; }\n\
        location Win { }\n\
        transition L0 -> Win { action: c1; guard: x >= 2; }\n\
        init: L0; goal: { Win };\n";
    let losing = Ptg::parse(losing_src, LabelRule::GlobalUnique).unwrap();
    let report = solve(&losing, &SolverOptions::default()).unwrap();
    assert!(report.exhausted_queues);
    assert_eq!(
        !report.winning_param.is_empty(),
        brute::initial_is_winning(&losing),
        "unreachable-guard game winning status"
    );
    assert!(report.winning_param.is_empty());
}

/// Replays stay deterministic: replaying the same run twice gives the
/// same state sequence.
#[test]
fn replay_is_deterministic() {
    let g = load_model("fig1.ptg");
    let sim = simulate_adversary(
        &g,
        &[],
        &SimOptions { episodes: 5, seed: 3, max_steps: 50 },
    );
    for ep in &sim.episodes {
        let a = replay(&g, &ep.run).unwrap();
        let b = replay(&g, &ep.run).unwrap();
        assert_eq!(a, b);
    }
}
