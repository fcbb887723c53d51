//! Seeded random simulation: episodes of a game played against a random
//! environment, either following a strategy specification or letting the
//! adversary resolve every choice (for closed-loop products). Reports
//! goal-reach rate, step counts, coherence violations, and violations of
//! the strictly decreasing matched-instruction index.

use crate::model::Ptg;
use crate::semantics::{
    available_window, check_coherent, delay_window, forced_stop_allowed, matched_instruction,
    strategy_decision, ConcreteState, Decision, DelayInterval, Run, Step,
};
use crate::strategy::StrategySpecification;
use crate::zone::{Q, Valuation};
use num::{BigInt, FromPrimitive, One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub episodes: usize,
    pub seed: u64,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> SimOptions {
        SimOptions { episodes: 500, seed: 0, max_steps: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub run: Run,
    pub reached_goal: bool,
    pub steps: usize,
    /// First step where the run stops being coherent with the strategy,
    /// if any (always None in adversary-only mode).
    pub incoherent_step: Option<usize>,
    /// Whether the matched-instruction index failed to strictly decrease
    /// at some step before the goal.
    pub index_violation: bool,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub episodes: Vec<Episode>,
    pub goal_count: usize,
    pub max_steps_seen: usize,
    pub coherence_violations: usize,
    pub index_violations: usize,
    /// Total number of firings per transition label over all episodes.
    pub fired: std::collections::BTreeMap<String, usize>,
}

impl SimReport {
    pub fn goal_rate(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.goal_count as f64 / self.episodes.len() as f64
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "episodes: {}\ngoal reached: {} ({:.1}%)\nmax steps: {}\n",
            self.episodes.len(),
            self.goal_count,
            100.0 * self.goal_rate(),
            self.max_steps_seen
        ));
        out.push_str(&format!(
            "coherence violations: {}\nindex violations: {}\n",
            self.coherence_violations, self.index_violations
        ));
        for (label, n) in &self.fired {
            out.push_str(&format!("fired {label}: {n}\n"));
        }
        out
    }
}

/// Samples a delay from `w` on the 1/8 grid, biased 25% toward the
/// endpoints; unbounded windows are capped two units above the low end.
fn sample_delay(rng: &mut ChaCha8Rng, w: &DelayInterval) -> Q {
    let eighth = Q::new(BigInt::one(), BigInt::from(8));
    let hi = match &w.hi {
        Some(h) => h.clone(),
        None => &w.lo + Q::from_i64(2).unwrap(),
    };
    let hi_strict = w.hi.is_some() && w.hi_strict;
    if rng.gen_range(0..4) == 0 {
        if rng.gen_bool(0.5) {
            if !w.lo_strict {
                return w.lo.clone();
            }
        } else if !hi_strict {
            return hi;
        }
    }
    // grid of multiples of 1/8 inside the window
    let scaled_lo = &w.lo * Q::from_i64(8).unwrap();
    let scaled_hi = &hi * Q::from_i64(8).unwrap();
    let mut k_lo = scaled_lo.ceil().to_integer();
    if w.lo_strict && scaled_lo.denom().is_one() {
        k_lo += 1;
    }
    let mut k_hi = scaled_hi.floor().to_integer();
    if hi_strict && scaled_hi.denom().is_one() {
        k_hi -= 1;
    }
    if k_lo > k_hi {
        // no grid point: take the midpoint, which is admissible because
        // the window is non-empty and not a forbidden single point
        return (&w.lo + &hi) / Q::from_i64(2).unwrap();
    }
    let span = (&k_hi - &k_lo).to_u64_digits().1;
    let span = if span.is_empty() { 0 } else { span[0] };
    let pick = &k_lo + BigInt::from(rng.gen_range(0..=span));
    Q::from_integer(pick) * eighth
}

/// The window during which the current location may be occupied.
fn dwell_window(g: &Ptg, s: &ConcreteState) -> DelayInterval {
    if g.locations[s.location].urgent {
        return DelayInterval::point(Q::zero());
    }
    delay_window(&g.locations[s.location].invariant, &s.valuation, &[])
        .expect("the current state satisfies the invariant")
}

enum Choice {
    Fire { transition: usize, window: DelayInterval },
    /// Let the controller's sampled move happen.
    Yield,
    /// End the episode here (only when stopping is legitimate).
    Stop,
}

/// Plays `options.episodes` runs of `g` under `strategy` at the given
/// parameter values, with a random environment choosing uniformly among
/// interception, yielding to the controller, and legitimate stopping.
pub fn simulate_strategy(
    g: &Ptg,
    strategy: &StrategySpecification,
    params: &[Q],
    options: &SimOptions,
) -> SimReport {
    simulate(g, Some(strategy), params, options)
}

/// Plays runs where the adversary resolves every choice (all transitions
/// treated as environment moves); used on closed-loop products.
pub fn simulate_adversary(g: &Ptg, params: &[Q], options: &SimOptions) -> SimReport {
    simulate(g, None, params, options)
}

fn simulate(
    g: &Ptg,
    strategy: Option<&StrategySpecification>,
    params: &[Q],
    options: &SimOptions,
) -> SimReport {
    let mut episodes = Vec::with_capacity(options.episodes);
    for e in 0..options.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(e as u64));
        episodes.push(run_episode(g, strategy, params, options.max_steps, &mut rng));
    }
    let mut fired = std::collections::BTreeMap::new();
    for ep in &episodes {
        for step in &ep.run.steps {
            *fired.entry(g.transitions[step.transition].label.clone()).or_insert(0) += 1;
        }
    }
    SimReport {
        goal_count: episodes.iter().filter(|e| e.reached_goal).count(),
        max_steps_seen: episodes.iter().map(|e| e.steps).max().unwrap_or(0),
        coherence_violations: episodes.iter().filter(|e| e.incoherent_step.is_some()).count(),
        index_violations: episodes.iter().filter(|e| e.index_violation).count(),
        fired,
        episodes,
    }
}

fn run_episode(
    g: &Ptg,
    strategy: Option<&StrategySpecification>,
    params: &[Q],
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Episode {
    let mut s = ConcreteState {
        location: g.initial,
        valuation: Valuation::zero_clocks(&g.dims, params.to_vec()),
    };
    let mut run = Run { params: params.to_vec(), steps: Vec::new() };
    let mut reached_goal = g.is_goal(s.location);
    let mut index_violation = false;
    let mut last_index: Option<usize> = strategy.and_then(|l| {
        matched_instruction(l, &s).map(|i| i.index)
    });
    while !reached_goal && run.steps.len() < max_steps {
        let dwell = dwell_window(g, &s);
        // the controller's sampled move, if its strategy offers one here
        let plan: Option<(usize, Q)> = strategy.and_then(|l| {
            let decs = strategy_decision(l, &s).ok()?;
            decs.into_iter().find_map(|d| match d {
                Decision::Move { transition, window, .. } => {
                    let w = window.intersect(&dwell)?;
                    Some((transition, sample_delay(rng, &w)))
                }
                Decision::Stay => None,
            })
        });
        let mut choices: Vec<Choice> = Vec::new();
        for (t, tr) in g.transitions_from(s.location) {
            if strategy.is_some() && tr.controllable {
                continue;
            }
            if let Some(w) = available_window(g, tr, &s.valuation) {
                if let Some(w) = w.intersect(&dwell) {
                    // the environment may act at or before the
                    // controller's chosen delay; ties go to it
                    let w = match &plan {
                        Some((_, d)) => w.intersect(&DelayInterval {
                            lo: Q::zero(),
                            lo_strict: false,
                            hi: Some(d.clone()),
                            hi_strict: false,
                        }),
                        None => Some(w),
                    };
                    if let Some(w) = w {
                        choices.push(Choice::Fire { transition: t, window: w });
                    }
                }
            }
        }
        if plan.is_some() {
            choices.push(Choice::Yield);
        } else if forced_stop_allowed(g, &s) {
            choices.push(Choice::Stop);
        }
        if choices.is_empty() {
            break;
        }
        let (transition, delay) = match &choices[rng.gen_range(0..choices.len())] {
            Choice::Stop => break,
            Choice::Yield => plan.clone().expect("yield only offered alongside a plan"),
            Choice::Fire { transition, window } => (*transition, sample_delay(rng, window)),
        };
        let after = s.valuation.elapse(&delay);
        s = ConcreteState {
            location: g.transitions[transition].target,
            valuation: after.reset(&g.transitions[transition].resets),
        };
        run.steps.push(Step { delay, transition });
        reached_goal = g.is_goal(s.location);
        if let Some(l) = strategy {
            let idx = matched_instruction(l, &s).map(|i| i.index);
            if !reached_goal {
                match (last_index, idx) {
                    (Some(prev), Some(next)) if next < prev => {}
                    (None, _) => {}
                    _ => index_violation = true,
                }
            }
            last_index = idx;
        }
    }
    let incoherent_step = strategy.and_then(|l| check_coherent(g, l, &run).ok().flatten());
    Episode { steps: run.steps.len(), run, reached_goal, incoherent_step, index_violation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelRule, Ptg};
    use crate::solver::{solve, SolverOptions};
    use crate::zone::qi;

    fn rational(text: &str) -> Q {
        let mut parts = text.splitn(2, '/');
        let n: i64 = parts.next().unwrap().parse().unwrap();
        match parts.next() {
            None => qi(n),
            Some(d) => Q::new(n.into(), d.parse::<i64>().unwrap().into()),
        }
    }

    #[test]
    fn strategy_guided_runs_always_reach_the_goal() {
        let g = Ptg::parse(crate::solver::tests::FIG1, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let sim = simulate_strategy(
            &g,
            &report.strategy,
            &[],
            &SimOptions { episodes: 500, seed: 7, max_steps: 50 },
        );
        assert_eq!(sim.goal_count, 500);
        assert_eq!(sim.coherence_violations, 0);
        assert_eq!(sim.index_violations, 0);
        // the loop back through u2 can be taken at most once per episode
        assert!(*sim.fired.get("u2").unwrap_or(&0) <= 500);
        for ep in &sim.episodes {
            let u2 = ep
                .run
                .steps
                .iter()
                .filter(|s| g.transitions[s.transition].label == "u2")
                .count();
            assert!(u2 <= 1, "u2 fired {u2} times in one episode");
        }
    }

    #[test]
    fn identical_seeds_give_identical_transcripts() {
        let g = Ptg::parse(crate::solver::tests::FIG3, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let opts = SimOptions { episodes: 20, seed: 42, max_steps: 50 };
        let params = vec![rational("3/2")];
        let a = simulate_strategy(&g, &report.strategy, &params, &opts);
        let b = simulate_strategy(&g, &report.strategy, &params, &opts);
        for (x, y) in a.episodes.iter().zip(b.episodes.iter()) {
            assert_eq!(x.run.steps.len(), y.run.steps.len());
            for (p, q) in x.run.steps.iter().zip(y.run.steps.iter()) {
                assert_eq!(p.transition, q.transition);
                assert_eq!(p.delay, q.delay);
            }
        }
    }

    #[test]
    fn winning_parameters_win_every_episode() {
        let g = Ptg::parse(crate::solver::tests::FIG3, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let sim = simulate_strategy(
            &g,
            &report.strategy,
            &[rational("3/2")],
            &SimOptions { episodes: 300, seed: 1, max_steps: 50 },
        );
        assert_eq!(sim.goal_count, 300);
        assert_eq!(sim.coherence_violations, 0);
        assert_eq!(sim.index_violations, 0);
    }

    #[test]
    fn closed_loop_product_reaches_the_goal_under_a_random_adversary() {
        let g = Ptg::parse(crate::solver::tests::FIG3, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let controller =
            crate::controller::synthesize_controller(&g, &report.strategy, "eps").unwrap();
        let product = crate::compose::product(&controller, &g, true).unwrap();
        let bound = 10 * product.locations.len();
        let sim = simulate_adversary(
            &product,
            &[rational("1"), rational("1/4")],
            &SimOptions { episodes: 500, seed: 11, max_steps: bound },
        );
        assert_eq!(sim.goal_count, 500, "{}", sim.render());
        assert!(sim.max_steps_seen <= bound);
    }

    #[test]
    fn forced_bound_is_hit_even_when_the_controller_only_waits() {
        let g = Ptg::parse(crate::solver::tests::FIG4A, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let sim = simulate_strategy(
            &g,
            &report.strategy,
            &[rational("2")],
            &SimOptions { episodes: 200, seed: 3, max_steps: 20 },
        );
        assert_eq!(sim.goal_count, 200, "{}", sim.render());
        assert_eq!(sim.coherence_violations, 0);
    }

    #[test]
    fn losing_parameters_are_reported_not_hidden() {
        let g = Ptg::parse(crate::solver::tests::FIG4B, LabelRule::GlobalUnique).unwrap();
        let report = solve(&g, &SolverOptions::default()).unwrap();
        let sim = simulate_strategy(
            &g,
            &report.strategy,
            &[rational("1/2")],
            &SimOptions { episodes: 200, seed: 5, max_steps: 50 },
        );
        assert!(sim.goal_count < 200);
    }
}
