//! Controller automaton synthesis from a strategy specification, plus
//! textual export and re-ingestion.
//!
//! The controller mirrors every game location it may observe with an
//! urgent location. From a mirror, internal selector transitions commit to
//! the instruction matching the current state; the instruction location
//! then either fires the decided action in sync with the game, or lets an
//! uncontrollable game action through unrestricted. The controller never
//! resets a clock.

use crate::model::{LabelRule, Location, ModelError, Ptg, Transition};
use crate::strategy::{add_epsilon_bounds, sha256_hex, StrategySpecification};
use crate::zone::{convex_subset, has_upper_temporal, time_past, ConvexZone};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct ControllerPta {
    pub pta: Ptg,
    pub model_hash: String,
    pub strategy_hash: String,
    pub epsilon: String,
}

pub fn synthesize_controller(
    g: &Ptg,
    strategy: &StrategySpecification,
    eps: &str,
) -> Result<ControllerPta, ModelError> {
    strategy.validate(g)?;
    let augmented = add_epsilon_bounds(strategy, eps, true)?;
    let dims = augmented.dims.clone();
    let top = ConvexZone::top(dims.clone());

    let mut locations: Vec<Location> = Vec::new();
    let mut mirror_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut actions: Vec<(String, bool)> = g.actions.clone();

    let mirror = |game_loc: usize,
                      locations: &mut Vec<Location>,
                      mirror_of: &mut BTreeMap<usize, usize>| {
        *mirror_of.entry(game_loc).or_insert_with(|| {
            locations.push(Location {
                id: g.locations[game_loc].id.clone(),
                invariant: top.clone(),
                urgent: true,
            });
            locations.len() - 1
        })
    };

    for instr in &augmented.instructions {
        let game_loc = instr.source.location;
        if instr.is_wait() && g.is_goal(game_loc) {
            mirror(game_loc, &mut locations, &mut mirror_of);
            continue;
        }
        let q_src = mirror(game_loc, &mut locations, &mut mirror_of);
        let q_i = locations.len();
        locations.push(Location {
            id: format!("{}__i{}", g.locations[game_loc].id, instr.index),
            invariant: top.clone(),
            urgent: false,
        });
        let select = format!("__sel_{}", instr.index);
        actions.push((select.clone(), true));
        transitions.push(Transition {
            source: q_src,
            target: q_i,
            label: select,
            guard: instr.source.zone.clone(),
            resets: Vec::new(),
            controllable: true,
        });
        if let (Some(target), Some(d)) = (&instr.target, instr.decision) {
            locations[q_i].invariant = time_past(&target.zone);
            let tr = &g.transitions[d];
            let q_tgt = mirror(tr.target, &mut locations, &mut mirror_of);
            transitions.push(Transition {
                source: q_i,
                target: q_tgt,
                label: tr.label.clone(),
                guard: target.zone.clone(),
                resets: Vec::new(),
                controllable: true,
            });
            if convex_subset(&instr.source.zone, &target.zone)
                && !has_upper_temporal(&target.zone)
            {
                locations[q_i].urgent = true;
            }
        }
        for (_, tu) in g.transitions_from(game_loc) {
            if tu.controllable {
                continue;
            }
            let q_tgt = mirror(tu.target, &mut locations, &mut mirror_of);
            transitions.push(Transition {
                source: q_i,
                target: q_tgt,
                label: tu.label.clone(),
                guard: top.clone(),
                resets: Vec::new(),
                controllable: false,
            });
        }
    }

    let initial = mirror(g.initial, &mut locations, &mut mirror_of);
    let goal = g
        .goal
        .iter()
        .filter_map(|l| mirror_of.get(l).copied())
        .collect();
    let pta = Ptg { dims, locations, actions, transitions, initial, goal };
    pta.validate(LabelRule::PerSourceUnique)?;
    for t in &pta.transitions {
        assert!(t.resets.is_empty(), "controller transitions never reset clocks");
    }
    let model_hash = sha256_hex(&g.serialize());
    Ok(ControllerPta {
        strategy_hash: sha256_hex(&strategy.serialize(g, &model_hash)),
        model_hash,
        epsilon: eps.to_string(),
        pta,
    })
}

impl ControllerPta {
    pub fn export(&self) -> String {
        format!(
            "# controller\n# model-sha256: {}\n# strategy-sha256: {}\n# epsilon: {}\n{}",
            self.model_hash,
            self.strategy_hash,
            self.epsilon,
            self.pta.serialize()
        )
    }

    pub fn parse(src: &str) -> Result<ControllerPta, ModelError> {
        let mut model_hash = None;
        let mut strategy_hash = None;
        let mut epsilon = None;
        for line in src.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# model-sha256:") {
                model_hash = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("# strategy-sha256:") {
                strategy_hash = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("# epsilon:") {
                epsilon = Some(rest.trim().to_string());
            }
        }
        let missing = |what: &str| ModelError::Invalid(format!("missing `# {what}:` line"));
        let epsilon = epsilon.ok_or_else(|| missing("epsilon"))?;
        let pta = Ptg::parse(src, LabelRule::PerSourceUnique)?;
        if pta.dims.param(&epsilon).is_none() {
            return Err(ModelError::Invalid(format!(
                "declared epsilon parameter `{epsilon}` is not a parameter of the model"
            )));
        }
        Ok(ControllerPta {
            pta,
            model_hash: model_hash.ok_or_else(|| missing("model-sha256"))?,
            strategy_hash: strategy_hash.ok_or_else(|| missing("strategy-sha256"))?,
            epsilon,
        })
    }
}
