//! Parametric timed game data model, textual model language, parser,
//! serializer, and validator.
//!
//! Model files are UTF-8 text with `#` line comments:
//!
//! ```text
//! clocks: x, y;
//! parameters: p;
//! actions: c1 controllable, u1 uncontrollable;
//! location L0 { invariant: x <= p; urgent: false; }
//! transition L0 -> Win { action: u1; guard: y >= p; reset: {}; }
//! init: L0;
//! goal: { Win };
//! ```
//!
//! Omitted invariant means `true`, omitted urgent means false, omitted
//! guard means `true`, omitted reset means the empty set. Guards and
//! invariants use the constraint syntax of the zone module.

use crate::zone::{
    embed, text, text::Cursor, ConvexZone, Dims, ZoneError, ZoneUnion,
};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Constraint(#[from] ZoneError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::Invalid(msg.into())
}

#[derive(Debug, Clone)]
pub struct Location {
    pub id: String,
    pub invariant: ConvexZone,
    pub urgent: bool,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub source: usize,
    pub target: usize,
    pub label: String,
    pub guard: ConvexZone,
    pub resets: Vec<usize>,
    pub controllable: bool,
}

/// A location paired with a zone over the game's clocks and parameters.
#[derive(Debug, Clone)]
pub struct SymbolicState {
    pub location: usize,
    pub zone: ConvexZone,
}

/// How strictly action labels must identify transitions.
///
/// Game models require every label to appear on exactly one transition.
/// Re-ingested controllers reuse one synchronized label on several
/// branches leaving different locations, so they are checked with the
/// weaker per-source rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    GlobalUnique,
    PerSourceUnique,
}

#[derive(Debug, Clone)]
pub struct Ptg {
    pub dims: Arc<Dims>,
    pub locations: Vec<Location>,
    /// Declared action labels with their controllability.
    pub actions: Vec<(String, bool)>,
    pub transitions: Vec<Transition>,
    pub initial: usize,
    pub goal: BTreeSet<usize>,
}

impl Ptg {
    pub fn location(&self, id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.id == id)
    }

    pub fn is_goal(&self, loc: usize) -> bool {
        self.goal.contains(&loc)
    }

    pub fn transitions_from(&self, loc: usize) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.source == loc)
    }

    pub fn transition_by_label(&self, source: usize, label: &str) -> Option<usize> {
        self.transitions
            .iter()
            .position(|t| t.source == source && t.label == label)
    }

    /// The initial symbolic state: all clocks zero, inside the initial
    /// location's invariant. May be empty for every parameter valuation.
    pub fn initial_symbolic_state(&self) -> SymbolicState {
        let mut zone = self.locations[self.initial].invariant.clone();
        for c in 0..self.dims.n_clocks() {
            zone = zone.with_atom(crate::zone::Atom::Clock {
                clock: c,
                rel: crate::zone::Rel::Eq,
                term: crate::zone::LinearTerm::zero(),
            });
        }
        SymbolicState { location: self.initial, zone }
    }

    pub fn parse(src: &str, rule: LabelRule) -> Result<Ptg, ModelError> {
        parse_model(src, rule)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        if self.dims.n_clocks() > 0 {
            out.push_str(&format!("clocks: {};\n", self.dims.clocks.join(", ")));
        }
        if self.dims.n_params() > 0 {
            out.push_str(&format!("parameters: {};\n", self.dims.params.join(", ")));
        }
        let acts: Vec<String> = self
            .actions
            .iter()
            .map(|(a, c)| {
                format!("{} {}", a, if *c { "controllable" } else { "uncontrollable" })
            })
            .collect();
        out.push_str(&format!("actions: {};\n", acts.join(", ")));
        for l in &self.locations {
            out.push_str(&format!("location {} {{", l.id));
            if !l.invariant.atoms.is_empty() {
                out.push_str(&format!(" invariant: {};", text::format_zone(&l.invariant)));
            }
            if l.urgent {
                out.push_str(" urgent: true;");
            }
            out.push_str(" }\n");
        }
        for t in &self.transitions {
            out.push_str(&format!(
                "transition {} -> {} {{ action: {};",
                self.locations[t.source].id, self.locations[t.target].id, t.label
            ));
            if !t.guard.atoms.is_empty() {
                out.push_str(&format!(" guard: {};", text::format_zone(&t.guard)));
            }
            if !t.resets.is_empty() {
                let names: Vec<&str> =
                    t.resets.iter().map(|c| self.dims.clocks[*c].as_str()).collect();
                out.push_str(&format!(" reset: {{ {} }};", names.join(", ")));
            }
            out.push_str(" }\n");
        }
        out.push_str(&format!("init: {};\n", self.locations[self.initial].id));
        let goals: Vec<&str> =
            self.goal.iter().map(|g| self.locations[*g].id.as_str()).collect();
        out.push_str(&format!("goal: {{ {} }};\n", goals.join(", ")));
        out
    }

    /// Replaces native urgency by an extra clock: the clock is reset on
    /// every transition entering an urgent location, whose invariant gains
    /// `u <= 0`.
    pub fn encode_urgency(&self, clock_name: &str) -> Result<Ptg, ModelError> {
        if self.dims.clock(clock_name).is_some() || self.dims.param(clock_name).is_some() {
            return Err(invalid(format!("name `{clock_name}` is already declared")));
        }
        let mut clocks = self.dims.clocks.clone();
        clocks.push(clock_name.to_string());
        let dims = Dims::new(clocks, self.dims.params.clone());
        let u = dims.clock(clock_name).expect("freshly added clock");
        let mut locations = Vec::new();
        for l in &self.locations {
            let mut inv = embed(&l.invariant, &dims)?;
            if l.urgent {
                inv = inv.with_atom(crate::zone::Atom::Clock {
                    clock: u,
                    rel: crate::zone::Rel::Le,
                    term: crate::zone::LinearTerm::zero(),
                });
            }
            locations.push(Location { id: l.id.clone(), invariant: inv, urgent: false });
        }
        let mut transitions = Vec::new();
        for t in &self.transitions {
            let mut resets = t.resets.clone();
            if self.locations[t.target].urgent {
                resets.push(u);
            }
            transitions.push(Transition {
                source: t.source,
                target: t.target,
                label: t.label.clone(),
                guard: embed(&t.guard, &dims)?,
                resets,
                controllable: t.controllable,
            });
        }
        Ok(Ptg {
            dims,
            locations,
            actions: self.actions.clone(),
            transitions,
            initial: self.initial,
            goal: self.goal.clone(),
        })
    }

    pub fn validate(&self, rule: LabelRule) -> Result<(), ModelError> {
        let mut names = BTreeSet::new();
        for n in self.dims.clocks.iter().chain(self.dims.params.iter()) {
            if !names.insert(n.clone()) {
                return Err(invalid(format!("duplicate declaration of `{n}`")));
            }
        }
        let mut ids = BTreeSet::new();
        for l in &self.locations {
            if !ids.insert(l.id.clone()) {
                return Err(invalid(format!("duplicate location `{}`", l.id)));
            }
        }
        let table: BTreeMap<&str, bool> =
            self.actions.iter().map(|(a, c)| (a.as_str(), *c)).collect();
        if table.len() != self.actions.len() {
            return Err(invalid("duplicate action declaration"));
        }
        let mut seen: BTreeSet<(Option<usize>, &str)> = BTreeSet::new();
        for t in &self.transitions {
            if t.source >= self.locations.len() || t.target >= self.locations.len() {
                return Err(invalid("transition endpoint out of range"));
            }
            match table.get(t.label.as_str()) {
                None => {
                    return Err(invalid(format!("undeclared action `{}`", t.label)));
                }
                Some(c) if *c != t.controllable => {
                    return Err(invalid(format!(
                        "action `{}` controllability mismatch",
                        t.label
                    )));
                }
                _ => {}
            }
            let key = match rule {
                LabelRule::GlobalUnique => (None, t.label.as_str()),
                LabelRule::PerSourceUnique => (Some(t.source), t.label.as_str()),
            };
            if !seen.insert(key) {
                return Err(invalid(format!(
                    "action `{}` labels more than one transition",
                    t.label
                )));
            }
            for c in &t.resets {
                if *c >= self.dims.n_clocks() {
                    return Err(invalid("reset of an undeclared clock"));
                }
            }
        }
        if !self.goal.iter().all(|g| *g < self.locations.len()) {
            return Err(invalid("goal location out of range"));
        }
        if self.initial >= self.locations.len() {
            return Err(invalid("initial location out of range"));
        }
        Ok(())
    }
}

impl fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "loc#{}: {}", self.location, self.zone)
    }
}

/// A zone union tagged with a location, used by the solver.
#[derive(Debug, Clone)]
pub struct SymbolicSet {
    pub location: usize,
    pub zones: ZoneUnion,
}

struct RawTransition {
    source: String,
    target: String,
    label: Option<String>,
    guard: Option<ConvexZone>,
    resets: Vec<usize>,
}

fn parse_name_list(cur: &mut Cursor) -> Result<Vec<String>, ZoneError> {
    let mut names = Vec::new();
    loop {
        names.push(cur.expect_ident()?);
        if !cur.eat_sym(",") {
            break;
        }
    }
    cur.expect_sym(";")?;
    Ok(names)
}

fn parse_model(src: &str, rule: LabelRule) -> Result<Ptg, ModelError> {
    let mut cur = Cursor::new(text::lex(src)?);
    let mut clocks: Vec<String> = Vec::new();
    let mut params: Vec<String> = Vec::new();
    let mut actions: Vec<(String, bool)> = Vec::new();
    let mut dims: Option<Arc<Dims>> = None;
    let mut locations: Vec<Location> = Vec::new();
    let mut raw_transitions: Vec<RawTransition> = Vec::new();
    let mut init: Option<String> = None;
    let mut goal: Option<Vec<String>> = None;

    while !cur.at_end() {
        if cur.eat_keyword("clocks") {
            cur.expect_sym(":")?;
            if dims.is_some() {
                return Err(invalid("clocks must be declared before any location"));
            }
            clocks.extend(parse_name_list(&mut cur)?);
        } else if cur.eat_keyword("parameters") {
            cur.expect_sym(":")?;
            if dims.is_some() {
                return Err(invalid("parameters must be declared before any location"));
            }
            params.extend(parse_name_list(&mut cur)?);
        } else if cur.eat_keyword("actions") {
            cur.expect_sym(":")?;
            loop {
                let name = cur.expect_ident()?;
                let ctrl = if cur.eat_keyword("controllable") {
                    true
                } else if cur.eat_keyword("uncontrollable") {
                    false
                } else {
                    return Err(cur
                        .error("expected `controllable` or `uncontrollable`")
                        .into());
                };
                actions.push((name, ctrl));
                if !cur.eat_sym(",") {
                    break;
                }
            }
            cur.expect_sym(";")?;
        } else if cur.eat_keyword("location") {
            let d = dims
                .get_or_insert_with(|| Dims::new(clocks.clone(), params.clone()))
                .clone();
            let id = cur.expect_ident()?;
            cur.expect_sym("{")?;
            let mut invariant = ConvexZone::top(d.clone());
            let mut urgent = false;
            while !cur.eat_sym("}") {
                if cur.eat_keyword("invariant") {
                    cur.expect_sym(":")?;
                    invariant = text::parse_conj(&mut cur, &d)?;
                    cur.expect_sym(";")?;
                } else if cur.eat_keyword("urgent") {
                    cur.expect_sym(":")?;
                    urgent = if cur.eat_keyword("true") {
                        true
                    } else if cur.eat_keyword("false") {
                        false
                    } else {
                        return Err(cur.error("expected `true` or `false`").into());
                    };
                    cur.expect_sym(";")?;
                } else {
                    return Err(cur.error("expected `invariant` or `urgent`").into());
                }
            }
            locations.push(Location { id, invariant, urgent });
        } else if cur.eat_keyword("transition") {
            let d = dims
                .get_or_insert_with(|| Dims::new(clocks.clone(), params.clone()))
                .clone();
            let source = cur.expect_ident()?;
            cur.expect_sym("->")?;
            let target = cur.expect_ident()?;
            cur.expect_sym("{")?;
            let mut raw = RawTransition {
                source,
                target,
                label: None,
                guard: None,
                resets: Vec::new(),
            };
            while !cur.eat_sym("}") {
                if cur.eat_keyword("action") {
                    cur.expect_sym(":")?;
                    raw.label = Some(cur.expect_ident()?);
                    cur.expect_sym(";")?;
                } else if cur.eat_keyword("guard") {
                    cur.expect_sym(":")?;
                    raw.guard = Some(text::parse_conj(&mut cur, &d)?);
                    cur.expect_sym(";")?;
                } else if cur.eat_keyword("reset") {
                    cur.expect_sym(":")?;
                    cur.expect_sym("{")?;
                    if !cur.eat_sym("}") {
                        loop {
                            let name = cur.expect_ident()?;
                            let idx = d
                                .clock(&name)
                                .ok_or_else(|| invalid(format!("reset of `{name}`, which is not a clock")))?;
                            raw.resets.push(idx);
                            if !cur.eat_sym(",") {
                                cur.expect_sym("}")?;
                                break;
                            }
                        }
                    }
                    cur.expect_sym(";")?;
                } else {
                    return Err(cur.error("expected `action`, `guard` or `reset`").into());
                }
            }
            raw_transitions.push(raw);
        } else if cur.eat_keyword("init") {
            cur.expect_sym(":")?;
            init = Some(cur.expect_ident()?);
            cur.expect_sym(";")?;
        } else if cur.eat_keyword("goal") {
            cur.expect_sym(":")?;
            cur.expect_sym("{")?;
            let mut names = Vec::new();
            if !cur.eat_sym("}") {
                loop {
                    names.push(cur.expect_ident()?);
                    if !cur.eat_sym(",") {
                        cur.expect_sym("}")?;
                        break;
                    }
                }
            }
            cur.expect_sym(";")?;
            goal = Some(names);
        } else {
            return Err(cur.error("expected a top-level section").into());
        }
    }

    let dims = dims.unwrap_or_else(|| Dims::new(clocks.clone(), params.clone()));
    let table: BTreeMap<&str, bool> = actions.iter().map(|(a, c)| (a.as_str(), *c)).collect();
    let find = |id: &str, locations: &[Location]| {
        locations
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| invalid(format!("unknown location `{id}`")))
    };
    let mut transitions = Vec::new();
    for raw in raw_transitions {
        let label = raw.label.ok_or_else(|| invalid("transition is missing an action"))?;
        let controllable = *table
            .get(label.as_str())
            .ok_or_else(|| invalid(format!("undeclared action `{label}`")))?;
        transitions.push(Transition {
            source: find(&raw.source, &locations)?,
            target: find(&raw.target, &locations)?,
            label,
            guard: raw.guard.unwrap_or_else(|| ConvexZone::top(dims.clone())),
            resets: raw.resets,
            controllable,
        });
    }
    let init = init.ok_or_else(|| invalid("missing init"))?;
    let goal_names = goal.ok_or_else(|| invalid("missing goal"))?;
    let initial = find(&init, &locations)?;
    let goal = goal_names
        .iter()
        .map(|g| find(g, &locations))
        .collect::<Result<BTreeSet<usize>, _>>()?;
    let g = Ptg { dims, locations, actions, transitions, initial, goal };
    g.validate(rule)?;
    Ok(g)
}
