//! Strategy specifications: ordered instruction lists, the strategy file
//! format, and the ε-bound preprocessing step that turns unbounded
//! wait-until targets into finite commitment windows.
//!
//! Strategy file format, one record per instruction:
//!
//! ```text
//! # model-sha256: <hex>
//! instr 0 @ Win : when (x >= 0) wait;
//! instr 3 @ L1 : when (1 < x && x < 2) until (1 < x && x < 2) do c2;
//! ```

use crate::model::{ModelError, Ptg, SymbolicState};
use crate::zone::{
    convex_subset, embed, epsilon_lower_bounds, has_upper_temporal, is_subset, text,
    text::Cursor, time_past, ConvexZone, Dims, ZoneUnion,
};
use sha2::{Digest, Sha256};
use std::sync::Arc;

pub fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    format!("{:x}", h.finalize())
}

/// One row of a strategy: from any state in `source`, wait until the state
/// is in `target` and fire the transition `decision`; a `None` decision
/// means wait forever.
#[derive(Debug, Clone)]
pub struct Instruction {
    pub index: usize,
    pub source: SymbolicState,
    pub target: Option<SymbolicState>,
    pub decision: Option<usize>,
}

impl Instruction {
    pub fn is_wait(&self) -> bool {
        self.decision.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct StrategySpecification {
    pub dims: Arc<Dims>,
    pub instructions: Vec<Instruction>,
}

impl StrategySpecification {
    pub fn empty(dims: Arc<Dims>) -> StrategySpecification {
        StrategySpecification { dims, instructions: Vec::new() }
    }

    /// Source disjointness, index monotonicity, and per-instruction shape:
    /// a wait has no target; a decision's transition starts at the source
    /// location, fires anywhere in the target, and the target is reachable
    /// from the whole source by letting time pass.
    pub fn validate(&self, g: &Ptg) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Invalid(msg));
        let mut last: Option<usize> = None;
        for i in &self.instructions {
            if let Some(prev) = last {
                if i.index <= prev {
                    return bad(format!("instruction indices not increasing at {}", i.index));
                }
            }
            last = Some(i.index);
            match (&i.target, i.decision) {
                (None, None) => {}
                (Some(t), Some(d)) => {
                    let tr = &g.transitions[d];
                    if tr.source != i.source.location || t.location != i.source.location {
                        return bad(format!("instruction {}: location mismatch", i.index));
                    }
                    if !tr.controllable {
                        return bad(format!(
                            "instruction {}: decision `{}` is uncontrollable",
                            i.index, tr.label
                        ));
                    }
                    let guard = embed(&tr.guard, &self.dims)?;
                    if !is_subset(&t.zone.to_union(), &guard.to_union()) {
                        return bad(format!(
                            "instruction {}: `{}` is not applicable from the whole target",
                            i.index, tr.label
                        ));
                    }
                    if !is_subset(&i.source.zone.to_union(), &time_past(&t.zone).to_union()) {
                        return bad(format!(
                            "instruction {}: target not reachable from the whole source",
                            i.index
                        ));
                    }
                }
                _ => return bad(format!("instruction {}: wait must have no target", i.index)),
            }
        }
        for (a, ia) in self.instructions.iter().enumerate() {
            for ib in self.instructions.iter().skip(a + 1) {
                if ia.source.location == ib.source.location
                    && !ia.source.zone.intersect(&ib.source.zone).is_empty()
                {
                    return bad(format!(
                        "instructions {} and {} have overlapping sources",
                        ia.index, ib.index
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn serialize(&self, g: &Ptg, model_hash: &str) -> String {
        let mut out = format!("# model-sha256: {model_hash}\n");
        for i in &self.instructions {
            let loc = &g.locations[i.source.location].id;
            let when = text::format_zone(&i.source.zone);
            match (&i.target, i.decision) {
                (Some(t), Some(d)) => {
                    out.push_str(&format!(
                        "instr {} @ {} : when ({}) until ({}) do {};\n",
                        i.index,
                        loc,
                        when,
                        text::format_zone(&t.zone),
                        g.transitions[d].label
                    ));
                }
                _ => {
                    out.push_str(&format!("instr {} @ {} : when ({}) wait;\n", i.index, loc, when));
                }
            }
        }
        out
    }

    /// Parses a strategy file against its game; returns the specification
    /// and the model hash recorded in the header, if any.
    pub fn parse(
        src: &str,
        g: &Ptg,
    ) -> Result<(StrategySpecification, Option<String>), ModelError> {
        let recorded = src.lines().find_map(|l| {
            l.trim().strip_prefix("# model-sha256:").map(|h| h.trim().to_string())
        });
        let dims = g.dims.clone();
        let mut cur = Cursor::new(text::lex(src)?);
        let mut instructions = Vec::new();
        while !cur.at_end() {
            if !cur.eat_keyword("instr") {
                return Err(cur.error("expected `instr`").into());
            }
            let index = match cur.next_tok() {
                Some(text::Tok::Int(n)) => n
                    .try_into()
                    .map_err(|_| ModelError::Invalid("instruction index too large".into()))?,
                _ => return Err(cur.error("expected an instruction index").into()),
            };
            cur.expect_sym("@")?;
            let loc_name = cur.expect_ident()?;
            let location = g
                .location(&loc_name)
                .ok_or_else(|| ModelError::Invalid(format!("unknown location `{loc_name}`")))?;
            cur.expect_sym(":")?;
            if !cur.eat_keyword("when") {
                return Err(cur.error("expected `when`").into());
            }
            cur.expect_sym("(")?;
            let source = text::parse_conj(&mut cur, &dims)?;
            cur.expect_sym(")")?;
            let (target, decision) = if cur.eat_keyword("until") {
                cur.expect_sym("(")?;
                let t = text::parse_conj(&mut cur, &dims)?;
                cur.expect_sym(")")?;
                if !cur.eat_keyword("do") {
                    return Err(cur.error("expected `do`").into());
                }
                let label = cur.expect_ident()?;
                let d = g.transition_by_label(location, &label).ok_or_else(|| {
                    ModelError::Invalid(format!("no transition `{label}` from `{loc_name}`"))
                })?;
                (Some(SymbolicState { location, zone: t }), Some(d))
            } else if cur.eat_keyword("wait") {
                (None, None)
            } else {
                return Err(cur.error("expected `until` or `wait`").into());
            };
            cur.expect_sym(";")?;
            instructions.push(Instruction {
                index,
                source: SymbolicState { location, zone: source },
                target,
                decision,
            });
        }
        let spec = StrategySpecification { dims, instructions };
        spec.validate(g)?;
        Ok((spec, recorded))
    }
}

/// Splits instructions whose wait-until target has no upper temporal bound
/// into ε-wide commitment windows, so that every resulting decision fires
/// within a bounded delay. Upper-bounded targets are kept as they are.
/// With `skip_covered` (the default), an instruction whose source already
/// lies inside its target is also kept verbatim: the decision is available
/// immediately and stays available.
pub fn add_epsilon_bounds(
    l: &StrategySpecification,
    eps: &str,
    skip_covered: bool,
) -> Result<StrategySpecification, ModelError> {
    if l.dims.param(eps).is_some() || l.dims.clock(eps).is_some() {
        return Err(ModelError::Invalid(format!("`{eps}` is already declared")));
    }
    let dims = l.dims.with_param(eps)?;
    let mut out = Vec::new();
    let mut push = |source: ConvexZone, location: usize, target: Option<ConvexZone>, d: Option<usize>| {
        if source.is_empty() {
            return;
        }
        out.push(Instruction {
            index: out.len(),
            source: SymbolicState { location, zone: source },
            target: target.map(|zone| SymbolicState { location, zone }),
            decision: d,
        });
    };
    for i in &l.instructions {
        let location = i.source.location;
        let source = embed(&i.source.zone, &dims)?;
        let (t, d) = match (&i.target, i.decision) {
            (Some(t), Some(d)) => (t, d),
            _ => {
                push(source, location, None, None);
                continue;
            }
        };
        let target = embed(&t.zone, &dims)?;
        let keep = has_upper_temporal(&t.zone)
            || (skip_covered && convex_subset(&i.source.zone, &t.zone));
        if keep {
            push(source, location, Some(target), Some(d));
            continue;
        }
        let (edims, pieces) = epsilon_lower_bounds(&t.zone, eps)?;
        debug_assert_eq!(edims.params, dims.params);
        let immediate = source.intersect(&target);
        if !immediate.is_empty() {
            push(immediate, location, Some(target.clone()), Some(d));
        }
        for piece in pieces {
            let piece = embed(&piece, &dims)?;
            push(source.intersect(&time_past(&piece)), location, Some(piece), Some(d));
        }
    }
    Ok(StrategySpecification { dims, instructions: out })
}

/// Union of the sources of the given instructions, restricted to one location.
pub fn source_union(l: &StrategySpecification, location: usize) -> ZoneUnion {
    ZoneUnion::from_pieces(
        l.dims.clone(),
        l.instructions
            .iter()
            .filter(|i| i.source.location == location)
            .map(|i| i.source.zone.clone())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelRule;
    use crate::zone::{semantically_equal, text::parse_union, ZoneUnion};

    const GAME: &str = "\
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

    const STRAT: &str = "\
        # model-sha256: deadbeef\n\
        instr 0 @ Win : when (x >= 0) wait;\n\
        instr 1 @ L1 : when (p <= x && 1 < x) until (p <= x && 1 < x) do c2;\n\
        instr 2 @ L0 : when (x >= 0) until (p <= x && 1 < x) do c1;\n";

    fn game() -> Ptg {
        Ptg::parse(GAME, LabelRule::GlobalUnique).unwrap()
    }

    #[test]
    fn strategy_file_round_trips() {
        let g = game();
        let (spec, hash) = StrategySpecification::parse(STRAT, &g).unwrap();
        assert_eq!(hash.as_deref(), Some("deadbeef"));
        assert_eq!(spec.instructions.len(), 3);
        let text = spec.serialize(&g, "deadbeef");
        let (back, _) = StrategySpecification::parse(&text, &g).unwrap();
        for (a, b) in spec.instructions.iter().zip(&back.instructions) {
            assert_eq!(a.index, b.index);
            assert_eq!(a.decision, b.decision);
            assert!(semantically_equal(
                &a.source.zone.to_union(),
                &b.source.zone.to_union()
            ));
        }
    }

    #[test]
    fn overlapping_sources_rejected() {
        let g = game();
        let bad = "\
            instr 0 @ L1 : when (x >= 0) wait;\n\
            instr 1 @ L1 : when (x > 2) wait;\n";
        assert!(StrategySpecification::parse(bad, &g).is_err());
    }

    #[test]
    fn epsilon_bounds_split_matches_branch_structure() {
        let g = game();
        let (spec, _) = StrategySpecification::parse(STRAT, &g).unwrap();
        let out = add_epsilon_bounds(&spec, "eps", true).unwrap();
        // wait untouched, covered L1 row untouched, L0 row split in three
        assert_eq!(out.instructions.len(), 5);
        let d = &out.dims;
        let l0: Vec<_> =
            out.instructions.iter().filter(|i| i.source.location == 0).collect();
        assert_eq!(l0.len(), 3);
        let immediate = &l0[0];
        assert!(semantically_equal(
            &immediate.source.zone.to_union(),
            &parse_union("p <= x && 1 < x", d).unwrap()
        ));
        let sources = ZoneUnion::from_pieces(
            d.clone(),
            l0.iter().map(|i| i.source.zone.clone()).collect(),
        );
        // for eps > 0 the split sources cover the original source
        let eps_pos = parse_union("eps > 0", d).unwrap();
        assert!(semantically_equal(
            &sources.intersect(&eps_pos),
            &parse_union("x >= 0 && eps > 0", d).unwrap()
        ));
    }

    #[test]
    fn epsilon_bounds_keep_wait_and_covered_rows() {
        let g = game();
        let (spec, _) = StrategySpecification::parse(STRAT, &g).unwrap();
        let out = add_epsilon_bounds(&spec, "eps", true).unwrap();
        assert!(out.instructions[0].is_wait());
        let l1 = out
            .instructions
            .iter()
            .find(|i| i.source.location == 1)
            .unwrap();
        assert!(semantically_equal(
            &l1.source.zone.to_union(),
            &l1.target.as_ref().unwrap().zone.to_union()
        ));
    }

    #[test]
    fn epsilon_bounds_without_covering_flag_still_cover_source() {
        let g = game();
        let (spec, _) = StrategySpecification::parse(STRAT, &g).unwrap();
        let out = add_epsilon_bounds(&spec, "eps", false).unwrap();
        let d = &out.dims;
        let eps_pos = parse_union("eps > 0", d).unwrap();
        for loc in [0usize, 1] {
            let orig = source_union(
                &StrategySpecification {
                    dims: spec.dims.clone(),
                    instructions: spec.instructions.clone(),
                },
                loc,
            );
            let orig = crate::zone::embed_union(&orig, d).unwrap();
            let new = source_union(&out, loc);
            assert!(semantically_equal(
                &new.intersect(&eps_pos),
                &orig.intersect(&eps_pos)
            ));
        }
    }
}
