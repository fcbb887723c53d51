//! Shared helpers for the integration test targets: random zone and model
//! generation, grid sampling, and the randomized zone-algebra suites with
//! their independent point-sampling oracles.

#![allow(dead_code)]

use num::Zero;
use ptg::model::{LabelRule, Ptg};
use ptg::zone::{
    normalize, safe_time_pred, temporal_bound, temporal_closure, text, Atom, ConvexZone, Dims,
    Direction, Q, Rel, Valuation, ZoneUnion,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::sync::Arc;

pub fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models").join(name)
}

pub fn load_model(name: &str) -> Ptg {
    let src = std::fs::read_to_string(model_path(name)).expect("bundled model exists");
    Ptg::parse(&src, LabelRule::GlobalUnique).expect("bundled model parses")
}

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dimension context with 1..=2 clocks and 0..=2 parameters.
pub fn random_dims(r: &mut ChaCha8Rng) -> Arc<Dims> {
    let clock_names = ["x", "y"];
    let param_names = ["p", "q"];
    let nc = r.gen_range(1..=2usize);
    let np = r.gen_range(0..=2usize);
    Dims::new(
        clock_names[..nc].iter().map(|s| s.to_string()).collect(),
        param_names[..np].iter().map(|s| s.to_string()).collect(),
    )
}

fn random_term(r: &mut ChaCha8Rng, dims: &Dims) -> String {
    let mut out = format!("{}", r.gen_range(-2..=2i64));
    for p in &dims.params {
        let c = r.gen_range(-2..=2i64);
        if c != 0 {
            let sign = if c < 0 { '-' } else { '+' };
            out.push_str(&format!(" {sign} {}*{p}", c.abs()));
        }
    }
    out
}

const RELS: [&str; 5] = ["<", "<=", "=", ">=", ">"];

/// A random convex zone with 0..=3 constraints, integer coefficients in
/// -2..=2, built through the public constraint parser.
pub fn random_zone(r: &mut ChaCha8Rng, dims: &Arc<Dims>) -> ConvexZone {
    let n = r.gen_range(0..=3usize);
    let mut parts = Vec::new();
    for _ in 0..n {
        let rel = RELS[r.gen_range(0..RELS.len())];
        let rhs = random_term(r, dims);
        let lhs = if dims.n_clocks() > 1 && r.gen_range(0..4) == 0 {
            let a = r.gen_range(0..dims.n_clocks());
            let mut b = r.gen_range(0..dims.n_clocks());
            if b == a {
                b = (a + 1) % dims.n_clocks();
            }
            format!("{} - {}", dims.clocks[a], dims.clocks[b])
        } else if dims.n_params() > 0 && r.gen_range(0..5) == 0 {
            random_term(r, dims)
        } else {
            dims.clocks[r.gen_range(0..dims.n_clocks())].clone()
        };
        parts.push(format!("{lhs} {rel} {rhs}"));
    }
    if parts.is_empty() {
        ConvexZone::top(dims.clone())
    } else {
        text::parse_zone(&parts.join(" && "), dims).expect("generated constraint parses")
    }
}

/// A random valuation on the `step`-grid inside the box [0, 4]^dims.
pub fn random_grid_point(r: &mut ChaCha8Rng, dims: &Dims, step_denom: i64) -> Valuation {
    let top = 4 * step_denom;
    let pick = |r: &mut ChaCha8Rng| q(r.gen_range(0..=top), step_denom);
    Valuation {
        clocks: (0..dims.n_clocks()).map(|_| pick(r)).collect(),
        params: (0..dims.n_params()).map(|_| pick(r)).collect(),
    }
}

fn elapsed(v: &Valuation, delta: &Q) -> Valuation {
    Valuation {
        clocks: v.clocks.iter().map(|c| c + delta).collect(),
        params: v.params.clone(),
    }
}

/// Difference oracle: membership of grid points in a \ b must equal
/// (in a) and (not in b); inclusion must equal emptiness of the
/// difference. Returns the number of checked cases.
pub fn difference_inclusion_suite(seed: u64, pairs: usize, points_per_pair: usize) -> usize {
    let mut r = rng(seed);
    let mut cases = 0;
    for _ in 0..pairs {
        let dims = random_dims(&mut r);
        let a = random_zone(&mut r, &dims);
        let b = random_zone(&mut r, &dims);
        let au = a.to_union();
        let bu = b.to_union();
        let diff = ptg::zone::subtract(&au, &bu);
        for _ in 0..points_per_pair {
            let v = random_grid_point(&mut r, &dims, 4);
            let expected = a.satisfies(&v) && !b.satisfies(&v);
            assert_eq!(
                diff.satisfies(&v),
                expected,
                "difference membership mismatch at {v:?} for a = {} and b = {}",
                text::format_zone(&a),
                text::format_zone(&b)
            );
            cases += 1;
        }
        assert_eq!(
            ptg::zone::is_subset(&au, &bu),
            diff.is_empty(),
            "inclusion disagrees with difference emptiness for a = {} and b = {}",
            text::format_zone(&a),
            text::format_zone(&b)
        );
    }
    cases
}

/// The exact supremum of delays keeping `v` inside `z`, if bounded: the
/// minimum margin of the stored upper clock constraints.
pub fn sup_delay(z: &ConvexZone, v: &Valuation) -> Option<Q> {
    let zn = normalize(z);
    let mut best: Option<Q> = None;
    for atom in &zn.atoms {
        if let Atom::Clock { clock, rel, term } = atom {
            if matches!(rel, Rel::Le | Rel::Lt | Rel::Eq) {
                let margin = term.eval(&v.params) - &v.clocks[*clock];
                if best.as_ref().map_or(true, |b| &margin < b) {
                    best = Some(margin);
                }
            }
        }
    }
    best
}

/// Last-point characterization for upper temporal bounds: from any zone
/// point with a finite delay supremum, elapsing exactly that supremum
/// lands in the bound; and every bound point lies within 1/16 above some
/// zone point on its own time line.
pub fn temporal_bound_suite(seed: u64, target_cases: usize) -> usize {
    let mut r = rng(seed);
    let mut cases = 0;
    let mut guard = 0;
    while cases < target_cases {
        guard += 1;
        assert!(guard < 200 * target_cases, "sample acceptance rate too low");
        let dims = random_dims(&mut r);
        let z = random_zone(&mut r, &dims);
        if z.is_empty() {
            continue;
        }
        let bound = temporal_bound(&z, Direction::Upper);
        let v = random_grid_point(&mut r, &dims, 4);
        if z.satisfies(&v) {
            if let Some(sup) = sup_delay(&z, &v) {
                let w = elapsed(&v, &sup);
                assert!(
                    bound.satisfies(&w),
                    "elapsing the delay supremum {sup} from {v:?} misses the upper bound of {}",
                    text::format_zone(&z)
                );
                cases += 1;
            }
        }
        let w = random_grid_point(&mut r, &dims, 4);
        if bound.satisfies(&w) {
            let witness = [Q::zero(), q(1, 16)]
                .iter()
                .any(|d| z.satisfies(&elapsed(&w, &(-d.clone()))));
            assert!(
                witness,
                "bound point {w:?} of {} has no zone point on its time line within 1/16",
                text::format_zone(&z)
            );
            cases += 1;
        }
    }
    cases
}

/// Limit characterization of the upper temporal closure: a point belongs
/// to it exactly when arbitrarily small strictly positive backward delays
/// land in the zone. On quarter-grid data the probe 1/16 decides the
/// condition for every threshold in {1, 1/2, 1/4, 1/8}.
pub fn closure_limit_suite(seed: u64, target_cases: usize) -> usize {
    let mut r = rng(seed);
    let mut cases = 0;
    for _ in 0..target_cases {
        let dims = random_dims(&mut r);
        let z = random_zone(&mut r, &dims);
        let closure = temporal_closure(&z, Direction::Upper);
        let v = random_grid_point(&mut r, &dims, 4);
        let oracle = z.satisfies(&elapsed(&v, &-q(1, 16)));
        assert_eq!(
            closure.satisfies(&v),
            oracle,
            "closure membership mismatch at {v:?} for {}",
            text::format_zone(&z)
        );
        cases += 1;
    }
    cases
}

/// Quantified-definition oracle for safe timed predecessors: from v, some
/// delay reaches the target while every earlier moment avoids the avoid
/// set. Delays are scanned on the 1/16 grid, which hits every membership
/// change for quarter-grid data.
pub fn safe_time_pred_suite(seed: u64, target_cases: usize) -> usize {
    let mut r = rng(seed);
    let mut cases = 0;
    for _ in 0..target_cases / 8 + 1 {
        let dims = random_dims(&mut r);
        let target = ZoneUnion::from_pieces(
            dims.clone(),
            (0..r.gen_range(1..=2usize)).map(|_| random_zone(&mut r, &dims)).collect(),
        );
        let avoid = ZoneUnion::from_pieces(
            dims.clone(),
            (0..r.gen_range(0..=2usize)).map(|_| random_zone(&mut r, &dims)).collect(),
        );
        let computed = safe_time_pred(&target, &avoid);
        for _ in 0..8 {
            let v = random_grid_point(&mut r, &dims, 4);
            // with coefficients in -2..=2 and grid values in [0, 4] every
            // lower bound is at most 18, so a time line that ever reaches
            // the target does so within 24 time units
            let mut reachable = false;
            for k in 0..=24 * 16 {
                let w = elapsed(&v, &q(k, 16));
                if avoid.satisfies(&w) {
                    break;
                }
                if target.satisfies(&w) {
                    reachable = true;
                    break;
                }
            }
            assert_eq!(
                computed.satisfies(&v),
                reachable,
                "safe_time_pred mismatch at {v:?} for target {} avoiding {}",
                text::format_union(&target),
                text::format_union(&avoid)
            );
            cases += 1;
        }
    }
    cases
}

/// Elapse/past duality on grid samples plus idempotence of elapse.
pub fn elapse_past_suite(seed: u64, target_cases: usize) -> usize {
    let mut r = rng(seed);
    let mut cases = 0;
    for _ in 0..target_cases {
        let dims = random_dims(&mut r);
        let z = random_zone(&mut r, &dims);
        let past = ptg::zone::time_past(&z);
        let v = random_grid_point(&mut r, &dims, 4);
        // a time line from the box that ever enters the zone does so
        // within 24 units (every lower bound is at most 18 on this data)
        let oracle = (0..=24 * 16).any(|k| z.satisfies(&elapsed(&v, &q(k, 16))));
        assert_eq!(
            past.satisfies(&v),
            oracle,
            "time_past mismatch at {v:?} for {}",
            text::format_zone(&z)
        );
        let once = ptg::zone::time_elapse(&z);
        let twice = ptg::zone::time_elapse(&once);
        assert!(
            ptg::zone::semantically_equal(&once.to_union(), &twice.to_union()),
            "time_elapse is not idempotent on {}",
            text::format_zone(&z)
        );
        cases += 1;
    }
    cases
}

/// The singleton zone containing exactly `v`.
pub fn point_zone(v: &Valuation, dims: &Arc<Dims>) -> ConvexZone {
    let mut parts = Vec::new();
    for (i, c) in v.clocks.iter().enumerate() {
        parts.push(format!("{} = {}", dims.clocks[i], ptg::zone::format_q(c)));
    }
    for (i, p) in v.params.iter().enumerate() {
        parts.push(format!("{} = {}", dims.params[i], ptg::zone::format_q(p)));
    }
    if parts.is_empty() {
        ConvexZone::top(dims.clone())
    } else {
        text::parse_zone(&parts.join(" && "), dims).expect("point constraints parse")
    }
}

/// A random small game model as text: 3..=5 locations on 1..=2 clocks and
/// 0..=1 parameters, random guards and invariants, used for round-trips.
pub fn random_model_text(r: &mut ChaCha8Rng) -> String {
    let dims = random_dims(r);
    let n_locs = r.gen_range(3..=5usize);
    let mut out = String::new();
    out.push_str(&format!("clocks: {};\n", dims.clocks.join(", ")));
    if dims.n_params() > 0 {
        out.push_str(&format!("parameters: {};\n", dims.params.join(", ")));
    }
    let n_trans = r.gen_range(2..=6usize);
    let mut actions = Vec::new();
    for i in 0..n_trans {
        let ctrl = if r.gen_bool(0.5) { "controllable" } else { "uncontrollable" };
        actions.push(format!("a{i} {ctrl}"));
    }
    out.push_str(&format!("actions: {};\n", actions.join(", ")));
    for l in 0..n_locs {
        let mut body = String::new();
        if r.gen_bool(0.4) {
            let inv = random_zone(r, &dims);
            if !inv.atoms.is_empty() {
                body.push_str(&format!(" invariant: {};", text::format_zone(&inv)));
            }
        }
        if r.gen_bool(0.2) {
            body.push_str(" urgent: true;");
        }
        out.push_str(&format!("location L{l} {{{body} }}\n"));
    }
    for i in 0..n_trans {
        let src = r.gen_range(0..n_locs);
        let dst = r.gen_range(0..n_locs);
        let guard = random_zone(r, &dims);
        let mut fields = format!("action: a{i};");
        if !guard.atoms.is_empty() {
            fields.push_str(&format!(" guard: {};", text::format_zone(&guard)));
        }
        if r.gen_bool(0.5) {
            let c = &dims.clocks[r.gen_range(0..dims.n_clocks())];
            fields.push_str(&format!(" reset: {{ {c} }};"));
        }
        out.push_str(&format!("transition L{src} -> L{dst} {{ {fields} }}\n"));
    }
    out.push_str(&format!("init: L0; goal: {{ L{} }};\n", n_locs - 1));
    out
}
