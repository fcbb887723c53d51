//! Command-line front end: solve a game, synthesize a controller from the
//! strategy, verify the closed loop, and simulate runs.

use clap::{Parser, Subcommand, ValueEnum};
use ptg::compose::{verify, Verdict};
use ptg::controller::{synthesize_controller, ControllerPta};
use ptg::model::{LabelRule, Ptg};
use ptg::sim::{simulate_adversary, simulate_strategy, SimOptions, SimReport};
use ptg::solver::{solve, Order, SolverOptions};
use ptg::strategy::{sha256_hex, StrategySpecification};
use ptg::zone::{text, Q};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ptg", version, about = "Parametric timed reachability games: \
parameter synthesis, controller generation, closed-loop verification, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    UpdateFirst,
    ExploreFirst,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a game: winning parameter constraints and a strategy.
    Solve {
        model: PathBuf,
        /// Output directory for <model>.params and <model>.strategy.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "update-first")]
        order: OrderArg,
        #[arg(long, default_value_t = 100_000)]
        max_iterations: usize,
        #[arg(long)]
        json: bool,
    },
    /// Build a controller automaton from a solved strategy.
    Controller {
        model: PathBuf,
        strategy: PathBuf,
        /// Output file (default: <model>.controller next to the model).
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "eps")]
        epsilon_name: String,
        /// Replace urgent flags by a fresh clock with invariant <= 0.
        #[arg(long)]
        encode_urgency: bool,
        #[arg(long)]
        json: bool,
    },
    /// Re-solve controller || game with everything uncontrollable and
    /// compare against expected winning parameters.
    Verify {
        model: PathBuf,
        controller: PathBuf,
        /// File holding the expected parameter constraint (a .params file).
        params: PathBuf,
        #[arg(long, value_enum, default_value = "update-first")]
        order: OrderArg,
        #[arg(long, default_value_t = 100_000)]
        max_iterations: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run seeded random episodes of a game, optionally following a
    /// strategy or closing the loop with a controller.
    Simulate {
        model: PathBuf,
        #[arg(long)]
        strategy: Option<PathBuf>,
        #[arg(long, conflicts_with = "strategy")]
        controller: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_steps: usize,
        /// Parameter binding, repeatable: --param p=3/2
        #[arg(long = "param", value_name = "NAME=RATIONAL")]
        params: Vec<String>,
        #[arg(long)]
        json: bool,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_MISMATCH: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_BUDGET: u8 = 3;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Cmd::Solve { model, out, order, max_iterations, json } => {
            cmd_solve(&model, out.as_deref(), order, max_iterations, json)
        }
        Cmd::Controller { model, strategy, out, epsilon_name, encode_urgency, json } => {
            cmd_controller(&model, &strategy, out.as_deref(), &epsilon_name, encode_urgency, json)
        }
        Cmd::Verify { model, controller, params, order, max_iterations, json } => {
            cmd_verify(&model, &controller, &params, order, max_iterations, json)
        }
        Cmd::Simulate { model, strategy, controller, episodes, seed, max_steps, params, json } => {
            cmd_simulate(
                &model,
                strategy.as_deref(),
                controller.as_deref(),
                &SimOptions { episodes, seed, max_steps },
                &params,
                json,
            )
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))
}

fn load_game(path: &Path) -> anyhow::Result<Ptg> {
    Ptg::parse(&read(path)?, LabelRule::GlobalUnique)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

fn solver_options(order: OrderArg, max_iterations: usize) -> anyhow::Result<SolverOptions> {
    if max_iterations == 0 {
        anyhow::bail!("--max-iterations must be at least 1");
    }
    Ok(SolverOptions {
        order: match order {
            OrderArg::UpdateFirst => Order::UpdateFirst,
            OrderArg::ExploreFirst => Order::ExploreFirst,
        },
        budget: max_iterations,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn cmd_solve(
    model: &Path,
    out: Option<&Path>,
    order: OrderArg,
    max_iterations: usize,
    json: bool,
) -> anyhow::Result<u8> {
    let g = load_game(model)?;
    let report = solve(&g, &solver_options(order, max_iterations)?)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| {
        model.parent().map(Path::to_path_buf).unwrap_or_default()
    });
    std::fs::create_dir_all(&dir).ok();
    let params_text = text::format_union(&report.winning_param);
    let model_hash = sha256_hex(&g.serialize());
    let params_path = dir.join(format!("{}.params", stem(model)));
    let strategy_path = dir.join(format!("{}.strategy", stem(model)));
    std::fs::write(&params_path, format!("{params_text}\n"))?;
    std::fs::write(&strategy_path, report.strategy.serialize(&g, &model_hash))?;
    if json {
        println!(
            "{}",
            serde_json::json!({
                "winning_parameters": params_text,
                "iterations": report.iterations,
                "explored_states": report.explored_states,
                "complete": report.exhausted_queues,
                "params_file": params_path.display().to_string(),
                "strategy_file": strategy_path.display().to_string(),
            })
        );
    } else {
        println!("winning parameters: {params_text}");
        println!("iterations: {}", report.iterations);
        println!("explored states: {}", report.explored_states);
        println!("wrote {}", params_path.display());
        println!("wrote {}", strategy_path.display());
        if !report.exhausted_queues {
            println!("iteration budget exhausted; results are a lower bound");
        }
    }
    Ok(if report.exhausted_queues { EXIT_OK } else { EXIT_BUDGET })
}

fn load_strategy(
    path: &Path,
    g: &Ptg,
) -> anyhow::Result<StrategySpecification> {
    let (strategy, recorded) = StrategySpecification::parse(&read(path)?, g)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let current = sha256_hex(&g.serialize());
    if let Some(recorded) = recorded {
        if recorded != current {
            anyhow::bail!(
                "{}: strategy was produced for a different model (hash mismatch)",
                path.display()
            );
        }
    }
    Ok(strategy)
}

fn cmd_controller(
    model: &Path,
    strategy: &Path,
    out: Option<&Path>,
    epsilon_name: &str,
    encode: bool,
    json: bool,
) -> anyhow::Result<u8> {
    let g = load_game(model)?;
    let strategy = load_strategy(strategy, &g)?;
    let mut c = synthesize_controller(&g, &strategy, epsilon_name)?;
    if encode {
        c.pta = c.pta.encode_urgency("u_urg")?;
    }
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model.with_file_name(format!("{}.controller", stem(model))));
    std::fs::write(&out_path, c.export())?;
    if json {
        println!(
            "{}",
            serde_json::json!({
                "locations": c.pta.locations.len(),
                "transitions": c.pta.transitions.len(),
                "epsilon": c.epsilon,
                "controller_file": out_path.display().to_string(),
            })
        );
    } else {
        println!(
            "controller: {} locations, {} transitions, epsilon `{}`",
            c.pta.locations.len(),
            c.pta.transitions.len(),
            c.epsilon
        );
        println!("wrote {}", out_path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_verify(
    model: &Path,
    controller: &Path,
    params: &Path,
    order: OrderArg,
    max_iterations: usize,
    json: bool,
) -> anyhow::Result<u8> {
    let g = load_game(model)?;
    let c = ControllerPta::parse(&read(controller)?)
        .map_err(|e| anyhow::anyhow!("{}: {e}", controller.display()))?;
    if c.model_hash != sha256_hex(&g.serialize()) {
        anyhow::bail!(
            "{}: controller was produced for a different model (hash mismatch)",
            controller.display()
        );
    }
    let expected = text::parse_union(read(params)?.trim(), &g.dims.params_only())
        .map_err(|e| anyhow::anyhow!("{}: {e}", params.display()))?;
    let (report, _) = verify(&c, &g, &expected, &solver_options(order, max_iterations)?)?;
    if json {
        println!(
            "{}",
            serde_json::json!({
                "computed": text::format_union(&report.computed),
                "expected": text::format_union(&report.expected),
                "verdict": report.verdict.to_string(),
                "product_locations": report.product_locations,
                "explored_states": report.explored_states,
                "iterations": report.iterations,
            })
        );
    } else {
        print!("{}", report.render());
    }
    Ok(match report.verdict {
        Verdict::Match => EXIT_OK,
        Verdict::Inconclusive => EXIT_BUDGET,
        _ => EXIT_MISMATCH,
    })
}

fn parse_rational(src: &str) -> anyhow::Result<Q> {
    let mut parts = src.splitn(2, '/');
    let numer: i64 = parts.next().unwrap_or("").trim().parse()?;
    Ok(match parts.next() {
        None => Q::from_integer(numer.into()),
        Some(d) => {
            let denom: i64 = d.trim().parse()?;
            if denom == 0 {
                anyhow::bail!("zero denominator in `{src}`");
            }
            Q::new(numer.into(), denom.into())
        }
    })
}

fn bind_params(g: &Ptg, bindings: &[String]) -> anyhow::Result<Vec<Q>> {
    let mut values: Vec<Option<Q>> = vec![None; g.dims.n_params()];
    for b in bindings {
        let (name, value) = b
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("expected NAME=RATIONAL, got `{b}`"))?;
        let idx = g
            .dims
            .param(name.trim())
            .ok_or_else(|| anyhow::anyhow!("unknown parameter `{}`", name.trim()))?;
        values[idx] = Some(parse_rational(value)?);
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| anyhow::anyhow!("missing --param {}=...", g.dims.params[i]))
        })
        .collect()
}

fn print_sim(report: &SimReport, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::json!({
                "episodes": report.episodes.len(),
                "goal_reached": report.goal_count,
                "goal_rate": report.goal_rate(),
                "max_steps": report.max_steps_seen,
                "coherence_violations": report.coherence_violations,
                "index_violations": report.index_violations,
                "fired": report.fired,
            })
        );
    } else {
        print!("{}", report.render());
    }
}

fn cmd_simulate(
    model: &Path,
    strategy: Option<&Path>,
    controller: Option<&Path>,
    options: &SimOptions,
    bindings: &[String],
    json: bool,
) -> anyhow::Result<u8> {
    let g = load_game(model)?;
    match (strategy, controller) {
        (Some(strategy_path), None) => {
            let strategy = load_strategy(strategy_path, &g)?;
            let params = bind_params(&g, bindings)?;
            warn_if_losing(&g, &params);
            print_sim(&simulate_strategy(&g, &strategy, &params, options), json);
        }
        (None, Some(controller_path)) => {
            let c = ControllerPta::parse(&read(controller_path)?)
                .map_err(|e| anyhow::anyhow!("{}: {e}", controller_path.display()))?;
            if c.model_hash != sha256_hex(&g.serialize()) {
                anyhow::bail!(
                    "{}: controller was produced for a different model (hash mismatch)",
                    controller_path.display()
                );
            }
            let product = ptg::compose::product(&c, &g, true)?;
            let params = bind_params(&product, bindings)?;
            print_sim(&simulate_adversary(&product, &params, options), json);
        }
        (None, None) => {
            let params = bind_params(&g, bindings)?;
            print_sim(&simulate_adversary(&g, &params, options), json);
        }
        (Some(_), Some(_)) => unreachable!("clap rejects this combination"),
    }
    Ok(EXIT_OK)
}

/// Solving again just to warn is cheap for the bundled models; failures
/// here must not block the simulation.
fn warn_if_losing(g: &Ptg, params: &[Q]) {
    if let Ok(report) = solve(g, &SolverOptions::default()) {
        if report.exhausted_queues {
            let v = ptg::zone::Valuation { clocks: Vec::new(), params: params.to_vec() };
            let winning = report
                .winning_param
                .pieces
                .iter()
                .any(|p| p.satisfies(&v));
            if !winning {
                eprintln!("warning: parameter binding is outside the winning set");
            }
        }
    }
}
