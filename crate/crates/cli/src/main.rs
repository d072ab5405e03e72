use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use routesignal::bwe::solve_bwe;
use routesignal::designer::{achievability, best_obedient_rule, DesignProblem};
use routesignal::optimality::{corollary_parallel, corollary_two_link, theorem_condition};
use routesignal::optimum::system_optimum;
use routesignal::scenario::{format_sig, parse_range, sweep_points, Instance, RuleSpec, Scenario};
use routesignal::signaling::{rule_full_info, rule_no_info, SignalingRule};
use routesignal::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "routesignal", version, about = "Private route recommendations under uncertain network states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    scenario: PathBuf,

    /// Override a scenario parameter, `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,

    /// Solver tolerance.
    #[arg(long, env = "ROUTESIGNAL_TOL", default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// System optimum per support atom.
    Optimum(Common),
    /// Equilibrium under a signaling rule.
    Bwe {
        #[command(flatten)]
        common: Common,
        /// noinfo, fullinfo, scenario (the scenario's own rule) or a rule file.
        #[arg(long, default_value = "noinfo")]
        rule: String,
    },
    /// Whether recommending the optimum is obedient, with the certificate.
    Check(Common),
    /// Cheapest obedient direct rule.
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        multistart: Option<usize>,
        #[arg(long)]
        grid_step: Option<f64>,
    },
    /// Costs of the optimum, public rules and best rule over a parameter range (CSV).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: Option<String>,
        /// `min:max`
        #[arg(long)]
        range: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(&common.scenario)
        .with_context(|| format!("reading {}", common.scenario.display()))?;
    let mut scenario = Scenario::from_json(&text)?;
    for kv in &common.set {
        let (name, value) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects NAME=VALUE, got {kv:?}"))?;
        let value: f64 = value.trim().parse().with_context(|| format!("--set {name}: not a number"))?;
        scenario = scenario.with_param(name.trim(), value);
    }
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        bail!("tolerance must be positive, got {}", common.tol);
    }
    Ok(scenario)
}

fn select_rule(inst: &Instance, which: &str) -> anyhow::Result<SignalingRule> {
    Ok(match which {
        "noinfo" => rule_no_info(&inst.paths, &inst.dist),
        "fullinfo" => rule_full_info(&inst.paths, &inst.dist),
        "scenario" => inst.rule.clone().ok_or_else(|| anyhow!("scenario has no rule section"))?,
        file => {
            let text = fs::read_to_string(Path::new(file)).with_context(|| format!("reading rule {file}"))?;
            RuleSpec::from_json(&text)?.build(&inst.network, &inst.paths, &inst.dist)?
        }
    })
}

fn cmd_optimum(common: &Common) -> anyhow::Result<Value> {
    let inst = load(common)?.build()?;
    let opt = system_optimum(&inst.paths, &inst.delays, &inst.dist, common.tol)?;
    let atoms: Vec<Value> = inst
        .dist
        .atoms()
        .iter()
        .enumerate()
        .map(|(k, a)| {
            json!({
                "prob": a.prob,
                "theta": a.theta,
                "path_flow": opt.flows.path.as_ref().map(|p| &p[k]),
                "link_flow": opt.flows.link[k],
                "lambda": opt.lambda.as_ref().map(|l| l[k]),
            })
        })
        .collect();
    Ok(json!({
        "paths": inst.paths.labels(),
        "method": opt.method,
        "atoms": atoms,
        "cost": opt.cost,
        "full_support": opt.support.as_ref().map(|s| s.full_support),
        "support": opt.support,
    }))
}

fn cmd_bwe(common: &Common, which: &str) -> anyhow::Result<Value> {
    let inst = load(common)?.build()?;
    let rule = select_rule(&inst, which)?;
    let eq = solve_bwe(&inst.paths, &inst.delays, &inst.dist, &rule, common.tol)?;
    Ok(json!({
        "rule": which,
        "messages": rule.messages(),
        "paths": inst.paths.labels(),
        "link_flow": eq.flows.link,
        "choices": eq.y,
        "cost": eq.cost,
        "potential": eq.potential,
        "gap": eq.gap,
        "iterations": eq.iterations,
        "max_slack": eq.slacks.max_slack,
        "equilibrium": eq.slacks.pass,
    }))
}

fn cmd_check(common: &Common) -> anyhow::Result<Value> {
    let inst = load(common)?.build()?;
    let (ps, delays, dist) = (&inst.paths, &inst.delays, &inst.dist);
    let cert = theorem_condition(ps, delays.alphas(), dist)?;
    let verdict = achievability(ps, delays, dist, common.tol)?;
    let parallel = corollary_parallel(ps, delays.alphas(), dist).ok();
    let two_link = corollary_two_link(ps, delays.alphas(), dist).ok();
    Ok(json!({
        "paths": ps.labels(),
        "certificate": cert,
        "parallel_condition": parallel,
        "two_link_condition": two_link,
        "achievability": verdict,
    }))
}

fn cmd_design(common: &Common, multistart: Option<usize>, grid_step: Option<f64>) -> anyhow::Result<Value> {
    let inst = load(common)?.build()?;
    let mut problem = DesignProblem::new(&inst.paths, &inst.delays, &inst.dist);
    problem.solver_tol = common.tol;
    if let Some(m) = multistart {
        problem.multistart = m;
    }
    problem.grid_step = grid_step;
    let best = best_obedient_rule(&problem)?;
    let opt = system_optimum(&inst.paths, &inst.delays, &inst.dist, common.tol)?;
    Ok(json!({
        "paths": inst.paths.labels(),
        "design": best,
        "cost_optimum": opt.cost,
    }))
}

struct Row {
    param: f64,
    optimum: f64,
    noinfo: f64,
    fullinfo: f64,
    best: Option<f64>,
    achievable: &'static str,
}

fn sweep_row(scenario: &Scenario, param: &str, value: f64, tol: f64) -> anyhow::Result<Row> {
    let inst = scenario.with_param(param, value).build().with_context(|| format!("{param} = {value}"))?;
    let (ps, delays, dist) = (&inst.paths, &inst.delays, &inst.dist);
    let optimum = system_optimum(ps, delays, dist, tol)?.cost;
    let noinfo = solve_bwe(ps, delays, dist, &rule_no_info(ps, dist), tol)?.cost;
    let fullinfo = solve_bwe(ps, delays, dist, &rule_full_info(ps, dist), tol)?.cost;
    let mut problem = DesignProblem::new(ps, delays, dist);
    problem.solver_tol = tol;
    let best = match best_obedient_rule(&problem) {
        Ok(r) => Some(r.cost),
        Err(Error::CapExceeded { .. } | Error::MultiOd(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let achievable = achievability(ps, delays, dist, tol)?.verdict.label();
    Ok(Row { param: value, optimum, noinfo, fullinfo, best, achievable })
}

fn cmd_sweep(
    common: &Common,
    param: Option<String>,
    range: Option<String>,
    steps: Option<usize>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let scenario = load(common)?;
    let spec = scenario.sweep.clone();
    let param = param
        .or_else(|| spec.as_ref().map(|s| s.param.clone()))
        .ok_or_else(|| anyhow!("no sweep parameter: pass --param or add a sweep section"))?;
    let (min, max) = match (&range, &spec) {
        (Some(r), _) => parse_range(r)?,
        (None, Some(s)) => (s.min, s.max),
        (None, None) => bail!("no sweep range: pass --range or add a sweep section"),
    };
    let steps = steps.or(spec.map(|s| s.steps)).unwrap_or(11);
    let rows: Vec<Row> = sweep_points(min, max, steps)
        .into_par_iter()
        .map(|v| sweep_row(&scenario, &param, v, common.tol))
        .collect::<anyhow::Result<_>>()?;

    let mut csv = String::from("param,cost_optimum,cost_noinfo,cost_fullinfo,cost_bestrule,achievable\n");
    for r in rows {
        let best = r.best.map(|c| format_sig(c, 12)).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_sig(r.param, 12),
            format_sig(r.optimum, 12),
            format_sig(r.noinfo, 12),
            format_sig(r.fullinfo, 12),
            best,
            r.achievable
        ));
    }
    match out {
        Some(path) => fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => match std::io::stdout().write_all(csv.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        },
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let solver = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::NonConvergence { .. })));
    if solver {
        EXIT_SOLVER
    } else {
        EXIT_VALIDATION
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimum(c) => cmd_optimum(&c).map(Some),
        Command::Bwe { common, rule } => cmd_bwe(&common, &rule).map(Some),
        Command::Check(c) => cmd_check(&c).map(Some),
        Command::Design { common, multistart, grid_step } => cmd_design(&common, multistart, grid_step).map(Some),
        Command::Sweep { common, param, range, steps, out } => cmd_sweep(&common, param, range, steps, out).map(|_| None),
    };
    match result {
        Ok(Some(report)) => {
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            // a closed pipe (`| head`) is not an error
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_failures_map_to_three() {
        let e = anyhow::Error::from(Error::NonConvergence { iterations: 5, gap: 1.0 }).context("row");
        assert_eq!(exit_code(&e), EXIT_SOLVER);
        let e = anyhow::Error::from(Error::Scenario("bad".into()));
        assert_eq!(exit_code(&e), EXIT_VALIDATION);
        assert_eq!(exit_code(&anyhow!("io")), EXIT_VALIDATION);
    }
}
