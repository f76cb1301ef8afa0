use std::error::Error;
use std::fs::{self, File};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use consensus_core::analysis::{asym_limit_mse, gamma_exact, uncoded_sym_rate};
use consensus_core::anytime::{exponent_e, measure_beta, CodeParams, TreeCode};
use consensus_core::bounds::{
    bound_theorem1, bound_theorem2, bound_theorem3, coding_gain_check, rate_r_beta, rate_r_p, rate_r_p_conservative,
};
use consensus_core::erasure::{ErasureMode, ErasureModel, SeededErasures};
use consensus_core::graph::Graph;
use consensus_core::harness::config::AutoKeyword;
use consensus_core::harness::{
    emit_report, run_experiment, CodeConfig, EpsSpec, ExperimentConfig, GraphInfo, GraphSpec, OutputSpec, X0Spec,
};
use consensus_core::oracles::{
    check_counter_laws, check_no_wait_loops, find_witness, find_witness_exhaustive, wasted_round_dominator,
};
use consensus_core::protocols::repetition::run_repetition;
use consensus_core::protocols::Protocol;
use consensus_core::rng::hash_counters;
use consensus_core::spectral::spectral_summary;
use serde_json::json;

use crate::args::{AnalyzeArgs, Cli, CodeBenchArgs, Command, ExperimentArgs, GammaArgs, ModeArg, ProtocolArg, VerifyArgs};

type Res<T> = Result<T, Box<dyn Error>>;

pub fn dispatch(cli: Cli) -> Res<ExitCode> {
    match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Simulate(a) => experiment(&a, true),
        Command::Montecarlo(a) => experiment(&a, false),
        Command::Gamma(a) => gamma(&a),
        Command::Verify(a) => verify(&a),
        Command::CodeBench(a) => code_bench(&a),
    }
}

fn print(value: &serde_json::Value) -> Res<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn graph_spec(s: &str) -> GraphSpec {
    if Path::new(s).is_file() || !s.contains(':') {
        GraphSpec::File(s.into())
    } else {
        GraphSpec::Generator(s.to_string())
    }
}

fn build_graph(s: &str) -> Res<Graph> {
    Ok(graph_spec(s).build()?)
}

pub fn eps_spec(s: &str) -> Res<EpsSpec> {
    if s == "auto" {
        Ok(EpsSpec::Keyword(AutoKeyword::Auto))
    } else {
        Ok(EpsSpec::Value(s.parse().map_err(|_| format!("bad --eps `{s}`"))?))
    }
}

fn eps_value(g: &Graph, s: &str) -> Res<f64> {
    Ok(match eps_spec(s)? {
        EpsSpec::Value(v) => spectral_summary(g, Some(v))?.eps,
        EpsSpec::Keyword(_) => spectral_summary(g, None)?.eps_star,
    })
}

pub fn x0_spec(s: &str) -> Res<X0Spec> {
    let bad = || format!("bad --x0 `{s}`");
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split(':').collect();
    Ok(match kind {
        "basis" => X0Spec::ScaledBasis {
            node: parts[0].parse().map_err(|_| bad())?,
            scale: parts.get(1).map(|v| v.parse()).transpose().map_err(|_| bad())?,
        },
        "uniform" => {
            let seed = parts[0].parse().map_err(|_| bad())?;
            let (lo, hi) = match parts.len() {
                1 => (0.0, 1.0),
                3 => (parts[1].parse().map_err(|_| bad())?, parts[2].parse().map_err(|_| bad())?),
                _ => return Err(bad().into()),
            };
            X0Spec::Uniform { seed, lo, hi }
        }
        "explicit" => X0Spec::Explicit {
            values: rest.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?,
        },
        _ => return Err(bad().into()),
    })
}

fn mode(m: ModeArg) -> ErasureMode {
    match m {
        ModeArg::Symmetric => ErasureMode::Symmetric,
        ModeArg::Asymmetric => ErasureMode::Asymmetric,
    }
}

/// Configuration from `--config` (if any) with flag overrides applied.
pub fn build_config(a: &ExperimentArgs) -> Res<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ExperimentConfig::from_json_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => {
            let graph = a.graph.as_deref().ok_or("--graph is required without --config")?;
            let protocol = a.protocol.ok_or("--protocol is required without --config")?;
            let rounds = a.rounds.ok_or("--rounds is required without --config")?;
            let default_mode = match protocol {
                ProtocolArg::Treecode => ErasureMode::Asymmetric,
                _ => ErasureMode::Symmetric,
            };
            ExperimentConfig {
                graph: graph_spec(graph),
                model: ErasureModel::new(a.mode.map_or(default_mode, mode), a.p.unwrap_or(0.0))?,
                eps: EpsSpec::default(),
                protocol: Protocol::Uncoded,
                code: None,
                rounds,
                trials: 1,
                seed: 0,
                x0: X0Spec::default(),
                tail_rates: Vec::new(),
                output: OutputSpec::default(),
            }
        }
    };
    if let Some(g) = &a.graph {
        cfg.graph = graph_spec(g);
    }
    if let Some(m) = a.mode {
        cfg.model.mode = mode(m);
    }
    if let Some(p) = a.p {
        cfg.model = ErasureModel::new(cfg.model.mode, p)?;
    }
    if let Some(e) = &a.eps {
        cfg.eps = eps_spec(e)?;
    }
    if let Some(p) = a.protocol {
        cfg.protocol = match p {
            ProtocolArg::Uncoded => Protocol::Uncoded,
            ProtocolArg::Repetition => Protocol::Repetition,
            ProtocolArg::Treecode => Protocol::Treecode,
        };
    }
    if a.lambda_bits.is_some() || a.n.is_some() || a.ensemble_seed.is_some() || a.horizon_cap.is_some() {
        let base = cfg.code.unwrap_or(CodeConfig {
            lambda_bits: 72,
            n: 3,
            ensemble_seed: 0,
            horizon_cap: None,
        });
        cfg.code = Some(CodeConfig {
            lambda_bits: a.lambda_bits.unwrap_or(base.lambda_bits),
            n: a.n.unwrap_or(base.n),
            ensemble_seed: a.ensemble_seed.unwrap_or(base.ensemble_seed),
            horizon_cap: a.horizon_cap.or(base.horizon_cap),
        });
    } else if cfg.protocol == Protocol::Treecode && cfg.code.is_none() {
        cfg.code = Some(CodeConfig {
            lambda_bits: 72,
            n: 3,
            ensemble_seed: 0,
            horizon_cap: None,
        });
    }
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(x) = &a.x0 {
        cfg.x0 = x0_spec(x)?;
    }
    if let Some(t) = &a.tail_rates {
        cfg.tail_rates = t.clone();
    }
    if let Some(k) = a.runs_trials {
        cfg.output.runs_trials = Some(k);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(a: &ExperimentArgs, traced: bool) -> Res<ExitCode> {
    let mut cfg = build_config(a)?;
    if traced {
        cfg.trials = 1;
        cfg.output.trace = true;
    }
    let dir = cfg.output.dir.clone().unwrap_or_else(|| a.out.out.clone());
    let exp = run_experiment(&cfg)?;
    let files = emit_report(&exp, &dir)?;
    let r = &exp.report;
    print(&json!({
        "config_hash": r.config_hash,
        "graph": r.graph,
        "eps": r.eps,
        "mu": r.mu,
        "rate": r.rate,
        "rates": r.rates,
        "tails": r.tails,
        "wall_seconds": exp.wall_seconds,
        "files": files,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn analyze(a: &AnalyzeArgs) -> Res<ExitCode> {
    let g = build_graph(&a.graph)?;
    let eps = eps_value(&g, &a.eps)?;
    let spec = spectral_summary(&g, Some(eps))?;
    let delta = g.max_degree();
    let mut bounds = Vec::new();
    for &r in &a.r_prime {
        if let Some(p) = a.p {
            bounds.push(bound_theorem1(a.m, r, p, &g));
            bounds.push(bound_theorem2(a.m, r, p, &g));
        }
        if let Some(beta) = a.beta {
            bounds.push(bound_theorem3(a.m, r, beta, &g));
        }
    }
    let gain = match a.p {
        Some(p) => coding_gain_check(&g, eps, p)
            .map_err(|e| log::warn!("coding-gain check skipped: {e}"))
            .ok(),
        None => None,
    };
    print(&json!({
        "graph": GraphInfo::of(&g),
        "spectral": spec,
        "r_p": a.p.map(|p| rate_r_p(p, delta)),
        "r_p_conservative": a.p.map(|p| rate_r_p_conservative(p, delta)),
        "error_free_rate": a.p.map(|p| (1.0 - p).powi(g.edge_count() as i32)),
        "r_beta": a.beta.map(|b| rate_r_beta(b, delta)),
        "bounds": bounds,
        "coding_gain": gain,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn gamma(a: &GammaArgs) -> Res<ExitCode> {
    let g = build_graph(&a.graph)?;
    let eps = eps_value(&g, &a.eps)?;
    let model = ErasureModel::new(mode(a.mode), a.p)?;
    let ga = gamma_exact(&g, eps, &model)?;
    let mut report = ga.report();
    if !a.full {
        report.gamma.clear();
    }
    let x0 = X0Spec::default().build(g.n())?;
    let limit = match model.mode {
        ErasureMode::Asymmetric => Some(asym_limit_mse(&ga, &x0)?),
        ErasureMode::Symmetric => None,
    };
    let rate = match model.mode {
        ErasureMode::Symmetric => Some(uncoded_sym_rate(&ga)?),
        ErasureMode::Asymmetric => None,
    };
    let trajectory = a.k_max.map(|k| ga.mse_trajectory(&x0, k)).transpose()?;
    print(&json!({
        "report": report,
        "rate_uncoded_sym": rate,
        "limit_mse": limit,
        "mse_trajectory": trajectory,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn verify(a: &VerifyArgs) -> Res<ExitCode> {
    let g = build_graph(&a.graph)?;
    let eps = spectral_summary(&g, None)?.eps_star;
    let model = ErasureModel::symmetric(a.p)?;
    let x0 = X0Spec::default().build(g.n())?;
    let (mut witnesses, mut chains, mut dominated) = (0usize, 0usize, 0usize);
    let mut violations = Vec::new();
    for i in 0..a.runs {
        let src = SeededErasures::new(model, hash_counters(a.seed, &[i as u64]));
        let run = run_repetition(&g, eps, &src, &x0, a.rounds)?;
        if let Err(v) = check_counter_laws(&run) {
            violations.push(format!("run {i}: counter law {} at node {}, round {}", v.law, v.node, v.round));
        }
        for t in 1..=a.rounds {
            for v in 0..g.n() {
                for w in [find_witness_exhaustive(&run, v, t), find_witness(&run, v, t)] {
                    match w {
                        Ok(_) => witnesses += 1,
                        Err(e) => violations.push(format!("run {i}: {e}")),
                    }
                }
            }
        }
        match check_no_wait_loops(&run) {
            Ok(c) => chains += c.len(),
            Err(e) => violations.push(format!("run {i}: {e}")),
        }
        for v in 0..g.n() {
            match wasted_round_dominator(&run, v) {
                Ok(rows) => dominated += rows.iter().filter(|r| r.1).count(),
                Err(e) => violations.push(format!("run {i}: {e}")),
            }
        }
    }
    print(&json!({
        "runs": a.runs,
        "rounds": a.rounds,
        "witnesses": witnesses,
        "wait_chains": chains,
        "wasted_rounds_dominated": dominated,
        "violations": violations,
    }))?;
    Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn code_bench(a: &CodeBenchArgs) -> Res<ExitCode> {
    let params = CodeParams::new(a.lambda_bits, a.n, a.ensemble_seed)?;
    let code = Arc::new(TreeCode::new(params, a.horizon)?);
    let m = measure_beta(&code, a.p, a.horizon, a.trials, a.seed)?;
    fs::create_dir_all(&a.out.out)?;
    let csv_path = a.out.out.join("beta.csv");
    m.write_csv(File::create(&csv_path)?)?;
    let p_prime = params.p_prime(a.p);
    let ceiling = exponent_e(params.rate(), p_prime)
        .ok()
        .map(|e| (a.n * a.lambda_bits) as f64 * e);
    print(&json!({
        "lambda_bits": a.lambda_bits,
        "n": a.n,
        "effective_seed": code.effective_seed(),
        "p": a.p,
        "p_prime": p_prime,
        "beta_hat": m.beta_hat,
        "fit_range": m.fit_range,
        "r_squared": m.r_squared,
        "d0": m.d0,
        "d0_all": m.d0_all,
        "monotone_on_fit": m.monotone_on_fit(),
        "beta_ceiling": ceiling,
        "beta_within_ceiling": match (m.beta_hat, ceiling) {
            (Some(b), Some(c)) => Some(b <= 1.25 * c),
            _ => None,
        },
        "csv": csv_path,
    }))?;
    Ok(ExitCode::SUCCESS)
}
