//! `pitwall` command line.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pitwall::action::Action;
use pitwall::agent::{train, AgentPolicy, Checkpoint, QNetwork, TrainingConfig};
use pitwall::baselines::{FixedPolicy, HeuristicParams, HeuristicPolicy};
use pitwall::env::{run_race, Policy, RaceEnv};
use pitwall::harness::report::{write_aggregate, write_histogram, write_matrix, write_races};
use pitwall::harness::{
    calibrate_pace, generalisability_matrix, race_seed, run_comparison, ComparisonSpec,
    EvalMetrics, Model,
};
use pitwall::rng::derive_seed;
use pitwall::sim::trace::{read_trace, write_trace};
use pitwall::sim::{TrackConfig, TrackId};
use pitwall::state::{
    attribution_groups, calibrate_scaling, scale, ScalingProfile, TraceTranslator, Translator,
};
use pitwall::xai::viper::{write_depth_csv, write_history_csv};
use pitwall::xai::{
    attribute, counterfactual, decision_path, depth_curve, surrogate_fidelity, viper_distill,
    CfOptions, DecisionTree, Norm, ShapleyMode, ViperConfig,
};
use serde::{Deserialize, Serialize};

use crate::service::{serve, Service};

pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";
pub const ADDR_ENV: &str = "PITWALL_ADDR";

#[derive(Debug, Parser)]
#[command(
    name = "pitwall",
    version,
    about = "Pit-stop strategy agent, race simulator and explanations"
)]
pub struct Cli {
    /// Master seed; overrides the seeds in --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration with optional [training], [viper] and
    /// [heuristic] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Attribution,
    Path,
    Counterfactual,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the feature scaling profile, and optionally the controlled car's pace.
    Calibrate {
        #[arg(long, value_delimiter = ',', default_value = "desk")]
        tracks: Vec<String>,
        /// Calibration races per track.
        #[arg(long, default_value_t = 200)]
        sims: usize,
        /// Mean finish the fixed strategy should reach after pace calibration.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = 500)]
        races: usize,
    },
    /// Train the agent; several tracks are used in rotation.
    Train {
        #[arg(long, value_delimiter = ',', default_value = "desk")]
        track: Vec<String>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Scaling profile; calibrated on the training tracks if omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        sims: usize,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "desk")]
        track: String,
        #[arg(long, default_value_t = 500)]
        races: usize,
    },
    /// Agent against the baselines on paired seeds.
    Compare {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "desk")]
        tracks: Vec<String>,
        #[arg(long, default_value_t = 500)]
        races: usize,
        /// Controlled-car pace offset applied to every track.
        #[arg(long, allow_hyphen_values = true)]
        pace: Option<f64>,
    },
    /// Mean finish of every model on every track, split seen/unseen.
    Generalise {
        /// Repeatable; each checkpoint is one model.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        /// Defaults to every supported track.
        #[arg(long, value_delimiter = ',')]
        tracks: Vec<String>,
        #[arg(long, default_value_t = 100)]
        races: usize,
    },
    /// Distil a checkpoint into a decision tree.
    Distill {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "desk")]
        track: String,
        #[arg(long, default_value_t = 8)]
        max_curve_depth: usize,
        /// Races for the surrogate confusion matrix.
        #[arg(long, default_value_t = 100)]
        fidelity_races: usize,
    },
    /// Explain the agent's decision at one lap of a stored trace.
    Explain {
        #[arg(long)]
        trace: PathBuf,
        /// Completed laps; the decision is the one for the following lap.
        #[arg(long)]
        lap: u32,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Decision tree for path and counterfactual explanations.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Car id in the trace.
        #[arg(long, default_value_t = 0)]
        car: usize,
        /// Track the trace was recorded on.
        #[arg(long, default_value = "desk")]
        track: String,
        /// Counterfactual target action, e.g. `pit-hard`.
        #[arg(long)]
        target: Option<Action>,
        #[arg(long, default_value = "l1")]
        norm: Norm,
    },
    /// Run races and write their traces.
    Simulate {
        #[arg(long, default_value = "desk")]
        track: String,
        #[arg(long, default_value_t = 1)]
        races: usize,
        /// `fixed`, `heuristic`, `random`, or a checkpoint file.
        #[arg(long, default_value = "fixed")]
        policy: String,
    },
    /// Start the session service.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Bind address; falls back to $PITWALL_ADDR, then 127.0.0.1:7878.
        #[arg(long)]
        addr: Option<String>,
    },
    /// Re-run a saved session event log and print the final classification.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub viper: ViperConfig,
    pub heuristic: HeuristicParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.heuristic.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 2 on a usage error, 1 otherwise.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    config: RunConfig,
}

impl Ctx {
    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let mut f = self.create(name)?;
        f.write_all(text.as_bytes())?;
        f.flush()?;
        Ok(self.out.join(name))
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.training.seed = s;
        config.viper.seed = s;
    }
    let ctx = Ctx {
        out: cli.out,
        seed: cli.seed.unwrap_or(0),
        config,
    };
    match cli.command {
        Command::Calibrate {
            tracks,
            sims,
            target,
            races,
        } => cmd_calibrate(&ctx, &tracks, sims, target, races),
        Command::Train {
            track,
            episodes,
            profile,
            sims,
        } => cmd_train(&ctx, &track, episodes, profile.as_deref(), sims),
        Command::Eval {
            checkpoint,
            track,
            races,
        } => {
            let (net, profile) = load_checkpoint(&checkpoint)?;
            let config = TrackConfig::resolve(&track)?;
            let results = pitwall::harness::run_races(
                &config,
                &Model::agent("rsrl", net, profile),
                races,
                ctx.seed,
                false,
            )?;
            let m = EvalMetrics::from_results(&results, config.field.size);
            let text = serde_json::to_string_pretty(&m)?;
            println!("{text}");
            ctx.write("eval.json", &text)?;
            Ok(())
        }
        Command::Compare {
            checkpoint,
            tracks,
            races,
            pace,
        } => cmd_compare(&ctx, checkpoint.as_deref(), &tracks, races, pace),
        Command::Generalise {
            checkpoint,
            tracks,
            races,
        } => cmd_generalise(&ctx, &checkpoint, &tracks, races),
        Command::Distill {
            checkpoint,
            track,
            max_curve_depth,
            fidelity_races,
        } => cmd_distill(&ctx, &checkpoint, &track, max_curve_depth, fidelity_races),
        Command::Explain {
            trace,
            lap,
            method,
            checkpoint,
            tree,
            car,
            track,
            target,
            norm,
        } => {
            let req = ExplainArgs {
                trace: &trace,
                lap,
                method,
                checkpoint: &checkpoint,
                tree: tree.as_deref(),
                car,
                track: &track,
                target,
                norm,
            };
            let text = explain(&req, ctx.seed)?;
            print!("{text}");
            Ok(())
        }
        Command::Simulate {
            track,
            races,
            policy,
        } => cmd_simulate(&ctx, &track, races, &policy),
        Command::Serve {
            checkpoint,
            tree,
            addr,
        } => {
            let (net, profile) = load_checkpoint(&checkpoint)?;
            let tree = tree
                .map(|p| DecisionTree::load(&p).map(Arc::new))
                .transpose()?;
            let addr = addr
                .or_else(|| std::env::var(ADDR_ENV).ok())
                .unwrap_or_else(|| DEFAULT_ADDR.to_string());
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("serving on {}", listener.local_addr()?);
            serve(Arc::new(Service::new(net, profile, tree)), listener)?;
            Ok(())
        }
        Command::Replay { log, checkpoint } => {
            let (net, profile) = load_checkpoint(&checkpoint)?;
            let log = crate::session::EventLog::load(&log)?;
            let s = crate::session::replay(&log, net, profile)?;
            let (finish, failed) = s.result();
            println!("finish P{finish}{}", if failed { " (failed)" } else { "" });
            println!("classification {:?}", s.classification());
            Ok(())
        }
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Arc<QNetwork>, Arc<ScalingProfile>)> {
    let ck = Checkpoint::load(path)?;
    Ok((Arc::new(ck.network), Arc::new(ck.profile)))
}

fn resolve_all(names: &[String]) -> Result<Vec<TrackConfig>> {
    names.iter().map(|n| Ok(TrackConfig::resolve(n)?)).collect()
}

fn cmd_calibrate(
    ctx: &Ctx,
    tracks: &[String],
    sims: usize,
    target: Option<f64>,
    races: usize,
) -> Result<()> {
    let configs = resolve_all(tracks)?;
    let profile = calibrate_scaling(&configs, sims, ctx.seed)?;
    let path = ctx.write("profile.json", &profile.to_json())?;
    println!(
        "profile {} written to {}",
        profile.fingerprint(),
        path.display()
    );
    if let Some(target) = target {
        let mut pace = BTreeMap::new();
        for c in &configs {
            let r = calibrate_pace(
                c,
                &Model::fixed(),
                target,
                0.15,
                (-2.0, 2.0),
                races,
                ctx.seed,
                30,
            )?;
            println!(
                "{}: pace {:+.3} s/lap gives P{:.2}{}",
                c.track_id,
                r.pace_delta,
                r.achieved,
                if r.clamped { " (clamped)" } else { "" }
            );
            pace.insert(c.track_id.to_string(), r);
        }
        ctx.write("pace.json", &serde_json::to_string_pretty(&pace)?)?;
    }
    Ok(())
}

fn cmd_train(
    ctx: &Ctx,
    tracks: &[String],
    episodes: Option<usize>,
    profile: Option<&Path>,
    sims: usize,
) -> Result<()> {
    let configs = resolve_all(tracks)?;
    let profile = match profile {
        Some(p) => ScalingProfile::load(p)?,
        None => calibrate_scaling(&configs, sims, ctx.seed)?,
    };
    let mut cfg = ctx.config.training.clone();
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    let (net, log) = train(
        |ep| RaceEnv::new(configs[ep % configs.len()].clone()),
        &profile,
        &cfg,
        &mut (),
    )?;
    log.write_csv(ctx.create("training_log.csv")?)?;
    ctx.write("profile.json", &profile.to_json())?;
    let path = ctx.out.join("checkpoint.json");
    Checkpoint::new(net, profile, cfg).save(&path)?;
    if let Some(v) = log.selected.and_then(|i| log.validations.get(i)) {
        println!(
            "selected episode {} (validation P{:.3})",
            v.episode, v.mean_finish
        );
    }
    println!("checkpoint written to {}", path.display());
    Ok(())
}

fn baselines(ctx: &Ctx) -> Vec<Model> {
    vec![
        Model::fixed(),
        Model::heuristic(ctx.config.heuristic.clone()),
        Model::random(),
    ]
}

fn cmd_compare(
    ctx: &Ctx,
    checkpoint: Option<&Path>,
    tracks: &[String],
    races: usize,
    pace: Option<f64>,
) -> Result<()> {
    let mut models = Vec::new();
    if let Some(p) = checkpoint {
        let (net, profile) = load_checkpoint(p)?;
        let trained = profile.tracks.clone();
        models.push(Model::agent("rsrl", net, profile).trained_on(trained));
    }
    models.extend(baselines(ctx));
    let spec = ComparisonSpec {
        models,
        tracks: resolve_all(tracks)?,
        n_races: races,
        seed: ctx.seed,
        pace_delta: pace,
    };
    let table = run_comparison(&spec)?;
    write_races(&table, ctx.create("races.csv")?)?;
    write_aggregate(&table, ctx.create("aggregate.csv")?)?;
    write_histogram(&table, ctx.create("histogram.csv")?)?;
    write_aggregate(&table, io::stdout().lock())?;
    Ok(())
}

fn cmd_generalise(
    ctx: &Ctx,
    checkpoints: &[PathBuf],
    tracks: &[String],
    races: usize,
) -> Result<()> {
    let configs = if tracks.is_empty() {
        TrackId::ALL.into_iter().map(TrackConfig::bundled).collect()
    } else {
        resolve_all(tracks)?
    };
    let mut models = Vec::new();
    for p in checkpoints {
        let (net, profile) = load_checkpoint(p)?;
        let name = p
            .file_stem()
            .map_or_else(|| "rsrl".to_string(), |s| s.to_string_lossy().into_owned());
        let trained = profile.tracks.clone();
        models.push(Model::agent(name, net, profile).trained_on(trained));
    }
    models.extend(baselines(ctx).into_iter().take(2));
    let m = generalisability_matrix(&models, &configs, races, ctx.seed)?;
    write_matrix(&m, ctx.create("matrix.csv")?)?;
    write_matrix(&m, io::stdout().lock())?;
    Ok(())
}

fn cmd_distill(
    ctx: &Ctx,
    checkpoint: &Path,
    track: &str,
    max_curve_depth: usize,
    fidelity_races: usize,
) -> Result<()> {
    let (net, profile) = load_checkpoint(checkpoint)?;
    let config = TrackConfig::resolve(track)?;
    let vc = &ctx.config.viper;
    let r = viper_distill(net.clone(), profile.clone(), &config, vc)?;
    fs::create_dir_all(&ctx.out)?;
    r.tree.save(ctx.out.join("tree.json"))?;
    write_history_csv(&r.history, ctx.create("viper_history.csv")?)?;
    let curve = depth_curve(
        &r.dataset,
        &r.holdout,
        1..=max_curve_depth,
        vc.min_leaf,
        vc.seed,
    );
    write_depth_csv(&curve, ctx.create("depth_curve.csv")?)?;
    let rep = surrogate_fidelity(
        &r.tree,
        net,
        profile,
        &config,
        fidelity_races,
        derive_seed(vc.seed, &[1]),
    )?;
    ctx.write("fidelity.json", &serde_json::to_string_pretty(&rep)?)?;
    println!(
        "tree depth {} with {} leaves from iteration {}: held-out fidelity {:.3}, rollout accuracy {:.3}, macro-F1 {:.3}",
        r.tree.depth(),
        r.tree.n_leaves(),
        r.best_iteration + 1,
        r.heldout_fidelity(),
        rep.accuracy,
        rep.macro_f1
    );
    Ok(())
}

pub struct ExplainArgs<'a> {
    pub trace: &'a Path,
    pub lap: u32,
    pub method: Method,
    pub checkpoint: &'a Path,
    pub tree: Option<&'a Path>,
    pub car: usize,
    pub track: &'a str,
    pub target: Option<Action>,
    pub norm: Norm,
}

/// Renders an explanation for one trace lap as text.
pub fn explain(req: &ExplainArgs<'_>, seed: u64) -> Result<String> {
    let (net, profile) = load_checkpoint(req.checkpoint)?;
    let config = TrackConfig::resolve(req.track)?;
    let file = File::open(req.trace).with_context(|| format!("opening {}", req.trace.display()))?;
    let records = read_trace(file)?;
    let states = (0..=req.lap)
        .map(|lap| {
            TraceTranslator {
                config: &config,
                lap,
            }
            .translate(&records, req.car)
        })
        .collect::<pitwall::Result<Vec<_>>>()?;
    if states.last().is_some_and(|s| s.terminal) {
        bail!(
            "lap {} is the end of the race; there is no decision to explain",
            req.lap
        );
    }
    let xs: Vec<_> = states.iter().map(|s| scale(s, &profile)).collect();
    let x = *xs.last().expect("at least lap 0");
    let tree = || -> Result<DecisionTree> {
        let p = req.tree.context("--tree is required for this method")?;
        Ok(DecisionTree::load(p)?)
    };
    let mut out = String::new();
    use std::fmt::Write as _;
    match req.method {
        Method::Attribution => {
            let t = xs.len() - 1;
            let a = attribute(
                &net,
                &xs,
                t,
                &profile.baseline,
                &attribution_groups(),
                ShapleyMode::default(),
                seed,
            )?;
            writeln!(
                out,
                "lap {} car {}: {} (Q {:.3}, baseline {:.3})",
                req.lap + 1,
                req.car,
                a.action,
                a.output,
                a.base
            )?;
            for g in &a.values {
                writeln!(out, "{:<24} {:+.3}", g.name, g.value)?;
            }
        }
        Method::Path => {
            let p = decision_path(&tree()?, &x, &profile);
            writeln!(out, "{:<40} reading", "predicate")?;
            for s in &p.steps {
                writeln!(out, "{:<40} {}", s.formal, s.natural)?;
            }
            writeln!(out, "=> {}", p.action)?;
        }
        Method::Counterfactual => {
            let tree = tree()?;
            let current = tree.predict(&x);
            let target = req.target.unwrap_or_else(|| {
                *Action::ALL
                    .iter()
                    .find(|&&a| a != current)
                    .expect("four actions")
            });
            let opts = CfOptions {
                norm: req.norm,
                ..CfOptions::default()
            };
            let cf = counterfactual(&tree, &x, target, &opts)?;
            writeln!(
                out,
                "tree says {current}; for {target}, change {} feature group(s), {:?} distance {:.4}:",
                cf.units_changed, cf.norm, cf.distance
            )?;
            for n in cf.notes(&profile, config.total_laps) {
                writeln!(
                    out,
                    "  {}{}",
                    n.text,
                    if n.actionable {
                        ""
                    } else {
                        " (not actionable)"
                    }
                )?;
            }
        }
    }
    Ok(out)
}

fn make_policy(ctx: &Ctx, spec: &str, config: &TrackConfig) -> Result<Box<dyn Policy>> {
    Ok(match spec {
        "fixed" => Box::new(FixedPolicy::for_track(config)?),
        "heuristic" => Box::new(HeuristicPolicy::new(ctx.config.heuristic.clone())),
        "random" => Box::new(pitwall::agent::RandomPolicy::default()),
        path => {
            let (net, profile) = load_checkpoint(Path::new(path)).with_context(|| {
                format!("policy {path:?} is not a baseline name or a checkpoint")
            })?;
            Box::new(AgentPolicy::new("rsrl", net, profile))
        }
    })
}

#[derive(Serialize)]
struct RaceSummary {
    race: usize,
    seed: u64,
    controlled: usize,
    finish: usize,
    failed: bool,
    strategy: String,
    trace: String,
}

fn cmd_simulate(ctx: &Ctx, track: &str, races: usize, policy: &str) -> Result<()> {
    let config = TrackConfig::resolve(track)?;
    let mut summaries = Vec::new();
    for i in 0..races {
        let mut p = make_policy(ctx, policy, &config)?;
        let seed = race_seed(ctx.seed, i);
        let r = run_race(&config, p.as_mut(), seed, true)?;
        let controlled = pitwall::sim::build_field(&config, Some(r.start), seed)?.controlled;
        let name = format!("race_{i:03}.csv");
        write_trace(ctx.create(&name)?, &r.records)?;
        let strategy = pitwall::harness::executed_strategy(r.start, &r.pits);
        println!(
            "race {i}: car {controlled} finished P{}{} with {strategy}",
            r.finish,
            if r.failed { " (failed)" } else { "" }
        );
        summaries.push(RaceSummary {
            race: i,
            seed,
            controlled,
            finish: r.finish,
            failed: r.failed,
            strategy,
            trace: name,
        });
    }
    ctx.write("races.json", &serde_json::to_string_pretty(&summaries)?)?;
    Ok(())
}
