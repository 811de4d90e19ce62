//! Headline checks. Every test writes one PASS/FAIL line straight to stdout
//! (past the test harness capture) before asserting.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use pitwall::agent::{
    td_loss_and_grad, train, AgentPolicy, EpisodeRecord, NetShape, QNetwork, RandomPolicy,
    ReplayBuffer, RewardSpec, Segment, TrainObserver, TrainingConfig,
};
use pitwall::baselines::{
    parse_strategy, FixedPolicy, HeuristicParams, HeuristicPolicy, PitWindow, PlannedStop,
};
use pitwall::env::{Environment, Policy, RaceEnv, RaceOutcome, Transition};
use pitwall::harness::{run_races, EvalMetrics, Model};
use pitwall::rng::{derive_seed, stream_rng};
use pitwall::sim::trace::trace_to_string;
use pitwall::sim::{
    strategy_pool, Compound, FieldConfig, LapDraws, LapRecord, PerCompound, TrackConfig,
};
use pitwall::state::{
    attribution_groups, calibrate_scaling, edit_units, features, FeatureKind, FeatureVector,
    ScalingProfile, UnifiedRaceState, FEATURE_LEN,
};
use pitwall::xai::shapley::DEFAULT_BUDGET;
use pitwall::xai::viper::write_depth_csv;
use pitwall::xai::{
    attribute, attribution_fidelity, counterfactual, depth_curve, viper_distill, CfOptions, DecisionTree, Norm,
    ShapleyMethod, ShapleyMode, ViperConfig, ViperResult,
};
use pitwall::{Action, Error, Result};
use rand::Rng;

fn report(name: &str, pass: bool, detail: impl std::fmt::Display) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = out.flush();
}

// ---------------------------------------------------------------- reward

/// Written out case by case, independent of the reward module.
fn expected_reward(
    action: Action,
    avail: [bool; 3],
    prev_valid: bool,
    terminal: bool,
    next_valid: bool,
    pos: usize,
) -> f64 {
    let onto = match action {
        Action::NoPit => None,
        Action::PitSoft => Some(0),
        Action::PitMedium => Some(1),
        Action::PitHard => Some(2),
    };
    if let Some(c) = onto {
        if !avail[c] {
            return -1000.0;
        }
    }
    if terminal && !next_valid {
        return -1000.0;
    }
    if onto.is_some() && prev_valid {
        return -10.0;
    }
    if terminal {
        return match pos {
            1 => 2500.0,
            2 => 1800.0,
            3 => 1500.0,
            4 => 1200.0,
            5 => 1000.0,
            6 => 800.0,
            7 => 600.0,
            8 => 400.0,
            9 => 200.0,
            10 => 100.0,
            _ => 0.0,
        };
    }
    1.0
}

#[test]
fn reward_truth_table() {
    let t0 = Instant::now();
    let template = RaceEnv::new(TrackConfig::desk())
        .reset_with(1, None)
        .unwrap();
    let spec = RewardSpec::default();
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for action in Action::ALL {
        for bits in 0..8u8 {
            let avail = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
            for prev_valid in [false, true] {
                for terminal in [false, true] {
                    for next_valid in [false, true] {
                        for pos in 1..=20 {
                            let mut prev = template.clone();
                            prev.soft_available = avail[0];
                            prev.medium_available = avail[1];
                            prev.hard_available = avail[2];
                            prev.valid_finish = prev_valid;
                            let mut next = template.clone();
                            next.terminal = terminal;
                            next.valid_finish = next_valid;
                            next.position = pos;
                            let got = spec.evaluate(&prev, action, &next);
                            let want = expected_reward(
                                action, avail, prev_valid, terminal, next_valid, pos,
                            );
                            cases += 1;
                            if got != want {
                                mismatches.push(format!("{action} {avail:?} {prev_valid} {terminal} {next_valid} P{pos}: {got} != {want}"));
                            }
                        }
                    }
                }
            }
        }
    }
    let pass = mismatches.is_empty();
    report(
        "reward truth table",
        pass,
        format!(
            "{cases} cases, {} mismatches, {:.3}s",
            mismatches.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass, "{mismatches:#?}");
}

// ------------------------------------------------------------- simulator

fn check_race(cfg: &TrackConfig, seed: u64, problems: &mut Vec<String>) -> String {
    let n = cfg.field.size;
    let alloc = cfg.tyre_allocation.to_array();
    let mut env = RaceEnv::new(cfg.clone()).with_trace();
    let mut state = env.reset(seed).unwrap();
    let mut rng = stream_rng(seed, &[0x1a9]);
    let sim = env.sim().unwrap();
    let mut fitted: Vec<[u32; 3]> = sim
        .cars
        .iter()
        .map(|c| {
            let mut f = [0; 3];
            f[c.current_compound.index()] += 1;
            f
        })
        .collect();
    let mut prev_time = vec![0.0; n];
    let mut prev_pits = vec![0; n];
    loop {
        let action = if rng.random_bool(0.93) {
            Action::NoPit
        } else if rng.random_bool(0.9) {
            let open: Vec<Compound> = Compound::ALL
                .into_iter()
                .filter(|&c| state.available(c))
                .collect();
            if open.is_empty() {
                Action::NoPit
            } else {
                Action::pit(open[rng.random_range(0..open.len())])
            }
        } else {
            Action::ALL[rng.random_range(1..4)]
        };
        let tr = env.step(action).unwrap();
        state = tr.state;
        let sim = env.sim().unwrap();
        let lap = sim.lap;
        let mut order = sim.classification.clone();
        order.sort_unstable();
        if order != (0..n).collect::<Vec<_>>() {
            problems.push(format!(
                "seed {seed} lap {lap}: classification {:?}",
                sim.classification
            ));
        }
        for car in &sim.cars {
            let id = car.car_id;
            if car.cumulative_time <= prev_time[id] {
                problems.push(format!(
                    "seed {seed} lap {lap} car {id}: time {} after {}",
                    car.cumulative_time, prev_time[id]
                ));
            }
            prev_time[id] = car.cumulative_time;
            if car.pit_count > prev_pits[id] {
                fitted[id][car.current_compound.index()] += 1;
                prev_pits[id] = car.pit_count;
            }
            let remaining = car.remaining_sets.to_array();
            let total: u32 = remaining.iter().sum::<u32>() + car.pit_count + 1;
            if total != alloc.iter().sum::<u32>() {
                problems.push(format!(
                    "seed {seed} lap {lap} car {id}: {total} sets accounted for"
                ));
            }
            for c in 0..3 {
                if remaining[c] + fitted[id][c] != alloc[c] {
                    problems.push(format!(
                        "seed {seed} lap {lap} car {id}: compound {c} sets do not add up"
                    ));
                }
            }
        }
        let gaps = sim.gaps();
        for w in sim.classification.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (gaps[a].gap_behind - gaps[b].gap_ahead).abs() > 1e-9 {
                problems.push(format!(
                    "seed {seed} lap {lap}: gap {} vs {}",
                    gaps[a].gap_behind, gaps[b].gap_ahead
                ));
            }
        }
        if tr.terminal {
            break;
        }
    }
    let mut by_lap: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for r in env.records() {
        by_lap.entry(r.lap).or_default().push(r.position);
    }
    for (lap, mut pos) in by_lap {
        pos.sort_unstable();
        if pos != (1..=n).collect::<Vec<_>>() {
            problems.push(format!("seed {seed} lap {lap}: recorded positions {pos:?}"));
        }
    }
    trace_to_string(env.records())
}

#[test]
fn simulator_invariants() {
    let t0 = Instant::now();
    let cfg = TrackConfig::desk();
    assert_eq!((cfg.total_laps, cfg.field.size), (20, 10));
    let mut problems = Vec::new();
    let mut replay_diffs = 0;
    for i in 0..1000 {
        let seed = derive_seed(0x51a, &[i]);
        let a = check_race(&cfg, seed, &mut problems);
        let b = check_race(&cfg, seed, &mut Vec::new());
        if a != b {
            replay_diffs += 1;
        }
    }
    let pass = problems.is_empty() && replay_diffs == 0;
    report(
        "simulator invariants",
        pass,
        format!(
            "1000 races, {} invariant violations, {replay_diffs} replay differences, {:.1}s",
            problems.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass, "{:#?}", &problems[..problems.len().min(20)]);
}

// --------------------------------------------------------------- tiny MDP

/// Five laps, two usable compounds, no randomness anywhere.
fn tiny_config() -> TrackConfig {
    let mut c = TrackConfig::desk();
    c.total_laps = 5;
    c.reference_lap_time = 100.0;
    c.pit_loss = 20.0;
    c.fuel_effect = 0.0;
    c.lap_noise_sd = 0.0;
    c.sc_deploy_prob = 0.0;
    c.overtake_threshold = 0.0;
    c.traffic_penalty = 0.0;
    c.start_gap = 0.0;
    c.compound_offset = PerCompound::new(0.0, 1.5, 3.0);
    c.deg_rate = PerCompound::new(1.0, 0.5, 0.0);
    c.cliff_age = PerCompound::new(1, 10, 10);
    c.tyre_allocation = PerCompound::new(2, 1, 0);
    c.field = FieldConfig {
        size: 3,
        pace_spread: 0.95,
        controlled_pace_delta: -0.525,
    };
    c.strategies = vec!["S[2]M".into()];
    c
}

/// Every episode is the same race from the same grid.
#[derive(Clone)]
struct Tiny(RaceEnv);

impl Tiny {
    fn new() -> Self {
        Tiny(RaceEnv::new(tiny_config()))
    }
}

impl Environment for Tiny {
    fn reset(&mut self, _seed: u64) -> Result<UnifiedRaceState> {
        self.0.reset_with(0, Some(Compound::Soft))
    }

    fn step(&mut self, a: Action) -> Result<Transition> {
        self.0.step(a)
    }

    fn outcome(&self) -> Option<RaceOutcome> {
        self.0.outcome()
    }
}

/// Optimal discounted action values by exhaustive search of the decision tree.
fn value_iteration(env: &Tiny, gamma: f64) -> [f64; 4] {
    let mut q = [0.0; 4];
    for a in Action::ALL {
        let mut e = env.clone();
        let tr = e.step(a).unwrap();
        let future = if tr.terminal {
            0.0
        } else {
            value_iteration(&e, gamma)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        q[a.index()] = tr.reward + gamma * future;
    }
    q
}

fn argmax(q: &[f64; 4]) -> Action {
    let mut best = 0;
    for i in 1..4 {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

#[test]
fn tiny_mdp_matches_value_iteration() {
    let t0 = Instant::now();
    let cfg = tiny_config();
    let mut env = Tiny::new();
    env.reset(0).unwrap();
    let mut optimal = Vec::new();
    let mut margins = Vec::new();
    loop {
        let q = value_iteration(&env, 0.99);
        let a = argmax(&q);
        let mut sorted = q;
        sorted.sort_by(|a, b| b.total_cmp(a));
        margins.push(sorted[0] - sorted[1]);
        optimal.push(a);
        if env.step(a).unwrap().terminal {
            break;
        }
    }
    let profile = calibrate_scaling(std::slice::from_ref(&cfg), 5, 1).unwrap();
    let tc = TrainingConfig {
        episodes: 5000,
        hidden: 16,
        dense: 16,
        updates_per_episode: 4,
        validate_every: 0,
        seed: 3,
        ..Default::default()
    };
    let (net, _) = train(|_| Tiny::new(), &profile, &tc, &mut ()).unwrap();

    // greedy actions along the optimal trajectory
    let mut env = Tiny::new();
    let mut state = env.reset(0).unwrap();
    let mut h = net.initial_hidden();
    let mut greedy = Vec::new();
    for &a in &optimal {
        let (q, next) = net
            .forward(&pitwall::state::scale(&state, &profile).0, &h)
            .unwrap();
        h = next;
        greedy.push(QNetwork::greedy(&q));
        state = env.step(a).unwrap().state;
    }
    let agree = greedy.iter().zip(&optimal).filter(|(a, b)| a == b).count();
    let pass = agree == optimal.len();
    report(
        "tiny MDP oracle",
        pass,
        format!(
            "agreement {agree}/{} (optimal {:?}, learned {:?}, VI margins {:?}), {:.1}s",
            optimal.len(),
            optimal,
            greedy,
            margins
                .iter()
                .map(|m| (m * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------- gradient check

#[test]
fn td_gradient_matches_finite_differences() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for s in 0..100u64 {
        let mut rng = stream_rng(s, &[0x9ad]);
        let shape = NetShape {
            input: FEATURE_LEN,
            hidden: 4,
            dense: 4,
            q_scale: 1.0,
        };
        let mut net = QNetwork::init(shape, &mut rng);
        for p in &mut net.params {
            *p *= 2.0;
        }
        let target = QNetwork::init(shape, &mut rng);
        let mut episodes = Vec::new();
        for _ in 0..2 {
            let t = rng.random_range(2..6);
            let obs: Vec<FeatureVector> = (0..=t)
                .map(|_| {
                    let mut v = [0.0; FEATURE_LEN];
                    for x in &mut v {
                        *x = rng.random_range(-1.0..1.0);
                    }
                    FeatureVector(v)
                })
                .collect();
            let actions = (0..t)
                .map(|_| Action::ALL[rng.random_range(0..4)])
                .collect();
            let rewards = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
            episodes.push(EpisodeRecord {
                obs,
                actions,
                rewards,
                finish: 1,
                seed: 0,
            });
        }
        let batch: Vec<Segment> = episodes.iter().map(|e| e.full()).collect();
        let (_, grad) = td_loss_and_grad(&net, &target, &batch, 0.99).unwrap();
        let loss = |i: usize, d: f64| {
            let mut n = net.clone();
            n.params[i] += d;
            td_loss_and_grad(&n, &target, &batch, 0.99).unwrap().0
        };
        let h = 1e-4;
        for (i, &g) in grad.iter().enumerate() {
            // fourth-order central difference
            let fd = (8.0 * (loss(i, h) - loss(i, -h)) - (loss(i, 2.0 * h) - loss(i, -2.0 * h)))
                / (12.0 * h);
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let pass = worst < 1e-4;
    report(
        "gradient check",
        pass,
        format!(
            "{checked} parameters over 100 networks, worst relative error {worst:.2e}, {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------- desk scale model

struct Desk {
    cfg: TrackConfig,
    profile: Arc<ScalingProfile>,
    net: Arc<QNetwork>,
    secs: f64,
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = TrackConfig::desk();
        let profile = calibrate_scaling(std::slice::from_ref(&cfg), 100, 1).unwrap();
        let tc = TrainingConfig {
            episodes: 2000,
            seed: 3,
            ..Default::default()
        };
        let (net, _) = train(|_| RaceEnv::new(cfg.clone()), &profile, &tc, &mut ()).unwrap();
        Desk {
            cfg,
            profile: Arc::new(profile),
            net: Arc::new(net),
            secs: t0.elapsed().as_secs_f64(),
        }
    })
}

fn desk_viper() -> &'static ViperResult {
    static VIPER: OnceLock<ViperResult> = OnceLock::new();
    VIPER.get_or_init(|| {
        let d = desk();
        let cfg = ViperConfig {
            seed: 11,
            ..Default::default()
        };
        viper_distill(d.net.clone(), d.profile.clone(), &d.cfg, &cfg).unwrap()
    })
}

#[test]
fn learning_signal_at_desk_scale() {
    let t0 = Instant::now();
    let d = desk();
    let n = 500;
    let master = 2026;
    let mean = |m: &Model| {
        EvalMetrics::from_results(
            &run_races(&d.cfg, m, n, master, false).unwrap(),
            d.cfg.field.size,
        )
        .mean_finish
    };
    let rsrl = mean(&Model::agent("rsrl", d.net.clone(), d.profile.clone()));
    let random = mean(&Model::random());
    let pool = mean(&Model::fixed());
    let (best_name, best) = strategy_pool(&d.cfg)
        .unwrap()
        .into_iter()
        .map(|plan| {
            let name = plan.to_string();
            let m = Model::new(name.clone(), move |_| {
                Ok(Box::new(FixedPolicy::single(plan.clone())) as Box<dyn Policy>)
            });
            (name, mean(&m))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let pass = random - rsrl >= 1.0 && rsrl - best <= 0.5;
    report(
        "learning signal",
        pass,
        format!(
            "rsrl {rsrl:.3}, random {random:.3} (margin {:.3}), best fixed {best_name} {best:.3} (gap {:.3}), pool {pool:.3}; {n} paired races, training {:.0}s, eval {:.0}s",
            random - rsrl,
            rsrl - best,
            d.secs,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------- exploration and buffering

#[derive(Default)]
struct Watch {
    last_target: Option<Vec<f64>>,
    max_buffer: usize,
    copies: usize,
    problems: Vec<String>,
}

impl TrainObserver for Watch {
    fn after_episode(
        &mut self,
        ep: usize,
        net: &QNetwork,
        target: &QNetwork,
        buffer: &ReplayBuffer,
    ) {
        self.max_buffer = self.max_buffer.max(buffer.len());
        if (ep + 1).is_multiple_of(100) {
            self.copies += 1;
            if target.params != net.params {
                self.problems
                    .push(format!("episode {ep}: target is not a copy of the network"));
            }
        } else if let Some(prev) = &self.last_target {
            if &target.params != prev {
                self.problems
                    .push(format!("episode {ep}: target moved between copies"));
            }
        }
        self.last_target = Some(target.params.clone());
    }
}

#[test]
fn epsilon_buffer_and_target_schedule() {
    let t0 = Instant::now();
    let cfg = tiny_config();
    let profile = calibrate_scaling(std::slice::from_ref(&cfg), 5, 1).unwrap();
    let tc = TrainingConfig {
        episodes: 1500,
        hidden: 4,
        dense: 4,
        validate_every: 0,
        seed: 8,
        ..Default::default()
    };
    let mut watch = Watch::default();
    let (_, log) = train(|_| Tiny::new(), &profile, &tc, &mut watch).unwrap();
    let formula = |t: usize| 0.999f64.powf(t as f64).max(0.005);
    let eps_bad = log
        .rows
        .iter()
        .filter(|r| r.epsilon != formula(r.episode))
        .count()
        + (0..20_000)
            .filter(|&t| tc.epsilon_at(t) != formula(t))
            .count();
    let pass =
        eps_bad == 0 && watch.max_buffer <= 1000 && watch.problems.is_empty() && watch.copies == 15;
    report(
        "epsilon, buffer and target schedule",
        pass,
        format!(
            "{eps_bad} epsilon mismatches, peak buffer {} episodes, {} target copies, {} target violations, {:.1}s",
            watch.max_buffer,
            watch.copies,
            watch.problems.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass, "{:?}", watch.problems);
}

// ---------------------------------------------------------------- Shapley

#[test]
fn shapley_efficiency() {
    let t0 = Instant::now();
    let d = desk();
    let groups = attribution_groups();
    assert!(groups.len() <= 12);
    let mut rng = stream_rng(5, &[0x5a9]);
    let (mut worst, mut exact_all) = (0.0f64, true);
    let (mut abs_err, mut abs_phi, mut terms) = (0.0, 0.0, 0usize);
    for i in 0..100u64 {
        let mut agent = AgentPolicy::new("rsrl", d.net.clone(), d.profile.clone());
        pitwall::env::run_race(&d.cfg, &mut agent, derive_seed(17, &[i]), false).unwrap();
        let prefix = agent.inputs().to_vec();
        let t = rng.random_range(0..prefix.len());
        let seed = derive_seed(23, &[i]);
        let exact = attribute(
            &d.net,
            &prefix,
            t,
            &d.profile.baseline,
            &groups,
            ShapleyMode::default(),
            seed,
        )
        .unwrap();
        exact_all &= exact.method == ShapleyMethod::Exact;
        // Q of the chosen action, recomputed from scratch
        let mut h = d.net.initial_hidden();
        let mut q = [0.0; 4];
        for x in &prefix[..=t] {
            let (qq, next) = d.net.forward(&x.0, &h).unwrap();
            q = qq;
            h = next;
        }
        let sum: f64 = exact.values.iter().map(|g| g.value).sum();
        worst = worst.max((sum + exact.base - q[exact.action.index()]).abs());

        let sampled = attribute(
            &d.net,
            &prefix,
            t,
            &d.profile.baseline,
            &groups,
            ShapleyMode::Sampled {
                budget: DEFAULT_BUDGET,
            },
            seed,
        )
        .unwrap();
        for (e, s) in exact.values.iter().zip(&sampled.values) {
            abs_err += (e.value - s.value).abs();
            abs_phi += e.value.abs();
            terms += 1;
        }
    }
    let phi_rel = abs_err / abs_phi.max(f64::MIN_POSITIVE);
    let sampled = attribution_fidelity(
        d.net.clone(),
        d.profile.clone(),
        &d.cfg,
        &groups,
        ShapleyMode::Sampled {
            budget: DEFAULT_BUDGET,
        },
        100,
        20,
        29,
    )
    .unwrap();
    let pass = exact_all && worst < 1e-6 && sampled.normalised <= 0.05;
    report(
        "Shapley efficiency",
        pass,
        format!(
            "{} groups exact on 100 timesteps, worst |sum + base - Q| {worst:.2e}; sampled ({DEFAULT_BUDGET} permutations) reconstruction MAE {:.3} = {:.3}% of max reward, per-group error vs exact {:.2}%; {:.1}s",
            groups.len(),
            sampled.mae,
            100.0 * sampled.normalised,
            100.0 * phi_rel,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ------------------------------------------------------------------ VIPER

#[test]
fn viper_fidelity() {
    let t0 = Instant::now();
    let v = desk_viper();
    let fidelity = v.heldout_fidelity();
    let curve = depth_curve(&v.dataset, &v.holdout, 1..=10, 5, 11);
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("depth_curve.csv");
    write_depth_csv(&curve, std::fs::File::create(&path).unwrap()).unwrap();
    let peak = curve
        .iter()
        .max_by(|a, b| a.heldout_accuracy.total_cmp(&b.heldout_accuracy))
        .unwrap();
    let shape: Vec<String> = curve
        .iter()
        .map(|r| format!("{}:{:.3}", r.depth, r.heldout_accuracy))
        .collect();
    let pass = fidelity >= 0.90;
    report(
        "VIPER fidelity",
        pass,
        format!(
            "held-out agreement {fidelity:.3} (depth {}, {} leaves, iteration {}); depth curve peak {:.3} at depth {} [{}] written to {}; {:.1}s",
            v.tree.depth(),
            v.tree.n_leaves(),
            v.best_iteration + 1,
            peak.heldout_accuracy,
            peak.depth,
            shape.join(" "),
            path.display(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------- counterfactuals

/// Minimum distance over target leaves, choosing each edit unit's value
/// from the original, every split threshold, just above every threshold,
/// and every category.
fn brute_force(tree: &DecisionTree, x: &FeatureVector, target: Action, norm: Norm) -> Option<f64> {
    let leaves = tree.leaves();
    let mut thresholds = vec![Vec::new(); FEATURE_LEN];
    for leaf in &leaves {
        for p in &leaf.predicates {
            thresholds[p.feature].push(p.threshold);
        }
    }
    let units = edit_units();
    let unit_cost = |idx: &[usize], vals: &[f64]| -> f64 {
        idx.iter()
            .zip(vals)
            .map(|(&i, &v)| match norm {
                Norm::L1 => (v - x.0[i]).abs(),
                Norm::L2 => (v - x.0[i]) * (v - x.0[i]),
            })
            .sum()
    };
    let mut best: Option<f64> = None;
    for leaf in leaves.iter().filter(|l| l.action == target) {
        let holds = |i: usize, v: f64| {
            leaf.predicates.iter().filter(|p| p.feature == i).all(|p| {
                if p.le {
                    v <= p.threshold
                } else {
                    v > p.threshold
                }
            })
        };
        let mut z = *x;
        let mut feasible = true;
        for unit in &units {
            let current: Vec<f64> = unit.indices.iter().map(|&i| x.0[i]).collect();
            let mut options = vec![current];
            let frozen = unit.indices.iter().any(|i| features::TRACK.contains(i));
            if !frozen {
                match unit.kind {
                    FeatureKind::Continuous => {
                        for &t in &thresholds[unit.indices[0]] {
                            options.push(vec![t]);
                            options.push(vec![t + 1e-6]);
                        }
                    }
                    FeatureKind::Boolean => {
                        options.push(vec![0.0]);
                        options.push(vec![1.0]);
                    }
                    FeatureKind::OneHot => {
                        for k in 0..unit.indices.len() {
                            options.push(
                                (0..unit.indices.len())
                                    .map(|j| if j == k { 1.0 } else { 0.0 })
                                    .collect(),
                            );
                        }
                    }
                }
            }
            let pick = options
                .into_iter()
                .filter(|vals| unit.indices.iter().zip(vals).all(|(&i, &v)| holds(i, v)))
                .min_by(|a, b| unit_cost(&unit.indices, a).total_cmp(&unit_cost(&unit.indices, b)));
            match pick {
                Some(vals) => {
                    for (&i, v) in unit.indices.iter().zip(vals) {
                        z.0[i] = v;
                    }
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible || tree.predict(&z) != target {
            continue;
        }
        let d = match norm {
            Norm::L1 => {
                x.0.iter()
                    .zip(&z.0)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            }
            Norm::L2 => {
                x.0.iter()
                    .zip(&z.0)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }
        };
        if best.is_none_or(|b| d < b) {
            best = Some(d);
        }
    }
    best
}

#[test]
fn counterfactual_correctness() {
    let t0 = Instant::now();
    let v = desk_viper();
    let tree = &v.tree;
    let mut rng = stream_rng(31, &[0xcf]);
    let mut problems = Vec::new();
    let (mut found, mut unreachable, mut units, mut dist) = (0usize, 0usize, 0usize, 0.0);
    for norm in [Norm::L1, Norm::L2] {
        let opts = CfOptions {
            norm,
            ..Default::default()
        };
        for k in 0..100 {
            let x = v.holdout[rng.random_range(0..v.holdout.len())].x;
            let now = tree.predict(&x);
            let others: Vec<Action> = Action::ALL.into_iter().filter(|&a| a != now).collect();
            let target = others[rng.random_range(0..others.len())];
            let oracle = brute_force(tree, &x, target, norm);
            match (counterfactual(tree, &x, target, &opts), oracle) {
                (Ok(cf), Some(d)) => {
                    if tree.predict(&cf.modified) != target {
                        problems.push(format!(
                            "{norm:?} #{k}: counterfactual not classified {target}"
                        ));
                    }
                    if cf.distance != d {
                        problems.push(format!(
                            "{norm:?} #{k}: distance {} vs brute force {d}",
                            cf.distance
                        ));
                    }
                    if norm == Norm::L1 {
                        found += 1;
                        units += cf.units_changed;
                        dist += cf.distance;
                    }
                }
                (Err(Error::NoReachableLeaf(_)), None) => unreachable += 1,
                (got, want) => {
                    problems.push(format!("{norm:?} #{k}: {got:?} vs brute force {want:?}"))
                }
            }
        }
    }
    let m = found.max(1) as f64;
    let pass = problems.is_empty();
    report(
        "counterfactual correctness",
        pass,
        format!(
            "200 queries (L1 and L2), {} disagreements, {unreachable} unreachable on both sides; L1 proximity {:.3} units, {:.3} distance (reference 1.630, 0.069); {:.1}s",
            problems.len(),
            units as f64 / m,
            dist / m,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass, "{problems:#?}");
}

// --------------------------------------------------------- strategy parser

#[test]
fn strategy_parser_suite() {
    let mut problems = Vec::new();
    let one = parse_strategy("S[10, 20]M").unwrap();
    if one.start != Compound::Soft
        || one.stops
            != vec![PlannedStop {
                window: PitWindow {
                    first: 10,
                    last: 20,
                },
                compound: Compound::Medium,
            }]
    {
        problems.push(format!("S[10, 20]M parsed as {one:?}"));
    }
    let three = parse_strategy("M[3]S[44]H[46]M").unwrap();
    let stops: Vec<(u32, u32, Compound)> = three
        .stops
        .iter()
        .map(|s| (s.window.first, s.window.last, s.compound))
        .collect();
    if three.start != Compound::Medium
        || stops
            != vec![
                (3, 3, Compound::Soft),
                (44, 44, Compound::Hard),
                (46, 46, Compound::Medium),
            ]
    {
        problems.push(format!("M[3]S[44]H[46]M parsed as {three:?}"));
    }
    for text in [
        "S[10, 20]M",
        "M[3]S[44]H[46]M",
        "H[30]M",
        "s[ 5 , 9 ]h",
        "M[1,2]S[3]H[40,50]S",
    ] {
        let plan = parse_strategy(text).unwrap();
        let printed = plan.to_string();
        match parse_strategy(&printed) {
            Ok(back) if back == plan && back.to_string() == printed => {}
            other => problems.push(format!("{text} -> {printed} -> {other:?}")),
        }
    }
    let bad = [
        ("", "empty"),
        ("S", "two stints"),
        ("S[10]S", "distinct"),
        ("S[20,10]M", "inverted"),
        ("S[]M", "empty pit window"),
        ("S[10,]M", "second lap"),
        ("X[10]M", "compound letter"),
        ("S[10]M[5]H", "increasing"),
        ("S[10,20]M[20]H", "increasing"),
        ("S[0]M", "from 1"),
        ("S[10M", "`]`"),
        ("S[10]", "compound letter"),
        ("S 10 M", "`[`"),
    ];
    for (text, why) in bad {
        match parse_strategy(text) {
            Err(Error::Strategy { reason, .. }) if reason.contains(why) => {}
            other => problems.push(format!("`{text}` gave {other:?}, expected a `{why}` error")),
        }
    }
    let pass = problems.is_empty();
    report(
        "strategy parser",
        pass,
        format!(
            "2 reference plans, 5 round trips, {} error cases, {} problems",
            bad.len(),
            problems.len()
        ),
    );
    assert!(pass, "{problems:#?}");
}

// --------------------------------------------------------- paired seeds

fn traced_race(
    cfg: &TrackConfig,
    policy: &mut dyn Policy,
    seed: u64,
) -> (usize, Vec<LapRecord>, Vec<LapDraws>) {
    let mut env = RaceEnv::new(cfg.clone()).with_trace();
    policy.begin_race(cfg, seed);
    let mut state = env.reset_with(seed, policy.starting_compound()).unwrap();
    loop {
        let tr = env.step(policy.act(&state)).unwrap();
        state = tr.state;
        if tr.terminal {
            break;
        }
    }
    (
        env.controlled(),
        env.records().to_vec(),
        env.draws().to_vec(),
    )
}

#[test]
fn paired_seed_fairness() {
    let cfg = TrackConfig::desk();
    let mut problems = Vec::new();
    let (mut laps, mut diverged) = (0usize, 0usize);
    for i in 0..100 {
        let seed = derive_seed(0xfa1, &[i]);
        let mut fixed = FixedPolicy::for_track(&cfg).unwrap();
        let mut other: Box<dyn Policy> = if i % 2 == 0 {
            Box::new(HeuristicPolicy::new(HeuristicParams::default()))
        } else {
            Box::new(RandomPolicy::default())
        };
        let (ca, ra, da) = traced_race(&cfg, &mut fixed, seed);
        let (cb, rb, db) = traced_race(&cfg, other.as_mut(), seed);
        let mine = |r: &[LapRecord], c: usize| -> Vec<(u32, Compound)> {
            r.iter()
                .filter(|x| x.car == c)
                .map(|x| (x.lap, x.compound))
                .collect()
        };
        if mine(&ra, ca) != mine(&rb, cb) {
            diverged += 1;
        }
        let common = da.len().min(db.len());
        laps += common;
        if ca != cb {
            problems.push(format!("seed {seed}: controlled car {ca} vs {cb}"));
        }
        if da[..common] != db[..common] {
            problems.push(format!("seed {seed}: draws differ"));
        }
        let opponents = |r: &[LapRecord],
                         c: usize|
         -> Vec<(u32, usize, Compound, u32, pitwall::sim::SafetyCar)> {
            r.iter()
                .filter(|x| x.car != c && (x.lap as usize) <= common)
                .map(|x| (x.lap, x.car, x.compound, x.tyre_age, x.sc_status))
                .collect()
        };
        let (oa, ob) = (opponents(&ra, ca), opponents(&rb, cb));
        let mut sa = oa.clone();
        let mut sb = ob.clone();
        sa.sort_by_key(|x| (x.0, x.1));
        sb.sort_by_key(|x| (x.0, x.1));
        if sa != sb {
            problems.push(format!(
                "seed {seed}: opponent tyre or safety car history differs"
            ));
        }
    }
    let pass = problems.is_empty() && diverged > 0;
    report(
        "paired-seed fairness",
        pass,
        format!("100 seed pairs, {laps} common laps, controlled car diverged in {diverged}, {} differences", problems.len()),
    );
    assert!(pass, "{problems:#?}");
}
