use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{graph_seed, scheduler_seed, trial_seed, ProtocolKind, RunConfig};
use super::ExperimentError;
use crate::channel::{Channel, RunOptions};
use crate::coins::CoinSource;
use crate::graph::{Graph, NodeId};
use crate::mac::{MacAdapter, Scheduler};
use crate::protocol::{beep_mis, local_mis, ProtocolParams};
use crate::trace::{Trace, Verbosity};
use crate::verifier::{
    good_node_stats, quantile, verify, GoodNodeReport, Outcome, VerificationReport,
};

/// Version stamped on every result file.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything one trial produced.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub graph: Graph,
    /// Parameters after the interval override and degree resolution.
    pub params: ProtocolParams,
    /// Kept only when the caller asked for it.
    pub trace: Option<Trace>,
    pub report: VerificationReport,
    pub good_nodes: Option<GoodNodeReport>,
    /// Target node outcome and decision time, when an adversary names one.
    pub target: Option<(NodeId, Outcome, Option<u64>)>,
    /// Total MAC time for beep-over-mac runs.
    pub mac_time: Option<u64>,
    pub slots_run: u64,
    /// Budget the termination statistics were measured against.
    pub budget: u64,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: u64,
    pub seed: u64,
    pub result: Result<TrialResult, String>,
}

/// Runs trial `index` of `config`.
pub fn run_trial(config: &RunConfig, index: u64) -> Result<TrialResult, ExperimentError> {
    run_with_seed(config, index, trial_seed(config.seed, index))
}

/// Runs one trial from an explicit seed; the trace is always kept.
pub fn run_with_seed(
    config: &RunConfig,
    index: u64,
    seed: u64,
) -> Result<TrialResult, ExperimentError> {
    let g = config
        .graph
        .build(config.resample_graph.then(|| graph_seed(seed)))?;
    let mut params = config.effective_params();
    if params.delta_bound == 0 {
        params.delta_bound = g.max_degree();
    }
    let mut coins = CoinSource::new(seed);
    let mut opts = RunOptions::new(params.max_slots(), config.verbosity);
    let mut target = None;
    if let Some(adv) = &config.adversary {
        coins = adv.apply(&g, coins)?;
        target = adv.target();
        if let Some(t) = target {
            if t >= g.node_count() {
                return Err(ExperimentError::config(
                    "adversary.target",
                    format!("node {t} out of range"),
                ));
            }
            if adv.stop_after_target {
                opts.stop_when_decided = Some(vec![t]);
            }
        }
    }

    let mut mac_time = None;
    let (trace, budget, bucket) = match config.protocol {
        ProtocolKind::Beep => {
            let trace = beep_mis::run_on(&mut Channel::new(&g), &params, &coins, &opts)?;
            (trace, params.slot_budget(), params.round_len())
        }
        ProtocolKind::BeepOverMac => {
            let mac = config
                .mac
                .ok_or_else(|| ExperimentError::config("mac", "required for beep-over-mac"))?;
            let scheduler = Scheduler::new(config.scheduler, scheduler_seed(seed));
            let mut adapter = MacAdapter::new(&g, mac, scheduler);
            let trace = beep_mis::run_on(&mut adapter, &params, &coins, &opts)?;
            mac_time = Some(adapter.elapsed());
            (trace, params.slot_budget(), params.round_len())
        }
        ProtocolKind::Local => {
            let cap = params
                .max_rounds
                .unwrap_or_else(|| params.local_rounds().saturating_mul(10));
            let trace = local_mis::run(&g, cap, &coins, config.verbosity)?;
            (trace, params.local_rounds(), 1)
        }
    };

    let report = verify(&g, &trace, budget, bucket)?;
    let good_nodes = match (config.protocol, config.verbosity) {
        (ProtocolKind::Local, _) | (_, Verbosity::Decisions) => None,
        _ => Some(good_node_stats(&g, &trace, &params)?),
    };
    let target = target.map(|t| {
        let v = report.verdict.nodes[t];
        (t, v.outcome, v.slot)
    });
    Ok(TrialResult {
        trial: index,
        seed,
        slots_run: trace.header.slots_run,
        graph: g,
        params,
        trace: Some(trace),
        report,
        good_nodes,
        target,
        mac_time,
        budget,
    })
}

fn outcome(config: &RunConfig, index: u64) -> TrialOutcome {
    let seed = trial_seed(config.seed, index);
    let result = run_with_seed(config, index, seed)
        .map(|mut r| {
            if !config.output.traces {
                r.trace = None;
            }
            r
        })
        .map_err(|e| e.to_string());
    TrialOutcome {
        trial: index,
        seed,
        result,
    }
}

/// All trials on the calling thread, in index order.
pub fn run_trials_sequential(config: &RunConfig) -> Vec<TrialOutcome> {
    (0..config.trials).map(|t| outcome(config, t)).collect()
}

/// All trials, spread over a thread pool. Results come back in index order
/// and are identical to the sequential path.
#[cfg(feature = "parallel")]
pub fn run_trials(config: &RunConfig) -> Vec<TrialOutcome> {
    use rayon::prelude::*;
    let go = || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| outcome(config, t))
            .collect()
    };
    match config.workers {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(go),
            Err(_) => go(),
        },
        None => go(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_trials(config: &RunConfig) -> Vec<TrialOutcome> {
    run_trials_sequential(config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial: u64,
    pub trial_seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodSummary {
    pub evaluated: u64,
    pub good: u64,
    pub frequency: f64,
    pub lemma_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub node: NodeId,
    pub trials: usize,
    pub decided_within_budget: usize,
    pub rate: f64,
    /// Median decision time of the target over trials where it decided.
    pub median_slot: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacSummary {
    pub f_prog: u64,
    pub f_ack: u64,
    pub slots_total: u64,
    pub mac_time_total: u64,
}

/// Batch-level statistics, written as `aggregate.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub config_hash: String,
    pub protocol: ProtocolKind,
    pub eps: f64,
    /// Largest degree bound used by any trial.
    pub delta: usize,
    pub interval: u64,
    pub rounds: u64,
    pub budget: u64,
    pub trials: u64,
    pub completed: usize,
    pub failed: Vec<FailedTrial>,
    pub nodes: usize,
    /// Adjacent IN pairs, summed over trials.
    pub independence_violations: usize,
    pub trials_with_independence_violation: usize,
    /// `trials_with_independence_violation / completed`.
    pub violation_rate: f64,
    pub uncovered: usize,
    pub undecided: usize,
    pub temporal_violations: usize,
    pub trials_with_violation: usize,
    /// Pooled over every decided node of every trial.
    pub median_decision_slot: Option<u64>,
    pub p90_decision_slot: Option<u64>,
    pub max_decision_slot: Option<u64>,
    pub fraction_within_budget: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub good_nodes: Option<GoodSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac: Option<MacSummary>,
}

pub fn aggregate(config: &RunConfig, outcomes: &[TrialOutcome]) -> Aggregate {
    let base = config.effective_params();
    let mut agg = Aggregate {
        schema_version: SCHEMA_VERSION,
        config_hash: config.hash(),
        protocol: config.protocol,
        eps: base.eps,
        delta: base.delta_bound,
        interval: base.interval_len(),
        rounds: base.rounds(),
        budget: 0,
        trials: config.trials,
        completed: 0,
        failed: Vec::new(),
        nodes: 0,
        independence_violations: 0,
        trials_with_independence_violation: 0,
        violation_rate: 0.0,
        uncovered: 0,
        undecided: 0,
        temporal_violations: 0,
        trials_with_violation: 0,
        median_decision_slot: None,
        p90_decision_slot: None,
        max_decision_slot: None,
        fraction_within_budget: 0.0,
        good_nodes: None,
        target: None,
        mac: None,
    };
    let mut slots = Vec::new();
    let mut within = 0usize;
    let mut good: Option<(u64, u64, f64)> = None;
    let mut target: Option<TargetSummary> = None;
    let mut target_slots = Vec::new();
    let mut mac_time = 0u64;
    let mut mac_slots = 0u64;

    for o in outcomes {
        let r = match &o.result {
            Ok(r) => r,
            Err(e) => {
                agg.failed.push(FailedTrial {
                    trial: o.trial,
                    trial_seed: o.seed,
                    error: e.clone(),
                });
                continue;
            }
        };
        agg.completed += 1;
        agg.delta = agg.delta.max(r.params.delta_bound);
        agg.rounds = r.params.rounds();
        agg.budget = r.budget;
        let rep = &r.report;
        agg.nodes += rep.verdict.nodes.len();
        agg.independence_violations += rep.independence.len();
        agg.trials_with_independence_violation += usize::from(!rep.independence.is_empty());
        agg.uncovered += rep.maximality.uncovered.len();
        agg.undecided += rep.maximality.undecided.len();
        agg.temporal_violations += rep.temporal.len();
        agg.trials_with_violation += usize::from(!rep.is_clean());
        within += rep.termination.within_budget;
        slots.extend(rep.verdict.nodes.iter().filter_map(|v| v.slot));
        if let Some(gn) = &r.good_nodes {
            let e = good.get_or_insert((0, 0, gn.lemma_floor));
            e.0 += gn.evaluated;
            e.1 += gn.good;
        }
        if let Some((node, outcome, slot)) = r.target {
            let t = target.get_or_insert(TargetSummary {
                node,
                trials: 0,
                decided_within_budget: 0,
                rate: 0.0,
                median_slot: None,
            });
            target_slots.extend(slot);
            t.trials += 1;
            let decided = outcome != Outcome::Undecided && slot.is_some_and(|s| s <= r.budget);
            t.decided_within_budget += usize::from(decided);
        }
        if let Some(m) = r.mac_time {
            mac_time += m;
            mac_slots += r.slots_run;
        }
    }

    if agg.completed > 0 {
        agg.violation_rate = agg.trials_with_independence_violation as f64 / agg.completed as f64;
    }
    if agg.nodes > 0 {
        agg.fraction_within_budget = within as f64 / agg.nodes as f64;
    }
    slots.sort_unstable();
    agg.median_decision_slot = quantile(&slots, 0.5);
    agg.p90_decision_slot = quantile(&slots, 0.9);
    agg.max_decision_slot = slots.last().copied();
    agg.good_nodes = good.map(|(evaluated, good, lemma_floor)| GoodSummary {
        evaluated,
        good,
        frequency: if evaluated == 0 {
            0.0
        } else {
            good as f64 / evaluated as f64
        },
        lemma_floor,
    });
    agg.target = target.map(|mut t| {
        t.rate = t.decided_within_budget as f64 / t.trials as f64;
        target_slots.sort_unstable();
        t.median_slot = quantile(&target_slots, 0.5);
        t
    });
    if let (Some(mac), ProtocolKind::BeepOverMac) = (config.mac, config.protocol) {
        agg.mac = Some(MacSummary {
            f_prog: mac.f_prog,
            f_ack: mac.f_ack,
            slots_total: mac_slots,
            mac_time_total: mac_time,
        });
    }
    agg
}

/// One line of `verdicts.csv`. Failed trials get a single row with
/// `decision = "error"` and no node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub trial: u64,
    pub trial_seed: u64,
    pub node: Option<NodeId>,
    pub decision: String,
    pub decision_slot: Option<u64>,
}

fn verdict_rows(hash: &str, outcomes: &[TrialOutcome]) -> Vec<VerdictRow> {
    let mut rows = Vec::new();
    for o in outcomes {
        let row = |node, decision: &str, decision_slot| VerdictRow {
            schema_version: SCHEMA_VERSION,
            config_hash: hash.to_string(),
            trial: o.trial,
            trial_seed: o.seed,
            node,
            decision: decision.to_string(),
            decision_slot,
        };
        match &o.result {
            Ok(r) => {
                for (v, nv) in r.report.verdict.nodes.iter().enumerate() {
                    let d = match nv.outcome {
                        Outcome::In => "in",
                        Outcome::Out => "out",
                        Outcome::Undecided => "undecided",
                    };
                    rows.push(row(Some(v), d, nv.slot));
                }
            }
            Err(_) => rows.push(row(None, "error", None)),
        }
    }
    rows
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `verdicts.csv`, `aggregate.json` and, when traces are enabled,
/// per-trial trace, graph and report files under `traces/`.
pub fn write_outputs(
    dir: &Path,
    config: &RunConfig,
    outcomes: &[TrialOutcome],
    agg: &Aggregate,
) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in verdict_rows(&agg.config_hash, outcomes) {
        csv.serialize(row)?;
    }
    let bytes = csv.into_inner().map_err(|e| ExperimentError::Io {
        path: dir.join("verdicts.csv"),
        source: e.into_error(),
    })?;
    write_file(&dir.join("verdicts.csv"), &bytes)?;
    write_file(
        &dir.join("aggregate.json"),
        serde_json::to_string_pretty(agg)?.as_bytes(),
    )?;
    write_file(
        &dir.join("config.json"),
        serde_json::to_string_pretty(config)?.as_bytes(),
    )?;

    if config.output.traces {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir).map_err(|source| ExperimentError::Io {
            path: tdir.clone(),
            source,
        })?;
        for o in outcomes {
            let Ok(r) = &o.result else { continue };
            let stem = format!("trial-{:05}", o.trial);
            if let Some(trace) = &r.trace {
                write_file(
                    &tdir.join(format!("{stem}.jsonl")),
                    trace.to_jsonl().as_bytes(),
                )?;
            }
            write_file(
                &tdir.join(format!("{stem}.graph.txt")),
                r.graph.to_edge_list().as_bytes(),
            )?;
            write_file(
                &tdir.join(format!("{stem}.report.json")),
                serde_json::to_string_pretty(&r.report)?.as_bytes(),
            )?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub aggregate: Aggregate,
    pub outcomes: Vec<TrialOutcome>,
    pub output_dir: Option<PathBuf>,
}

/// Validates, runs every trial and writes the configured outputs.
pub fn run_batch(config: &RunConfig) -> Result<BatchResult, ExperimentError> {
    config.validate()?;
    let outcomes = run_trials(config);
    let aggregate = aggregate(config, &outcomes);
    if let Some(dir) = &config.output.dir {
        write_outputs(dir, config, &outcomes, &aggregate)?;
    }
    Ok(BatchResult {
        aggregate,
        outcomes,
        output_dir: config.output.dir.clone(),
    })
}
