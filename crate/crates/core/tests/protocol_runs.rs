use beepmis::channel::{Channel, RunOptions};
use beepmis::coins::{CoinScript, CoinSource};
use beepmis::experiment::{self, RunConfig};
use beepmis::mac::{MacAdapter, MacParams, Scheduler, SchedulerMode};
use beepmis::protocol::beep_mis;
use beepmis::verifier::{
    check_independence, check_local_correctness, verify, TemporalViolation, Verdict,
};
use beepmis::{graph, ProtocolParams, Verbosity};
use proptest::prelude::*;

fn params(g: &beepmis::Graph, interval: u64) -> ProtocolParams {
    ProtocolParams::new(0.2, g.max_degree()).with_interval(interval)
}

#[test]
fn adjacent_ins_always_join_in_the_same_slot() {
    // Scripted always-min nodes collide, so violations do occur here.
    let mut seen = 0;
    for seed in 0..20 {
        let g = graph::erdos_renyi(30, 0.2, seed).unwrap();
        let coins = CoinSource::new(seed).with_script(0..6, CoinScript::AlwaysMin);
        let trace = beep_mis::run(&g, &params(&g, 12), &coins, Verbosity::Decisions).unwrap();
        let verdict = Verdict::from_trace(&trace).unwrap();
        for (u, v) in check_independence(&g, &verdict) {
            seen += 1;
            assert_eq!(
                verdict.nodes[u].slot, verdict.nodes[v].slot,
                "{u}-{v} seed {seed}"
            );
        }
        for t in check_local_correctness(&g, &trace).unwrap() {
            assert!(
                matches!(t, TemporalViolation::ConflictingIn { .. }),
                "{t:?}"
            );
        }
    }
    assert!(seen > 0);
}

#[test]
fn honest_runs_are_clean_at_moderate_interval() {
    for seed in 0..10 {
        let g = graph::erdos_renyi(40, 0.1, seed).unwrap();
        let p = params(&g, 60);
        let trace = beep_mis::run(&g, &p, &CoinSource::new(seed), Verbosity::Decisions).unwrap();
        let report = verify(&g, &trace, p.slot_budget(), p.round_len()).unwrap();
        assert!(report.is_clean(), "seed {seed}: {report:?}");
    }
}

#[test]
fn parallel_and_sequential_batches_agree() {
    let c = RunConfig::from_json(
        r#"{"graph": {"kind": "random_regular", "n": 40, "degree": 6, "seed": 1},
            "resample_graph": true, "protocol": "beep", "params": {"eps": 0.2},
            "interval": 30, "trials": 8, "seed": 4, "verbosity": "intervals"}"#,
    )
    .unwrap();
    let a = experiment::aggregate(&c, &experiment::run_trials(&c));
    let b = experiment::aggregate(&c, &experiment::run_trials_sequential(&c));
    assert_eq!(a, b);
    assert!(a.good_nodes.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mac_adapter_reproduces_native_runs(
        seed in any::<u64>(),
        n in 2usize..24,
        f_prog in 1u64..6,
        random in any::<bool>(),
    ) {
        let g = graph::erdos_renyi(n, 0.25, seed).unwrap();
        let p = params(&g, 12);
        let coins = CoinSource::new(seed);
        let opts = RunOptions::new(p.max_slots(), Verbosity::Full);
        let native = beep_mis::run_on(&mut Channel::new(&g), &p, &coins, &opts).unwrap();
        let mode = if random { SchedulerMode::Random } else { SchedulerMode::Adversarial };
        let mut adapter = MacAdapter::new(&g, MacParams::new(f_prog, f_prog).unwrap(), Scheduler::new(mode, seed));
        let over = beep_mis::run_on(&mut adapter, &p, &coins, &opts).unwrap();
        prop_assert_eq!(over.to_jsonl(), native.to_jsonl());
        prop_assert_eq!(adapter.elapsed(), f_prog * native.header.slots_run);
    }
}
