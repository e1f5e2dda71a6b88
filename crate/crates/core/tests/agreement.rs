use onebit_swap::harness::{explore_stats, InputPattern};
use onebit_swap::history::{decode_records, encode_records, records_for};
use onebit_swap::lin_check::{brute_force_linearizable, verify_records};
use onebit_swap::model::{run_random, ModelConfig, ProcessProgram};
use onebit_swap::{Backend, Bit, History};
use proptest::prelude::*;

fn programs(inputs: &[Vec<Bit>]) -> Vec<ProcessProgram> {
    inputs.iter().map(|i| ProcessProgram::swaps(i)).collect()
}

#[test]
fn exhaustive_tree_three_by_one() {
    let cfg = ModelConfig {
        backend: Backend::RegTree { capacity: 4 },
        ..ModelConfig::with_init(Bit::Zero)
    };
    let stats = explore_stats(
        &programs(&InputPattern::Alternating.inputs(3, 1, 0)),
        &cfg,
        false,
    )
    .unwrap();
    assert!(stats.passed(), "{:?}", stats.first_failure);
    assert!(stats.schedules > 0);
}

#[test]
fn sequential_and_parallel_exploration_agree() {
    let p = programs(&InputPattern::Mixed.inputs(3, 1, 0));
    let cfg = ModelConfig::with_init(Bit::One);
    assert_eq!(
        explore_stats(&p, &cfg, false).unwrap(),
        explore_stats(&p, &cfg, true).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_executions_pass_both_checkers(
        inputs in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..=3), 1..=3),
        init in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let inputs: Vec<Vec<Bit>> = inputs.iter().map(|v| v.iter().map(|b| Bit::from(*b)).collect()).collect();
        let cfg = ModelConfig { max_steps: usize::MAX, ..ModelConfig::with_init(Bit::from(init)) };
        let o = run_random(&programs(&inputs), seed, &cfg).unwrap();
        prop_assert!(brute_force_linearizable(&o.history).unwrap().is_linearizable());
        prop_assert!(verify_records(&o.records, &o.history).unwrap().is_pass());

        let history = History::decode(&o.history.encode()).unwrap();
        let lines = decode_records(&encode_records(&o.records)).unwrap();
        let records = records_for(&history, &lines).unwrap();
        prop_assert!(verify_records(&records, &history).unwrap().is_pass());
    }
}
