mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{oracle_race, race_fixture};
use streamforge::portfolio::{
    portfolio_savings, race_all, select_family_budget, simulate_race, Members, RecordIndex, SlotPolicy,
};
use streamforge::valid::pool_ceiling;

fn members() -> impl Strategy<Value = Members> {
    prop_oneof![(1usize..=5).prop_map(Members::Fixed), Just(Members::All)]
}

fn policy() -> impl Strategy<Value = SlotPolicy> {
    prop_oneof![Just(SlotPolicy::Reallocate), Just(SlotPolicy::Fixed)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn race_never_exceeds_baseline(seed: u64, families in 2usize..=6, k in 1usize..=6, m in members(), p in policy()) {
        let fx = race_fixture(&mut ChaCha8Rng::seed_from_u64(seed), families, false);
        let idx = RecordIndex::new(&fx.records);
        let plan = select_family_budget(&fx.cands, k, m).unwrap();
        for (inst, &tb) in &fx.baselines {
            let r = simulate_race(&plan, &idx, inst, tb, p).unwrap();
            prop_assert!(r.t_winner <= tb);
            prop_assert!(r.contributions.iter().all(|c| *c <= tb));
            prop_assert_eq!(r.winner.is_some(), r.t_winner < tb);
            let o = oracle_race(&plan, &fx.records, inst, tb, p);
            prop_assert_eq!((r.winner, r.t_winner), (o.winner, o.t_winner));
        }
    }

    #[test]
    fn more_families_never_hurt_wall_clock(seed: u64, families in 2usize..=6, m in members(), p in policy()) {
        let fx = race_fixture(&mut ChaCha8Rng::seed_from_u64(seed), families, false);
        let idx = RecordIndex::new(&fx.records);
        let ceiling = pool_ceiling(&fx.records, &fx.baselines);
        let mut last = f64::NEG_INFINITY;
        for k in 1..=families {
            let plan = select_family_budget(&fx.cands, k, m).unwrap();
            let s = portfolio_savings(&race_all(&plan, &idx, &fx.baselines, p).unwrap()).unwrap();
            prop_assert!(s.wall_clock >= last - 1e-12);
            prop_assert!(s.wall_clock <= ceiling + 1e-12);
            last = s.wall_clock;
        }
    }

    #[test]
    fn envelope_and_cpu_identity(seed: u64, families in 2usize..=6, k in 1usize..=6, m in members()) {
        let fx = race_fixture(&mut ChaCha8Rng::seed_from_u64(seed), families, false);
        let idx = RecordIndex::new(&fx.records);
        let plan = select_family_budget(&fx.cands, k, m).unwrap();
        let lanes = plan.lanes.len() as f64;
        prop_assert_eq!(plan.lanes.len(), k.min(families));
        for &tb in fx.baselines.values() {
            prop_assert!((plan.lane_budget(tb) - (lanes + 1.0) * tb).abs() < 1e-9);
            for lane in &plan.lanes {
                let used = plan.slot(lane, tb) * lane.members.len() as f64;
                prop_assert!(used <= tb + 1e-9);
            }
        }
        let s = portfolio_savings(&race_all(&plan, &idx, &fx.baselines, SlotPolicy::Reallocate).unwrap()).unwrap();
        prop_assert!((s.cpu - (1.0 - (lanes + 1.0) * (1.0 - s.wall_clock))).abs() < 1e-9);
    }
}
