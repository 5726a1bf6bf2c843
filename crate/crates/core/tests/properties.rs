use manipulation_lab::backtest::{
    run_strategy, Portfolio, PriceSeries, StrategyKind, StrategySpec, TradeStatus,
};
use manipulation_lab::experiments::{manipulation_count, ModelKind, Reporting, SweepParameter};
use manipulation_lab::grid::{build_pomdp_with_noise, Action, GrowthState, Scenario, TerminalMode};
use manipulation_lab::mdp::{finite_horizon_oracle, value_iteration, FiniteMdp};
use manipulation_lab::pomdp::{belief_update, observation_probability, Belief};
use proptest::prelude::*;

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

prop_compose! {
    fn random_mdp()(n in 2usize..6, m in 1usize..4, discount in 0.3f64..0.9)
        (transition in prop::collection::vec(prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n), m),
         reward in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, m), n),
         terminal in prop::option::of(-10.0f64..10.0),
         discount in Just(discount), n in Just(n), m in Just(m))
        -> FiniteMdp
    {
        // The last state is terminal when `terminal` is set; it then only
        // transitions to itself.
        let mut t: Vec<Vec<Vec<f64>>> = transition
            .into_iter()
            .map(|rows| rows.into_iter().map(normalized).collect())
            .collect();
        let mut terminals = vec![None; n];
        if let Some(v) = terminal {
            terminals[n - 1] = Some(v);
            for a in t.iter_mut() {
                a[n - 1] = (0..n).map(|j| if j == n - 1 { 1.0 } else { 0.0 }).collect();
            }
        }
        FiniteMdp::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..m).map(|i| format!("a{i}")).collect(),
            t,
            reward,
            terminals,
            discount,
        )
        .unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_iteration_matches_backward_induction(mdp in random_mdp()) {
        let vi = value_iteration(&mdp, 1e-10).unwrap();
        let fh = finite_horizon_oracle(&mdp, 400).unwrap();
        prop_assert!(vi.max_abs_diff(&fh) < 1e-6);
    }

    #[test]
    fn value_iteration_is_a_bellman_fixed_point(mdp in random_mdp()) {
        let v = value_iteration(&mdp, 1e-10).unwrap();
        for s in 0..mdp.n_states() {
            if mdp.is_terminal(s) { continue; }
            let best = (0..mdp.n_actions())
                .map(|a| mdp.reward(s, a) + mdp.discount()
                    * (0..mdp.n_states()).map(|t| mdp.prob(s, a, t) * v.get(t)).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((best - v.get(s)).abs() < 1e-8);
        }
    }

    #[test]
    fn belief_update_is_a_distribution(
        confusion in 0.0f64..0.5,
        weights in prop::collection::vec(0.0f64..1.0, 8),
        action in 0usize..9,
        toggle in 0.0f64..=1.0,
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-3);
        let scenario = Scenario::default().with_toggle_probability(toggle);
        let pomdp = build_pomdp_with_noise(&scenario, confusion).unwrap();
        let mut probs = normalized(weights);
        probs.extend([0.0, 0.0]);
        let b = Belief::new(probs).unwrap();
        let mut total = 0.0;
        for y in 0..pomdp.n_observations() {
            let py = observation_probability(&pomdp, &b, action, y);
            total += py;
            if py > 1e-12 {
                let post = belief_update(&pomdp, &b, action, y).unwrap();
                prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(post.probs().iter().all(|&p| p >= 0.0));
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_toml_round_trip(
        move_cost in -10.0f64..0.0,
        manip in 0.0f64..10.0,
        discount in 0.05f64..0.99,
        toggle in 0.0f64..=1.0,
        one_shot in any::<bool>(),
    ) {
        let mut s = Scenario::default().with_manipulation_cost(manip).with_toggle_probability(toggle);
        s.move_cost = move_cost;
        s.discount = discount;
        if one_shot { s.terminal_mode = TerminalMode::OneShot; }
        prop_assert_eq!(Scenario::from_toml_str(&s.to_toml_string()).unwrap(), s);
    }

    #[test]
    fn tie_sets_never_empty_and_manipulation_fades_with_cost(a in 0.0f64..8.0, b in 0.0f64..8.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let base = Scenario::default();
        let at_lo = manipulation_count(ModelKind::Mdp, SweepParameter::ManipCost, lo, &base, 1e-6, Reporting::Uniform).unwrap();
        let at_hi = manipulation_count(ModelKind::Mdp, SweepParameter::ManipCost, hi, &base, 1e-6, Reporting::Uniform).unwrap();
        prop_assert!(at_lo >= at_hi, "count({lo})={at_lo} < count({hi})={at_hi}");
    }
}

prop_compose! {
    fn random_series()(len in 2usize..60)
        (a in prop::collection::vec(1.0f64..1000.0, len), b in prop::collection::vec(1.0f64..1000.0, len))
        -> PriceSeries
    {
        PriceSeries::new(a, b).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn accounting_identities(
        series in random_series(),
        kind in prop::sample::select(StrategyKind::ALL.to_vec()),
        size in 1u64..5_000,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..6),
        impact in 0.0f64..500.0,
        cash in 0.0f64..2_000_000.0,
    ) {
        let mut spec = StrategySpec::default_for(kind);
        if kind != StrategyKind::BuyAndHold {
            spec.trade_ticks = picks.iter().map(|i| i.index(series.len())).collect();
            spec.trade_size = size;
        }
        if kind == StrategyKind::Spoofing { spec.impact_bps = impact; }
        let initial = Portfolio::with_capital(&series, cash + 10.0 * (series.price_a(0) + series.price_b(0)), 10, 10).unwrap();
        let r = run_strategy(&series, &spec, initial).unwrap();
        for s in &r.snapshots {
            prop_assert!((s.capital - (s.market_value + s.cash)).abs() <= 1e-9);
            prop_assert!(s.cash >= -1e-9);
        }
        prop_assert_eq!(r.net_profit, r.growth - r.total_fees);
        let fee_sum: f64 = r.trade_log.iter().map(|t| t.fee).sum();
        prop_assert!((fee_sum - r.total_fees).abs() <= 1e-9 * (1.0 + r.total_fees));
        prop_assert!(r.trade_log.iter().filter(|t| t.status == TradeStatus::Skipped).all(|t| t.fee == 0.0));
    }

    #[test]
    fn zero_impact_spoofing_equals_honest(series in random_series(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..5)) {
        let ticks: Vec<usize> = picks.iter().map(|i| i.index(series.len())).collect();
        let mut honest = StrategySpec::default_for(StrategyKind::Honest);
        honest.trade_ticks = ticks.clone();
        let mut spoof = StrategySpec::default_for(StrategyKind::Spoofing);
        spoof.trade_ticks = ticks;
        spoof.trade_size = honest.trade_size;
        spoof.impact_bps = 0.0;
        let initial = Portfolio::default_for(&series).unwrap();
        let h = run_strategy(&series, &honest, initial).unwrap();
        let s = run_strategy(&series, &spoof, initial).unwrap();
        prop_assert_eq!(h.net_profit, s.net_profit);
        prop_assert_eq!(h.snapshots, s.snapshots);
        prop_assert_eq!(h.trade_log, s.trade_log);
    }

    #[test]
    fn buy_and_hold_earns_appreciation(start in 1.0f64..100.0, steps in prop::collection::vec(0.01f64..5.0, 1..40)) {
        let mut a = vec![start];
        for d in &steps { a.push(a.last().unwrap() + d); }
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let series = PriceSeries::new(a.clone(), b.clone()).unwrap();
        let initial = Portfolio::default_for(&series).unwrap();
        let r = run_strategy(&series, &StrategySpec::default_for(StrategyKind::BuyAndHold), initial).unwrap();
        let t = a.len() - 1;
        let appreciation = 1000.0 * ((a[t] - a[0]) + (b[t] - b[0]));
        prop_assert!((r.net_profit - appreciation).abs() < 1e-6);
        prop_assert_eq!(r.total_fees, 0.0);
    }
}

#[test]
fn flat_prices_cost_exactly_the_fees() {
    let series = PriceSeries::new(vec![50.0; 93], vec![80.0; 93]).unwrap();
    let initial = Portfolio::default_for(&series).unwrap();
    for kind in StrategyKind::ALL {
        let mut spec = StrategySpec::default_for(kind);
        // Impact is a price improvement, so only zero impact leaves growth at zero.
        spec.impact_bps = 0.0;
        let r = run_strategy(&series, &spec, initial).unwrap();
        assert!(r.growth.abs() < 1e-6, "{kind}");
        assert!((r.net_profit + r.total_fees).abs() < 1e-6, "{kind}");
    }
}

#[test]
fn spoofing_impact_is_the_only_edge_on_flat_prices() {
    let series = PriceSeries::new(vec![50.0; 93], vec![80.0; 93]).unwrap();
    let spec = StrategySpec::default_for(StrategyKind::Spoofing);
    let r = run_strategy(&series, &spec, Portfolio::default_for(&series).unwrap()).unwrap();
    let filled: f64 = r
        .trade_log
        .iter()
        .map(|t| t.quantity as f64 * (if t.price < 60.0 { 50.0 } else { 80.0 }))
        .sum();
    assert!((r.growth - filled * spec.impact_bps / 1e4).abs() < 1e-6);
}

#[test]
fn terminal_states_have_no_actions() {
    let sol = manipulation_lab::experiments::solve_mdp(&Scenario::default(), 1e-6).unwrap();
    assert!(sol.actions(GrowthState::Goal1).is_empty());
    assert!(GrowthState::ALL
        .iter()
        .filter(|s| !s.is_terminal())
        .all(|&s| !sol.actions(s).is_empty()));
    assert_eq!(Action::ALL.len(), 9);
}
