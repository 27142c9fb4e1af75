use urban_causal::dataset::presets::Preset;
use urban_causal::dataset::standardize;
use urban_causal::discovery::{exhaustive_search, train_discovery, TrainConfig};
use urban_causal::effects::{estimate_all_effects, significance_matrix, EffectsOptions};

#[test]
fn discovered_chain_feeds_effect_estimation() {
    let spec = Preset::Chain3.spec();
    let table = standardize(&spec.generate(1000, 11).unwrap()).unwrap();
    let cfg = TrainConfig {
        episodes: 300,
        seed: 2,
        ..Default::default()
    };
    let found = train_discovery(&table, &cfg).unwrap();
    let best = exhaustive_search(&table).unwrap();
    assert!(found.best_graph.is_acyclic());
    assert!(found.best_score >= best.score - 1e-9);
    assert_eq!(found.reward_history.len(), 300);

    // The chain and its reversals are score-equivalent; either way both
    // edges carry a strong effect.
    let report = estimate_all_effects(&best.graph, &table, &EffectsOptions::default()).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.results.len(), best.graph.edge_count());
    assert!(report.results.iter().all(|r| r.significant && r.ate > 0.0));
    let sig = significance_matrix(&table.names(), &report.results);
    assert_eq!(sig.iter().filter(|&&v| v == 1).count(), 2);
}

#[test]
fn true_graph_effects_on_confounded_data() {
    let spec = Preset::ConfoundedTriple.spec();
    let table = spec.generate(2000, 3).unwrap();
    let report = estimate_all_effects(&spec.graph, &table, &EffectsOptions::default()).unwrap();
    let ty = report.results.iter().find(|r| r.treatment == "T" && r.outcome == "Y").unwrap();
    assert!(ty.confounded && ty.n_pairs > 0);
    let xt = report.results.iter().find(|r| r.treatment == "X" && r.outcome == "T").unwrap();
    assert!(!xt.confounded && (xt.ate - 3.0).abs() < 0.2);
    assert_eq!(report.balance.len(), 1);
    assert_eq!(report.balance[0].treatment, "T");
}
