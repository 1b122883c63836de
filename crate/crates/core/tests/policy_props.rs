use eiie::marketdata::{generate_synthetic_market, AssetSpec, GlobalPriceMatrix, MarketSpec, Regime};
use eiie::policy::{build_network, EiieTopologySpec, PolicyNetwork, TopologyKind};
use eiie::portfolio::{check_simplex, PortfolioVector};
use proptest::prelude::*;
use serde_json::json;

const KINDS: [TopologyKind; 3] = [TopologyKind::Cnn, TopologyKind::Rnn, TopologyKind::Lstm];

fn market(m: usize, seed: u64) -> GlobalPriceMatrix {
    let assets = (0..m)
        .map(|i| AssetSpec {
            id: format!("A{i}"),
            initial_price: 0.001 * (i + 1) as f64,
            drift: 0.0,
            volatility: 0.03,
            regime: Regime::RandomWalk,
            volume: 100.0,
        })
        .collect();
    generate_synthetic_market(&MarketSpec {
        start: 1_500_000_000 - 1_500_000_000 % 1800,
        period: 1800,
        periods: 60,
        seed,
        assets,
    })
    .unwrap()
}

fn prev_weights(m: usize, seed: u64) -> PortfolioVector {
    let raw: Vec<f64> = (0..=m).map(|i| 1.0 + ((seed >> (3 * i)) & 7) as f64).collect();
    PortfolioVector::normalized(raw).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_lie_on_the_simplex(kind in 0usize..3, m in 1usize..6, seed in any::<u64>(), t in 20usize..60) {
        let net = build_network(&EiieTopologySpec::default_for(KINDS[kind]), m, 12, 3, seed).unwrap();
        let matrix = market(m, seed);
        let w = net.decide(&matrix.price_tensor(t, 12, 3).unwrap(), &prev_weights(m, seed)).unwrap();
        prop_assert_eq!(w.len(), m + 1);
        prop_assert!(check_simplex(w.as_slice()).is_ok());
    }

    #[test]
    fn decisions_ignore_the_price_scale(kind in 0usize..3, seed in any::<u64>(), k in 0.001..1000.0f64) {
        let net = build_network(&EiieTopologySpec::default_for(KINDS[kind]), 3, 10, 3, seed).unwrap();
        let matrix = market(3, seed);
        let scaled = matrix.scaled_asset(1, k);
        let prev = prev_weights(3, seed);
        let a = net.decide(&matrix.price_tensor(40, 10, 3).unwrap(), &prev).unwrap();
        let b = net.decide(&scaled.price_tensor(40, 10, 3).unwrap(), &prev).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_assets_relabels_weights(kind in 0usize..3, seed in any::<u64>(), rot in 1usize..4) {
        let m = 4;
        let net = build_network(&EiieTopologySpec::default_for(KINDS[kind]), m, 10, 3, seed).unwrap();
        let matrix = market(m, seed);
        let perm: Vec<usize> = (0..m).map(|i| (i + rot) % m).collect();
        let permuted = matrix.permuted_assets(&perm);
        let prev = prev_weights(m, seed);
        let mut pprev = vec![prev.as_slice()[0]];
        pprev.extend(perm.iter().map(|&i| prev.as_slice()[i + 1]));
        let a = net.decide(&matrix.price_tensor(50, 10, 3).unwrap(), &prev).unwrap();
        let b = net.decide(&permuted.price_tensor(50, 10, 3).unwrap(), &PortfolioVector::new(pprev).unwrap()).unwrap();
        prop_assert_eq!(a.as_slice()[0], b.as_slice()[0]);
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(b.as_slice()[new + 1], a.as_slice()[old + 1]);
        }
    }
}

#[test]
fn saved_networks_decide_identically() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = market(3, 9);
    for kind in KINDS {
        let net = build_network(&EiieTopologySpec::default_for(kind), 3, 8, 2, 4).unwrap();
        let path = dir.path().join(format!("{kind}.bin"));
        net.save(&path).unwrap();
        let back = PolicyNetwork::load(&path).unwrap();
        let x = matrix.price_tensor(30, 8, 2).unwrap();
        let prev = PortfolioVector::uniform(3);
        assert_eq!(net.decide(&x, &prev).unwrap(), back.decide(&x, &prev).unwrap());
        assert_eq!(back.seed(), 4);
        assert_eq!(back.kind(), kind);
    }
}

#[test]
fn same_seed_same_weights() {
    let spec = EiieTopologySpec::default_cnn();
    let a = build_network(&spec, 5, 31, 3, 17).unwrap();
    let b = build_network(&spec, 5, 31, 3, 17).unwrap();
    let c = build_network(&spec, 5, 31, 3, 18).unwrap();
    assert_eq!(a.params().tensors(), b.params().tensors());
    assert_ne!(a.params().tensors(), c.params().tensors());
}

#[test]
fn layer_lists_are_validated() {
    let conv = json!({"type": "ConvLayer", "filter_shape": [1, 2], "filter_number": 3, "regularizer": null, "weight_decay": 0.0});
    let out = json!({"type": "EIIE_Output_WithW", "regularizer": "L2", "weight_decay": 5e-8});
    let rnn = json!({"type": "EIIE_RNN", "neuron_number": 20, "dropouts": null, "regularizer": null, "weight_decay": 0.0});
    assert!(EiieTopologySpec::from_json(&[conv.clone(), out.clone()]).is_ok());
    assert_eq!(EiieTopologySpec::from_json(&[rnn.clone(), out.clone()]).unwrap().kind, TopologyKind::Rnn);
    let err = EiieTopologySpec::from_json(&[json!({"type": "Pooling"}), out.clone()]).unwrap_err();
    assert!(err.to_string().contains("layers[0]"), "{err}");
    assert!(EiieTopologySpec::from_json(&[conv.clone()]).is_err());
    assert!(EiieTopologySpec::from_json(&[out.clone(), conv]).is_err());
    assert!(EiieTopologySpec::from_json(&[rnn.clone(), rnn, out]).is_err());
}
