use eiie::backtest::{read_records_csv, replay, run_backtest, write_records_csv, BacktestRecord};
use eiie::baselines::{create_strategy, StrategyParams};
use eiie::marketdata::GlobalPriceMatrix;
use eiie::metrics::{compute_fapv, compute_mdd, count_signed_buckets, max_drawdown, sharpe_of, Bucket, PerformanceReport};
use eiie::portfolio::CommissionSchedule;
use proptest::prelude::*;
use std::collections::HashSet;

fn records(rs: &[f64], start: i64, step: i64) -> Vec<BacktestRecord> {
    let mut p = 1.0;
    rs.iter()
        .enumerate()
        .map(|(i, &r)| {
            p *= r.exp();
            BacktestRecord {
                timestamp: start + i as i64 * step,
                period: i + 1,
                w_target: vec![1.0],
                w_evolved: vec![1.0],
                mu: 1.0,
                rho: r.exp() - 1.0,
                r,
                p,
            }
        })
        .collect()
}

fn from_closes(closes: Vec<Vec<f64>>) -> GlobalPriceMatrix {
    let ids = (0..closes.len()).map(|i| format!("A{i}")).collect();
    GlobalPriceMatrix::from_parts(ids, 1_483_228_800, 1800, closes.clone(), closes.clone(), closes, None).unwrap()
}

proptest! {
    #[test]
    fn drawdown_matches_brute_force(rs in prop::collection::vec(-0.2..0.2f64, 1..80)) {
        let recs = records(&rs, 0, 1800);
        let path: Vec<f64> = std::iter::once(1.0).chain(recs.iter().map(|r| r.p)).collect();
        let mut brute = 0.0f64;
        for i in 0..path.len() {
            for j in i..path.len() {
                brute = brute.max((path[i] - path[j]) / path[i]);
            }
        }
        prop_assert!((compute_mdd(&recs) - brute).abs() < 1e-14);
        prop_assert!((0.0..1.0).contains(&compute_mdd(&recs)));
    }

    #[test]
    fn sharpe_ignores_positive_scaling(xs in prop::collection::vec(-0.1..0.1f64, 2..50), k in 0.01..100.0f64) {
        if let Ok(s) = sharpe_of(&xs) {
            let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
            prop_assert!((sharpe_of(&scaled).unwrap() - s).abs() < 1e-9 * s.abs().max(1.0));
        }
    }

    #[test]
    fn buckets_partition_the_history(rs in prop::collection::vec(-0.05..0.05f64, 1..300), step in prop_oneof![Just(300i64), Just(1800), Just(7200)]) {
        let recs = records(&rs, 1_483_228_800, step);
        let (n, p) = count_signed_buckets(&recs, Bucket::Period);
        prop_assert_eq!(n + p, recs.len());
        let days: HashSet<i64> = recs.iter().map(|r| r.timestamp.div_euclid(86_400)).collect();
        let (n, p) = count_signed_buckets(&recs, Bucket::Day);
        prop_assert_eq!(n + p, days.len());
        let (nw, pw) = count_signed_buckets(&recs, Bucket::Week);
        prop_assert!(nw + pw <= days.len());
        let fapv = compute_fapv(&recs).unwrap();
        let product: f64 = recs.iter().map(|r| 1.0 + r.rho).product();
        prop_assert!((fapv - product).abs() <= 1e-12 * product);
    }
}

#[test]
fn drawdown_hand_cases() {
    assert_eq!(max_drawdown([1.0, 2.0, 1.0, 3.0]), 0.5);
    assert_eq!(max_drawdown([1.0, 1.1, 1.2]), 0.0);
    assert!((max_drawdown([1.0, 0.8, 1.5, 0.6]) - 0.6).abs() < 1e-15);
}

#[test]
fn week_buckets_follow_iso_weeks() {
    // Sunday 2017-01-01 closes ISO week 2016-W52, Monday starts 2017-W01
    let sunday = 1_483_228_800;
    let recs = records(&[-0.01, 0.02], sunday, 86_400);
    assert_eq!(count_signed_buckets(&recs, Bucket::Week), (1, 1));
    assert_eq!(count_signed_buckets(&records(&[0.0], sunday, 1800), Bucket::Day), (0, 1));
}

#[test]
fn reports_mark_flat_histories() {
    let report = PerformanceReport::from_records(&records(&[0.01, 0.01, 0.01], 0, 1800)).unwrap();
    assert_eq!(report.sharpe, None);
    assert_eq!(report.pos_periods, 3);
    assert!(compute_fapv(&[]).is_err());
}

#[test]
fn first_purchase_pays_on_the_amount_spent() {
    // cash → (½, ½): (1-c)(1 - μ/2) = μ/2, so μ = (1-c)/(1-c/2)
    let c = 0.0025;
    let matrix = from_closes(vec![vec![1.0, 1.1, 1.21]]);
    let mut s = create_strategy("ucrp", 1, &StrategyParams::default()).unwrap();
    let recs = run_backtest(&mut s, &matrix, 1..3, CommissionSchedule::flat(c).unwrap(), false).unwrap();
    let mu = (1.0 - c) / (1.0 - c / 2.0);
    assert!((recs[0].mu - mu).abs() < 1e-12);
    assert!((recs[0].p - mu * 1.05).abs() < 1e-12);
    for w in recs.windows(2) {
        let y = matrix.relative_price(w[1].period).unwrap();
        let growth: f64 = y.as_slice().iter().zip(&w[1].w_target).map(|(a, b)| a * b).sum();
        assert!((w[1].p - w[0].p * w[1].mu * growth).abs() < 1e-12);
    }
}

#[test]
fn records_survive_csv() {
    let matrix = from_closes(vec![vec![1.0, 1.3, 0.9, 1.7, 1.1], vec![2.0, 1.9, 2.2, 2.1, 2.6]]);
    let mut s = create_strategy("olmar", 2, &StrategyParams::default()).unwrap();
    let recs = run_backtest(&mut s, &matrix, 1..5, CommissionSchedule::default(), false).unwrap();
    let mut buf = Vec::new();
    write_records_csv(&mut buf, &recs).unwrap();
    let back = read_records_csv(buf.as_slice()).unwrap();
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!((a.timestamp, a.period, &a.w_target, a.mu, a.rho, a.r, a.p), (b.timestamp, b.period, &b.w_target, b.mu, b.rho, b.r, b.p));
    }
    // replaying the stored decisions reproduces the run
    let again = replay(&back, &matrix, CommissionSchedule::default()).unwrap();
    assert_eq!(again.iter().map(|r| r.p).collect::<Vec<_>>(), recs.iter().map(|r| r.p).collect::<Vec<_>>());
    assert!(read_records_csv("a,b\n1,2\n".as_bytes()).is_err());
}
