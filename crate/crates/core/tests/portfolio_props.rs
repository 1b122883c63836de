use eiie::portfolio::{
    check_simplex, evolved_weights, period_outcome, remainder_map, solve_remainder, transaction_remainder_approx,
    CommissionSchedule, PortfolioVector, RelativePriceVector, MU_MAX_ITER,
};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], k).prop_map(|mut v| {
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..10).prop_flat_map(|k| (simplex(k), simplex(k)))
}

/// Brute-force root of `μ = f(μ)` by bisection on `[0, 1]`.
fn bisect(wp: &[f64], w: &[f64], c: CommissionSchedule) -> f64 {
    let g = |mu: f64| remainder_map(mu, wp, w, c) - mu;
    let (mut lo, mut hi) = (0.0, 1.0);
    if g(hi) >= 0.0 {
        return 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn remainder_is_the_fixed_point((wp, w) in pair(), c in 0.0..0.2f64) {
        let sched = CommissionSchedule::new(c, c).unwrap();
        let sol = solve_remainder(&wp, &w, sched).unwrap();
        prop_assert!(sol.iterations <= MU_MAX_ITER);
        prop_assert!(sol.mu > 0.0 && sol.mu <= 1.0);
        prop_assert!((remainder_map(sol.mu, &wp, &w, sched) - sol.mu).abs() < 1e-10);
        prop_assert!((sol.mu - bisect(&wp, &w, sched)).abs() < 1e-9);
    }

    #[test]
    fn remainder_shrinks_with_commission((wp, w) in pair(), a in 0.0..0.1f64, b in 0.0..0.1f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mu_lo = solve_remainder(&wp, &w, CommissionSchedule::new(lo, lo).unwrap()).unwrap().mu;
        let mu_hi = solve_remainder(&wp, &w, CommissionSchedule::new(hi, hi).unwrap()).unwrap().mu;
        prop_assert!(mu_hi <= mu_lo + 1e-12);
        // μ never falls below the cost of liquidating and rebuying everything
        prop_assert!(mu_hi >= (1.0 - hi) * (1.0 - hi) - 1e-12);
    }

    #[test]
    fn surrogate_stays_in_unit_interval((wp, w) in pair(), c in 0.0..0.05f64) {
        let a = transaction_remainder_approx(&PortfolioVector::new(wp).unwrap(), &PortfolioVector::new(w).unwrap(), c);
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn evolution_keeps_the_simplex(w in (2usize..8).prop_flat_map(simplex), seed in any::<u64>()) {
        let k = w.len();
        let ys: Vec<f64> = (0..k - 1).map(|i| 0.5 + ((seed >> (i % 60)) & 0xff) as f64 / 255.0).collect();
        let y = RelativePriceVector::from_assets(&ys).unwrap();
        let w = PortfolioVector::new(w).unwrap();
        let e = evolved_weights(&y, &w);
        prop_assert!(check_simplex(e.as_slice()).is_ok());
        let out = period_outcome(&y, &w, 1.0, 2.0).unwrap();
        prop_assert!((out.p - 2.0 * y.dot(&w)).abs() < 1e-12);
        prop_assert!((out.r - (1.0 + out.rho).ln()).abs() < 1e-12);
    }
}

#[test]
fn asymmetric_rates_price_buys_and_sells_separately() {
    let c = CommissionSchedule::new(0.01, 0.002).unwrap();
    assert!((solve_remainder(&[1.0, 0.0], &[0.0, 1.0], c).unwrap().mu - 0.998).abs() < 1e-12);
    assert!((solve_remainder(&[0.0, 1.0], &[1.0, 0.0], c).unwrap().mu - 0.99).abs() < 1e-12);
}

#[test]
fn off_simplex_vectors_are_rejected() {
    assert!(PortfolioVector::new(vec![0.5, 0.6]).is_err());
    assert!(PortfolioVector::new(vec![1.2, -0.2]).is_err());
    assert!(RelativePriceVector::new(vec![1.0, 0.0]).is_err());
}
