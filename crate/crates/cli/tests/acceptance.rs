//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use eiie::autodiff::gradient_check;
use eiie::backtest::{replay, run_backtest, BacktestRecord};
use eiie::baselines::{create_strategy, project_to_simplex, StrategyParams, ALGORITHMS};
use eiie::marketdata::synthetic::sinusoidal_pair;
use eiie::marketdata::{generate_synthetic_market, AssetSpec, GlobalPriceMatrix, MarketSpec, MarketView, PriceTensor, Regime};
use eiie::metrics::{compute_fapv, count_signed_buckets, max_drawdown, sharpe_of, Bucket};
use eiie::policy::{build_network, EiieTopologySpec, TopologyKind};
use eiie::portfolio::{remainder_map, solve_remainder, CommissionSchedule, PortfolioVector};
use eiie::trainer::{sample_batch_start, DataSplit, EiieAgent, RollingConfig, Trainer, TrainingConfig};
use eiie::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [TopologyKind; 3] = [TopologyKind::Cnn, TopologyKind::Rnn, TopologyKind::Lstm];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    // exponential spacings, with some coordinates zeroed to hit the kinks
    let mut v: Vec<f64> = (0..k)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                0.0
            } else {
                -rng.random::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[rng.random_range(0..k)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut max_iter = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=12);
        let wp = random_simplex(&mut rng, k);
        let w = random_simplex(&mut rng, k);
        for c in [0.0, 0.0025, 0.01, 0.1] {
            let sched = CommissionSchedule::new(c, c).unwrap();
            let Ok(sol) = solve_remainder(&wp, &w, sched) else {
                return outcome(false, format!("no convergence at c={c}"));
            };
            worst = worst.max((sol.mu - remainder_map(sol.mu, &wp, &w, sched)).abs());
            max_iter = max_iter.max(sol.iterations);
            if !(sol.mu > 0.0 && sol.mu <= 1.0) {
                return outcome(false, format!("mu {} outside (0,1]", sol.mu));
            }
        }
    }
    let c = CommissionSchedule::new(0.0025, 0.0025).unwrap();
    let mu = |wp: &[f64], w: &[f64]| solve_remainder(wp, w, c).unwrap().mu;
    let asym = CommissionSchedule::new(0.004, 0.0015).unwrap();
    let analytic = [
        ("no trade", mu(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]), 1.0),
        ("full buy", solve_remainder(&[1.0, 0.0], &[0.0, 1.0], asym).unwrap().mu, 1.0 - 0.0015),
        ("full sell", solve_remainder(&[0.0, 1.0], &[1.0, 0.0], asym).unwrap().mu, 1.0 - 0.004),
        ("swap", mu(&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.5]), 0.9975),
    ];
    let analytic_err = analytic.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && max_iter <= 100 && analytic_err < 1e-12 && elapsed < Duration::from_secs(10),
        format!(
            "max residual {worst:.2e}, max iterations {max_iter}, analytic error {analytic_err:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_walk_market(m: usize, periods: usize, seed: u64) -> GlobalPriceMatrix {
    let assets = (0..m)
        .map(|i| AssetSpec {
            id: format!("RW{i}"),
            initial_price: 0.01 * (i + 1) as f64,
            drift: 0.0,
            volatility: 0.02,
            regime: Regime::RandomWalk,
            volume: 1000.0,
        })
        .collect();
    generate_synthetic_market(&MarketSpec {
        start: 1_483_228_800,
        period: 1800,
        periods,
        seed,
        assets,
    })
    .unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let matrix = random_walk_market(3, 40, 2);
    let view = MarketView::full(&matrix);
    let mut details = Vec::new();
    let mut passed = true;
    for kind in KINDS {
        for fast in [false, true] {
            let net = build_network(&EiieTopologySpec::default_for(kind), 3, 8, 3, 5).unwrap();
            let config = TrainingConfig {
                batch_size: 4,
                fast_train: fast,
                ..TrainingConfig::default()
            };
            let mut trainer = Trainer::new(net, matrix.n_periods(), config).unwrap();
            // give the memory non-uniform rows first
            for t_b in [7, 11, 15] {
                trainer.batch_loss(&view, t_b, 4).unwrap();
            }
            let params = trainer.network().params().clone();
            let problem = trainer.batch_problem(&view, 16, 4, fast).unwrap();
            let inputs: Vec<_> = problem.inputs.iter().collect();
            let report = gradient_check(problem.graph, &params, &inputs, problem.loss, 1e-6, 1e-4).unwrap();
            passed &= report.passed();
            details.push(format!(
                "{kind}{} {:.1e}",
                if fast { "/approx" } else { "" },
                report.max_relative_error()
            ));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        passed && elapsed < Duration::from_secs(60),
        format!("max relative error: {}; {:.2}s", details.join(", "), elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let (m, n, f) = (4, 10, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_sum = 0.0f64;
    let mut equivariant = true;
    let mut nonnegative = true;
    for kind in KINDS {
        let net = build_network(&EiieTopologySpec::default_for(kind), m, n, f, 11).unwrap();
        for _ in 0..1000 {
            let mut values: Vec<f64> = (0..f * m * n).map(|_| rng.random_range(0.5..1.5)).collect();
            for a in 0..m {
                values[a * n + n - 1] = 1.0;
            }
            let x = PriceTensor {
                values,
                features: f,
                assets: m,
                window: n,
                t: n - 1,
            };
            let w_prev = PortfolioVector::new(random_simplex(&mut rng, m + 1)).unwrap();
            let w = net.decide(&x, &w_prev).unwrap();
            nonnegative &= w.as_slice().iter().all(|v| *v >= 0.0);
            worst_sum = worst_sum.max((w.as_slice().iter().sum::<f64>() - 1.0).abs());

            let mut perm: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let mut px = x.clone();
            for ft in 0..f {
                for (new, &old) in perm.iter().enumerate() {
                    for j in 0..n {
                        px.values[(ft * m + new) * n + j] = x.get(ft, old, j);
                    }
                }
            }
            let mut pw = vec![w_prev.as_slice()[0]];
            pw.extend(perm.iter().map(|&old| w_prev.as_slice()[old + 1]));
            let pout = net.decide(&px, &PortfolioVector::new(pw).unwrap()).unwrap();
            let mut expect = vec![w.as_slice()[0]];
            expect.extend(perm.iter().map(|&old| w.as_slice()[old + 1]));
            equivariant &= pout.as_slice() == expect.as_slice();
        }
    }
    outcome(
        nonnegative && worst_sum < 1e-9 && equivariant,
        format!("max |sum - 1| {worst_sum:.1e}, nonnegative {nonnegative}, exact equivariance {equivariant}"),
    )
}

/// TV distance over bins of consecutive lags, each bin closed once its
/// true mass reaches 1/20 (heavier single lags form their own bin).
fn binned_tv(p: &[f64], counts: &[usize], draws: usize) -> f64 {
    let mut tv = 0.0;
    let (mut pm, mut qm) = (0.0, 0.0);
    for (pi, ci) in p.iter().zip(counts) {
        pm += pi;
        qm += *ci as f64 / draws as f64;
        if pm >= 0.05 {
            tv += (pm - qm).abs();
            pm = 0.0;
            qm = 0.0;
        }
    }
    0.5 * (tv + (pm - qm).abs())
}

fn criterion_4() -> Outcome {
    let draws = 100_000;
    let (t_min, t_now, n_b) = (50, 2_049 + 10, 10);
    let top = t_now - n_b;
    let span = top - t_min;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut passed = true;
    let mut details = Vec::new();
    for beta in [5e-5, 0.01, 0.5] {
        let q: f64 = 1.0 - beta;
        let raw: Vec<f64> = (0..=span).map(|lag| q.powi(lag as i32)).collect();
        let z: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / z).collect();
        let mut counts = vec![0usize; span + 1];
        for _ in 0..draws {
            let t_b = sample_batch_start(t_now, n_b, beta, t_min, &mut rng).unwrap();
            assert!((t_min..=top).contains(&t_b));
            counts[top - t_b] += 1;
        }
        let tv = binned_tv(&p, &counts, draws);
        let per_lag: f64 = 0.5 * p.iter().zip(&counts).map(|(pi, c)| (pi - *c as f64 / draws as f64).abs()).sum::<f64>();
        passed &= tv < 0.01;
        details.push(format!("β={beta}: binned TV {tv:.4} (per-lag {per_lag:.4})"));
    }
    outcome(passed, format!("range width {}; {}", span + 1, details.join(", ")))
}

fn ledger_market() -> GlobalPriceMatrix {
    let mut spec = sinusoidal_pair(500, 40.0, 0.05, 0.01, 5);
    spec.assets.push(AssetSpec {
        id: "WALK".into(),
        initial_price: 0.01,
        drift: 0.0005,
        volatility: 0.02,
        regime: Regime::RandomWalk,
        volume: 1000.0,
    });
    generate_synthetic_market(&spec).unwrap()
}

fn check_ledger(records: &[BacktestRecord], matrix: &GlobalPriceMatrix, schedule: CommissionSchedule) -> Result<(), String> {
    let fapv = compute_fapv(records).map_err(|e| e.to_string())?;
    let log_sum: f64 = records.iter().map(|r| r.r).sum();
    let rel = (log_sum.exp() - fapv).abs() / fapv;
    if rel >= 1e-9 {
        return Err(format!("exp(sum r) off by {rel:.2e}"));
    }
    let paid = replay(records, matrix, schedule).map_err(|e| e.to_string())?;
    let free = replay(records, matrix, CommissionSchedule::free()).map_err(|e| e.to_string())?;
    if paid.iter().zip(records).any(|(a, b)| a.p != b.p) {
        return Err("replay does not reproduce the run".into());
    }
    if free.iter().zip(&paid).any(|(f, p)| f.p < p.p) {
        return Err("zero-commission replay fell below the commissioned one".into());
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let matrix = ledger_market();
    let m = matrix.n_assets();
    let schedule = CommissionSchedule::default();
    let mut failures = Vec::new();
    let mut count = 0;
    for kind in KINDS {
        let net = build_network(&EiieTopologySpec::default_for(kind), m, 16, 3, 0).unwrap();
        let config = TrainingConfig {
            steps: 40,
            learning_rate: 0.001,
            batch_size: 16,
            log_every: 0,
            rolling: RollingConfig {
                steps: 2,
                ..RollingConfig::default()
            },
            ..TrainingConfig::default()
        };
        let mut trainer = Trainer::new(net, matrix.n_periods(), config).unwrap();
        let split = DataSplit::new(matrix.n_periods(), 0.4, false).unwrap();
        trainer.train_offline(&matrix, &split).unwrap();
        let mut agent = EiieAgent::with_trainer(trainer);
        let records = run_backtest(&mut agent, &matrix, split.test_rewards(), schedule, true).unwrap();
        count += 1;
        if let Err(e) = check_ledger(&records, &matrix, schedule) {
            failures.push(format!("eiie-{kind}: {e}"));
        }
    }
    for name in ALGORITHMS {
        let mut s = create_strategy(name, m, &StrategyParams::default()).unwrap();
        let records = run_backtest(&mut s, &matrix, 1..matrix.n_periods(), schedule, false).unwrap();
        count += 1;
        if let Err(e) = check_ledger(&records, &matrix, schedule) {
            failures.push(format!("{name}: {e}"));
        }
    }
    outcome(
        failures.is_empty() && count == 15,
        if failures.is_empty() {
            format!("{count} backtests on {} periods satisfy both identities", matrix.n_periods())
        } else {
            failures.join("; ")
        },
    )
}

fn record(ts: i64, r: f64) -> BacktestRecord {
    BacktestRecord {
        timestamp: ts,
        period: 1,
        w_target: vec![1.0],
        w_evolved: vec![1.0],
        mu: 1.0,
        rho: r.exp() - 1.0,
        r,
        p: 1.0,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mdd_ok = true;
    for _ in 0..1000 {
        let len = rng.random_range(1..=200);
        let mut p = 1.0;
        let series: Vec<f64> = (0..len)
            .map(|_| {
                p *= (rng.random_range(-0.1..0.1f64)).exp();
                p
            })
            .collect();
        let mut brute = 0.0f64;
        for t in 0..len {
            for tau in t + 1..len {
                brute = brute.max((series[t] - series[tau]) / series[t]);
            }
        }
        mdd_ok &= (max_drawdown(series.iter().copied()) - brute).abs() <= 1e-15;
    }
    let sharpe_ok = sharpe_of(&[0.01, -0.01]).unwrap() == 0.0
        && (sharpe_of(&[0.02, 0.04]).unwrap() - 3.0).abs() < 1e-12
        && matches!(sharpe_of(&[0.03, 0.03, 0.03]), Err(Error::ZeroVariance));
    // 2017-01-01 is a Sunday of ISO week 2016-W52
    let d1 = 1_483_228_800;
    let recs = [
        record(d1, -0.03),
        record(d1 + 43_200, 0.01),
        record(d1 + 86_400, 0.01),
        record(d1 + 86_400 + 21_600, -0.005),
        record(d1 + 8 * 86_400, 0.0),
    ];
    let buckets_ok = count_signed_buckets(&recs, Bucket::Period) == (2, 3)
        && count_signed_buckets(&recs, Bucket::Day) == (1, 2)
        && count_signed_buckets(&recs, Bucket::Week) == (1, 2)
        && count_signed_buckets(&[record(d1, 0.02), record(d1 + 1800, -0.01)], Bucket::Day) == (0, 1);
    outcome(
        mdd_ok && sharpe_ok && buckets_ok,
        format!("MDD vs brute force on 1000 series {mdd_ok}, Sharpe fixtures {sharpe_ok}, bucket fixtures {buckets_ok}"),
    )
}

/// The fixture shared by the learning criteria.
fn learning_setup(seed: u64) -> (GlobalPriceMatrix, DataSplit, TrainingConfig) {
    let matrix = generate_synthetic_market(&sinusoidal_pair(1700, 60.0, 0.08, 0.01, seed)).unwrap();
    let split = DataSplit::new(1700, 200.0 / 1700.0, false).unwrap();
    let config = TrainingConfig {
        steps: 5000,
        learning_rate: 0.00028,
        batch_size: 109,
        buffer_biased: 5e-5,
        fast_train: true,
        commission: CommissionSchedule::default(),
        seed,
        log_every: 0,
        rolling: RollingConfig::default(),
    };
    (matrix, split, config)
}

struct LearningRun {
    ubah: f64,
    frozen: f64,
    rolling: f64,
    train_time: Duration,
}

fn learning_runs() -> Vec<LearningRun> {
    (0..5u64)
        .map(|seed| {
            let (matrix, split, config) = learning_setup(seed);
            let start = Instant::now();
            let net = build_network(&EiieTopologySpec::default_cnn(), 2, 31, 3, seed).unwrap();
            let mut trainer = Trainer::new(net, matrix.n_periods(), config).unwrap();
            trainer.train_offline(&matrix, &split).unwrap();
            let train_time = start.elapsed();
            let rewards = split.test_rewards();
            let schedule = CommissionSchedule::default();
            let fapv = |r: Vec<BacktestRecord>| r.last().unwrap().p;
            let mut ubah = create_strategy("ubah", 2, &StrategyParams::default()).unwrap();
            let ubah = fapv(run_backtest(&mut ubah, &matrix, rewards.clone(), schedule, false).unwrap());
            let mut frozen = EiieAgent::new(trainer.network().clone(), trainer.pvm().clone());
            let frozen = fapv(run_backtest(&mut frozen, &matrix, rewards.clone(), schedule, false).unwrap());
            let mut rolling = EiieAgent::with_trainer(trainer);
            let rolling = fapv(run_backtest(&mut rolling, &matrix, rewards, schedule, true).unwrap());
            LearningRun {
                ubah,
                frozen,
                rolling,
                train_time,
            }
        })
        .collect()
}

fn criterion_7(runs: &[LearningRun], elapsed: Duration) -> Outcome {
    let wins = runs.iter().filter(|r| r.frozen >= 1.2 * r.ubah).count();
    let ratios: Vec<String> = runs.iter().map(|r| format!("{:.2}", r.frozen / r.ubah)).collect();
    outcome(
        wins >= 4 && elapsed < Duration::from_secs(300),
        format!(
            "fAPV/UBAH per seed [{}], {wins}/5 at least 1.2; {:.1}s",
            ratios.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8(runs: &[LearningRun]) -> Outcome {
    let wins = runs.iter().filter(|r| r.rolling >= r.frozen).count();
    let pairs: Vec<String> = runs.iter().map(|r| format!("{:.3}/{:.3}", r.rolling, r.frozen)).collect();
    outcome(
        wins >= 4,
        format!("rolling/frozen fAPV per seed [{}], {wins}/5 rolling at least as good", pairs.join(", ")),
    )
}

fn matrix_from_closes(closes: Vec<Vec<f64>>) -> GlobalPriceMatrix {
    let m = closes.len();
    GlobalPriceMatrix::from_parts(
        (0..m).map(|i| format!("A{i}")).collect(),
        1_483_228_800,
        1800,
        closes.clone(),
        closes.clone(),
        closes,
        None,
    )
    .unwrap()
}

fn criterion_9() -> Outcome {
    let free = CommissionSchedule::free();
    let run = |name: &str, matrix: &GlobalPriceMatrix, periods: std::ops::Range<usize>| {
        let params = StrategyParams {
            eg_eta: 0.0,
            ..StrategyParams::default()
        };
        let mut s = create_strategy(name, matrix.n_assets(), &params).unwrap();
        run_backtest(&mut s, matrix, periods, free, false).unwrap()
    };
    let mut worst_best = 0.0f64;
    let mut worst_ucrp = 0.0f64;
    let mut eg_constant = true;
    let hand = matrix_from_closes(vec![vec![1.0, 1.5, 1.2], vec![1.0, 1.1, 2.31]]);
    let hand_best = run("best", &hand, 1..3).last().unwrap().p;
    worst_best = worst_best.max((hand_best - 2.31).abs() / 2.31);
    for seed in 0..20 {
        let matrix = random_walk_market(1 + seed as usize % 5, 120, 900 + seed);
        let m = matrix.n_assets();
        let periods = 1..matrix.n_periods();
        let ys: Vec<Vec<f64>> = periods
            .clone()
            .map(|t| matrix.relative_price(t).unwrap().as_slice().to_vec())
            .collect();
        let best_oracle = (1..=m)
            .map(|i| ys.iter().map(|y| y[i]).product::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let best = run("best", &matrix, periods.clone()).last().unwrap().p;
        worst_best = worst_best.max((best - best_oracle).abs() / best_oracle);

        let u = 1.0 / (m + 1) as f64;
        let ucrp_oracle: f64 = ys.iter().map(|y| y.iter().sum::<f64>() * u).product();
        let ucrp = run("ucrp", &matrix, periods.clone());
        worst_ucrp = worst_ucrp.max((ucrp.last().unwrap().p - ucrp_oracle).abs() / ucrp_oracle);

        let eg = run("eg", &matrix, periods);
        eg_constant &= eg.iter().zip(&ucrp).all(|(a, b)| {
            a.w_target.iter().zip(&b.w_target).all(|(x, y)| (x - y).abs() < 1e-15) && (a.p - b.p).abs() <= 1e-12 * b.p
        });
    }
    let projection_ok = project_to_simplex(&[1.0, 1.0]) == vec![0.5, 0.5] && project_to_simplex(&[2.0, 0.0]) == vec![1.0, 0.0];
    outcome(
        worst_best < 1e-9 && worst_ucrp < 1e-9 && eg_constant && projection_ok,
        format!(
            "best stock rel error {worst_best:.1e}, UCRP rel error {worst_ucrp:.1e}, EG(η=0) tracks UCRP {eg_constant}"
        ),
    )
}

fn cli(bin: &str, dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin)
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end(dir: &Path) -> Result<(String, String, Vec<u8>), String> {
    let bin = env!("CARGO_BIN_EXE_eiie");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = format!("--config={}", fixtures.join("net_config.json").display());
    let data = format!("--data={}", fixtures.join("market.json").display());
    cli(bin, dir, &["--mode=generate", "--repeat=2", &config])?;
    cli(bin, dir, &["--mode=train", "--processes=2", &data])?;
    cli(bin, dir, &["--mode=backtest", "--algo=1", &data])?;
    cli(bin, dir, &["--mode=plot", "--algos=ucrp,0,1", "--labels=ucrp,agent0,agent1", &config, &data])?;
    let table = cli(bin, dir, &["--mode=table", "--algos=0,1,ons,best", "--labels=agent0,agent1,ons,best", &config, &data])?;
    let summary = std::fs::read_to_string(dir.join("train_package/train_summary.csv")).map_err(|e| e.to_string())?;
    let plot = std::fs::read(dir.join("train_package/result.svg")).map_err(|e| e.to_string())?;
    Ok((summary, table, plot))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    match (end_to_end(a.path()), end_to_end(b.path())) {
        (Ok(x), Ok(y)) => {
            let elapsed = start.elapsed();
            let rows = x.0.lines().count().saturating_sub(1);
            outcome(
                x == y && rows == 2 && elapsed < Duration::from_secs(300),
                format!(
                    "{rows} summary rows, identical across re-runs {}, {:.1}s for both runs",
                    x == y,
                    elapsed.as_secs_f64()
                ),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n:>2}: {} {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    let runs = learning_runs();
    let train_total: Duration = runs.iter().map(|r| r.train_time).sum();
    report(7, criterion_7(&runs, train_total));
    report(8, criterion_8(&runs));
    report(9, criterion_9());
    report(10, criterion_10());
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.passed).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
