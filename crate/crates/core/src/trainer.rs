//! Mini-batch policy-gradient training with geometrically biased batch
//! starts, offline and during a backtest.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Gradients, Graph, GraphBuilder, NodeId, Tensor};
use crate::backtest::{run_backtest, DecisionContext, Strategy};
use crate::error::{Error, Result};
use crate::marketdata::{GlobalPriceMatrix, MarketView};
use crate::policy::PolicyNetwork;
use crate::portfolio::{CommissionSchedule, PortfolioVector};
use crate::pvm::PortfolioVectorMemory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub buffer_biased: f64,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            steps: 85,
            learning_rate: 0.00028,
            buffer_biased: 5e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Geometric decay β of the batch-start law.
    pub buffer_biased: f64,
    /// Use the turnover surrogate of μ inside the loss.
    pub fast_train: bool,
    pub commission: CommissionSchedule,
    pub seed: u64,
    /// Evaluate on the held-out split every this many steps (0 disables).
    pub log_every: usize,
    pub rolling: RollingConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: 80_000,
            learning_rate: 0.00028,
            batch_size: 109,
            buffer_biased: 5e-5,
            fast_train: true,
            commission: CommissionSchedule::default(),
            seed: 0,
            log_every: 1000,
            rolling: RollingConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, beta) in [("buffer_biased", self.buffer_biased), ("rolling buffer_biased", self.rolling.buffer_biased)] {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {beta}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.rolling.learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Draws a batch start `t_b ∈ [t_min, t_now - n_b]` with probability
/// proportional to `(1-β)^(t_now - n_b - t_b)`.
pub fn sample_batch_start<R: Rng + ?Sized>(t_now: usize, n_b: usize, beta: f64, t_min: usize, rng: &mut R) -> Result<usize> {
    let top = t_now
        .checked_sub(n_b)
        .filter(|top| *top >= t_min)
        .ok_or_else(|| Error::Range(format!("no feasible batch start: t_now={t_now}, n_b={n_b}, t_min={t_min}")))?;
    let span = top - t_min;
    if span == 0 || beta >= 1.0 {
        return Ok(top);
    }
    // inverse CDF of the geometric law truncated to lags 0..=span
    let q = 1.0 - beta;
    let u: f64 = rng.random();
    let tail = q.powf(span as f64 + 1.0);
    let lag = ((1.0 - u * (1.0 - tail)).ln() / q.ln()).floor();
    let lag = if lag.is_finite() { (lag as usize).min(span) } else { span };
    Ok(top - lag)
}

/// Chronological train/test split of `periods` period indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

impl DataSplit {
    /// The last `test_portion` of the range is held out, or the first when
    /// `reversed`.
    pub fn new(periods: usize, test_portion: f64, reversed: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&test_portion) {
            return Err(Error::Range(format!("test_portion {test_portion} must lie in [0, 1)")));
        }
        let test_len = (periods as f64 * test_portion).round() as usize;
        Ok(if reversed {
            Self {
                test: 0..test_len,
                train: test_len..periods,
            }
        } else {
            Self {
                train: 0..periods - test_len,
                test: periods - test_len..periods,
            }
        })
    }

    /// Reward periods of a backtest over the test split.
    pub fn test_rewards(&self) -> Range<usize> {
        self.test.start.max(1)..self.test.end
    }
}

/// Mean log returns and final value of one deterministic pass over a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub mean_log_return: f64,
    pub mean_log_return_free: f64,
    pub portfolio_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub test: RewardSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    pub text: String,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss,test_value,log_mean,log_mean_free\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.step, e.loss, e.test.portfolio_value, e.test.mean_log_return, e.test.mean_log_return_free
            );
        }
        s
    }
}

/// A batch loss graph together with its inputs, ready for evaluation or a
/// gradient check.
pub struct BatchProblem<'g> {
    pub graph: &'g Graph,
    pub inputs: Vec<Tensor>,
    pub loss: NodeId,
    pub weights: NodeId,
}

struct BatchGraph {
    graph: Graph,
    loss: NodeId,
    loss_free: NodeId,
    weights: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub loss: f64,
    /// Same batch with μ fixed at 1 and no penalty.
    pub loss_free: f64,
    pub grads: Gradients,
}

/// Owns a network, its portfolio-vector memory and optimizer state.
pub struct Trainer {
    network: PolicyNetwork,
    pvm: PortfolioVectorMemory,
    adam: AdamState,
    rng: ChaCha8Rng,
    config: TrainingConfig,
    graphs: HashMap<(usize, bool), BatchGraph>,
    steps_done: usize,
}

impl Trainer {
    /// `periods` is the length of the price matrix the trainer will see.
    pub fn new(network: PolicyNetwork, periods: usize, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let pvm = PortfolioVectorMemory::new(periods, network.assets())?;
        let adam = AdamState::new(network.params());
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            network,
            pvm,
            adam,
            rng,
            config,
            graphs: HashMap::new(),
            steps_done: 0,
        })
    }

    pub fn network(&self) -> &PolicyNetwork {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut PolicyNetwork {
        &mut self.network
    }

    pub fn pvm(&self) -> &PortfolioVectorMemory {
        &self.pvm
    }

    pub fn pvm_mut(&mut self) -> &mut PortfolioVectorMemory {
        &mut self.pvm
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn into_parts(self) -> (PolicyNetwork, PortfolioVectorMemory) {
        (self.network, self.pvm)
    }

    /// First period index at which the network can act.
    pub fn first_decision(&self) -> usize {
        self.network.window() - 1
    }

    fn batch_graph(&mut self, batch: usize, fast: bool) -> Result<&BatchGraph> {
        if !self.graphs.contains_key(&(batch, fast)) {
            let net = &self.network;
            let (m, k) = (net.assets(), net.assets() + 1);
            let mut b = GraphBuilder::new();
            let x = b.input("x", &[batch, net.features(), m, net.window()]);
            let wp = b.input("w_prev", &[batch * m, 1]);
            let nodes = net.attach(&mut b, x, wp, batch)?;
            b.set_scope("reward");
            let y_now = b.input("y_now", &[batch, k]);
            let y_next = b.input("y_next", &[batch, k]);
            let w_first = b.input("w_first", &[1, k]);
            let w = nodes.weights;
            let held = if batch > 1 {
                let head = b.slice(w, 0, 0, batch - 1)?;
                b.concat(&[w_first, head], 0)?
            } else {
                w_first
            };
            let drifted = b.evolve(held, y_now)?;
            let c = self.config.commission;
            let mu = if fast {
                b.remainder_approx(drifted, w, c.mean_rate())?
            } else {
                b.remainder(drifted, w, c)?
            };
            let growth = b.mul(w, y_next)?;
            let growth = b.sum_last(growth)?;
            let net_growth = b.mul(mu, growth)?;
            let log_net = b.log(net_growth);
            let mean = b.mean(log_net);
            let mut loss = b.scale(mean, -1.0);
            if let Some(p) = nodes.penalty {
                loss = b.add(loss, p)?;
            }
            let log_free = b.log(growth);
            let mean_free = b.mean(log_free);
            let loss_free = b.scale(mean_free, -1.0);
            self.graphs.insert(
                (batch, fast),
                BatchGraph {
                    graph: b.build(),
                    loss,
                    loss_free,
                    weights: w,
                },
            );
        }
        Ok(&self.graphs[&(batch, fast)])
    }

    /// Previous action used for the decision at `t`: memory row `t-1`, or
    /// all cash at the first decision.
    fn previous_action(&self, t: usize) -> Result<Vec<f64>> {
        if t <= self.first_decision() {
            Ok(PortfolioVector::cash(self.network.assets()).into_vec())
        } else {
            Ok(self.pvm.row(t - 1)?.to_vec())
        }
    }

    fn batch_inputs(&self, view: &MarketView<'_>, t_b: usize, batch: usize) -> Result<Vec<Tensor>> {
        let net = &self.network;
        let (f, m, n) = (net.features(), net.assets(), net.window());
        let k = m + 1;
        if t_b < self.first_decision() {
            return Err(Error::Range(format!("batch start {t_b} precedes the first decision {}", self.first_decision())));
        }
        let mut x = Vec::with_capacity(batch * f * m * n);
        let mut wp = Vec::with_capacity(batch * m);
        let mut y_now = Vec::with_capacity(batch * k);
        let mut y_next = Vec::with_capacity(batch * k);
        let mut first = Vec::new();
        for t in t_b..t_b + batch {
            x.extend_from_slice(&view.price_tensor(t, n, f)?.values);
            let prev = self.previous_action(t)?;
            wp.extend_from_slice(&prev[1..]);
            if t == t_b {
                first = prev;
            }
            if t == 0 {
                y_now.extend(std::iter::repeat_n(1.0, k));
            } else {
                y_now.extend_from_slice(view.relative_price(t)?.as_slice());
            }
            y_next.extend_from_slice(view.relative_price(t + 1)?.as_slice());
        }
        let mut inputs = vec![Tensor::new(vec![batch, f, m, n], x)?, Tensor::new(vec![batch * m, 1], wp)?];
        inputs.extend(net.extra_inputs(batch));
        inputs.push(Tensor::new(vec![batch, k], y_now)?);
        inputs.push(Tensor::new(vec![batch, k], y_next)?);
        inputs.push(Tensor::new(vec![1, k], first)?);
        Ok(inputs)
    }

    /// The loss graph and inputs for the batch of decisions
    /// `t_b .. t_b + n_b`, without touching the memory.
    pub fn batch_problem(&mut self, view: &MarketView<'_>, t_b: usize, n_b: usize, fast: bool) -> Result<BatchProblem<'_>> {
        let inputs = self.batch_inputs(view, t_b, n_b)?;
        let g = self.batch_graph(n_b, fast)?;
        Ok(BatchProblem {
            graph: &g.graph,
            inputs,
            loss: g.loss,
            weights: g.weights,
        })
    }

    /// Loss and gradients of one batch; the batch's actions are written
    /// back to the memory.
    pub fn batch_loss(&mut self, view: &MarketView<'_>, t_b: usize, n_b: usize) -> Result<BatchOutcome> {
        let fast = self.config.fast_train;
        let inputs = self.batch_inputs(view, t_b, n_b)?;
        let refs: Vec<&Tensor> = inputs.iter().collect();
        self.batch_graph(n_b, fast)?;
        let g = &self.graphs[&(n_b, fast)];
        let eval = g.graph.forward(self.network.params(), &refs)?;
        let loss = eval.value(g.loss).item();
        let loss_free = eval.value(g.loss_free).item();
        let grads = if loss.is_finite() {
            g.graph.backward(&eval, self.network.params(), g.loss)?
        } else {
            Gradients(Vec::new())
        };
        let k = self.network.assets() + 1;
        for (i, row) in eval.value(g.weights).data().chunks(k).enumerate() {
            self.pvm.write(t_b + i, row)?;
        }
        Ok(BatchOutcome { loss, loss_free, grads })
    }

    fn update(&mut self, view: &MarketView<'_>, t_now: usize, t_min: usize, beta: f64, learning_rate: f64) -> Result<f64> {
        let n_b = self.config.batch_size;
        let t_b = sample_batch_start(t_now, n_b, beta, t_min, &mut self.rng)?;
        let out = self.batch_loss(view, t_b, n_b)?;
        if !out.loss.is_finite() || !out.grads.0.iter().all(|g| g.data().iter().all(|v| v.is_finite())) {
            return Err(Error::Diverged {
                step: self.steps_done,
                message: format!("loss {} on batch starting at period {t_b}", out.loss),
            });
        }
        self.adam.step(self.network.params_mut(), &out.grads, learning_rate);
        self.steps_done += 1;
        Ok(out.loss)
    }

    /// Runs the configured number of offline steps on `split.train`,
    /// logging the held-out value every `log_every` steps.
    pub fn train_offline(&mut self, matrix: &GlobalPriceMatrix, split: &DataSplit) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        if self.config.steps == 0 {
            return Ok(log);
        }
        let horizon = split.train.end - 1;
        let view = MarketView::new(matrix, horizon);
        let t_min = self.first_decision().max(split.train.start);
        if horizon < t_min + self.config.batch_size {
            return Err(Error::Range(format!(
                "training split of {} periods is too short for window {} and batch {}",
                split.train.len(),
                self.network.window(),
                self.config.batch_size
            )));
        }
        let (beta, lr) = (self.config.buffer_biased, self.config.learning_rate);
        for step in 1..=self.config.steps {
            let loss = self.update(&view, horizon, t_min, beta, lr)?;
            let every = self.config.log_every;
            if every > 0 && (step % every == 0 || step == self.config.steps) && !split.test.is_empty() {
                let test = self.evaluate(matrix, split.test_rewards())?;
                let _ = write!(
                    log.text,
                    "==============================\nstep {step}\n------------------------------\n\
                     the portfolio value on test set is {:.6}\nlog_mean is {:.11}\nloss_value is {:.6}\n\
                     log mean without commission fee is {:.6}\n\n",
                    test.portfolio_value, test.mean_log_return, loss, test.mean_log_return_free
                );
                log.entries.push(LogEntry { step, loss, test });
            }
        }
        Ok(log)
    }

    /// `rolling.steps` updates using only prices up to `t_now`.
    pub fn rolling_train(&mut self, view: &MarketView<'_>, t_now: usize) -> Result<()> {
        let r = self.config.rolling;
        if r.steps == 0 || t_now < self.first_decision() + self.config.batch_size {
            return Ok(());
        }
        for _ in 0..r.steps {
            self.update(view, t_now, self.first_decision(), r.buffer_biased, r.learning_rate)?;
        }
        Ok(())
    }

    /// Deterministic pass of the current network over `rewards`, with
    /// exact costs and a scratch copy of the memory.
    pub fn evaluate(&self, matrix: &GlobalPriceMatrix, rewards: Range<usize>) -> Result<RewardSummary> {
        let mut agent = EiieAgent::new(self.network.clone(), self.pvm.clone());
        let records = run_backtest(&mut agent, matrix, rewards, self.config.commission, false)?;
        Ok(reward_summary(&records))
    }
}

/// Summary of an already computed trajectory.
pub fn reward_summary(records: &[crate::backtest::BacktestRecord]) -> RewardSummary {
    let n = records.len().max(1) as f64;
    RewardSummary {
        mean_log_return: records.iter().map(|r| r.r).sum::<f64>() / n,
        mean_log_return_free: records.iter().map(|r| r.r - r.mu.ln()).sum::<f64>() / n,
        portfolio_value: records.last().map_or(1.0, |r| r.p),
    }
}

/// A policy network acting as a backtest strategy. Decisions are written
/// to its memory; with a trainer attached, the online hook runs rolling
/// training.
pub struct EiieAgent {
    name: String,
    inner: AgentState,
}

enum AgentState {
    Frozen {
        network: PolicyNetwork,
        pvm: PortfolioVectorMemory,
    },
    Learning(Box<Trainer>),
}

impl EiieAgent {
    pub fn new(network: PolicyNetwork, pvm: PortfolioVectorMemory) -> Self {
        Self {
            name: format!("eiie-{}", network.kind()),
            inner: AgentState::Frozen { network, pvm },
        }
    }

    pub fn with_trainer(trainer: Trainer) -> Self {
        Self {
            name: format!("eiie-{}", trainer.network().kind()),
            inner: AgentState::Learning(Box::new(trainer)),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn network(&self) -> &PolicyNetwork {
        match &self.inner {
            AgentState::Frozen { network, .. } => network,
            AgentState::Learning(t) => t.network(),
        }
    }

    pub fn trainer(&self) -> Option<&Trainer> {
        match &self.inner {
            AgentState::Learning(t) => Some(t),
            AgentState::Frozen { .. } => None,
        }
    }

    pub fn into_trainer(self) -> Option<Trainer> {
        match self.inner {
            AgentState::Learning(t) => Some(*t),
            AgentState::Frozen { .. } => None,
        }
    }
}

impl Strategy for EiieAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<PortfolioVector> {
        let (network, pvm) = match &mut self.inner {
            AgentState::Frozen { network, pvm } => (&*network, pvm),
            AgentState::Learning(t) => {
                let t = &mut **t;
                (&t.network, &mut t.pvm)
            }
        };
        let n = network.window();
        if ctx.t + 1 < n {
            return Ok(ctx.holdings.clone());
        }
        let prev = if ctx.t + 1 == n {
            PortfolioVector::cash(network.assets())
        } else {
            pvm.read(ctx.t - 1)?
        };
        let x = ctx.view.price_tensor(ctx.t, n, network.features())?;
        let w = network.decide(&x, &prev)?;
        pvm.write(ctx.t, w.as_slice())?;
        Ok(w)
    }

    fn online_update(&mut self, view: &MarketView<'_>, t_now: usize) -> Result<()> {
        match &mut self.inner {
            AgentState::Learning(t) => t.rolling_train(view, t_now),
            AgentState::Frozen { .. } => Ok(()),
        }
    }
}
