//! Discrete-event simulation of the tandem models.
//!
//! Three models share one statistics layer:
//!
//! * [`SimModel::MarkovTandemGlobalFailure`]: N exponential nodes with infinite
//!   buffers; the whole network breaks down at rate `alpha` while operational
//!   (busy or not) and is repaired after an exponential(`gamma`) time. Service
//!   is frozen during repair and resampled on resume, which is equivalent by
//!   memorylessness.
//! * [`SimModel::Mg1SequentialStage`]: a packet holds the whole chain from the
//!   start of node-1 service until it leaves node N. Each node fails at rate
//!   `alpha` only while serving; repairs are preemptive-resume.
//! * [`SimModel::Mg1Overlap`]: as above, but node i may serve the next packet
//!   while node i+1 is busy. Downstream nodes are bufferless, so a finished
//!   packet stays blocked at node i until node i+1 frees up.
//!
//! Age is tracked by exact integration of the sawtooth between deliveries.
//! Each replication draws arrivals, service times and failure/repair times
//! from separate ChaCha streams seeded with `base_seed + replicate`, so runs
//! at different `lambda` or `alpha` share random numbers.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytic_mg1::Mg1TandemParams;
use crate::analytic_mm1::Mm1TandemParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimModel {
    MarkovTandemGlobalFailure,
    Mg1SequentialStage,
    Mg1Overlap,
}

impl SimModel {
    pub fn label(self) -> &'static str {
        match self {
            SimModel::MarkovTandemGlobalFailure => "markov_global",
            SimModel::Mg1SequentialStage => "mg1_sequential",
            SimModel::Mg1Overlap => "mg1_overlap",
        }
    }
}

/// Exponential tandem with global breakdowns, any number of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovTandemParams {
    pub lambda: f64,
    pub service_rates: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl MarkovTandemParams {
    pub fn uniform(lambda: f64, n: usize, mu: f64, alpha: f64, gamma: f64) -> Result<Self> {
        let p = MarkovTandemParams {
            lambda,
            service_rates: vec![mu; n],
            alpha,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.lambda) {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.service_rates.is_empty() || !self.service_rates.iter().all(|&m| pos(m)) {
            return Err(Error::InvalidParams("service rates must be positive and non-empty".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) || !pos(self.gamma) {
            return Err(Error::InvalidParams(format!(
                "need alpha >= 0 and gamma > 0, got alpha={} gamma={}",
                self.alpha, self.gamma
            )));
        }
        Ok(())
    }

    pub fn availability(&self) -> f64 {
        self.gamma / (self.alpha + self.gamma)
    }

    /// Each node sees the full arrival stream and works only while the
    /// network is up, so node i is stable iff `lambda < avail * mu_i`.
    pub fn is_stable(&self) -> bool {
        let min_mu = self.service_rates.iter().copied().fold(f64::INFINITY, f64::min);
        self.lambda < self.availability() * min_mu
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        MarkovTandemParams { lambda, ..self.clone() }
    }
}

impl From<Mm1TandemParams> for MarkovTandemParams {
    fn from(p: Mm1TandemParams) -> Self {
        MarkovTandemParams {
            lambda: p.lambda,
            service_rates: vec![p.mu1, p.mu2],
            alpha: p.alpha,
            gamma: p.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Markov(MarkovTandemParams),
    Mg1(Mg1TandemParams),
}

impl ModelParams {
    pub fn lambda(&self) -> f64 {
        match self {
            ModelParams::Markov(p) => p.lambda,
            ModelParams::Mg1(p) => p.lambda,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            ModelParams::Markov(p) => p.service_rates.len(),
            ModelParams::Mg1(p) => p.n_stages(),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        match self {
            ModelParams::Markov(p) => ModelParams::Markov(p.with_lambda(lambda)),
            ModelParams::Mg1(p) => ModelParams::Mg1(p.with_lambda(lambda)),
        }
    }
}

fn default_hist_bins() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: SimModel,
    pub params: ModelParams,
    pub n_nodes: usize,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub replications: usize,
    pub base_seed: u64,
    /// Histogram length; the last bin collects everything at or above it.
    #[serde(default = "default_hist_bins")]
    pub hist_bins: usize,
    /// Points `s > 0` at which to estimate the age LST `E[exp(-s age)]`.
    #[serde(default)]
    pub age_lst_points: Vec<f64>,
}

impl SimConfig {
    /// Defaults: horizon 1e6, 10% warm-up, 20 replications.
    pub fn new(model: SimModel, params: ModelParams) -> Self {
        SimConfig {
            model,
            n_nodes: params.n_nodes(),
            params,
            horizon: 1e6,
            warmup_fraction: 0.1,
            replications: 20,
            base_seed: 1,
            hist_bins: default_hist_bins(),
            age_lst_points: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParams(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.replications < 1 {
            return Err(Error::InvalidParams("replications must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidParams(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.age_lst_points.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidParams("age LST points must be positive".into()));
        }
        if self.hist_bins < 2 {
            return Err(Error::InvalidParams("hist_bins must be >= 2".into()));
        }
        match (&self.model, &self.params) {
            (SimModel::MarkovTandemGlobalFailure, ModelParams::Markov(p)) => p.validate()?,
            (SimModel::Mg1SequentialStage | SimModel::Mg1Overlap, ModelParams::Mg1(p)) => p.validate()?,
            (m, _) => {
                return Err(Error::ModelMismatch(format!(
                    "{} cannot run with {} parameters",
                    m.label(),
                    match self.params {
                        ModelParams::Markov(_) => "markov",
                        ModelParams::Mg1(_) => "mg1",
                    }
                )))
            }
        }
        if self.params.n_nodes() != self.n_nodes {
            return Err(Error::ModelMismatch(format!(
                "n_nodes = {} but parameters describe {} nodes",
                self.n_nodes,
                self.params.n_nodes()
            )));
        }
        Ok(())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub aaoi: f64,
    pub paoi: f64,
    pub sojourn_mean: f64,
    /// Deliveries per unit time after warm-up.
    pub throughput: f64,
    pub delivered: u64,
    pub per_node_wait: Vec<f64>,
    pub per_node_sojourn: Vec<f64>,
    /// Time-average number of packets at each node (waiting, served or blocked).
    pub per_node_mean_number: Vec<f64>,
    /// Time-average number waiting for service at each node.
    pub per_node_mean_waiting: Vec<f64>,
    pub mean_system_size: f64,
    pub system_size_hist: Vec<f64>,
    pub node_hists: Vec<Vec<f64>>,
    /// Time-average `exp(-s age)` at each configured point.
    pub age_lst: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// 95% t-interval half-width; NaN with a single replication.
    pub ci_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub aaoi_mean: f64,
    pub aaoi_ci_half: f64,
    pub paoi_mean: f64,
    pub paoi_ci_half: f64,
    pub sojourn_mean: f64,
    pub sojourn_ci_half: f64,
    pub throughput: Estimate,
    pub per_node_wait: Vec<f64>,
    pub per_node_wait_ci_half: Vec<f64>,
    pub per_node_sojourn: Vec<Estimate>,
    pub per_node_mean_number: Vec<Estimate>,
    pub per_node_mean_waiting: Vec<Estimate>,
    pub mean_system_size: Estimate,
    pub system_size_hist: Vec<f64>,
    pub system_size_hist_ci_half: Vec<f64>,
    /// Empty when the model has a single node.
    pub node2_queue_hist: Vec<f64>,
    pub node2_queue_hist_ci_half: Vec<f64>,
    pub delivered_count: u64,
    pub age_lst: Vec<Estimate>,
    pub replications: Vec<ReplicationResult>,
}

pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let reps = (0..config.replications)
        .map(|i| run_replication(config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(reps))
}

/// Same statistics as [`run`], replications spread over the rayon pool.
pub fn run_replicated_parallel(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let reps = (0..config.replications)
        .into_par_iter()
        .map(|i| run_replication(config, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(reps))
}

pub fn run_replication(config: &SimConfig, replicate: usize) -> Result<ReplicationResult> {
    let seed = config.base_seed.wrapping_add(replicate as u64);
    let mut streams = Streams::new(seed);
    match (&config.model, &config.params) {
        (SimModel::MarkovTandemGlobalFailure, ModelParams::Markov(p)) => simulate_markov(config, p, &mut streams),
        (SimModel::Mg1SequentialStage, ModelParams::Mg1(p)) => simulate_chain(config, p, true, &mut streams),
        (SimModel::Mg1Overlap, ModelParams::Mg1(p)) => simulate_chain(config, p, false, &mut streams),
        _ => Err(Error::ModelMismatch("model and parameter kinds differ".into())),
    }
}

struct Streams {
    arrivals: ChaCha8Rng,
    service: ChaCha8Rng,
    failures: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Streams {
            arrivals: stream(0),
            service: stream(1),
            failures: stream(2),
        }
    }
}

fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = rng.sample(Exp1);
        e / rate
    } else {
        f64::INFINITY
    }
}

/// Sawtooth age process between deliveries.
#[derive(Debug, Default)]
struct AgeTracker {
    first: Option<f64>,
    last_time: f64,
    last_gen: f64,
    area: f64,
    peak_sum: f64,
    peaks: u64,
    lst_points: Vec<f64>,
    lst_area: Vec<f64>,
}

impl AgeTracker {
    fn with_lst_points(points: &[f64]) -> Self {
        AgeTracker {
            lst_points: points.to_vec(),
            lst_area: vec![0.0; points.len()],
            ..Default::default()
        }
    }

    fn deliver(&mut self, t: f64, gen: f64) {
        if self.first.is_some() {
            let (a0, a1) = (self.last_time - self.last_gen, t - self.last_gen);
            self.area += 0.5 * (a1 * a1 - a0 * a0);
            for (acc, &s) in self.lst_area.iter_mut().zip(&self.lst_points) {
                *acc += ((-s * a0).exp() - (-s * a1).exp()) / s;
            }
            self.peak_sum += a1;
            self.peaks += 1;
        } else {
            self.first = Some(t);
        }
        // FCFS chains deliver in generation order; guard anyway.
        if gen >= self.last_gen || self.peaks == 0 {
            self.last_gen = gen;
        }
        self.last_time = t;
    }
}

/// Time integrals over the observation window `[t_w, horizon]`.
struct Observer {
    t_w: f64,
    horizon: f64,
    last_t: f64,
    bins: usize,
    at_node: Vec<usize>,
    waiting: Vec<usize>,
    sys_hist: Vec<f64>,
    node_hists: Vec<Vec<f64>>,
    node_area: Vec<f64>,
    waiting_area: Vec<f64>,
    sys_area: f64,
    age: AgeTracker,
    sojourn_sum: f64,
    wait_sum: Vec<f64>,
    wait_n: Vec<u64>,
    node_soj_sum: Vec<f64>,
    node_soj_n: Vec<u64>,
}

impl Observer {
    fn new(config: &SimConfig) -> Self {
        let n = config.n_nodes;
        let b = config.hist_bins;
        Observer {
            t_w: config.warmup_fraction * config.horizon,
            horizon: config.horizon,
            last_t: 0.0,
            bins: b,
            at_node: vec![0; n],
            waiting: vec![0; n],
            sys_hist: vec![0.0; b],
            node_hists: vec![vec![0.0; b]; n],
            node_area: vec![0.0; n],
            waiting_area: vec![0.0; n],
            sys_area: 0.0,
            age: AgeTracker::with_lst_points(&config.age_lst_points),
            sojourn_sum: 0.0,
            wait_sum: vec![0.0; n],
            wait_n: vec![0; n],
            node_soj_sum: vec![0.0; n],
            node_soj_n: vec![0; n],
        }
    }

    fn observing(&self, t: f64) -> bool {
        t >= self.t_w
    }

    /// Integrate the current counts up to `t`; call before changing them.
    fn advance(&mut self, t: f64) {
        let lo = self.last_t.max(self.t_w);
        let hi = t.min(self.horizon);
        self.last_t = t;
        if hi <= lo {
            return;
        }
        let dt = hi - lo;
        let mut total = 0;
        for i in 0..self.at_node.len() {
            let k = self.at_node[i];
            total += k;
            self.node_hists[i][k.min(self.bins - 1)] += dt;
            self.node_area[i] += dt * k as f64;
            self.waiting_area[i] += dt * self.waiting[i] as f64;
        }
        self.sys_hist[total.min(self.bins - 1)] += dt;
        self.sys_area += dt * total as f64;
    }

    fn record_wait(&mut self, node: usize, start: f64, entered: f64) {
        if self.observing(start) {
            self.wait_sum[node] += start - entered;
            self.wait_n[node] += 1;
        }
    }

    fn record_node_exit(&mut self, node: usize, exit: f64, entered: f64) {
        if self.observing(exit) {
            self.node_soj_sum[node] += exit - entered;
            self.node_soj_n[node] += 1;
        }
    }

    fn deliver(&mut self, t: f64, gen: f64) {
        if self.observing(t) {
            self.age.deliver(t, gen);
            self.sojourn_sum += t - gen;
        }
    }

    fn finish(mut self) -> Result<ReplicationResult> {
        self.advance(self.horizon);
        let first = match self.age.first {
            Some(f) if self.age.peaks > 0 => f,
            _ => return Err(Error::InsufficientHorizon),
        };
        let span = self.age.last_time - first;
        let window = self.horizon - self.t_w;
        let delivered = self.age.peaks + 1;
        let ratio = |s: f64, n: u64| if n > 0 { s / n as f64 } else { 0.0 };
        let norm = |v: Vec<f64>| v.into_iter().map(|x| x / window).collect::<Vec<_>>();
        Ok(ReplicationResult {
            aaoi: self.age.area / span,
            paoi: self.age.peak_sum / self.age.peaks as f64,
            sojourn_mean: self.sojourn_sum / delivered as f64,
            throughput: delivered as f64 / window,
            delivered,
            per_node_wait: self.wait_sum.iter().zip(&self.wait_n).map(|(&s, &n)| ratio(s, n)).collect(),
            per_node_sojourn: self.node_soj_sum.iter().zip(&self.node_soj_n).map(|(&s, &n)| ratio(s, n)).collect(),
            per_node_mean_number: norm(self.node_area),
            per_node_mean_waiting: norm(self.waiting_area),
            mean_system_size: self.sys_area / window,
            system_size_hist: norm(self.sys_hist),
            node_hists: self.node_hists.into_iter().map(norm).collect(),
            age_lst: self.age.lst_area.iter().map(|a| a / span).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    gen: f64,
    entered: f64,
}

fn simulate_markov(config: &SimConfig, p: &MarkovTandemParams, s: &mut Streams) -> Result<ReplicationResult> {
    let n = p.service_rates.len();
    let horizon = config.horizon;
    let mut obs = Observer::new(config);
    let mut queues: Vec<VecDeque<Packet>> = vec![VecDeque::new(); n];
    let mut completion = vec![f64::INFINITY; n];
    let mut up = true;
    let mut next_arrival = exp_sample(&mut s.arrivals, p.lambda);
    let mut next_failure = exp_sample(&mut s.failures, p.alpha);
    let mut repair_end = f64::INFINITY;

    loop {
        let (mut t, mut node) = (f64::INFINITY, usize::MAX);
        for (i, &c) in completion.iter().enumerate() {
            if c < t {
                t = c;
                node = i;
            }
        }
        let t_break = if up { next_failure } else { repair_end };
        let t_next = next_arrival.min(t_break).min(t);
        if t_next > horizon {
            break;
        }
        obs.advance(t_next);
        if next_arrival <= t_next {
            let now = next_arrival;
            queues[0].push_back(Packet { gen: now, entered: now });
            if queues[0].len() == 1 {
                obs.record_wait(0, now, now);
                if up {
                    completion[0] = now + exp_sample(&mut s.service, p.service_rates[0]);
                }
            }
            next_arrival = now + exp_sample(&mut s.arrivals, p.lambda);
        } else if t_break <= t_next {
            let now = t_break;
            if up {
                up = false;
                completion.iter_mut().for_each(|c| *c = f64::INFINITY);
                repair_end = now + exp_sample(&mut s.failures, p.gamma);
            } else {
                up = true;
                repair_end = f64::INFINITY;
                next_failure = now + exp_sample(&mut s.failures, p.alpha);
                for i in 0..n {
                    if !queues[i].is_empty() {
                        completion[i] = now + exp_sample(&mut s.service, p.service_rates[i]);
                    }
                }
            }
        } else {
            let now = t;
            let i = node;
            let pkt = queues[i].pop_front().expect("completion at an empty node");
            obs.record_node_exit(i, now, pkt.entered);
            completion[i] = f64::INFINITY;
            if i + 1 < n {
                queues[i + 1].push_back(Packet { gen: pkt.gen, entered: now });
                if queues[i + 1].len() == 1 {
                    obs.record_wait(i + 1, now, now);
                    completion[i + 1] = now + exp_sample(&mut s.service, p.service_rates[i + 1]);
                }
            } else {
                obs.deliver(now, pkt.gen);
            }
            if let Some(head) = queues[i].front() {
                obs.record_wait(i, now, head.entered);
                completion[i] = now + exp_sample(&mut s.service, p.service_rates[i]);
            }
        }
        for i in 0..n {
            obs.at_node[i] = queues[i].len();
            obs.waiting[i] = queues[i].len().saturating_sub(1);
        }
    }
    obs.finish()
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Idle,
    Busy { pkt: Packet, done: f64 },
    Blocked { pkt: Packet },
}

/// Stage time with breakdowns: service `H` stretched by a repair for every
/// failure (rate `alpha`) that occurs during the remaining work.
fn completion_time(p: &Mg1TandemParams, stage: usize, s: &mut Streams) -> f64 {
    let mut remaining = p.stages[stage].sample(&mut s.service);
    if p.alpha == 0.0 {
        return remaining;
    }
    let mut total = 0.0;
    loop {
        let f = exp_sample(&mut s.failures, p.alpha);
        if f >= remaining {
            return total + remaining;
        }
        total += f + p.repair.sample(&mut s.failures);
        remaining -= f;
    }
}

fn simulate_chain(config: &SimConfig, p: &Mg1TandemParams, hold_chain: bool, s: &mut Streams) -> Result<ReplicationResult> {
    let n = p.n_stages();
    let horizon = config.horizon;
    let mut obs = Observer::new(config);
    let mut queue: VecDeque<Packet> = VecDeque::new();
    let mut slots = vec![Slot::Idle; n];
    let mut next_arrival = exp_sample(&mut s.arrivals, p.lambda);

    let start = |slots: &mut [Slot], i: usize, pkt: Packet, now: f64, s: &mut Streams| {
        slots[i] = Slot::Busy {
            pkt: Packet { gen: pkt.gen, entered: now },
            done: now + completion_time(p, i, s),
        };
    };

    loop {
        let (mut t, mut node) = (f64::INFINITY, usize::MAX);
        for (i, slot) in slots.iter().enumerate() {
            if let Slot::Busy { done, .. } = *slot {
                if done < t {
                    t = done;
                    node = i;
                }
            }
        }
        let t_next = next_arrival.min(t);
        if t_next > horizon {
            break;
        }
        obs.advance(t_next);
        let now = t_next;
        if next_arrival <= t {
            queue.push_back(Packet { gen: now, entered: now });
            next_arrival = now + exp_sample(&mut s.arrivals, p.lambda);
        } else {
            let i = node;
            let Slot::Busy { pkt, .. } = slots[i] else { unreachable!() };
            if i + 1 == n {
                obs.record_node_exit(i, now, pkt.entered);
                obs.deliver(now, pkt.gen);
                slots[i] = Slot::Idle;
            } else if matches!(slots[i + 1], Slot::Idle) {
                obs.record_node_exit(i, now, pkt.entered);
                obs.record_wait(i + 1, now, now);
                start(&mut slots, i + 1, pkt, now, s);
                slots[i] = Slot::Idle;
            } else {
                slots[i] = Slot::Blocked { pkt };
            }
            // a freed node pulls the blocked packet upstream of it
            let mut k = i;
            while k > 0 && matches!(slots[k], Slot::Idle) {
                if let Slot::Blocked { pkt } = slots[k - 1] {
                    obs.record_node_exit(k - 1, now, pkt.entered);
                    obs.record_wait(k, now, now);
                    start(&mut slots, k, pkt, now, s);
                    slots[k - 1] = Slot::Idle;
                    k -= 1;
                } else {
                    break;
                }
            }
        }
        let free = if hold_chain {
            slots.iter().all(|s| matches!(s, Slot::Idle))
        } else {
            matches!(slots[0], Slot::Idle)
        };
        if free {
            if let Some(pkt) = queue.pop_front() {
                obs.record_wait(0, now, pkt.entered);
                slots[0] = Slot::Busy {
                    pkt,
                    done: now + completion_time(p, 0, s),
                };
            }
        }
        for (i, slot) in slots.iter().enumerate() {
            obs.at_node[i] = usize::from(!matches!(slot, Slot::Idle));
        }
        obs.at_node[0] += queue.len();
        obs.waiting[0] = queue.len();
    }
    obs.finish()
}

fn t_quantile(n: usize) -> f64 {
    if n < 2 {
        return f64::NAN;
    }
    StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

/// Replication-mean estimate with a 95% t-interval.
pub fn estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate { mean, ci_half: f64::NAN };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate {
        mean,
        ci_half: t_quantile(n) * (var / n as f64).sqrt(),
    }
}

fn estimate_each(reps: &[ReplicationResult], f: impl Fn(&ReplicationResult) -> &Vec<f64>) -> Vec<Estimate> {
    let len = f(&reps[0]).len();
    (0..len)
        .map(|j| estimate(&reps.iter().map(|r| f(r)[j]).collect::<Vec<_>>()))
        .collect()
}

fn aggregate(reps: Vec<ReplicationResult>) -> SimResult {
    let scalar = |f: fn(&ReplicationResult) -> f64| estimate(&reps.iter().map(f).collect::<Vec<_>>());
    let aaoi = scalar(|r| r.aaoi);
    let paoi = scalar(|r| r.paoi);
    let sojourn = scalar(|r| r.sojourn_mean);
    let wait = estimate_each(&reps, |r| &r.per_node_wait);
    let sys_hist = estimate_each(&reps, |r| &r.system_size_hist);
    let node2 = if reps[0].node_hists.len() >= 2 {
        estimate_each(&reps, |r| &r.node_hists[1])
    } else {
        Vec::new()
    };
    SimResult {
        aaoi_mean: aaoi.mean,
        aaoi_ci_half: aaoi.ci_half,
        paoi_mean: paoi.mean,
        paoi_ci_half: paoi.ci_half,
        sojourn_mean: sojourn.mean,
        sojourn_ci_half: sojourn.ci_half,
        throughput: scalar(|r| r.throughput),
        per_node_wait: wait.iter().map(|e| e.mean).collect(),
        per_node_wait_ci_half: wait.iter().map(|e| e.ci_half).collect(),
        per_node_sojourn: estimate_each(&reps, |r| &r.per_node_sojourn),
        per_node_mean_number: estimate_each(&reps, |r| &r.per_node_mean_number),
        per_node_mean_waiting: estimate_each(&reps, |r| &r.per_node_mean_waiting),
        mean_system_size: scalar(|r| r.mean_system_size),
        system_size_hist: sys_hist.iter().map(|e| e.mean).collect(),
        system_size_hist_ci_half: sys_hist.iter().map(|e| e.ci_half).collect(),
        node2_queue_hist: node2.iter().map(|e| e.mean).collect(),
        node2_queue_hist_ci_half: node2.iter().map(|e| e.ci_half).collect(),
        delivered_count: reps.iter().map(|r| r.delivered).sum(),
        age_lst: estimate_each(&reps, |r| &r.age_lst),
        replications: reps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DistributionSpec;

    fn mm1_single(lambda: f64, horizon: f64, reps: usize) -> SimConfig {
        let p = Mg1TandemParams::uniform(lambda, 1, DistributionSpec::exponential(1.0).unwrap(), 0.0, 1.0).unwrap();
        SimConfig {
            horizon,
            replications: reps,
            ..SimConfig::new(SimModel::Mg1SequentialStage, ModelParams::Mg1(p))
        }
    }

    fn classical_mm1_aaoi(lambda: f64, mu: f64) -> f64 {
        let rho = lambda / mu;
        (1.0 + 1.0 / rho + rho * rho / (1.0 - rho)) / mu
    }

    #[test]
    fn age_tracker_integrates_sawtooth() {
        let mut a = AgeTracker::default();
        a.deliver(1.0, 0.5);
        a.deliver(3.0, 2.0);
        // from t=1 the age rises from 0.5 to 2.5 at t=3: area 3
        assert!((a.area - 3.0).abs() < 1e-12);
        assert_eq!(a.peaks, 1);
        assert!((a.peak_sum - 2.5).abs() < 1e-12);
    }

    #[test]
    fn single_node_matches_classical_formula() {
        let r = run(&mm1_single(0.5, 2e5, 8)).unwrap();
        let expect = classical_mm1_aaoi(0.5, 1.0);
        assert!((r.aaoi_mean - expect).abs() < 3.0 * r.aaoi_ci_half.max(0.01), "{} vs {expect}", r.aaoi_mean);
        assert!((r.sojourn_mean - 2.0).abs() < 0.05);
        // M/M/1 system-size law is geometric
        for k in 0..5 {
            let g = 0.5 * 0.5f64.powi(k as i32);
            assert!((r.system_size_hist[k] - g).abs() < 3.0 * r.system_size_hist_ci_half[k] + 1e-3);
        }
    }

    #[test]
    fn markov_single_node_without_failures_matches_classical_formula() {
        let p = MarkovTandemParams::uniform(0.4, 1, 1.0, 0.0, 1.0).unwrap();
        let cfg = SimConfig {
            horizon: 2e5,
            replications: 8,
            ..SimConfig::new(SimModel::MarkovTandemGlobalFailure, ModelParams::Markov(p))
        };
        let r = run(&cfg).unwrap();
        let expect = classical_mm1_aaoi(0.4, 1.0);
        assert!((r.aaoi_mean - expect).abs() < 3.0 * r.aaoi_ci_half.max(0.01));
        assert!(r.node2_queue_hist.is_empty());
    }

    #[test]
    fn parallel_matches_sequential_bit_for_bit() {
        let p = Mg1TandemParams::uniform(0.3, 2, DistributionSpec::erlang_with_mean(2, 1.0).unwrap(), 0.3, 1.0).unwrap();
        let cfg = SimConfig {
            horizon: 2e4,
            replications: 6,
            ..SimConfig::new(SimModel::Mg1Overlap, ModelParams::Mg1(p))
        };
        let a = run(&cfg).unwrap();
        let b = run_replicated_parallel(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.aaoi_mean.to_bits(), b.aaoi_mean.to_bits());
    }

    #[test]
    fn model_param_mismatch_is_rejected() {
        let p = MarkovTandemParams::uniform(0.2, 2, 1.0, 0.5, 1.0).unwrap();
        let cfg = SimConfig::new(SimModel::Mg1Overlap, ModelParams::Markov(p.clone()));
        assert!(matches!(run(&cfg), Err(Error::ModelMismatch(_))));
        let cfg = SimConfig {
            n_nodes: 3,
            ..SimConfig::new(SimModel::MarkovTandemGlobalFailure, ModelParams::Markov(p))
        };
        assert!(matches!(run(&cfg), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn short_horizon_is_insufficient() {
        let cfg = SimConfig {
            horizon: 1e-3,
            replications: 1,
            ..mm1_single(0.1, 1.0, 1)
        };
        assert!(matches!(run(&cfg), Err(Error::InsufficientHorizon)));
    }

    #[test]
    fn invalid_config_rejected() {
        let base = mm1_single(0.5, 10.0, 1);
        for cfg in [
            SimConfig { horizon: 0.0, ..base.clone() },
            SimConfig { replications: 0, ..base.clone() },
            SimConfig { warmup_fraction: 1.0, ..base.clone() },
        ] {
            assert!(matches!(run(&cfg), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn histograms_are_distributions() {
        let p = MarkovTandemParams::uniform(0.2, 3, 1.0, 0.5, 1.0).unwrap();
        let cfg = SimConfig {
            horizon: 2e4,
            replications: 3,
            ..SimConfig::new(SimModel::MarkovTandemGlobalFailure, ModelParams::Markov(p))
        };
        let r = run(&cfg).unwrap();
        assert!((r.system_size_hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((r.node2_queue_hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for rep in &r.replications {
            for h in &rep.node_hists {
                assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sequential_chain_holds_one_packet_downstream() {
        let p = Mg1TandemParams::uniform(0.25, 3, DistributionSpec::exponential(1.0).unwrap(), 0.2, 1.0).unwrap();
        let cfg = SimConfig {
            horizon: 2e4,
            replications: 2,
            ..SimConfig::new(SimModel::Mg1SequentialStage, ModelParams::Mg1(p))
        };
        let r = run(&cfg).unwrap();
        for rep in &r.replications {
            // downstream nodes only ever hold the packet that owns the chain
            let downstream: f64 = rep.node_hists[1..].iter().map(|h| 1.0 - h[0]).sum();
            assert!(downstream <= 1.0 - rep.system_size_hist[0] + 1e-9);
            assert!(rep.node_hists[1..].iter().all(|h| h[2..].iter().all(|&x| x == 0.0)));
            assert!(rep.per_node_wait[1..].iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn completion_time_mean_matches_stretch_factor() {
        let p = Mg1TandemParams::uniform(0.1, 1, DistributionSpec::exponential(1.0).unwrap(), 0.5, 2.0).unwrap();
        let mut s = Streams::new(9);
        let n = 400_000;
        let m: f64 = (0..n).map(|_| completion_time(&p, 0, &mut s)).sum::<f64>() / n as f64;
        // E[C] = E[H](1 + alpha E[R]) = 1.25
        assert!((m - 1.25).abs() < 0.01, "{m}");
    }

    #[test]
    fn age_lst_estimate_matches_classical_mm1() {
        // for small s, (1 - L(s))/s approaches the mean age
        let mut cfg = mm1_single(0.5, 2e5, 6);
        cfg.age_lst_points = vec![1e-3, 0.5];
        let r = run(&cfg).unwrap();
        let small = r.age_lst[0].mean;
        assert!(((1.0 - small) / 1e-3 - r.aaoi_mean).abs() < 0.05 * r.aaoi_mean);
        assert!(r.age_lst[1].mean > 0.0 && r.age_lst[1].mean < 1.0);
    }

    #[test]
    fn t_interval_known_value() {
        let e = estimate(&[1.0, 2.0, 3.0]);
        assert!((e.mean - 2.0).abs() < 1e-15);
        // t_{0.975, 2} = 4.302653
        assert!((e.ci_half - 4.302_652_729_911 / 3f64.sqrt()).abs() < 1e-6);
        assert!(estimate(&[1.0]).ci_half.is_nan());
    }
}
