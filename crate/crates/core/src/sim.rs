//! Stochastic simulation of the backordering network.
//!
//! The state changes only at exponential events, so each step draws the time
//! to the next event from the total rate and then picks the event in
//! proportion to its rate. FCFS nodes serve their head of line; other nodes
//! complete a uniformly chosen resource, which for `ν(n) = μ·n` is the same
//! as independent per-resource clocks.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netmodel::{Discipline, RateFunction, ValidatedModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    /// Observations before this time are discarded.
    pub warmup: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Configuration with the default warmup of 10% of the horizon.
    pub fn new(horizon: f64, replications: usize, seed: u64) -> Self {
        Self { horizon, warmup: 0.1 * horizon, replications, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > self.warmup && self.warmup >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "simulation needs horizon > warmup >= 0, got horizon {} and warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidModel("at least one replication is required".into()));
        }
        Ok(())
    }
}

/// Mean and sample standard deviation across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { mean, std, n }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

/// Raw counts of one replication over the whole horizon, warmup included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationCounters {
    pub arrivals: u64,
    /// Customers whose resource has returned to the pool.
    pub departures: u64,
    /// Customers waiting outside or holding a resource at the horizon.
    pub in_system_at_end: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnoverEstimate {
    /// External arrival to start of picking.
    pub to_task: Summary,
    /// Queueing delay in front of the picking nodes.
    pub picker_wait: Summary,
    /// Queueing delay in front of the replenishment nodes.
    pub replenisher_wait: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    /// Time-average external queue length.
    pub l_ex: Summary,
    /// Mean external wait of customers arriving after warmup.
    pub w_ex: Summary,
    /// Per node `0..=J`; node 0 counts resources leaving the pool.
    pub throughputs: Vec<Summary>,
    /// Fraction of time node `j` is empty.
    pub idle: Vec<Summary>,
    pub queue_lengths: Vec<Summary>,
    pub turnover: Option<TurnoverEstimate>,
    pub counters: Vec<ReplicationCounters>,
}

/// Simulates `cfg.replications` independent trajectories of `model`.
pub fn simulate(model: &ValidatedModel, cfg: &SimConfig) -> Result<SimEstimate> {
    simulate_at_rate(model, model.arrival_rate, cfg)
}

/// As [`simulate`] with the arrival rate replaced; `0` is allowed.
pub fn simulate_at_rate(model: &ValidatedModel, arrival_rate: f64, cfg: &SimConfig) -> Result<SimEstimate> {
    run(model, arrival_rate, cfg, None)
}

/// As [`simulate`], also tagging every customer from external arrival to the
/// start of service at a picking node.
pub fn simulate_turnover(
    model: &ValidatedModel,
    cfg: &SimConfig,
    picking_nodes: &[usize],
    replenish_nodes: &[usize],
) -> Result<SimEstimate> {
    for &node in picking_nodes.iter().chain(replenish_nodes) {
        if node == 0 || node > model.num_inner() {
            return Err(Error::UnknownNode(node));
        }
    }
    for &node in picking_nodes {
        if model.rate(node).constant_rate().is_none() {
            return Err(Error::NotConstantRate(node));
        }
    }
    let mut role = vec![Role::Other; model.num_inner() + 1];
    for &node in replenish_nodes {
        role[node] = Role::Replenish;
    }
    for &node in picking_nodes {
        role[node] = Role::Pick;
    }
    run(model, model.arrival_rate, cfg, Some(role))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Other,
    Pick,
    Replenish,
}

fn run(model: &ValidatedModel, arrival_rate: f64, cfg: &SimConfig, roles: Option<Vec<Role>>) -> Result<SimEstimate> {
    cfg.validate()?;
    if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
        return Err(Error::InvalidModel(format!("arrival rate must be non-negative, got {arrival_rate}")));
    }
    let network = Network::new(model, roles);
    let outcomes: Vec<Outcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(rep as u64);
            Replication::new(&network).run(&mut rng, arrival_rate, cfg)
        })
        .collect();
    Ok(summarise(&outcomes, network.tagging))
}

/// Immutable description shared by all replications.
struct Network {
    resources: usize,
    /// Service rate per node `1..=J` and queue length `0..=N`; index 0 unused.
    rates: Vec<Vec<f64>>,
    fcfs: Vec<bool>,
    /// Cumulative routing rows over `0..=J`.
    cumulative: Vec<Vec<f64>>,
    roles: Vec<Role>,
    tagging: bool,
}

impl Network {
    fn new(model: &ValidatedModel, roles: Option<Vec<Role>>) -> Self {
        let j_count = model.num_inner();
        let n = model.resources;
        let mut rates = vec![Vec::new()];
        let mut fcfs = vec![false];
        for node in &model.nodes {
            rates.push(std::iter::once(0.0).chain((1..=n).map(|k| node.rate.rate(k))).collect());
            // a pure delay station has no queue whatever its nominal discipline
            let delay = matches!(node.rate, RateFunction::InfiniteServer { .. });
            fcfs.push(node.discipline == Discipline::FcfsSingleServer && !delay);
        }
        let cumulative = model
            .routing
            .rows()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        let tagging = roles.is_some();
        Self {
            resources: n,
            rates,
            fcfs,
            cumulative,
            roles: roles.unwrap_or_else(|| vec![Role::Other; j_count + 1]),
            tagging,
        }
    }

    fn route<R: Rng>(&self, from: usize, rng: &mut R) -> usize {
        let row = &self.cumulative[from];
        let u = rng.random::<f64>() * row[row.len() - 1];
        row.partition_point(|&c| c <= u).min(row.len() - 1)
    }
}

/// Per-replication results.
struct Outcome {
    l_ex: f64,
    w_ex: f64,
    throughputs: Vec<f64>,
    idle: Vec<f64>,
    queue_lengths: Vec<f64>,
    to_task: f64,
    picker_wait: f64,
    replenisher_wait: f64,
    counters: ReplicationCounters,
}

#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    count: u64,
}

impl Mean {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.count += 1;
    }

    fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

struct Replication<'a> {
    net: &'a Network,
    time: f64,
    pool: Vec<usize>,
    external: VecDeque<f64>,
    /// Resources at each node `1..=J`; FCFS nodes serve the front.
    queues: Vec<VecDeque<usize>>,
    /// External arrival time of the customer each resource carries.
    task_arrival: Vec<f64>,
    node_arrival: Vec<f64>,
    picked: Vec<bool>,
    // time integrals over the observation window
    area_ex: f64,
    area_queue: Vec<f64>,
    area_idle: Vec<f64>,
    completions: Vec<u64>,
    w_ex: Mean,
    to_task: Mean,
    picker_wait: Mean,
    replenisher_wait: Mean,
    counters: ReplicationCounters,
}

impl<'a> Replication<'a> {
    fn new(net: &'a Network) -> Self {
        let nodes = net.rates.len();
        Self {
            net,
            time: 0.0,
            pool: (0..net.resources).rev().collect(),
            external: VecDeque::new(),
            queues: vec![VecDeque::new(); nodes],
            task_arrival: vec![0.0; net.resources],
            node_arrival: vec![0.0; net.resources],
            picked: vec![false; net.resources],
            area_ex: 0.0,
            area_queue: vec![0.0; nodes],
            area_idle: vec![0.0; nodes],
            completions: vec![0; nodes],
            w_ex: Mean::default(),
            to_task: Mean::default(),
            picker_wait: Mean::default(),
            replenisher_wait: Mean::default(),
            counters: ReplicationCounters { arrivals: 0, departures: 0, in_system_at_end: 0, events: 0 },
        }
    }

    fn node_len(&self, node: usize) -> usize {
        if node == 0 {
            self.pool.len()
        } else {
            self.queues[node].len()
        }
    }

    fn accumulate(&mut self, until: f64, warmup: f64) {
        let start = self.time.max(warmup);
        if until > start {
            let dt = until - start;
            self.area_ex += dt * self.external.len() as f64;
            for node in 0..self.queues.len() {
                let len = self.node_len(node);
                self.area_queue[node] += dt * len as f64;
                if len == 0 {
                    self.area_idle[node] += dt;
                }
            }
        }
        self.time = until;
    }

    fn run<R: Rng>(mut self, rng: &mut R, lambda: f64, cfg: &SimConfig) -> Outcome {
        let nodes = self.queues.len();
        let mut node_rates = vec![0.0; nodes];
        loop {
            let mut total = lambda;
            for node in 1..nodes {
                node_rates[node] = self.net.rates[node][self.queues[node].len()];
                total += node_rates[node];
            }
            let next = if total > 0.0 { self.time + rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };
            if next >= cfg.horizon {
                self.accumulate(cfg.horizon, cfg.warmup);
                break;
            }
            self.accumulate(next, cfg.warmup);
            self.counters.events += 1;
            let mut u = rng.random::<f64>() * total - lambda;
            let mut chosen = None;
            if u >= 0.0 {
                for (node, &rate) in node_rates.iter().enumerate().skip(1) {
                    if rate > 0.0 {
                        // rounding can leave u just past the last busy node
                        chosen = Some(node);
                        if u < rate {
                            break;
                        }
                        u -= rate;
                    }
                }
            }
            match chosen {
                Some(node) => self.completion(node, rng, cfg.warmup),
                None => self.arrival(rng, cfg.warmup),
            }
            debug_assert_eq!(
                self.pool.len() + self.queues.iter().map(VecDeque::len).sum::<usize>(),
                self.net.resources
            );
        }
        self.finish(cfg)
    }

    fn arrival<R: Rng>(&mut self, rng: &mut R, warmup: f64) {
        self.counters.arrivals += 1;
        match self.pool.pop() {
            Some(robot) => {
                if self.time >= warmup {
                    self.w_ex.add(0.0);
                }
                self.dispatch(robot, self.time, rng, warmup);
            }
            None => self.external.push_back(self.time),
        }
    }

    /// Sends `robot` from the pool into the network with a customer that
    /// arrived at `arrival`.
    fn dispatch<R: Rng>(&mut self, robot: usize, arrival: f64, rng: &mut R, warmup: f64) {
        if self.time >= warmup {
            self.completions[0] += 1;
        }
        self.task_arrival[robot] = arrival;
        self.picked[robot] = false;
        let node = self.net.route(0, rng);
        self.enter(robot, node, warmup);
    }

    fn enter(&mut self, robot: usize, node: usize, warmup: f64) {
        self.node_arrival[robot] = self.time;
        self.queues[node].push_back(robot);
        if !self.net.fcfs[node] || self.queues[node].len() == 1 {
            self.start_service(robot, node, warmup);
        }
    }

    fn start_service(&mut self, robot: usize, node: usize, warmup: f64) {
        if !self.net.tagging {
            return;
        }
        let wait = self.time - self.node_arrival[robot];
        match self.net.roles[node] {
            Role::Pick => {
                if self.node_arrival[robot] >= warmup {
                    self.picker_wait.add(wait);
                }
                if !self.picked[robot] {
                    self.picked[robot] = true;
                    if self.task_arrival[robot] >= warmup {
                        self.to_task.add(self.time - self.task_arrival[robot]);
                    }
                }
            }
            Role::Replenish => {
                if self.node_arrival[robot] >= warmup {
                    self.replenisher_wait.add(wait);
                }
            }
            Role::Other => {}
        }
    }

    fn completion<R: Rng>(&mut self, node: usize, rng: &mut R, warmup: f64) {
        let queue = &mut self.queues[node];
        let robot = if self.net.fcfs[node] {
            queue.pop_front().expect("busy node")
        } else {
            let k = rng.random_range(0..queue.len());
            queue.swap_remove_back(k).expect("busy node")
        };
        if self.net.fcfs[node] {
            if let Some(&head) = self.queues[node].front() {
                self.start_service(head, node, warmup);
            }
        }
        if self.time >= warmup {
            self.completions[node] += 1;
        }
        let next = self.net.route(node, rng);
        if next != 0 {
            self.enter(robot, next, warmup);
            return;
        }
        self.counters.departures += 1;
        match self.external.pop_front() {
            Some(arrival) => {
                if arrival >= warmup {
                    self.w_ex.add(self.time - arrival);
                }
                self.dispatch(robot, arrival, rng, warmup);
            }
            None => self.pool.push(robot),
        }
    }

    fn finish(mut self, cfg: &SimConfig) -> Outcome {
        let span = cfg.horizon - cfg.warmup;
        self.counters.in_system_at_end = (self.external.len() + self.net.resources - self.pool.len()) as u64;
        Outcome {
            l_ex: self.area_ex / span,
            w_ex: self.w_ex.value(),
            throughputs: self.completions.iter().map(|&c| c as f64 / span).collect(),
            idle: self.area_idle.iter().map(|a| a / span).collect(),
            queue_lengths: self.area_queue.iter().map(|a| a / span).collect(),
            to_task: self.to_task.value(),
            picker_wait: self.picker_wait.value(),
            replenisher_wait: self.replenisher_wait.value(),
            counters: self.counters,
        }
    }
}

fn summarise(outcomes: &[Outcome], tagging: bool) -> SimEstimate {
    let column = |f: &dyn Fn(&Outcome) -> f64| Summary::of(&outcomes.iter().map(f).collect::<Vec<_>>());
    let per_node = |f: &dyn Fn(&Outcome) -> &Vec<f64>| {
        let nodes = f(&outcomes[0]).len();
        (0..nodes).map(|j| column(&|o| f(o)[j])).collect::<Vec<_>>()
    };
    SimEstimate {
        l_ex: column(&|o| o.l_ex),
        w_ex: column(&|o| o.w_ex),
        throughputs: per_node(&|o| &o.throughputs),
        idle: per_node(&|o| &o.idle),
        queue_lengths: per_node(&|o| &o.queue_lengths),
        turnover: tagging.then(|| TurnoverEstimate {
            to_task: column(&|o| o.to_task),
            picker_wait: column(&|o| o.picker_wait),
            replenisher_wait: column(&|o| o.replenisher_wait),
        }),
        counters: outcomes.iter().map(|o| o.counters).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    fn toy() -> ValidatedModel {
        instances::single_node(RateFunction::constant(2.0), 1, 1.0)
    }

    #[test]
    fn config_is_checked() {
        assert!(SimConfig { horizon: 1.0, warmup: 1.0, replications: 1, seed: 0 }.validate().is_err());
        assert!(SimConfig { horizon: 1.0, warmup: 0.0, replications: 0, seed: 0 }.validate().is_err());
        assert!(SimConfig::new(10.0, 2, 0).validate().is_ok());
    }

    #[test]
    fn same_seed_same_estimate() {
        let m = instances::random_model(5, 3, 4, false);
        let cfg = SimConfig::new(2_000.0, 4, 42);
        let a = simulate(&m, &cfg).unwrap();
        let b = simulate(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.l_ex, c.l_ex);
    }

    #[test]
    fn zero_traffic_counts_nothing() {
        let est = simulate_at_rate(&toy(), 0.0, &SimConfig::new(1_000.0, 3, 1)).unwrap();
        for c in &est.counters {
            assert_eq!((c.arrivals, c.departures, c.in_system_at_end, c.events), (0, 0, 0, 0));
        }
        assert_eq!(est.l_ex.mean, 0.0);
        assert!(est.throughputs.iter().all(|s| s.mean == 0.0));
    }

    #[test]
    fn customers_are_conserved() {
        let m = instances::random_model(9, 3, 5, false);
        let est = simulate(&m, &SimConfig::new(5_000.0, 3, 7)).unwrap();
        for c in &est.counters {
            assert!(c.arrivals > 0);
            assert_eq!(c.arrivals, c.departures + c.in_system_at_end);
        }
    }

    #[test]
    fn toy_external_queue() {
        let est = simulate(&toy(), &SimConfig::new(200_000.0, 8, 3)).unwrap();
        let se = est.l_ex.std_error().max(1e-3);
        assert!((est.l_ex.mean - 0.5).abs() < 3.0 * se + 0.02, "{:?}", est.l_ex);
        assert!((est.idle[1].mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn turnover_rejects_unknown_nodes() {
        let cfg = SimConfig::new(10.0, 1, 0);
        assert_eq!(simulate_turnover(&toy(), &cfg, &[2], &[]).unwrap_err(), Error::UnknownNode(2));
        let delay = instances::single_node(RateFunction::infinite_server(1.0), 2, 0.5);
        assert_eq!(simulate_turnover(&delay, &cfg, &[1], &[]).unwrap_err(), Error::NotConstantRate(1));
    }
}
