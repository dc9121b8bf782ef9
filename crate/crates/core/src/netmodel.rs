//! Network description: service-rate functions, the routing matrix over the
//! pool (node 0) and the inner nodes `1..=J`, and the traffic equations.

use std::collections::VecDeque;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Routing probabilities below this are structural zeros for reachability.
pub const STRUCTURAL_ZERO: f64 = 1e-15;

/// Tolerance on routing row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Service intensity `ν(n)` of a node holding `n ≥ 1` resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateFunction {
    /// `ν(n) = base_rate`.
    Constant { base_rate: f64 },
    /// `ν(n) = base_rate · n`; a delay station where resources do not interfere.
    InfiniteServer { base_rate: f64 },
    /// `ν(n) = table[n - 1]`.
    Table { table: Vec<f64> },
}

impl RateFunction {
    pub fn constant(rate: f64) -> Self {
        RateFunction::Constant { base_rate: rate }
    }

    pub fn infinite_server(rate: f64) -> Self {
        RateFunction::InfiniteServer { base_rate: rate }
    }

    pub fn table(table: Vec<f64>) -> Self {
        RateFunction::Table { table }
    }

    /// Rate with `n ≥ 1` resources present. Panics on `n = 0` or past the end
    /// of a table; validated models guarantee tables cover the population.
    #[inline]
    pub fn rate(&self, n: usize) -> f64 {
        assert!(n >= 1, "service rate is undefined for an empty node");
        match self {
            RateFunction::Constant { base_rate } => *base_rate,
            RateFunction::InfiniteServer { base_rate } => *base_rate * n as f64,
            RateFunction::Table { table } => table[n - 1],
        }
    }

    /// The rate if it does not depend on the queue length.
    pub fn constant_rate(&self) -> Option<f64> {
        match self {
            RateFunction::Constant { base_rate } => Some(*base_rate),
            RateFunction::InfiniteServer { .. } => None,
            RateFunction::Table { table } => {
                let first = *table.first()?;
                table.iter().all(|&r| r == first).then_some(first)
            }
        }
    }

    /// True if `ν(1) ≤ ν(2) ≤ … ≤ ν(up_to)`.
    pub fn is_nondecreasing(&self, up_to: usize) -> bool {
        match self {
            RateFunction::Constant { .. } | RateFunction::InfiniteServer { .. } => true,
            RateFunction::Table { table } => {
                let end = up_to.min(table.len());
                table[..end].windows(2).all(|w| w[0] <= w[1])
            }
        }
    }

    /// Largest population the function is defined for.
    pub fn max_population(&self) -> usize {
        match self {
            RateFunction::Table { table } => table.len(),
            _ => usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Discipline {
    #[default]
    #[serde(alias = "fcfs")]
    FcfsSingleServer,
    #[serde(alias = "ps")]
    ProcessorSharing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerNode {
    #[serde(default)]
    pub name: String,
    pub rate: RateFunction,
    #[serde(default)]
    pub discipline: Discipline,
}

impl InnerNode {
    pub fn new(name: impl Into<String>, rate: RateFunction, discipline: Discipline) -> Self {
        Self { name: name.into(), rate, discipline }
    }
}

/// Square row-major routing matrix. For a semi-open network index 0 is the
/// resource pool and indices `1..=J` the inner nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct RoutingMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl RoutingMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidModel("routing matrix is empty".into()));
        }
        let mut entries = Vec::with_capacity(size * size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(Error::InvalidModel(format!("routing row {i} has {} entries, expected {size}", row.len())));
            }
            entries.extend(row);
        }
        Ok(Self { size, entries })
    }

    pub fn zeros(size: usize) -> Self {
        Self { size, entries: vec![0.0; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: f64) {
        self.entries[i * self.size + j] = p;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.size)
    }

    /// Number of entries above [`STRUCTURAL_ZERO`].
    pub fn support_size(&self) -> usize {
        self.entries.iter().filter(|&&p| p > STRUCTURAL_ZERO).count()
    }

    /// Checks non-negativity and unit row sums.
    pub fn check_stochastic(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            if let Some(j) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidModel(format!("routing entry r({i},{j}) = {} is not a probability", row[j])));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonStochasticRow { row: i, sum });
            }
        }
        Ok(())
    }

    /// First node that is not mutually reachable with node 0 along the
    /// support of the matrix, if any.
    pub fn first_unreachable(&self) -> Option<usize> {
        let forward = self.reachable_from_zero(|i, j| self.get(i, j));
        let backward = self.reachable_from_zero(|i, j| self.get(j, i));
        (0..self.size).find(|&k| !forward[k] || !backward[k])
    }

    pub fn is_irreducible(&self) -> bool {
        self.first_unreachable().is_none()
    }

    fn reachable_from_zero(&self, weight: impl Fn(usize, usize) -> f64) -> Vec<bool> {
        let mut seen = vec![false; self.size];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..self.size {
                if !seen[j] && weight(i, j) > STRUCTURAL_ZERO {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }
}

impl From<RoutingMatrix> for Vec<Vec<f64>> {
    fn from(m: RoutingMatrix) -> Self {
        m.rows().map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for RoutingMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        RoutingMatrix::from_rows(rows)
    }
}

/// Visit ratios `η` over `{0, …, J}` normalised to `η₀ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSolution {
    eta: Vec<f64>,
}

impl TrafficSolution {
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn eta0(&self) -> f64 {
        self.eta[0]
    }

    /// Visit ratios of the inner nodes `1..=J`.
    pub fn inner(&self) -> &[f64] {
        &self.eta[1..]
    }

    pub fn get(&self, node: usize) -> f64 {
        self.eta[node]
    }
}

/// Solves `η = η·R` with `η₀ = 1` by a dense direct solve of `(I − R)ᵀ ηᵀ = 0`
/// where the first equation is replaced by the normalisation.
pub fn solve_traffic(routing: &RoutingMatrix) -> Result<TrafficSolution> {
    let n = routing.size();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // row j of the transposed system collects the inflow into j
            let identity = if i == j { 1.0 } else { 0.0 };
            a[(j, i)] = identity - routing.get(i, j);
        }
    }
    for j in 0..n {
        a[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    let mut b = DVector::<f64>::zeros(n);
    b[0] = 1.0;
    let eta = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    if eta.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::SingularSystem);
    }
    Ok(TrafficSolution { eta: eta.iter().copied().collect() })
}

/// Routing of the saturated network in which node 0 is skipped:
/// `r'(i,j) = r(i,j) + r(i,0)·r(0,j)` over the inner nodes. Index `k` of the
/// result is inner node `k + 1`.
pub fn stability_routing(routing: &RoutingMatrix) -> RoutingMatrix {
    let j_count = routing.size() - 1;
    let mut skip = RoutingMatrix::zeros(j_count);
    for i in 1..=j_count {
        for j in 1..=j_count {
            skip.set(i - 1, j - 1, routing.get(i, j) + routing.get(i, 0) * routing.get(0, j));
        }
    }
    skip
}

/// Number of ways to place `n` indistinguishable resources on `parts` nodes,
/// saturating at `usize::MAX`.
pub fn composition_count(n: usize, parts: usize) -> usize {
    if parts == 0 {
        return usize::from(n == 0);
    }
    // C(n + parts - 1, parts - 1), built incrementally so every step is exact
    let k = parts - 1;
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (n as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// All vectors of length `parts` with non-negative entries summing to `n`,
/// in lexicographic order.
pub fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(composition_count(n, parts).min(1 << 20));
    if parts == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut current = vec![0; parts];
    fill_compositions(n, 0, &mut current, &mut out);
    out
}

fn fill_compositions(left: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(current.clone());
        return;
    }
    for k in 0..=left {
        current[pos] = k;
        fill_compositions(left - k, pos + 1, current, out);
    }
}

/// A semi-open network with backordering as read from input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoqnModel {
    pub nodes: Vec<InnerNode>,
    pub routing: RoutingMatrix,
    /// Number of resources `N`.
    pub resources: usize,
    /// External Poisson arrival rate `λ_BO`.
    pub arrival_rate: f64,
}

impl SoqnModel {
    pub fn num_inner(&self) -> usize {
        self.nodes.len()
    }

    /// Checks every model invariant, truncates rate tables to `N` entries and
    /// solves the traffic equations.
    pub fn validate(mut self) -> Result<ValidatedModel> {
        let j_count = self.nodes.len();
        if j_count == 0 {
            return Err(Error::InvalidModel("at least one inner node is required".into()));
        }
        if self.routing.size() != j_count + 1 {
            return Err(Error::InvalidModel(format!(
                "routing matrix is {0}x{0} but the network has {1} nodes including the pool",
                self.routing.size(),
                j_count + 1
            )));
        }
        if self.resources == 0 {
            return Err(Error::InvalidModel("at least one resource is required".into()));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(Error::InvalidModel(format!("arrival rate must be positive, got {}", self.arrival_rate)));
        }
        let population = self.resources;
        for (k, node) in self.nodes.iter_mut().enumerate() {
            let id = k + 1;
            match &mut node.rate {
                RateFunction::Constant { base_rate } | RateFunction::InfiniteServer { base_rate } => {
                    if !(base_rate.is_finite() && *base_rate > 0.0) {
                        return Err(Error::NonPositiveRate { node: id, n: 1 });
                    }
                }
                RateFunction::Table { table } => {
                    if table.len() < population {
                        return Err(Error::InvalidModel(format!(
                            "rate table of node {id} has {} entries, population is {population}",
                            table.len()
                        )));
                    }
                    table.truncate(population);
                    if let Some(pos) = table.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
                        return Err(Error::NonPositiveRate { node: id, n: pos + 1 });
                    }
                }
            }
        }
        self.routing.check_stochastic()?;
        let pool_self = self.routing.get(0, 0);
        if pool_self != 0.0 {
            return Err(Error::PoolSelfLoop { value: pool_self });
        }
        if let Some(node) = self.routing.first_unreachable() {
            return Err(Error::Reducible { node });
        }
        let eta = solve_traffic(&self.routing)?;
        Ok(ValidatedModel { model: self, eta })
    }
}

/// A model whose invariants have been checked, with its traffic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    model: SoqnModel,
    eta: TrafficSolution,
}

impl ValidatedModel {
    pub fn model(&self) -> &SoqnModel {
        &self.model
    }

    pub fn into_inner(self) -> SoqnModel {
        self.model
    }

    pub fn traffic(&self) -> &TrafficSolution {
        &self.eta
    }

    pub fn eta(&self) -> &[f64] {
        self.eta.eta()
    }

    /// Rate function of inner node `node ∈ 1..=J`.
    pub fn rate(&self, node: usize) -> &RateFunction {
        &self.model.nodes[node - 1].rate
    }

    pub fn inner_rates(&self) -> Vec<RateFunction> {
        self.model.nodes.iter().map(|n| n.rate.clone()).collect()
    }

    /// Whether every inner node has a non-decreasing service rate.
    pub fn rates_nondecreasing(&self) -> bool {
        self.model.nodes.iter().all(|n| n.rate.is_nondecreasing(self.model.resources))
    }

    /// Same network with another resource count.
    pub fn with_resources(&self, resources: usize) -> Result<ValidatedModel> {
        let mut model = self.model.clone();
        model.resources = resources;
        model.validate()
    }

    /// Same network with another arrival rate.
    pub fn with_arrival_rate(&self, arrival_rate: f64) -> Result<ValidatedModel> {
        if !(arrival_rate.is_finite() && arrival_rate > 0.0) {
            return Err(Error::InvalidModel(format!("arrival rate must be positive, got {arrival_rate}")));
        }
        let mut out = self.clone();
        out.model.arrival_rate = arrival_rate;
        Ok(out)
    }
}

impl Deref for ValidatedModel {
    type Target = SoqnModel;

    fn deref(&self) -> &SoqnModel {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle2() -> SoqnModel {
        SoqnModel {
            nodes: vec![InnerNode::new("a", RateFunction::constant(2.0), Discipline::FcfsSingleServer)],
            routing: RoutingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            resources: 1,
            arrival_rate: 1.0,
        }
    }

    #[test]
    fn smallest_legal_model_is_valid() {
        let m = cycle2().validate().unwrap();
        assert_eq!(m.eta(), &[1.0, 1.0]);
    }

    #[test]
    fn row_sum_violation_is_reported_with_row() {
        let mut m = cycle2();
        m.nodes.push(InnerNode::new("b", RateFunction::constant(1.0), Discipline::FcfsSingleServer));
        m.routing =
            RoutingMatrix::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.49], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(m.validate(), Err(Error::NonStochasticRow { row: 1, .. })));
    }

    #[test]
    fn pool_self_loop_is_rejected() {
        let mut m = cycle2();
        m.routing = RoutingMatrix::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(m.validate(), Err(Error::PoolSelfLoop { .. })));
    }

    #[test]
    fn reducible_routing_is_rejected() {
        let mut m = cycle2();
        m.nodes.push(InnerNode::new("b", RateFunction::constant(1.0), Discipline::FcfsSingleServer));
        // node 2 is never entered
        m.routing =
            RoutingMatrix::from_rows(vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.validate().unwrap_err(), Error::Reducible { node: 2 });
    }

    #[test]
    fn non_positive_rates_are_located() {
        let mut m = cycle2();
        m.resources = 3;
        m.nodes[0].rate = RateFunction::table(vec![1.0, 0.0, 2.0]);
        assert_eq!(m.validate().unwrap_err(), Error::NonPositiveRate { node: 1, n: 2 });

        let mut m = cycle2();
        m.nodes[0].rate = RateFunction::constant(-1.0);
        assert_eq!(m.validate().unwrap_err(), Error::NonPositiveRate { node: 1, n: 1 });
    }

    #[test]
    fn short_tables_are_rejected_and_long_ones_truncated() {
        let mut m = cycle2();
        m.resources = 3;
        m.nodes[0].rate = RateFunction::table(vec![1.0, 2.0]);
        assert!(matches!(m.validate(), Err(Error::InvalidModel(_))));

        let mut m = cycle2();
        m.resources = 2;
        m.nodes[0].rate = RateFunction::table(vec![1.0, 2.0, 3.0, 4.0]);
        let v = m.validate().unwrap();
        assert_eq!(v.rate(1), &RateFunction::table(vec![1.0, 2.0]));
    }

    #[test]
    fn traffic_of_branching_network() {
        // 0→1; 1→0 or 1→2 with 1/2 each; 2→0
        let r = RoutingMatrix::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![1.0, 0.0, 0.0]]).unwrap();
        let eta = solve_traffic(&r).unwrap();
        approx::assert_abs_diff_eq!(eta.eta()[0], 1.0);
        approx::assert_abs_diff_eq!(eta.eta()[1], 1.0, epsilon = 1e-14);
        approx::assert_abs_diff_eq!(eta.eta()[2], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn skip_routing_examples() {
        let r = RoutingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(stability_routing(&r), RoutingMatrix::from_rows(vec![vec![1.0]]).unwrap());

        let r = RoutingMatrix::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let skip = stability_routing(&r);
        assert_eq!(skip, RoutingMatrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert!(skip.is_irreducible());
    }

    #[test]
    fn compositions_are_lexicographic_and_counted() {
        let c = compositions(2, 2);
        assert_eq!(c, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(composition_count(2, 2), 3);
        assert_eq!(composition_count(4, 3), compositions(4, 3).len());
        assert_eq!(composition_count(100, 5), 4_598_126);
        assert_eq!(composition_count(550, 12), usize::MAX);
        assert_eq!(composition_count(3, 0), 0);
    }

    #[test]
    fn rate_function_shapes() {
        assert_eq!(RateFunction::constant(3.0).rate(5), 3.0);
        assert_eq!(RateFunction::infinite_server(0.5).rate(4), 2.0);
        assert_eq!(RateFunction::table(vec![1.0, 3.0]).rate(2), 3.0);
        assert_eq!(RateFunction::table(vec![2.0, 2.0]).constant_rate(), Some(2.0));
        assert_eq!(RateFunction::infinite_server(2.0).constant_rate(), None);
        assert!(!RateFunction::table(vec![2.0, 1.0]).is_nondecreasing(2));
        assert!(RateFunction::table(vec![2.0, 1.0]).is_nondecreasing(1));
    }
}
