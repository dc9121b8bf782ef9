//! Brute-force reference: the backordering generator on a state space whose
//! external queue is truncated at level `M`, and its stationary distribution.
//!
//! Level 0 holds the states `(0, n₀, n₁, …, n_J)` with `Σ n = N`; every level
//! `l ≥ 1` holds `(l, 0, n₁, …, n_J)` with `Σ n_j = N`. Upward moves out of
//! level `M` are dropped.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netmodel::{composition_count, compositions, ValidatedModel};
use crate::report::PerformanceReport;

/// Default cap on the number of truncated states.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;
/// Above this many states the solver switches to power iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;
/// Largest level block handled by the dense block solver.
const BLOCK_LIMIT: usize = 600;
/// First truncation level of [`solve_auto`].
pub const INITIAL_LEVEL: usize = 16;
/// Mass allowed on the top level before [`solve_auto`] stops doubling.
pub const TAIL_MASS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OracleState {
    pub n_ex: usize,
    /// `(n₀, n₁, …, n_J)`.
    pub counts: Vec<usize>,
}

/// Sparse generator with off-diagonal entries as `(from, to, rate)`.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    pub states: Vec<OracleState>,
    pub transitions: Vec<(usize, usize, f64)>,
    /// `q(z; z) = −Σ_{z̃≠z} q(z; z̃)`.
    pub diagonal: Vec<f64>,
    /// States of level `l` occupy `level_offsets[l]..level_offsets[l + 1]`.
    pub level_offsets: Vec<usize>,
    pub truncation: usize,
    pub arrival_rate: f64,
    /// Rate of each inner node as a function of its queue length, cached for
    /// the metrics.
    rates: Vec<Vec<f64>>,
    exit_to_pool: Vec<f64>,
}

impl TruncatedGenerator {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn level(&self, l: usize) -> std::ops::Range<usize> {
        self.level_offsets[l]..self.level_offsets[l + 1]
    }

    /// `‖πQ‖∞`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut out: Vec<f64> = pi.iter().zip(&self.diagonal).map(|(p, d)| p * d).collect();
        for &(from, to, rate) in &self.transitions {
            out[to] += pi[from] * rate;
        }
        out.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Block of transitions from level `from` to level `to`, dense.
    pub fn block(&self, from: usize, to: usize) -> DMatrix<f64> {
        let rows = self.level(from);
        let cols = self.level(to);
        let mut b = DMatrix::zeros(rows.len(), cols.len());
        // transitions are stored in order of their source state
        let first = self.transitions.partition_point(|&(f, _, _)| f < rows.start);
        let last = self.transitions.partition_point(|&(f, _, _)| f < rows.end);
        for &(f, t, rate) in &self.transitions[first..last] {
            if cols.contains(&t) {
                b[(f - rows.start, t - cols.start)] += rate;
            }
        }
        if from == to {
            for k in rows.clone() {
                b[(k - rows.start, k - rows.start)] += self.diagonal[k];
            }
        }
        b
    }
}

/// Enumerates the truncated state space and all five transition families.
pub fn build_generator(model: &ValidatedModel, truncation: usize, cap: usize) -> Result<TruncatedGenerator> {
    if truncation == 0 {
        return Err(Error::InvalidModel("truncation level must be at least 1".into()));
    }
    let n = model.resources;
    let j_count = model.num_inner();
    let lambda = model.arrival_rate;
    let routing = &model.routing;
    let level0_count = composition_count(n, j_count + 1);
    let level_count = composition_count(n, j_count);
    let total = level_count.checked_mul(truncation).and_then(|s| s.checked_add(level0_count)).unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::StateSpaceTooLarge { states: total, cap });
    }

    let level0 = compositions(n, j_count + 1);
    let inner = compositions(n, j_count);
    let index0: HashMap<Vec<usize>, usize> = level0.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let index_inner: HashMap<Vec<usize>, usize> = inner.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut level_offsets = vec![0, level0.len()];
    for _ in 0..truncation {
        let last = *level_offsets.last().unwrap();
        level_offsets.push(last + inner.len());
    }

    let mut states = Vec::with_capacity(total);
    states.extend(level0.iter().map(|c| OracleState { n_ex: 0, counts: c.clone() }));
    for l in 1..=truncation {
        states.extend(inner.iter().map(|c| {
            let mut counts = Vec::with_capacity(j_count + 1);
            counts.push(0);
            counts.extend_from_slice(c);
            OracleState { n_ex: l, counts }
        }));
    }

    let rates: Vec<Vec<f64>> = (1..=j_count)
        .map(|j| {
            let rf = model.rate(j);
            std::iter::once(0.0).chain((1..=n).map(|k| rf.rate(k))).collect()
        })
        .collect();
    let exit_to_pool: Vec<f64> = (1..=j_count).map(|i| routing.get(i, 0)).collect();

    // index of a state given its level and full count vector
    let locate = |level: usize, counts: &[usize]| -> usize {
        if level == 0 {
            index0[counts]
        } else {
            level_offsets[level] + index_inner[&counts[1..]]
        }
    };

    let mut transitions = Vec::new();
    let mut diagonal = vec![0.0; states.len()];
    let mut next = vec![0; j_count + 1];
    for (from, state) in states.iter().enumerate() {
        let level = state.n_ex;
        let counts = &state.counts;
        let mut push = |to: usize, rate: f64| {
            if rate > 0.0 && to != from {
                transitions.push((from, to, rate));
                diagonal[from] -= rate;
            }
        };
        // arrivals
        if counts[0] > 0 {
            for i in 1..=j_count {
                let p = routing.get(0, i);
                if p > 0.0 {
                    next.copy_from_slice(counts);
                    next[0] -= 1;
                    next[i] += 1;
                    push(locate(0, &next), lambda * p);
                }
            }
        } else if level < truncation {
            push(locate(level + 1, counts), lambda);
        }
        // service completions
        for i in 1..=j_count {
            if counts[i] == 0 {
                continue;
            }
            let nu = rates[i - 1][counts[i]];
            for j in 1..=j_count {
                let p = routing.get(i, j);
                if p > 0.0 && j != i {
                    next.copy_from_slice(counts);
                    next[i] -= 1;
                    next[j] += 1;
                    push(locate(level, &next), nu * p);
                }
            }
            let p_out = routing.get(i, 0);
            if p_out <= 0.0 {
                continue;
            }
            if level == 0 {
                next.copy_from_slice(counts);
                next[i] -= 1;
                next[0] += 1;
                push(locate(0, &next), nu * p_out);
            } else {
                // the freed resource leaves at once with the head of the queue
                for j in 1..=j_count {
                    let p_in = routing.get(0, j);
                    if p_in > 0.0 {
                        next.copy_from_slice(counts);
                        next[i] -= 1;
                        next[j] += 1;
                        push(locate(level - 1, &next), nu * p_out * p_in);
                    }
                }
            }
        }
    }

    Ok(TruncatedGenerator {
        states,
        transitions,
        diagonal,
        level_offsets,
        truncation,
        arrival_rate: lambda,
        rates,
        exit_to_pool,
    })
}

/// Stationary vector of the truncated generator with `‖πQ‖∞ ≤ tol`.
pub fn steady_state(gen: &TruncatedGenerator, tol: f64) -> Result<Vec<f64>> {
    let block = gen.level(1).len().max(gen.level(0).len());
    let pi = if gen.len() <= DIRECT_SOLVE_LIMIT && block <= BLOCK_LIMIT {
        level_reduction(gen)?
    } else {
        power_iteration(gen, tol, 5_000_000)?
    };
    let residual = gen.residual(&pi);
    if residual > tol || pi.iter().any(|p| !p.is_finite()) {
        return Err(Error::NoConvergence { iterations: 0 });
    }
    Ok(pi)
}

/// Block Gaussian elimination from the top level down:
/// `R_l = Q_{l−1,l}·(−U_l)⁻¹` with `U_M = Q_{M,M}` and
/// `U_l = Q_{l,l} + R_{l+1}·Q_{l+1,l}`, then `π₀·U₀ = 0` and `π_l = π_{l−1}·R_l`.
fn level_reduction(gen: &TruncatedGenerator) -> Result<Vec<f64>> {
    let m = gen.truncation;
    let mut r: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); m + 1];
    let mut u = gen.block(m, m);
    for l in (1..=m).rev() {
        let up = gen.block(l - 1, l);
        // R_lᵀ = (−U_l)⁻ᵀ·Q_{l−1,l}ᵀ
        let lu = (-u.transpose()).lu();
        let rt = lu.solve(&up.transpose()).ok_or(Error::SingularSystem)?;
        r[l] = rt.transpose();
        u = gen.block(l - 1, l - 1) + &r[l] * gen.block(l, l - 1);
    }
    let size0 = u.nrows();
    let mut a = u.transpose();
    for c in 0..size0 {
        a[(0, c)] = 1.0;
    }
    let mut b = DVector::zeros(size0);
    b[0] = 1.0;
    let pi0 = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    let mut pi = Vec::with_capacity(gen.len());
    let mut current = pi0.transpose();
    pi.extend(current.iter().copied());
    for rl in r.iter().skip(1) {
        current = &current * rl;
        pi.extend(current.iter().copied());
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|p| (p / total).max(0.0)).collect())
}

/// Power iteration on the uniformised chain `P = I + Q/Λ`.
fn power_iteration(gen: &TruncatedGenerator, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let lambda = gen.diagonal.iter().fold(0.0f64, |m, d| m.max(-d)) * 1.000_001;
    let n = gen.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for iteration in 1..=max_iter {
        for (k, v) in next.iter_mut().enumerate() {
            *v = pi[k] * (1.0 + gen.diagonal[k] / lambda);
        }
        for &(from, to, rate) in &gen.transitions {
            next[to] += pi[from] * rate / lambda;
        }
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        std::mem::swap(&mut pi, &mut next);
        if iteration % 100 == 0 && gen.residual(&pi) <= tol {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

/// Probability mass on level `l`.
pub fn level_mass(gen: &TruncatedGenerator, pi: &[f64], l: usize) -> f64 {
    pi[gen.level(l)].iter().sum()
}

/// Solves with `M = 16, 32, 64, …` until the top level carries less than
/// [`TAIL_MASS`]. Unstable models are rejected up front.
pub fn solve_auto(model: &ValidatedModel, tol: f64, cap: usize) -> Result<(TruncatedGenerator, Vec<f64>)> {
    let verdict = crate::soqn::is_stable(model);
    if !verdict.stable {
        return Err(Error::Unstable { lambda_bo: model.arrival_rate, lambda_max: verdict.lambda_bo_max });
    }
    let mut m = INITIAL_LEVEL;
    loop {
        let gen = build_generator(model, m, cap)?;
        let pi = steady_state(&gen, tol)?;
        if level_mass(&gen, &pi, m) < TAIL_MASS {
            return Ok((gen, pi));
        }
        m *= 2;
    }
}

/// Expectations over `π`: throughputs, `P(n_j = 0)`, mean queue lengths and
/// the external queue.
pub fn oracle_metrics(gen: &TruncatedGenerator, pi: &[f64]) -> PerformanceReport {
    let j_count = gen.rates.len();
    let mut throughputs = vec![0.0; j_count + 1];
    let mut idle = vec![0.0; j_count + 1];
    let mut queue = vec![0.0; j_count + 1];
    let mut l_ex = 0.0;
    for (state, &p) in gen.states.iter().zip(pi) {
        l_ex += p * state.n_ex as f64;
        for (j, &k) in state.counts.iter().enumerate() {
            queue[j] += p * k as f64;
            if k == 0 {
                idle[j] += p;
            } else if j > 0 {
                let flow = p * gen.rates[j - 1][k];
                throughputs[j] += flow;
                throughputs[0] += flow * gen.exit_to_pool[j - 1];
            }
        }
    }
    let waiting_times = queue.iter().zip(&throughputs).map(|(l, th)| l / th).collect();
    PerformanceReport {
        lambda_bo: gen.arrival_rate,
        stability: None,
        lambda_lc: None,
        throughputs,
        idle: idle.into_iter().map(Some).collect(),
        queue_lengths: queue,
        waiting_times,
        l_ex,
        w_ex: l_ex / gen.arrival_rate,
        exact_external: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::netmodel::RateFunction;
    use crate::reduced::{norton_reduce, reduced_bo_distribution};
    use approx::assert_relative_eq;

    fn toy() -> ValidatedModel {
        instances::single_node(RateFunction::constant(2.0), 1, 1.0)
    }

    #[test]
    fn toy_state_space() {
        let g = build_generator(&toy(), 2, DEFAULT_STATE_CAP).unwrap();
        let listed: Vec<(usize, Vec<usize>)> = g.states.iter().map(|s| (s.n_ex, s.counts.clone())).collect();
        assert_eq!(listed, vec![(0, vec![0, 1]), (0, vec![1, 0]), (1, vec![0, 1]), (2, vec![0, 1])]);
    }

    #[test]
    fn rows_sum_to_zero_and_rates_come_from_the_families() {
        let m = instances::random_model(7, 3, 3, false);
        let g = build_generator(&m, 3, DEFAULT_STATE_CAP).unwrap();
        let mut sums = g.diagonal.clone();
        for &(f, _, r) in &g.transitions {
            assert!(r > 0.0);
            sums[f] += r;
        }
        assert!(sums.iter().all(|s| s.abs() < 1e-12));

        let lambda = m.arrival_rate;
        let r = &m.routing;
        let j_count = m.num_inner();
        for &(f, t, rate) in &g.transitions {
            let (from, to) = (&g.states[f], &g.states[t]);
            let ok = (0..=j_count).any(|i| {
                (0..=j_count).any(|j| {
                    let nu = if i > 0 && from.counts[i] > 0 { m.rate(i).rate(from.counts[i]) } else { 0.0 };
                    let candidates = [
                        lambda,
                        nu * r.get(i, j),
                        nu * r.get(i, 0),
                        nu * r.get(i, 0) * r.get(0, j),
                        lambda * r.get(0, j),
                    ];
                    candidates.iter().any(|c| (c - rate).abs() <= 1e-15 * rate)
                })
            });
            assert!(ok, "rate {rate} from {from:?} to {to:?}");
        }
    }

    #[test]
    fn upper_blocks_are_arrivals() {
        let m = instances::random_model(11, 2, 3, false);
        let g = build_generator(&m, 4, DEFAULT_STATE_CAP).unwrap();
        for l in 1..4 {
            let up = g.block(l, l + 1);
            let expected = DMatrix::identity(up.nrows(), up.ncols()) * m.arrival_rate;
            assert_eq!(up, expected);
        }
    }

    #[test]
    fn toy_matches_closed_form() {
        let g = build_generator(&toy(), 40, DEFAULT_STATE_CAP).unwrap();
        let pi = steady_state(&g, 1e-12).unwrap();
        let d = reduced_bo_distribution(&norton_reduce(&toy())).unwrap();
        for (s, p) in g.states.iter().zip(&pi) {
            assert!((p - d.probability(s.n_ex, s.counts[1])).abs() < 1e-10);
        }
        let metrics = oracle_metrics(&g, &pi);
        assert_relative_eq!(metrics.l_ex, 0.5, max_relative = 1e-9);
        assert_relative_eq!(metrics.idle[1].unwrap(), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn symmetric_nodes_share_marginals() {
        let rates = vec![RateFunction::constant(1.5), RateFunction::constant(1.5)];
        let m = crate::netmodel::SoqnModel {
            nodes: rates
                .into_iter()
                .map(|r| crate::netmodel::InnerNode::new("s", r, crate::netmodel::Discipline::FcfsSingleServer))
                .collect(),
            routing: crate::netmodel::RoutingMatrix::from_rows(vec![
                vec![0.0, 0.5, 0.5],
                vec![1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
            ])
            .unwrap(),
            resources: 3,
            arrival_rate: 1.0,
        }
        .validate()
        .unwrap();
        let (g, pi) = solve_auto(&m, 1e-12, DEFAULT_STATE_CAP).unwrap();
        let index: HashMap<&OracleState, usize> = g.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
        for (s, p) in g.states.iter().zip(&pi) {
            let swapped = OracleState { n_ex: s.n_ex, counts: vec![s.counts[0], s.counts[2], s.counts[1]] };
            assert!((p - pi[index[&swapped]]).abs() < 1e-13);
        }
        assert!(level_mass(&g, &pi, g.truncation) < TAIL_MASS);
    }

    #[test]
    fn power_iteration_agrees_with_direct_solve() {
        let m = instances::random_model(3, 2, 2, true);
        let g = build_generator(&m, 24, DEFAULT_STATE_CAP).unwrap();
        let direct = level_reduction(&g).unwrap();
        let iterated = power_iteration(&g, 1e-13, 5_000_000).unwrap();
        for (a, b) in direct.iter().zip(&iterated) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let m = instances::tandem(&vec![RateFunction::constant(1.0); 5], 10, 0.1);
        assert!(matches!(build_generator(&m, 16, 10_000), Err(Error::StateSpaceTooLarge { .. })));
    }
}
