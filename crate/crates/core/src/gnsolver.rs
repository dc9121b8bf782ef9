//! Closed Gordon–Newell machinery: load-dependent convolution for the
//! normalisation constants of the saturated network, exact MVA, and the
//! product-form distribution of the lost-customers network.
//!
//! Normalisation constants are kept as natural logarithms. With 550
//! resources the products `Π η/ν` leave the range of `f64` long before the
//! ratios that matter do, so every ratio is formed as a difference of logs.

use crate::error::{Error, Result};
use crate::netmodel::{composition_count, compositions, RateFunction, ValidatedModel};

/// Default cap on the number of states `lc_steady_state` will enumerate.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// `ln(e^a + e^b)` without overflow; `-inf` is the additive identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln Π_{i=1}^{k} η/ν(i)` for `k = 0..=n`.
pub fn log_node_factors(rate: &RateFunction, eta: f64, n: usize) -> Vec<f64> {
    let ln_eta = eta.ln();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += ln_eta - rate.rate(i).ln();
        out.push(acc);
    }
    out
}

/// `C(m)` for `m = 0..=N`, stored as `ln C(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormConstantTable {
    ln_values: Vec<f64>,
}

impl NormConstantTable {
    pub fn from_ln_values(ln_values: Vec<f64>) -> Self {
        debug_assert!(ln_values.first() == Some(&0.0));
        Self { ln_values }
    }

    /// Largest population in the table.
    pub fn population(&self) -> usize {
        self.ln_values.len() - 1
    }

    pub fn ln(&self, m: usize) -> f64 {
        self.ln_values[m]
    }

    pub fn ln_values(&self) -> &[f64] {
        &self.ln_values
    }

    /// `C(m)`; may be `inf` or `0` for large `m`.
    pub fn value(&self, m: usize) -> f64 {
        self.ln_values[m].exp()
    }

    /// `C(m − 1)/C(m)` for `m ≥ 1`.
    pub fn ratio(&self, m: usize) -> f64 {
        (self.ln_values[m - 1] - self.ln_values[m]).exp()
    }
}

/// Normalisation constants of the saturated inner network,
/// `C(m) = Σ_{Σn_j=m} Π_j Π_{i≤n_j} η_j/ν_j(i)`, by node-wise convolution.
///
/// `eta_inner[k]` is the visit ratio of `rates[k]`.
pub fn norm_constants(rates: &[RateFunction], eta_inner: &[f64], n: usize) -> NormConstantTable {
    assert_eq!(rates.len(), eta_inner.len(), "one visit ratio per node");
    let mut acc = vec![f64::NEG_INFINITY; n + 1];
    acc[0] = 0.0;
    for (rate, &eta) in rates.iter().zip(eta_inner) {
        acc = convolve_node(&acc, rate, eta);
    }
    NormConstantTable { ln_values: acc }
}

/// Convolves a log-domain table with one more node.
fn convolve_node(prev: &[f64], rate: &RateFunction, eta: f64) -> Vec<f64> {
    let n = prev.len() - 1;
    if let Some(nu) = rate.constant_rate() {
        // C'(m) = C(m) + (η/ν)·C'(m−1)
        let ln_rho = eta.ln() - nu.ln();
        let mut out = Vec::with_capacity(n + 1);
        out.push(prev[0]);
        for m in 1..=n {
            let carried = out[m - 1] + ln_rho;
            out.push(log_add_exp(prev[m], carried));
        }
        return out;
    }
    let factors = log_node_factors(rate, eta, n);
    let mut terms = Vec::with_capacity(n + 1);
    (0..=n)
        .map(|m| {
            terms.clear();
            terms.extend((0..=m).map(|k| prev[m - k] + factors[k]));
            log_sum_exp(&terms)
        })
        .collect()
}

/// `φ(m) = η₀·C(m−1)/C(m)` for `m = 0..=N`, with `φ(0) = 0`. This is the
/// throughput through node 0 of the saturated network with `m` resources.
pub fn th0_profile(table: &NormConstantTable, eta0: f64) -> Vec<f64> {
    let mut phi = Vec::with_capacity(table.population() + 1);
    phi.push(0.0);
    phi.extend((1..=table.population()).map(|m| eta0 * table.ratio(m)));
    phi
}

/// Normalisation constants of the lost-customers network with node 0 served
/// at constant rate `lambda_lc`:
/// `C_LC(L) = Σ_{n₀≤L} (η₀/λ_LC)^{n₀}·C(L − n₀)`.
pub fn lc_norm_constants(stb: &NormConstantTable, eta0: f64, lambda_lc: f64) -> NormConstantTable {
    let ln_rho = eta0.ln() - lambda_lc.ln();
    let mut out = Vec::with_capacity(stb.ln_values.len());
    out.push(stb.ln(0));
    for m in 1..=stb.population() {
        let carried = out[m - 1] + ln_rho;
        out.push(log_add_exp(stb.ln(m), carried));
    }
    NormConstantTable { ln_values: out }
}

/// Mean values of a closed product-form network at one population.
#[derive(Debug, Clone, PartialEq)]
pub struct MvaResult {
    /// Mean time from arrival to service completion per node.
    pub waiting_times: Vec<f64>,
    pub queue_lengths: Vec<f64>,
    pub throughputs: Vec<f64>,
    pub population: usize,
}

enum MvaNode {
    Fixed(f64),
    Delay(f64),
    /// Marginal queue-length distribution `p(k | n)` for `k = 0..=n`.
    LoadDependent {
        rate: RateFunction,
        marginal: Vec<f64>,
    },
}

/// Exact MVA for a closed network whose nodes have the given rates and visit
/// ratios, up to `population` customers.
///
/// Constant-rate nodes use the arrival theorem directly, infinite-server
/// nodes contribute `1/μ`, and any other rate function is handled through the
/// marginal recursion `p(k|n) = X(n)·η/ν(k)·p(k−1|n−1)`.
pub fn mva_closed(rates: &[RateFunction], visit_ratios: &[f64], population: usize) -> MvaResult {
    assert_eq!(rates.len(), visit_ratios.len(), "one visit ratio per node");
    let mut nodes: Vec<MvaNode> = rates
        .iter()
        .map(|r| match (r, r.constant_rate()) {
            (_, Some(nu)) => MvaNode::Fixed(nu),
            (RateFunction::InfiniteServer { base_rate }, None) => MvaNode::Delay(*base_rate),
            (other, None) => MvaNode::LoadDependent { rate: other.clone(), marginal: vec![1.0] },
        })
        .collect();
    let k = rates.len();
    let mut queue = vec![0.0; k];
    let mut wait = vec![0.0; k];
    let mut throughput = 0.0;
    for n in 1..=population {
        for (j, node) in nodes.iter().enumerate() {
            wait[j] = match node {
                MvaNode::Fixed(nu) => (1.0 + queue[j]) / nu,
                MvaNode::Delay(mu) => 1.0 / mu,
                MvaNode::LoadDependent { rate, marginal } => {
                    (1..=n).map(|c| c as f64 / rate.rate(c) * marginal[c - 1]).sum()
                }
            };
        }
        let cycle: f64 = visit_ratios.iter().zip(&wait).map(|(e, w)| e * w).sum();
        throughput = n as f64 / cycle;
        for (j, node) in nodes.iter_mut().enumerate() {
            queue[j] = throughput * visit_ratios[j] * wait[j];
            if let MvaNode::LoadDependent { rate, marginal } = node {
                let mut next = vec![0.0; n + 1];
                for c in 1..=n {
                    next[c] = throughput * visit_ratios[j] / rate.rate(c) * marginal[c - 1];
                }
                next[0] = (1.0 - next[1..].iter().sum::<f64>()).max(0.0);
                *marginal = next;
            }
        }
    }
    MvaResult {
        throughputs: visit_ratios.iter().map(|e| e * throughput).collect(),
        waiting_times: wait,
        queue_lengths: queue,
        population,
    }
}

/// MVA of the lost-customers network: node 0 at constant rate `lambda_lc`
/// followed by the inner nodes of `model`.
pub fn mva_lc(model: &ValidatedModel, lambda_lc: f64, population: usize) -> MvaResult {
    let mut rates = Vec::with_capacity(model.num_inner() + 1);
    rates.push(RateFunction::constant(lambda_lc));
    rates.extend(model.inner_rates());
    mva_closed(&rates, model.eta(), population)
}

/// Steady-state distribution of the lost-customers network over
/// `(n₀, n₁, …, n_J)`, states in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct LcDistribution {
    pub states: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
}

impl LcDistribution {
    /// Probability that the pool holds no resource.
    pub fn pool_empty(&self) -> f64 {
        self.states.iter().zip(&self.probabilities).filter(|(s, _)| s[0] == 0).map(|(_, p)| p).sum()
    }
}

/// Enumerates the lost-customers product-form distribution
/// `π(n) ∝ (η₀/λ_LC)^{n₀}·Π_j Π_{i≤n_j} η_j/ν_j(i)`.
pub fn lc_steady_state(model: &ValidatedModel, lambda_lc: f64, cap: usize) -> Result<LcDistribution> {
    if !(lambda_lc.is_finite() && lambda_lc > 0.0) {
        return Err(Error::InvalidModel(format!("lost-customers rate must be positive, got {lambda_lc}")));
    }
    let n = model.resources;
    let parts = model.num_inner() + 1;
    let count = composition_count(n, parts);
    if count > cap {
        return Err(Error::StateSpaceTooLarge { states: count, cap });
    }
    let eta = model.eta();
    let mut factors = Vec::with_capacity(parts);
    factors.push(log_node_factors(&RateFunction::constant(lambda_lc), eta[0], n));
    for j in 1..parts {
        factors.push(log_node_factors(model.rate(j), eta[j], n));
    }
    let states = compositions(n, parts);
    let logs: Vec<f64> = states.iter().map(|s| s.iter().enumerate().map(|(j, &k)| factors[j][k]).sum()).collect();
    let ln_norm = log_sum_exp(&logs);
    let probabilities = logs.iter().map(|l| (l - ln_norm).exp()).collect();
    Ok(LcDistribution { states, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn consts(rates: &[RateFunction], eta: &[f64], n: usize) -> Vec<f64> {
        let t = norm_constants(rates, eta, n);
        (0..=n).map(|m| t.value(m)).collect()
    }

    /// Direct enumeration over all compositions.
    fn brute_force_constant(rates: &[RateFunction], eta: &[f64], m: usize) -> f64 {
        compositions(m, rates.len())
            .iter()
            .map(|s| {
                s.iter()
                    .enumerate()
                    .map(|(j, &k)| (1..=k).map(|i| eta[j] / rates[j].rate(i)).product::<f64>())
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn constants_of_single_constant_node() {
        let c = consts(&[RateFunction::constant(4.0)], &[1.0], 3);
        for (m, v) in c.iter().enumerate() {
            assert_relative_eq!(*v, 0.25f64.powi(m as i32), max_relative = 1e-14);
        }
    }

    #[test]
    fn constants_of_two_unit_nodes_count_compositions() {
        let c = consts(&[RateFunction::constant(1.0), RateFunction::constant(1.0)], &[1.0, 1.0], 6);
        for (m, v) in c.iter().enumerate() {
            assert_relative_eq!(*v, (m + 1) as f64, max_relative = 1e-14);
        }
    }

    #[test]
    fn constants_of_delay_node() {
        let c = consts(&[RateFunction::infinite_server(2.0)], &[1.0], 5);
        let mut fact = 1.0;
        for (m, v) in c.iter().enumerate() {
            if m > 0 {
                fact *= m as f64;
            }
            assert_relative_eq!(*v, 0.5f64.powi(m as i32) / fact, max_relative = 1e-13);
        }
    }

    #[test]
    fn th0_profiles() {
        let one = norm_constants(&[RateFunction::constant(3.0)], &[1.0], 4);
        assert!(th0_profile(&one, 1.0)[1..].iter().all(|&p| (p - 3.0).abs() < 1e-13));

        let two = norm_constants(&[RateFunction::constant(1.0), RateFunction::constant(1.0)], &[1.0, 1.0], 2);
        let phi = th0_profile(&two, 1.0);
        assert_eq!(phi[0], 0.0);
        assert_relative_eq!(phi[1], 0.5, max_relative = 1e-14);
        assert_relative_eq!(phi[2], 2.0 / 3.0, max_relative = 1e-14);

        let delay = norm_constants(&[RateFunction::infinite_server(0.7)], &[1.0], 6);
        for (m, p) in th0_profile(&delay, 1.0).iter().enumerate() {
            assert_relative_eq!(*p, m as f64 * 0.7, max_relative = 1e-13);
        }
    }

    #[test]
    fn large_population_stays_finite() {
        let rates = vec![RateFunction::constant(0.1), RateFunction::infinite_server(1.0 / 34.5)];
        let t = norm_constants(&rates, &[0.5, 1.0], 550);
        assert!(t.ln_values().iter().all(|v| v.is_finite()));
        let phi = th0_profile(&t, 1.0);
        // saturated by the constant-rate node: ν/η = 0.2
        assert_relative_eq!(phi[550], 0.2, max_relative = 1e-9);
    }

    #[test]
    fn mva_two_node_cycle() {
        let rates = [RateFunction::constant(1.0), RateFunction::constant(1.0)];
        let one = mva_closed(&rates, &[1.0, 1.0], 1);
        assert_eq!(one.waiting_times, vec![1.0, 1.0]);
        assert_relative_eq!(one.throughputs[0], 0.5);
        let two = mva_closed(&rates, &[1.0, 1.0], 2);
        assert_relative_eq!(two.waiting_times[0], 1.5);
        assert_relative_eq!(two.throughputs[0], 2.0 / 3.0);
        assert_relative_eq!(two.queue_lengths[1], 1.0);
    }

    #[test]
    fn lc_two_state_example() {
        let m = instances::single_node(RateFunction::constant(2.0), 1, 1.0);
        let d = lc_steady_state(&m, 2.0, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(d.states, vec![vec![0, 1], vec![1, 0]]);
        assert_relative_eq!(d.probabilities[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(d.probabilities[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn lc_heavy_limit_is_uniform_over_inner_compositions() {
        let m = instances::tandem(&[RateFunction::constant(1.0), RateFunction::constant(1.0)], 3, 0.1);
        let d = lc_steady_state(&m, 1e12, DEFAULT_STATE_CAP).unwrap();
        let inner: Vec<f64> =
            d.states.iter().zip(&d.probabilities).filter(|(s, _)| s[0] == 0).map(|(_, p)| *p).collect();
        assert_eq!(inner.len(), 4);
        for p in inner {
            assert_relative_eq!(p, 0.25, max_relative = 1e-9);
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let m = instances::tandem(&vec![RateFunction::constant(1.0); 4], 30, 0.1);
        assert!(matches!(lc_steady_state(&m, 1.0, 1000), Err(Error::StateSpaceTooLarge { cap: 1000, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn convolution_matches_enumeration(seed in any::<u64>()) {
            let m = instances::random_model(seed, 3, 5, true);
            let rates = m.inner_rates();
            let table = norm_constants(&rates, m.traffic().inner(), m.resources);
            for k in 0..=m.resources {
                let direct = brute_force_constant(&rates, m.traffic().inner(), k);
                prop_assert!((table.value(k) - direct).abs() <= 1e-11 * direct);
            }
        }

        #[test]
        fn mva_agrees_with_convolution(seed in any::<u64>(), lambda in 0.1f64..10.0) {
            let m = instances::random_model(seed, 4, 6, false);
            let stb = norm_constants(&m.inner_rates(), m.traffic().inner(), m.resources);
            let lc = lc_norm_constants(&stb, 1.0, lambda);
            let mva = mva_lc(&m, lambda, m.resources);
            let expected = lc.ratio(m.resources);
            for (j, th) in mva.throughputs.iter().enumerate() {
                let reference = m.eta()[j] * expected;
                prop_assert!((th - reference).abs() <= 1e-9 * reference, "node {j}: {th} vs {reference}");
            }
            let total: f64 = mva.queue_lengths.iter().sum();
            prop_assert!((total - m.resources as f64).abs() <= 1e-9);
            for j in 0..mva.throughputs.len() {
                let little = mva.throughputs[j] * mva.waiting_times[j];
                prop_assert!((mva.queue_lengths[j] - little).abs() <= 1e-9 * little.max(1e-300));
            }
        }

        #[test]
        fn phi_ignores_lost_customer_rate(seed in any::<u64>(), a in 0.1f64..5.0, b in 5.0f64..50.0) {
            // φ is built from the saturated table only; LC tables at two rates
            // must leave it untouched.
            let m = instances::random_model(seed, 3, 5, false);
            let stb = norm_constants(&m.inner_rates(), m.traffic().inner(), m.resources);
            let before = th0_profile(&stb, 1.0);
            let _ = lc_norm_constants(&stb, 1.0, a);
            let _ = lc_norm_constants(&stb, 1.0, b);
            prop_assert_eq!(before, th0_profile(&stb, 1.0));
        }

        #[test]
        fn phi_nondecreasing_for_monotone_rates(seed in any::<u64>()) {
            let m = instances::random_model(seed, 4, 8, true);
            let stb = norm_constants(&m.inner_rates(), m.traffic().inner(), m.resources);
            let phi = th0_profile(&stb, 1.0);
            for w in phi.windows(2) {
                prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
        }

        #[test]
        fn lc_distribution_is_normalised(seed in any::<u64>(), lambda in 0.05f64..20.0) {
            let m = instances::random_model(seed, 3, 5, false);
            let d = lc_steady_state(&m, lambda, DEFAULT_STATE_CAP).unwrap();
            prop_assert!(d.probabilities.iter().all(|&p| p > 0.0));
            let total: f64 = d.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
