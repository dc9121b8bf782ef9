//! Norton reduction of the inner network to one load-dependent node, and the
//! closed-form backordering distribution of a single-node network, which
//! yields the external-queue approximation for `J > 1`.

use crate::error::{Error, Result};
use crate::gnsolver::{log_sum_exp, th0_profile};
use crate::netmodel::ValidatedModel;
use crate::soqn::saturated_constants;

/// Single-node surrogate: the inner network replaced by a node with rates
/// `φ(1..=N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    /// `φ(m)` for `m = 0..=N`, `φ(0) = 0`.
    pub phi: Vec<f64>,
    pub resources: usize,
    pub arrival_rate: f64,
    /// True when the source network has a single inner node, in which case
    /// every quantity derived from this model is exact.
    pub exact: bool,
}

impl ReducedModel {
    /// Surrogate built from a precomputed throughput profile; `phi` may be
    /// longer than `resources + 1` and is truncated.
    pub fn from_profile(phi: &[f64], resources: usize, arrival_rate: f64, exact: bool) -> Self {
        Self { phi: phi[..=resources].to_vec(), resources, arrival_rate, exact }
    }

    /// `λ_BO/φ(N)`.
    pub fn tail(&self) -> f64 {
        self.arrival_rate / self.phi[self.resources]
    }
}

/// `φ(m) = η₀·C(m−1)/C(m)`, the node-0 throughput of the saturated network.
pub fn norton_reduce(model: &ValidatedModel) -> ReducedModel {
    let table = saturated_constants(model);
    ReducedModel {
        phi: th0_profile(&table, model.traffic().eta0()),
        resources: model.resources,
        arrival_rate: model.arrival_rate,
        exact: model.num_inner() == 1,
    }
}

/// Stationary distribution of the single-node backordering network over
/// `(n_ex, n₀, n₁)` with `n₀ + n₁ = N` and `n_ex > 0 ⇒ n₁ = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBoDistribution {
    /// `ln Π_{m≤n₁} λ_BO/φ(m)` for `n₁ = 0..=N`.
    ln_weights: Vec<f64>,
    ln_tail: f64,
    ln_norm: f64,
}

impl ReducedBoDistribution {
    pub fn resources(&self) -> usize {
        self.ln_weights.len() - 1
    }

    /// `π(n_ex, N − n₁, n₁)`; zero outside the state space.
    pub fn probability(&self, n_ex: usize, n1: usize) -> f64 {
        let n = self.resources();
        if n1 > n || (n_ex > 0 && n1 != n) {
            return 0.0;
        }
        (self.ln_weights[n1] + n_ex as f64 * self.ln_tail - self.ln_norm).exp()
    }

    /// `P(X_ex = n)`.
    pub fn external_marginal(&self, n: usize) -> f64 {
        if n == 0 {
            let ln: Vec<f64> = self.ln_weights.iter().map(|w| w - self.ln_norm).collect();
            return log_sum_exp(&ln).exp();
        }
        self.probability(n, self.resources())
    }

    /// `P(Y₁ = N)`, all resources inside, summed over the external queue.
    pub fn saturated(&self) -> f64 {
        (self.ln_weights[self.resources()] - self.ln_norm - (-self.ln_tail.exp()).ln_1p()).exp()
    }

    /// `ln C_BO`.
    pub fn ln_norm(&self) -> f64 {
        self.ln_norm
    }

    pub fn tail(&self) -> f64 {
        self.ln_tail.exp()
    }
}

fn require_stable(reduced: &ReducedModel) -> Result<()> {
    let lambda_max = reduced.phi[reduced.resources];
    if reduced.arrival_rate < lambda_max {
        Ok(())
    } else {
        Err(Error::Unstable { lambda_bo: reduced.arrival_rate, lambda_max })
    }
}

/// `π(n_ex, N−n₁, n₁) = C⁻¹·Π_{m≤n₁} λ/φ(m)·(λ/φ(N))^{n_ex}` with
/// `C = Σ_{n₁<N} w(n₁) + w(N)/(1 − λ/φ(N))`, all in log space.
pub fn reduced_bo_distribution(reduced: &ReducedModel) -> Result<ReducedBoDistribution> {
    require_stable(reduced)?;
    let n = reduced.resources;
    let ln_lambda = reduced.arrival_rate.ln();
    let mut ln_weights = Vec::with_capacity(n + 1);
    ln_weights.push(0.0);
    for m in 1..=n {
        let prev = ln_weights[m - 1];
        ln_weights.push(prev + ln_lambda - reduced.phi[m].ln());
    }
    let tail = reduced.tail();
    let ln_tail = tail.ln();
    let mut terms = ln_weights[..n].to_vec();
    terms.push(ln_weights[n] - (-tail).ln_1p());
    let ln_norm = log_sum_exp(&terms);
    Ok(ReducedBoDistribution { ln_weights, ln_tail, ln_norm })
}

/// External-queue metrics of the reduced backordering network.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalQueueReport {
    /// `P(X_ex = 0)`.
    pub p_empty: f64,
    /// `λ_BO/φ(N)`, the ratio `P(X_ex = n+1)/P(X_ex = n)` for `n ≥ 1`.
    pub tail: f64,
    pub l_ex: f64,
    pub w_ex: f64,
    /// `ln C_BO`.
    pub log_norm_const: f64,
    /// False when the source network has more than one inner node.
    pub exact: bool,
}

/// `L_ex = P(Y₁ = N)·λ/(φ(N) − λ)` and `W_ex = L_ex/λ`.
pub fn approximate_external(reduced: &ReducedModel) -> Result<ExternalQueueReport> {
    let dist = reduced_bo_distribution(reduced)?;
    let tail = dist.tail();
    let l_ex = dist.saturated() * tail / (1.0 - tail);
    Ok(ExternalQueueReport {
        p_empty: dist.external_marginal(0),
        tail,
        l_ex,
        w_ex: l_ex / reduced.arrival_rate,
        log_norm_const: dist.ln_norm(),
        exact: reduced.exact,
    })
}
