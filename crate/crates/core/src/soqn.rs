//! Backordering analytics (stability limit, throughputs, idle probabilities)
//! and the lost-customers adjustment that matches the effective arrival rate
//! of the lost-customers network to the backordering arrival rate.

use crate::error::{Error, Result};
use crate::gnsolver::{lc_norm_constants, norm_constants, NormConstantTable};
use crate::netmodel::{RateFunction, ValidatedModel};

/// Default relative tolerance of [`adjust_lambda_lc`].
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Bisection steps allowed in [`adjust_lambda_lc`], bracket expansion included.
pub const MAX_ITERATIONS: usize = 200;
/// Bracket expansion stops once `hi` exceeds this multiple of `λ_BO`.
pub const BRACKET_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub lambda_bo_max: f64,
    /// `λ_BO < λ_BO,max`, strictly.
    pub stable: bool,
    /// `λ_BO,max − λ_BO`.
    pub margin: f64,
}

/// Normalisation constants of the saturated inner network up to `N`.
pub fn saturated_constants(model: &ValidatedModel) -> NormConstantTable {
    saturated_constants_to(model, model.resources)
}

/// Same as [`saturated_constants`] up to an arbitrary population. Rate tables
/// must cover `population`.
pub fn saturated_constants_to(model: &ValidatedModel, population: usize) -> NormConstantTable {
    norm_constants(&model.inner_rates(), model.traffic().inner(), population)
}

/// `λ_BO,max = η₀·C(N−1)/C(N)`.
pub fn lambda_bo_max(model: &ValidatedModel) -> f64 {
    model.traffic().eta0() * saturated_constants(model).ratio(model.resources)
}

pub fn is_stable(model: &ValidatedModel) -> StabilityVerdict {
    verdict(model.arrival_rate, lambda_bo_max(model))
}

fn verdict(lambda_bo: f64, lambda_bo_max: f64) -> StabilityVerdict {
    StabilityVerdict { lambda_bo_max, stable: lambda_bo < lambda_bo_max, margin: lambda_bo_max - lambda_bo }
}

fn require_stable(model: &ValidatedModel) -> Result<StabilityVerdict> {
    let v = is_stable(model);
    if v.stable {
        Ok(v)
    } else {
        Err(Error::Unstable { lambda_bo: model.arrival_rate, lambda_max: v.lambda_bo_max })
    }
}

/// `TH_BO,j = λ_BO·η_j/η₀` for `j = 0..=J`.
pub fn throughputs_bo(model: &ValidatedModel) -> Result<Vec<f64>> {
    require_stable(model)?;
    let eta0 = model.traffic().eta0();
    Ok(model.eta().iter().map(|e| model.arrival_rate * e / eta0).collect())
}

/// `P(node j idle) = 1 − λ_BO·(η_j/η₀)/ν_j` for a constant-rate inner node.
pub fn idle_probability_bo(model: &ValidatedModel, node: usize) -> Result<f64> {
    if node == 0 || node > model.num_inner() {
        return Err(Error::UnknownNode(node));
    }
    let nu = model.rate(node).constant_rate().ok_or(Error::NotConstantRate(node))?;
    let throughput = throughputs_bo(model)?[node];
    Ok(1.0 - throughput / nu)
}

/// Idle probabilities indexed by node `0..=J`; `None` for the pool and for
/// nodes whose rate depends on the queue length.
pub fn idle_probabilities_bo(model: &ValidatedModel) -> Result<Vec<Option<f64>>> {
    let th = throughputs_bo(model)?;
    let mut out = vec![None];
    for node in 1..=model.num_inner() {
        out.push(model.rate(node).constant_rate().map(|nu| 1.0 - th[node] / nu));
    }
    Ok(out)
}

/// `λ_eff` for the saturated table `stb` truncated at its population.
pub fn lambda_eff_with(stb: &NormConstantTable, eta0: f64, lambda_lc: f64) -> f64 {
    let lc = lc_norm_constants(stb, eta0, lambda_lc);
    eta0 * lc.ratio(lc.population())
}

/// Throughput of the lost-customers network at rate `lambda_lc`,
/// `λ_LC·(1 − π_LC,0(0)) = η₀·C_LC(N−1)/C_LC(N)`.
pub fn lambda_eff(model: &ValidatedModel, lambda_lc: f64) -> f64 {
    lambda_eff_with(&saturated_constants(model), model.traffic().eta0(), lambda_lc)
}

/// `π_LC,0(0) = C(N)/C_LC(N)`, the probability that the pool is empty.
pub fn pi_lc_empty(model: &ValidatedModel, lambda_lc: f64) -> f64 {
    let stb = saturated_constants(model);
    let lc = lc_norm_constants(&stb, model.traffic().eta0(), lambda_lc);
    let n = model.resources;
    (stb.ln(n) - lc.ln(n)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentResult {
    pub lambda_lc: f64,
    /// `|λ_eff(λ_LC) − λ_BO|`.
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    /// Set when some rate function decreases, so the root may not be unique.
    pub uniqueness_unverified: bool,
}

/// Finds `λ_LC` with `λ_eff(λ_LC) = λ_BO` within `tol·λ_BO`.
pub fn adjust_lambda_lc(model: &ValidatedModel, tol: f64) -> Result<AdjustmentResult> {
    let stb = saturated_constants(model);
    let mut result = adjust_with(&stb, model.traffic().eta0(), model.arrival_rate, tol)?;
    result.uniqueness_unverified = !model.rates_nondecreasing();
    Ok(result)
}

/// Adjustment on a precomputed saturated table; `uniqueness_unverified` is
/// left `false` for the caller to set.
pub fn adjust_with(stb: &NormConstantTable, eta0: f64, lambda_bo: f64, tol: f64) -> Result<AdjustmentResult> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidModel(format!("tolerance must be positive, got {tol}")));
    }
    let lambda_max = eta0 * stb.ratio(stb.population());
    if lambda_bo >= lambda_max {
        return Err(Error::Unstable { lambda_bo, lambda_max });
    }
    let f = |x: f64| lambda_eff_with(stb, eta0, x);
    let mut iterations = 0;
    // invariant: f(lo) < λ_BO ≤ f(hi)
    let mut lo = lambda_bo;
    let mut hi = 2.0 * lambda_bo;
    while f(hi) < lambda_bo {
        iterations += 1;
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_LIMIT * lambda_bo || iterations >= MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations });
        }
    }
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let value = f(mid);
        let residual = (value - lambda_bo).abs();
        if residual <= tol * lambda_bo && (hi - lo) <= tol * mid {
            return Ok(AdjustmentResult {
                lambda_lc: mid,
                residual,
                iterations,
                bracket: (lo, hi),
                uniqueness_unverified: false,
            });
        }
        if value < lambda_bo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { iterations })
}

/// Closed-form `λ_LC` for one or two resources, with `b(m) = C(N − m)`.
pub fn closed_form_lambda_lc(model: &ValidatedModel, lambda_bo: f64) -> Result<f64> {
    let n = model.resources;
    if n > 2 {
        return Err(Error::UnsupportedN(n));
    }
    let stb = saturated_constants(model);
    let eta0 = model.traffic().eta0();
    let lambda_max = eta0 * stb.ratio(n);
    if !(lambda_bo > 0.0 && lambda_bo < lambda_max) {
        return Err(Error::Unstable { lambda_bo, lambda_max });
    }
    let b = |m: usize| stb.value(n - m);
    if n == 1 {
        return Ok(eta0 * lambda_bo / (eta0 - lambda_bo * b(0)));
    }
    let (b0, b1) = (b(0), b(1));
    let disc = (eta0 + lambda_bo * b1).powi(2) - 4.0 * lambda_bo * lambda_bo * b0;
    Ok(-eta0 / (2.0 * (eta0 * b1 - lambda_bo * b0)) * (eta0 - lambda_bo * b1 - disc.sqrt()))
}

/// `TH_LC,j = η_j·C_LC(N−1)/C_LC(N)` for `j = 0..=J`.
pub fn throughputs_lc(model: &ValidatedModel, lambda_lc: f64) -> Vec<f64> {
    let stb = saturated_constants(model);
    let lc = lc_norm_constants(&stb, model.traffic().eta0(), lambda_lc);
    let ratio = lc.ratio(model.resources);
    model.eta().iter().map(|e| e * ratio).collect()
}

/// Probability that `node` (0 for the pool) is empty in the lost-customers
/// network, `C_LC^{(−node)}(N)/C_LC(N)`, via a convolution that leaves the
/// node out.
pub fn idle_probability_lc(model: &ValidatedModel, lambda_lc: f64, node: usize) -> Result<f64> {
    if node > model.num_inner() {
        return Err(Error::UnknownNode(node));
    }
    let n = model.resources;
    let mut rates = Vec::with_capacity(model.num_inner() + 1);
    rates.push(RateFunction::constant(lambda_lc));
    rates.extend(model.inner_rates());
    let full = norm_constants(&rates, model.eta(), n);
    let mut eta_rest = model.eta().to_vec();
    rates.remove(node);
    eta_rest.remove(node);
    let rest = norm_constants(&rates, &eta_rest, n);
    Ok((rest.ln(n) - full.ln(n)).exp())
}
