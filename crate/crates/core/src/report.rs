//! Per-node performance summary shared by the analytic path and the oracle.

use crate::error::Result;
use crate::gnsolver::mva_lc;
use crate::netmodel::ValidatedModel;
use crate::reduced::{approximate_external, norton_reduce};
use crate::soqn::{adjust_lambda_lc, idle_probabilities_bo, is_stable, throughputs_bo, StabilityVerdict};

/// Vectors are indexed by node `0..=J`, node 0 being the resource pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub lambda_bo: f64,
    pub stability: Option<StabilityVerdict>,
    /// Adjusted lost-customers rate, when the report came from the adjustment.
    pub lambda_lc: Option<f64>,
    pub throughputs: Vec<f64>,
    /// `P(n_j = 0)`; `None` where no exact value is available.
    pub idle: Vec<Option<f64>>,
    pub queue_lengths: Vec<f64>,
    /// Mean time from arrival at a node to service completion there.
    pub waiting_times: Vec<f64>,
    pub l_ex: f64,
    pub w_ex: f64,
    /// False when `l_ex`/`w_ex` come from the reduced-network approximation
    /// of a network with several inner nodes.
    pub exact_external: bool,
}

/// Analytic report: exact throughputs and idle probabilities, inner means
/// from MVA of the adjusted lost-customers network, external queue from the
/// Norton reduction.
pub fn analyze(model: &ValidatedModel, tol: f64) -> Result<PerformanceReport> {
    let throughputs = throughputs_bo(model)?;
    let idle = idle_probabilities_bo(model)?;
    let adjustment = adjust_lambda_lc(model, tol)?;
    let mva = mva_lc(model, adjustment.lambda_lc, model.resources);
    let external = approximate_external(&norton_reduce(model))?;
    Ok(PerformanceReport {
        lambda_bo: model.arrival_rate,
        stability: Some(is_stable(model)),
        lambda_lc: Some(adjustment.lambda_lc),
        throughputs,
        idle,
        queue_lengths: mva.queue_lengths,
        waiting_times: mva.waiting_times,
        l_ex: external.l_ex,
        w_ex: external.w_ex,
        exact_external: external.exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::instances;
    use crate::netmodel::RateFunction;
    use approx::assert_relative_eq;

    #[test]
    fn toy_report() {
        let m = instances::single_node(RateFunction::constant(2.0), 1, 1.0);
        let r = analyze(&m, 1e-10).unwrap();
        assert_eq!(r.throughputs, vec![1.0, 1.0]);
        assert_eq!(r.idle, vec![None, Some(0.5)]);
        assert_relative_eq!(r.lambda_lc.unwrap(), 2.0, max_relative = 1e-9);
        assert_relative_eq!(r.l_ex, 0.5, max_relative = 1e-12);
        assert!(r.exact_external);
    }

    #[test]
    fn unstable_model_has_no_report() {
        let m = instances::single_node(RateFunction::constant(2.0), 1, 3.0);
        assert!(matches!(analyze(&m, 1e-10), Err(Error::Unstable { .. })));
    }
}
