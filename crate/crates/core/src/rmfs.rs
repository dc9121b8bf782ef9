//! Robotic mobile fulfilment: the 12-node resource network of robots, pods
//! and stations, and the fleet-sizing scans built on the stability limit and
//! the task turnover time.
//!
//! Time is in seconds throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnsolver::{mva_lc, th0_profile, NormConstantTable};
use crate::netmodel::{Discipline, InnerNode, RateFunction, RoutingMatrix, SoqnModel, ValidatedModel};
use crate::reduced::{approximate_external, ReducedModel};
use crate::soqn::{adjust_with, saturated_constants_to};

/// Robot moving to a pod in the storage area.
pub const SP: usize = 1;
/// Carrying a pod to picking station 1.
pub const PP1: usize = 2;
pub const PP2: usize = 3;
/// Queue and server of picking station 1.
pub const P1: usize = 4;
pub const P2: usize = 5;
/// Returning a pod from picking station 1 to storage.
pub const P1S: usize = 6;
pub const P2S: usize = 7;
/// Carrying a pod from picking station 1 to replenishment.
pub const P1R: usize = 8;
pub const P2R: usize = 9;
/// Queue and server of the replenishment station.
pub const R: usize = 10;
/// Returning a replenished pod to storage.
pub const RS: usize = 11;

pub const NODE_NAMES: [&str; 12] = ["pool", "sp", "pp1", "pp2", "p1", "p2", "p1s", "p2s", "p1r", "p2r", "r", "rs"];

const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Physical parameters. Defaults are the reference warehouse: 0.13 tasks/s,
/// 18.4 s to reach a pod, 34.5 s for every other trip, 10 s picks, 30 s
/// replenishments. The routing split (0.5/0.5 between stations, 0.2 to
/// replenishment) is the one whose idle probabilities are 0.35, 0.35, 0.22.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmfsParams {
    pub lambda_co: f64,
    pub sigma_pod_per_order: f64,
    pub w_alg: f64,
    pub w_assembled: f64,
    pub mu_sp: f64,
    pub mu_pp1: f64,
    pub mu_pp2: f64,
    pub mu_p1s: f64,
    pub mu_p2s: f64,
    pub mu_p1r: f64,
    pub mu_p2r: f64,
    pub mu_rs: f64,
    pub nu_p1: f64,
    pub nu_p2: f64,
    pub nu_r: f64,
    pub q_pp1: f64,
    pub q_pp2: f64,
    pub q_p1s: f64,
    pub q_p1r: f64,
    pub q_p2s: f64,
    pub q_p2r: f64,
    pub n_max: usize,
    /// Acceptable task turnover; `None` accepts any stable fleet.
    pub to_task_max: Option<f64>,
}

impl Default for RmfsParams {
    fn default() -> Self {
        let trip = 1.0 / 34.5;
        Self {
            lambda_co: 0.13,
            sigma_pod_per_order: 1.0,
            w_alg: 0.0,
            w_assembled: 0.0,
            mu_sp: 1.0 / 18.4,
            mu_pp1: trip,
            mu_pp2: trip,
            mu_p1s: trip,
            mu_p2s: trip,
            mu_p1r: trip,
            mu_p2r: trip,
            mu_rs: trip,
            nu_p1: 0.1,
            nu_p2: 0.1,
            nu_r: 1.0 / 30.0,
            q_pp1: 0.5,
            q_pp2: 0.5,
            q_p1s: 0.8,
            q_p1r: 0.2,
            q_p2s: 0.8,
            q_p2r: 0.2,
            n_max: 550,
            to_task_max: None,
        }
    }
}

impl RmfsParams {
    /// `λ_BO = λ_CO·σ_pod/order`.
    pub fn task_rate(&self) -> f64 {
        self.lambda_co * self.sigma_pod_per_order
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("mu_sp", self.mu_sp),
            ("mu_pp1", self.mu_pp1),
            ("mu_pp2", self.mu_pp2),
            ("mu_p1s", self.mu_p1s),
            ("mu_p2s", self.mu_p2s),
            ("mu_p1r", self.mu_p1r),
            ("mu_p2r", self.mu_p2r),
            ("mu_rs", self.mu_rs),
            ("nu_p1", self.nu_p1),
            ("nu_p2", self.nu_p2),
            ("nu_r", self.nu_r),
            ("lambda_co", self.lambda_co),
            ("sigma_pod_per_order", self.sigma_pod_per_order),
        ];
        for (name, value) in rates {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [("w_alg", self.w_alg), ("w_assembled", self.w_assembled)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be non-negative, got {value}")));
            }
        }
        let splits = [
            ("q_pp1 + q_pp2", self.q_pp1, self.q_pp2),
            ("q_p1s + q_p1r", self.q_p1s, self.q_p1r),
            ("q_p2s + q_p2r", self.q_p2s, self.q_p2r),
        ];
        for (name, a, b) in splits {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || (a + b - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(Error::InvalidModel(format!("{name} must be probabilities summing to 1, got {a} + {b}")));
            }
        }
        if self.n_max == 0 {
            return Err(Error::InvalidModel("n_max must be at least 1".into()));
        }
        if let Some(max) = self.to_task_max {
            if max.is_nan() || max < 0.0 {
                return Err(Error::InvalidModel(format!("to_task_max must be non-negative, got {max}")));
            }
        }
        Ok(())
    }

    fn to_task_bound(&self) -> f64 {
        self.to_task_max.unwrap_or(f64::INFINITY)
    }
}

/// The routing matrix over `pool, sp, pp1, pp2, p1, p2, p1s, p2s, p1r, p2r, r, rs`.
pub fn rmfs_routing(params: &RmfsParams) -> RoutingMatrix {
    let mut r = RoutingMatrix::zeros(12);
    r.set(0, SP, 1.0);
    r.set(SP, PP1, params.q_pp1);
    r.set(SP, PP2, params.q_pp2);
    r.set(PP1, P1, 1.0);
    r.set(PP2, P2, 1.0);
    r.set(P1, P1S, params.q_p1s);
    r.set(P1, P1R, params.q_p1r);
    r.set(P2, P2S, params.q_p2s);
    r.set(P2, P2R, params.q_p2r);
    r.set(P1S, 0, 1.0);
    r.set(P2S, 0, 1.0);
    r.set(P1R, R, 1.0);
    r.set(P2R, R, 1.0);
    r.set(R, RS, 1.0);
    r.set(RS, 0, 1.0);
    r
}

/// Travel nodes are delay stations, stations are single FCFS servers.
pub fn build_rmfs_model(params: &RmfsParams, robots: usize) -> Result<ValidatedModel> {
    params.validate()?;
    let travel = |mu: f64| RateFunction::infinite_server(mu);
    let rates = [
        travel(params.mu_sp),
        travel(params.mu_pp1),
        travel(params.mu_pp2),
        RateFunction::constant(params.nu_p1),
        RateFunction::constant(params.nu_p2),
        travel(params.mu_p1s),
        travel(params.mu_p2s),
        travel(params.mu_p1r),
        travel(params.mu_p2r),
        RateFunction::constant(params.nu_r),
        travel(params.mu_rs),
    ];
    let nodes = rates
        .into_iter()
        .enumerate()
        .map(|(k, rate)| {
            let discipline = match rate {
                RateFunction::Constant { .. } => Discipline::FcfsSingleServer,
                _ => Discipline::ProcessorSharing,
            };
            InnerNode::new(NODE_NAMES[k + 1], rate, discipline)
        })
        .collect();
    SoqnModel { nodes, routing: rmfs_routing(params), resources: robots, arrival_rate: params.task_rate() }.validate()
}

/// Time from admission until picking starts:
/// `W_sp + Σ_k r(sp,pp_k)·(W_pp_k + W_p_k − 1/ν_p_k)` with waiting times from
/// MVA of the lost-customers network at `model.resources` robots.
pub fn w_in(model: &ValidatedModel, lambda_lc: f64) -> Result<f64> {
    let mva = mva_lc(model, lambda_lc, model.resources);
    let w = &mva.waiting_times;
    let mut total = w[SP];
    for (pp, p) in [(PP1, P1), (PP2, P2)] {
        let nu = model.rate(p).constant_rate().ok_or(Error::NotConstantRate(p))?;
        total += model.routing.get(SP, pp) * (w[pp] + w[p] - 1.0 / nu);
    }
    Ok(total)
}

/// `W_ex + W_in`, the external wait taken from the Norton reduction.
pub fn turnover_task(model: &ValidatedModel, lambda_lc: f64) -> Result<f64> {
    let table = saturated_constants_to(model, model.resources);
    let reduced = ReducedModel {
        phi: th0_profile(&table, model.traffic().eta0()),
        resources: model.resources,
        arrival_rate: model.arrival_rate,
        exact: false,
    };
    Ok(approximate_external(&reduced)?.w_ex + w_in(model, lambda_lc)?)
}

/// Lower bound on the stationary travel time until picking starts, reached
/// at zero load: `1/μ_sp + Σ_k q_pp_k/μ_pp_k`.
pub fn transport_time(params: &RmfsParams) -> f64 {
    1.0 / params.mu_sp + params.q_pp1 / params.mu_pp1 + params.q_pp2 / params.mu_pp2
}

/// Analysis of one fleet size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmfsRecord {
    pub n: usize,
    pub lambda_max: f64,
    pub lambda_lc: Option<f64>,
    pub w_ex: Option<f64>,
    pub l_ex: Option<f64>,
    pub w_in: Option<f64>,
    pub to_task: Option<f64>,
    /// `w_alg + to_task + w_assembled`.
    pub to_order: Option<f64>,
    pub idle_p1: Option<f64>,
    pub idle_p2: Option<f64>,
    pub idle_r: Option<f64>,
    /// Why the optional fields are missing, if they are.
    pub failure: Option<String>,
}

/// One convolution pass up to `n_max`, shared by every candidate fleet size.
#[derive(Debug, Clone)]
pub struct RmfsSizer {
    params: RmfsParams,
    model: ValidatedModel,
    table: NormConstantTable,
    phi: Vec<f64>,
    tol: f64,
}

impl RmfsSizer {
    pub fn new(params: &RmfsParams, tol: f64) -> Result<Self> {
        let model = build_rmfs_model(params, params.n_max)?;
        let table = saturated_constants_to(&model, params.n_max);
        let phi = th0_profile(&table, model.traffic().eta0());
        Ok(Self { params: params.clone(), model, table, phi, tol })
    }

    pub fn params(&self) -> &RmfsParams {
        &self.params
    }

    /// `φ(m) = λ_max(m)` for `m = 0..=n_max`.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn task_rate(&self) -> f64 {
        self.params.task_rate()
    }

    pub fn is_stable(&self, n: usize) -> bool {
        n >= 1 && n <= self.params.n_max && self.task_rate() < self.phi[n]
    }

    /// `{N ≤ n_max : λ_BO < φ(N)}`. The rates here never decrease, so φ is
    /// non-decreasing and the set is an interval found by binary search.
    pub fn stable_set(&self) -> Vec<usize> {
        let lambda = self.task_rate();
        let monotone = self.model.rates_nondecreasing();
        if monotone {
            let first = 1 + self.phi[1..].partition_point(|&p| p <= lambda);
            (first..=self.params.n_max).collect()
        } else {
            (1..=self.params.n_max).filter(|&n| lambda < self.phi[n]).collect()
        }
    }

    pub fn record(&self, n: usize) -> RmfsRecord {
        let lambda_max = if n <= self.params.n_max { self.phi[n] } else { f64::NAN };
        let mut record = RmfsRecord {
            n,
            lambda_max,
            lambda_lc: None,
            w_ex: None,
            l_ex: None,
            w_in: None,
            to_task: None,
            to_order: None,
            idle_p1: None,
            idle_p2: None,
            idle_r: None,
            failure: None,
        };
        if let Err(e) = self.fill(&mut record) {
            record.failure = Some(e.to_string());
        }
        record
    }

    fn fill(&self, record: &mut RmfsRecord) -> Result<()> {
        let n = record.n;
        if n == 0 || n > self.params.n_max {
            return Err(Error::InvalidModel(format!("fleet size {n} is outside 1..={}", self.params.n_max)));
        }
        let lambda = self.task_rate();
        let table = NormConstantTable::from_ln_values(self.table.ln_values()[..=n].to_vec());
        let adjustment = adjust_with(&table, self.model.traffic().eta0(), lambda, self.tol)?;
        let external = approximate_external(&ReducedModel::from_profile(&self.phi, n, lambda, false))?;
        let model = self.model.with_resources(n)?;
        let inner = w_in(&model, adjustment.lambda_lc)?;
        let eta = self.model.eta();
        let idle = |node: usize, nu: f64| 1.0 - lambda * eta[node] / nu;
        let to_task = external.w_ex + inner;
        record.lambda_lc = Some(adjustment.lambda_lc);
        record.w_ex = Some(external.w_ex);
        record.l_ex = Some(external.l_ex);
        record.w_in = Some(inner);
        record.to_task = Some(to_task);
        record.to_order = Some(self.params.w_alg + to_task + self.params.w_assembled);
        record.idle_p1 = Some(idle(P1, self.params.nu_p1));
        record.idle_p2 = Some(idle(P2, self.params.nu_p2));
        record.idle_r = Some(idle(R, self.params.nu_r));
        Ok(())
    }

    /// Records for every `n` in `range`, computed in parallel and returned
    /// in ascending order.
    pub fn sweep(&self, range: std::ops::RangeInclusive<usize>) -> Vec<RmfsRecord> {
        range.into_par_iter().map(|n| self.record(n)).collect()
    }

    /// Scans `stable_set` in ascending order and stops at the first fleet
    /// whose turnover meets the bound. Fleets whose analysis fails are
    /// recorded and skipped.
    pub fn minimal_robots(&self, stable_set: &[usize]) -> SizingReport {
        let bound = self.params.to_task_bound();
        let mut records = Vec::new();
        let mut chosen = None;
        for &n in stable_set {
            let record = self.record(n);
            let accepted = record.to_task.is_some_and(|t| t <= bound);
            records.push(record);
            if accepted {
                chosen = Some(n);
                break;
            }
        }
        SizingReport { stable_set: stable_set.to_vec(), chosen_n: chosen, records }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizingReport {
    pub stable_set: Vec<usize>,
    pub chosen_n: Option<usize>,
    /// Records of every fleet size examined, in scan order.
    pub records: Vec<RmfsRecord>,
}

/// Fleet sizes for which the system is stable.
pub fn stable_robots_set(params: &RmfsParams) -> Result<Vec<usize>> {
    Ok(RmfsSizer::new(params, crate::soqn::DEFAULT_TOLERANCE)?.stable_set())
}

/// Smallest stable fleet whose task turnover meets `params.to_task_max`.
pub fn minimal_robots(params: &RmfsParams, stable_set: &[usize], tol: f64) -> Result<SizingReport> {
    Ok(RmfsSizer::new(params, tol)?.minimal_robots(stable_set))
}
