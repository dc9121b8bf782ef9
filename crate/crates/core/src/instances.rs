//! Small model constructors and a seeded generator of random irreducible
//! networks, shared by tests, benchmarks and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gnsolver::{norm_constants, th0_profile};
use crate::netmodel::{Discipline, InnerNode, RateFunction, RoutingMatrix, SoqnModel, ValidatedModel};

/// Cycle `0 → 1 → 0` around a single inner node.
pub fn single_node(rate: RateFunction, resources: usize, arrival_rate: f64) -> ValidatedModel {
    tandem(&[rate], resources, arrival_rate)
}

/// Cycle `0 → 1 → … → J → 0`.
pub fn tandem(rates: &[RateFunction], resources: usize, arrival_rate: f64) -> ValidatedModel {
    let size = rates.len() + 1;
    let mut routing = RoutingMatrix::zeros(size);
    for i in 0..size {
        routing.set(i, (i + 1) % size, 1.0);
    }
    SoqnModel {
        nodes: rates
            .iter()
            .enumerate()
            .map(|(k, r)| InnerNode::new(format!("n{}", k + 1), r.clone(), discipline_for(r)))
            .collect(),
        routing,
        resources,
        arrival_rate,
    }
    .validate()
    .expect("tandem models are valid by construction")
}

fn discipline_for(rate: &RateFunction) -> Discipline {
    match rate {
        RateFunction::Constant { .. } => Discipline::FcfsSingleServer,
        _ => Discipline::ProcessorSharing,
    }
}

/// Random rate function with rates in `[0.1, 10]`, tables of length `n`.
pub fn random_rate<R: Rng>(rng: &mut R, n: usize, monotone: bool) -> RateFunction {
    match rng.random_range(0..3) {
        0 => RateFunction::constant(rng.random_range(0.1..10.0)),
        1 => RateFunction::infinite_server(rng.random_range(0.1..10.0)),
        _ => {
            let mut table: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
            if monotone {
                table.sort_by(f64::total_cmp);
            }
            RateFunction::table(table)
        }
    }
}

/// Random irreducible routing over `J + 1` nodes: the cycle
/// `0 → 1 → … → J → 0` plus extra random edges, with `r(0,0) = 0`.
pub fn random_routing<R: Rng>(rng: &mut R, inner: usize) -> RoutingMatrix {
    let size = inner + 1;
    let mut routing = RoutingMatrix::zeros(size);
    for i in 0..size {
        let mut weights = vec![0.0; size];
        weights[(i + 1) % size] = rng.random_range(0.2..1.0);
        for (j, w) in weights.iter_mut().enumerate() {
            if !(i == 0 && j == 0) && rng.random_bool(0.35) {
                *w += rng.random_range(0.05..1.0);
            }
        }
        let sum: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            routing.set(i, j, w / sum);
        }
        // absorb rounding so the row sums to one up to a few ulps
        let drift: f64 = 1.0 - routing.row(i).iter().sum::<f64>();
        let next = (i + 1) % size;
        routing.set(i, next, routing.get(i, next) + drift);
    }
    routing
}

/// Random valid model with `1 ≤ J ≤ max_inner`, `1 ≤ N ≤ max_resources` and
/// an arrival rate between 10% and 90% of the stability limit.
pub fn random_model(seed: u64, max_inner: usize, max_resources: usize, monotone: bool) -> ValidatedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = rng.random_range(1..=max_inner);
    let resources = rng.random_range(1..=max_resources);
    random_model_with(&mut rng, inner, resources, monotone, 0.1..0.9)
}

/// Random valid model of the given size with `λ_BO / λ_max` drawn from `load`.
pub fn random_model_with<R: Rng>(
    rng: &mut R,
    inner: usize,
    resources: usize,
    monotone: bool,
    load: std::ops::Range<f64>,
) -> ValidatedModel {
    let nodes: Vec<InnerNode> = (0..inner)
        .map(|k| {
            let rate = random_rate(rng, resources, monotone);
            let discipline = discipline_for(&rate);
            InnerNode::new(format!("n{}", k + 1), rate, discipline)
        })
        .collect();
    let routing = random_routing(rng, inner);
    let model = SoqnModel { nodes, routing, resources, arrival_rate: 1.0 }
        .validate()
        .expect("random models are valid by construction");
    let table = norm_constants(&model.inner_rates(), model.traffic().inner(), resources);
    let lambda_max = th0_profile(&table, 1.0)[resources];
    let fraction = rng.random_range(load);
    model.with_arrival_rate(fraction * lambda_max).expect("positive arrival rate")
}
