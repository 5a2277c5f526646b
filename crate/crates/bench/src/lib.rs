//! Fixtures shared by the benchmarks.

use surplus_core::harness::uniform_initial;
use surplus_core::schedule::fig3_family;
use surplus_core::{NetworkState, TopologySchedule, WeightPolicy};

/// Comparison-family network of size `n` with its weights and a seeded
/// initial state.
pub fn comparison_fixture(n: usize) -> (TopologySchedule, WeightPolicy, NetworkState) {
    let nf = n as f64;
    let sched = TopologySchedule::Static(fig3_family(n).expect("n >= 3"));
    let policy = WeightPolicy::uniform(1.0 / nf, 1.0 / nf, 1.0 / (2.0 * nf));
    (sched, policy, uniform_initial(n, -50.0, 50.0, 1))
}
