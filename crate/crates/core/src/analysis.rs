//! Trajectory instrumentation: extreme states, the Lyapunov function
//! `V(x, s) = 1ᵀ(x + s)/n − min_i x_i`, the conserved sum, distances to the
//! consensus point and the minimum-increase bound.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TopologySchedule;
use crate::protocol::{Algorithm, NetworkState, Simulation, Trajectory, WeightPolicy};
use crate::rng;

pub fn min_state(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_state(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn average(x: &[f64], s: &[f64]) -> f64 {
    x.iter().chain(s).sum::<f64>() / x.len() as f64
}

/// `1ᵀ(x + s)/n − min_i x_i`.
pub fn lyapunov(st: &NetworkState) -> f64 {
    lyapunov_of(&st.x, &st.s)
}

pub(crate) fn lyapunov_of(x: &[f64], s: &[f64]) -> f64 {
    average(x, s) - min_state(x)
}

/// `1ᵀ(x + s)/n`.
pub fn conserved_average(st: &NetworkState) -> f64 {
    st.average()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    Linf,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Norm::L1),
            "linf" | "inf" => Ok(Norm::Linf),
            other => Err(Error::invalid(format!(
                "unknown norm `{other}` (use l1 or linf)"
            ))),
        }
    }
}

/// `‖(x, s) − (x_a·1, 0)‖` in the chosen norm.
pub fn distance(x: &[f64], s: &[f64], x_a: f64, norm: Norm) -> f64 {
    let devs = x
        .iter()
        .map(|v| (v - x_a).abs())
        .chain(s.iter().map(|v| v.abs()));
    match norm {
        Norm::L1 => devs.sum(),
        Norm::Linf => devs.fold(0.0, f64::max),
    }
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub k: usize,
    pub min_state: f64,
    pub max_state: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub conserved_sum: f64,
    pub dist_l1: f64,
    pub dist_inf: f64,
    /// Agents with `c_i(k) = 0`; empty for the final state, which has no
    /// outgoing step.
    pub switch_count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    pub rows: Vec<MetricsRow>,
}

impl TrajectoryMetrics {
    /// One row per visited state `k = 0..=len`, measured against the
    /// conserved average of the initial state.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let x_a = traj.initial.average();
        let rows = traj
            .states()
            .enumerate()
            .map(|(k, (x, s))| MetricsRow {
                k,
                min_state: min_state(x),
                max_state: max_state(x),
                v: lyapunov_of(x, s),
                conserved_sum: x.iter().chain(s).sum(),
                dist_l1: distance(x, s, x_a, Norm::L1),
                dist_inf: distance(x, s, x_a, Norm::Linf),
                switch_count: traj.records.get(k).map(|r| r.switched_off()),
            })
            .collect();
        TrajectoryMetrics { rows }
    }

    /// Columns: k, min_state, max_state, V, conserved_sum, dist_l1,
    /// dist_inf, switch_count.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First index whose distance to `(x_a·1, 0)` is below `threshold`.
pub fn convergence_time<'a>(
    states: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
    x_a: f64,
    threshold: f64,
    norm: Norm,
) -> Option<usize> {
    states
        .into_iter()
        .position(|(x, s)| distance(x, s, x_a, norm) < threshold)
}

/// [`convergence_time`] over a stored trajectory.
pub fn trajectory_convergence_time(
    traj: &Trajectory,
    x_a: f64,
    threshold: f64,
    norm: Norm,
) -> Option<usize> {
    convergence_time(traj.states(), x_a, threshold, norm)
}

/// `(n − 1)(n + 1)·window`: steps after which the minimum state must have
/// strictly increased on a schedule that is jointly strongly connected with
/// that window.
pub fn kappa_bound(n: usize, window: u64) -> u64 {
    let n = n as u64;
    n.saturating_sub(1) * (n + 1) * window
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinIncreaseViolation {
    pub k0: usize,
    pub min_at_start: f64,
    pub min_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinIncreaseReport {
    pub kappa: u64,
    /// Start times where the network was not at consensus and was checked.
    pub checked: usize,
    /// Start times already at consensus (nothing to check).
    pub at_consensus: usize,
    pub violations: Vec<MinIncreaseViolation>,
    /// `V(k0) − V(k0 + κ)` per checked start; a witness bounding the
    /// worst-case decrease from above at the visited points.
    pub lyapunov_drops: Vec<(usize, f64)>,
}

impl MinIncreaseReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `min x(k0 + κ) > min x(k0)` for every `k0 ∈ [0, last_start]`
/// with `min x(k0) < x_a`, where `κ = kappa_bound(n, window)`.
pub fn min_increase_check(
    traj: &Trajectory,
    window: u64,
    last_start: usize,
) -> Result<MinIncreaseReport> {
    if traj.algorithm == Algorithm::Baseline {
        return Err(Error::NotApplicable(
            "the baseline rule does not keep the minimum state monotone".into(),
        ));
    }
    let kappa = kappa_bound(traj.n(), window);
    let need = last_start as u64 + kappa;
    if (traj.len() as u64) < need {
        return Err(Error::invalid(format!(
            "trajectory has {} steps, the check needs {need}",
            traj.len()
        )));
    }
    let x_a = traj.initial.average();
    let states: Vec<_> = traj.states().collect();
    let mut report = MinIncreaseReport {
        kappa,
        checked: 0,
        at_consensus: 0,
        violations: Vec::new(),
        lyapunov_drops: Vec::new(),
    };
    for k0 in 0..=last_start {
        let (x0, s0) = states[k0];
        let (x1, s1) = states[k0 + kappa as usize];
        let before = min_state(x0);
        if before >= x_a {
            report.at_consensus += 1;
            continue;
        }
        report.checked += 1;
        let after = min_state(x1);
        if !(after > before) {
            report.violations.push(MinIncreaseViolation {
                k0,
                min_at_start: before,
                min_after: after,
            });
        }
        report
            .lyapunov_drops
            .push((k0, lyapunov_of(x0, s0) - lyapunov_of(x1, s1)));
    }
    Ok(report)
}

/// Sampled surrogate for uniform average consensus: from every start time,
/// every initial condition drawn inside the `c1` ball around the consensus
/// point must enter the `c2` ball within `settle` steps and stay there until
/// `horizon` steps after the start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformConsensusCheck {
    pub x_a: f64,
    pub c1: f64,
    pub c2: f64,
    pub settle: u64,
    pub horizon: u64,
    pub start_times: Vec<u64>,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformConsensusFailure {
    pub start: u64,
    pub sample: usize,
    /// Steps after the start at which the state was outside the `c2` ball.
    pub at: u64,
    pub dist_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformConsensusReport {
    pub runs: usize,
    pub failures: Vec<UniformConsensusFailure>,
}

impl UniformConsensusReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Draws `(x, s)` with `s ≥ 0`, `1ᵀ(x + s)/n = x_a` and
/// `‖(x, s) − (x_a·1, 0)‖_∞ < c1`.
pub fn sample_ball(n: usize, x_a: f64, c1: f64, seed: u64, stream: u64) -> NetworkState {
    let mut r = rng::stream(seed, stream);
    let third = c1 / 3.0;
    let d: Vec<f64> = (0..n)
        .map(|_| rng::uniform(&mut r, -third, third))
        .collect();
    let s: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r, 0.0, third)).collect();
    let shift = (d.iter().sum::<f64>() + s.iter().sum::<f64>()) / n as f64;
    let x = d.iter().map(|v| x_a + v - shift).collect();
    NetworkState { x, s }
}

pub fn uniform_consensus_check(
    schedule: &TopologySchedule,
    policy: &WeightPolicy,
    check: &UniformConsensusCheck,
) -> Result<UniformConsensusReport> {
    let n = schedule.n();
    let mut failures = Vec::new();
    let mut runs = 0;
    for &start in &check.start_times {
        for sample in 0..check.samples {
            let st = sample_ball(
                n,
                check.x_a,
                check.c1,
                check.seed,
                start ^ ((sample as u64) << 32),
            );
            let mut sim = Simulation::starting_at(schedule, policy, st, Algorithm::Surplus, start)?;
            runs += 1;
            for t in 1..=check.horizon {
                sim.step()?;
                if t < check.settle {
                    continue;
                }
                let (x, s) = (&sim.state().x, &sim.state().s);
                let d = distance(x, s, check.x_a, Norm::Linf);
                if !(d < check.c2) {
                    failures.push(UniformConsensusFailure {
                        start,
                        sample,
                        at: t,
                        dist_inf: d,
                    });
                    break;
                }
            }
        }
    }
    Ok(UniformConsensusReport { runs, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Digraph;
    use crate::protocol::run_with;

    #[test]
    fn lyapunov_values() {
        let st = NetworkState::with_zero_surplus(vec![-10.0, -5.0, 5.0, 10.0]);
        assert_eq!(lyapunov(&st), 10.0);
        assert_eq!(lyapunov(&NetworkState::consensus(5, 3.25)), 0.0);
        let st = NetworkState::new(vec![0.0, 1.0], vec![0.0, 0.4]).unwrap();
        assert!((lyapunov(&st) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn conserved_average_values() {
        let st = NetworkState::with_zero_surplus(vec![-10.0, -5.0, 5.0, 10.0]);
        assert_eq!(conserved_average(&st), 0.0);
        let st = NetworkState::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(conserved_average(&st), 1.0);
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa_bound(4, 4), 60);
        assert_eq!(kappa_bound(1, 9), 0);
        assert_eq!(kappa_bound(2, 1), 3);
    }

    #[test]
    fn distances() {
        let x = [1.0, -1.0];
        let s = [0.5, 0.0];
        assert_eq!(distance(&x, &s, 0.0, Norm::L1), 2.5);
        assert_eq!(distance(&x, &s, 0.0, Norm::Linf), 1.0);
    }

    #[test]
    fn convergence_time_at_consensus_is_zero() {
        let st = NetworkState::consensus(3, 2.0);
        let sched = TopologySchedule::Static(Digraph::complete(3).unwrap());
        let traj = run_with(
            &sched,
            &WeightPolicy::uniform(0.2, 0.2, 0.2),
            &st,
            5,
            Algorithm::Surplus,
        )
        .unwrap();
        assert_eq!(
            trajectory_convergence_time(&traj, 2.0, 1e-9, Norm::L1),
            Some(0)
        );
    }

    #[test]
    fn convergence_time_none_when_threshold_unreached() {
        let x = vec![0.0, 4.0];
        let s = vec![0.0, 0.0];
        let states = [(x.as_slice(), s.as_slice())];
        assert_eq!(convergence_time(states, 2.0, 1.0, Norm::Linf), None);
    }

    #[test]
    fn min_increase_rejects_baseline() {
        let sched = TopologySchedule::Static(Digraph::complete(2).unwrap());
        let st = NetworkState::with_zero_surplus(vec![0.0, 1.0]);
        let policy = WeightPolicy::uniform(0.25, 0.25, 0.25);
        let traj = run_with(&sched, &policy, &st, 10, Algorithm::Baseline).unwrap();
        assert!(matches!(
            min_increase_check(&traj, 1, 0),
            Err(Error::NotApplicable(_))
        ));
        let traj = run_with(&sched, &policy, &st, 2, Algorithm::Surplus).unwrap();
        assert!(matches!(
            min_increase_check(&traj, 1, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn min_increase_at_consensus_is_vacuous() {
        let sched = TopologySchedule::Static(Digraph::complete(3).unwrap());
        let policy = WeightPolicy::uniform(0.2, 0.2, 0.2);
        let traj = run_with(
            &sched,
            &policy,
            &NetworkState::consensus(3, 1.0),
            30,
            Algorithm::Surplus,
        )
        .unwrap();
        let report = min_increase_check(&traj, 1, 10).unwrap();
        assert!(report.holds());
        assert_eq!(report.checked, 0);
        assert_eq!(report.at_consensus, 11);
    }

    #[test]
    fn metrics_rows_and_csv() {
        let sched = TopologySchedule::Static(Digraph::new(2, [(2, 1)]).unwrap());
        let st = NetworkState::with_zero_surplus(vec![0.0, 1.0]);
        let traj = run_with(
            &sched,
            &WeightPolicy::uniform(0.25, 0.25, 0.25),
            &st,
            2,
            Algorithm::Surplus,
        )
        .unwrap();
        let m = TrajectoryMetrics::from_trajectory(&traj);
        assert_eq!(m.rows.len(), 3);
        assert_eq!(m.rows[0].switch_count, Some(1));
        assert_eq!(m.rows[2].switch_count, None);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "k,min_state,max_state,V,conserved_sum,dist_l1,dist_inf,switch_count"
        );
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().ends_with(','));
    }

    #[test]
    fn ball_samples_are_feasible() {
        for stream in 0..200 {
            let st = sample_ball(5, 1.5, 0.3, 4, stream);
            assert!(st.s.iter().all(|&s| s >= 0.0));
            assert!((st.average() - 1.5).abs() < 1e-12);
            assert!(distance(&st.x, &st.s, 1.5, Norm::Linf) < 0.3);
        }
    }
}
