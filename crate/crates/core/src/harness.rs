//! Experiment configs, batch runs and the convergence-time comparison.
//!
//! A config names a schedule (inline or by generator), a weight policy, an
//! initial condition, the rule to run and a horizon. Runs are fully
//! determined by the config: random initial states come from the seeded
//! stream described in [`crate::rng`], one seed per repetition.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{self, distance, Norm, TrajectoryMetrics};
use crate::error::{Error, Result};
use crate::graph::TopologySchedule;
use crate::matrix;
use crate::protocol::{self, Algorithm, NetworkState, Simulation, Trajectory, WeightPolicy};
use crate::rng;
use crate::schedule::{self, Fig3Orientation};

/// Overrides the output directory named in a config.
pub const OUTPUT_DIR_ENV: &str = "SURPLUS_OUTPUT_DIR";

/// Named topology generators usable from a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    #[serde(rename = "periodic_ring_4")]
    PeriodicRing4,
    #[serde(rename = "fig3_family")]
    Fig3Family {
        n: usize,
        #[serde(default)]
        orientation: Fig3Orientation,
    },
    TwoComponents {
        n1: usize,
        n2: usize,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_b")]
        b: f64,
    },
    ReachableOnly {
        n: usize,
        r: usize,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_b")]
        b: f64,
    },
    Random {
        n: usize,
        p: f64,
        seed: u64,
    },
}

fn default_a() -> f64 {
    1.0
}

fn default_b() -> f64 {
    -1.0
}

impl Generator {
    /// The schedule, plus the initial state the generator prescribes (the
    /// counterexample families come with one).
    pub fn build(&self) -> Result<(TopologySchedule, Option<NetworkState>)> {
        Ok(match *self {
            Generator::PeriodicRing4 => (schedule::periodic_ring_4(), None),
            Generator::Fig3Family { n, orientation } => (
                TopologySchedule::Static(schedule::fig3_family_oriented(n, orientation)?),
                None,
            ),
            Generator::TwoComponents { n1, n2, a, b } => {
                let (s, st) = schedule::counterexample_two_components(n1, n2, a, b)?;
                (s, Some(st))
            }
            Generator::ReachableOnly { n, r, a, b } => {
                let (s, st) = schedule::counterexample_reachable_only(n, r, a, b)?;
                (s, Some(st))
            }
            Generator::Random { n, p, seed } => (schedule::random_schedule(n, p, seed)?, None),
        })
    }
}

/// A schedule given inline (`{"kind": ...}`) or by generator
/// (`{"generator": ...}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", untagged)]
pub enum ScheduleSource {
    Generator(Generator),
    Inline(TopologySchedule),
}

impl TryFrom<Value> for ScheduleSource {
    type Error = serde_json::Error;

    fn try_from(v: Value) -> std::result::Result<Self, Self::Error> {
        if v.get("generator").is_some() {
            serde_json::from_value(v).map(ScheduleSource::Generator)
        } else {
            serde_json::from_value(v).map(ScheduleSource::Inline)
        }
    }
}

impl ScheduleSource {
    pub fn build(&self) -> Result<(TopologySchedule, Option<NetworkState>)> {
        match self {
            ScheduleSource::Generator(g) => g.build(),
            ScheduleSource::Inline(s) => Ok((s.clone(), None)),
        }
    }
}

/// `{"x": [...], "s": [...]}` or `{"uniform": [low, high], "seed": u64}`.
/// Omitted, the schedule generator's prescribed state is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", untagged)]
pub enum InitialState {
    Explicit(NetworkState),
    Uniform { uniform: (f64, f64), seed: u64 },
}

impl TryFrom<Value> for InitialState {
    type Error = serde_json::Error;

    fn try_from(v: Value) -> std::result::Result<Self, Self::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Uniform {
            uniform: (f64, f64),
            seed: u64,
        }
        if v.get("uniform").is_some() {
            let u: Uniform = serde_json::from_value(v)?;
            Ok(InitialState::Uniform {
                uniform: u.uniform,
                seed: u.seed,
            })
        } else {
            serde_json::from_value(v).map(InitialState::Explicit)
        }
    }
}

/// `x_i(0)` drawn uniformly from `[low, high)` with zero surplus.
pub fn uniform_initial(n: usize, low: f64, high: f64, seed: u64) -> NetworkState {
    let mut r = rng::stream(seed, 0);
    NetworkState::with_zero_surplus((0..n).map(|_| rng::uniform(&mut r, low, high)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceCriterion {
    pub threshold: f64,
    #[serde(default)]
    pub norm: Norm,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        ConvergenceCriterion {
            threshold: 0.05,
            norm: Norm::L1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub trajectory: String,
    pub metrics: String,
    pub summary: String,
    /// Skip the per-step CSVs (summary only).
    pub summary_only: bool,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: PathBuf::from("out"),
            trajectory: "trajectory.csv".into(),
            metrics: "metrics.csv".into(),
            summary: "summary.json".into(),
            summary_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule: ScheduleSource,
    pub weights: WeightPolicy,
    #[serde(default)]
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub horizon: u64,
    #[serde(default)]
    pub convergence: ConvergenceCriterion,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

fn one() -> usize {
    1
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_owned(),
        source,
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Resolves the schedule and checks every field, including the weight
    /// rules on every distinct graph the run will visit.
    pub fn prepare(&self) -> Result<Experiment> {
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.repetitions < 1 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        if !(self.convergence.threshold > 0.0) {
            return Err(Error::config("convergence.threshold", "must be positive"));
        }
        let (schedule, prescribed) = self
            .schedule
            .build()
            .map_err(|e| Error::config("schedule", e.to_string()))?;
        let n = schedule.n();

        let initials = match (&self.initial, prescribed) {
            (Some(InitialState::Explicit(st)), _) => {
                if st.n() != n {
                    return Err(Error::DimensionMismatch {
                        what: "initial.x",
                        expected: n,
                        actual: st.n(),
                    });
                }
                if st.s.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::config("initial.s", "surpluses must be nonnegative"));
                }
                vec![(None, st.clone()); self.repetitions]
            }
            (
                Some(InitialState::Uniform {
                    uniform: (lo, hi),
                    seed,
                }),
                _,
            ) => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::config("initial.uniform", "need finite low < high"));
                }
                (0..self.repetitions as u64)
                    .map(|r| {
                        let seed = seed.wrapping_add(r);
                        (Some(seed), uniform_initial(n, *lo, *hi, seed))
                    })
                    .collect()
            }
            (None, Some(st)) => vec![(None, st); self.repetitions],
            (None, None) => {
                return Err(Error::config(
                    "initial",
                    "required unless the schedule generator prescribes one",
                ))
            }
        };

        check_weights_over_horizon(&schedule, &self.weights, self.horizon)?;

        Ok(Experiment {
            schedule,
            weights: self.weights.clone(),
            algorithm: self.algorithm,
            horizon: self.horizon,
            convergence: self.convergence,
            initials,
        })
    }
}

/// Validates the weights on every distinct (graph, weight table) pair in
/// `[0, horizon)`.
pub fn check_weights_over_horizon(
    schedule: &TopologySchedule,
    policy: &WeightPolicy,
    horizon: u64,
) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for k in 0..horizon {
        if let Some(phase) = schedule.phase(k) {
            if !seen.insert((phase, policy.phase(k))) {
                continue;
            }
        }
        let g = schedule.graph_at(k);
        let wrap = |e: Error| Error::Step {
            k,
            source: Box::new(e),
        };
        protocol::validate_weights(policy, &g, k)
            .and_then(|r| r.into_result())
            .map_err(wrap)?;
    }
    Ok(())
}

/// A validated, ready-to-run config.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub schedule: TopologySchedule,
    pub weights: WeightPolicy,
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub convergence: ConvergenceCriterion,
    /// `(seed, state)` per repetition; the seed is `None` for fixed states.
    pub initials: Vec<(Option<u64>, NetworkState)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub repetition: usize,
    pub seed: Option<u64>,
    pub converged: bool,
    pub convergence_step: Option<usize>,
    pub final_dist: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    /// Every repetition converged.
    pub converged: bool,
    /// Convergence step of the first repetition.
    pub convergence_step: Option<usize>,
    pub mean_convergence_step: Option<f64>,
    /// Largest final distance across repetitions.
    pub final_dist: f64,
    pub wall_time: f64,
    pub not_converged: usize,
    pub runs: Vec<RunSummary>,
}

/// Extra artifacts for [`run_experiment`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write `M(k)` of the first repetition as `matrix_k{K}.csv`.
    pub dump_matrix_at: Option<u64>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Trajectory CSV: `k, x1..xn, s1..sn`, one row per visited state.
pub fn write_trajectory_csv<W: std::io::Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.n();
    let mut w = csv::Writer::from_writer(out);
    let header = std::iter::once("k".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain((1..=n).map(|i| format!("s{i}")));
    w.write_record(header)?;
    for (k, (x, s)) in traj.states().enumerate() {
        let row = std::iter::once(k.to_string()).chain(x.iter().chain(s).map(|v| v.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV back as `(x, s)` rows.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    let n = (width - 1) / 2;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|e| {
                    Error::invalid(format!("bad number `{v}` in {}: {e}", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((vals[..n].to_vec(), vals[n..].to_vec()));
    }
    Ok(rows)
}

impl Experiment {
    fn file_name(base: &str, rep: usize, reps: usize) -> String {
        if reps == 1 {
            return base.to_string();
        }
        match base.rsplit_once('.') {
            Some((stem, ext)) => format!("{stem}_rep{rep}.{ext}"),
            None => format!("{base}_rep{rep}"),
        }
    }

    /// Runs every repetition. When `out` is given, writes the trajectory
    /// and metrics CSVs per repetition and the JSON summary there.
    pub fn run(
        &self,
        out: Option<(&Path, &OutputPaths)>,
        opts: &RunOptions,
    ) -> Result<ExperimentSummary> {
        let started = Instant::now();
        let reps = self.initials.len();
        let mut runs = Vec::with_capacity(reps);
        for (rep, (seed, st0)) in self.initials.iter().enumerate() {
            let t0 = Instant::now();
            let traj = protocol::run_with(
                &self.schedule,
                &self.weights,
                st0,
                self.horizon,
                self.algorithm,
            )?;
            let x_a = st0.average();
            let ConvergenceCriterion { threshold, norm } = self.convergence;
            let step = analysis::trajectory_convergence_time(&traj, x_a, threshold, norm);
            let end = traj.final_state();
            runs.push(RunSummary {
                repetition: rep,
                seed: *seed,
                converged: step.is_some(),
                convergence_step: step,
                final_dist: distance(&end.x, &end.s, x_a, norm),
                wall_time: t0.elapsed().as_secs_f64(),
            });
            if let Some((dir, paths)) = out {
                if !paths.summary_only {
                    let mut buf = Vec::new();
                    write_trajectory_csv(&traj, &mut buf)?;
                    write_atomic(
                        &dir.join(Self::file_name(&paths.trajectory, rep, reps)),
                        &buf,
                    )?;
                    let mut buf = Vec::new();
                    TrajectoryMetrics::from_trajectory(&traj).write_csv(&mut buf)?;
                    write_atomic(&dir.join(Self::file_name(&paths.metrics, rep, reps)), &buf)?;
                }
                if rep == 0 {
                    if let Some(k) = opts.dump_matrix_at {
                        self.dump_matrix(&traj, k, dir)?;
                    }
                }
            }
        }
        let done: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.convergence_step.map(|s| s as f64))
            .collect();
        let summary = ExperimentSummary {
            converged: runs.iter().all(|r| r.converged),
            convergence_step: runs[0].convergence_step,
            mean_convergence_step: (!done.is_empty())
                .then(|| done.iter().sum::<f64>() / done.len() as f64),
            final_dist: runs.iter().map(|r| r.final_dist).fold(0.0, f64::max),
            wall_time: started.elapsed().as_secs_f64(),
            not_converged: runs.iter().filter(|r| !r.converged).count(),
            runs,
        };
        if let Some((dir, paths)) = out {
            write_atomic(
                &dir.join(&paths.summary),
                serde_json::to_string_pretty(&summary)?.as_bytes(),
            )?;
        }
        Ok(summary)
    }

    fn dump_matrix(&self, traj: &Trajectory, k: u64, dir: &Path) -> Result<()> {
        let Some(st) = traj.state(k as usize) else {
            return Err(Error::invalid(format!(
                "matrix dump time {k} is past the horizon {}",
                traj.len()
            )));
        };
        let g = self.schedule.graph_at(k);
        let c = match traj.records.get(k as usize) {
            Some(r) => r.c.clone(),
            None => g
                .nodes()
                .map(|i| {
                    protocol::switching_decision(&g, &self.weights, k, &st.x, i).map(|(c, _)| c)
                })
                .collect::<Result<_>>()?,
        };
        let mats = matrix::build_matrices(&g, &self.weights, k, &c)?;
        let mut buf = Vec::new();
        mats.write_csv(&mut buf)?;
        write_atomic(&dir.join(format!("matrix_k{k}.csv")), &buf)
    }
}

/// Output directory: the environment override, else the config's.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output.dir.clone())
}

/// Validates, runs and writes all artifacts for `cfg` under `dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dir: &Path,
    opts: &RunOptions,
) -> Result<ExperimentSummary> {
    cfg.prepare()?.run(Some((dir, &cfg.output)), opts)
}

/// Steps until `‖(x, s) − (x_a·1, 0)‖ < threshold`, without storing the
/// trajectory. `None` if the horizon passes first.
pub fn time_to_converge(
    schedule: &TopologySchedule,
    policy: &WeightPolicy,
    initial: &NetworkState,
    algorithm: Algorithm,
    criterion: ConvergenceCriterion,
    horizon: u64,
) -> Result<Option<u64>> {
    let x_a = initial.average();
    let mut sim = Simulation::new(schedule, policy, initial.clone(), algorithm)?;
    loop {
        let st = sim.state();
        if distance(&st.x, &st.s, x_a, criterion.norm) < criterion.threshold {
            return Ok(Some(sim.time()));
        }
        if sim.time() >= horizon {
            return Ok(None);
        }
        sim.step()?;
    }
}

/// Settings for the surplus-versus-baseline convergence-time comparison on
/// the static comparison family with `a = b = 1/n`, `ε = 1/(2n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonTemplate {
    pub repetitions: usize,
    pub horizon: u64,
    pub convergence: ConvergenceCriterion,
    /// Initial states are uniform on this interval.
    pub x_range: (f64, f64),
    /// Repetition `r` draws its initial state with seed `seed + r`.
    pub seed: u64,
    pub orientation: Fig3Orientation,
    pub output_dir: PathBuf,
}

impl Default for ComparisonTemplate {
    fn default() -> Self {
        ComparisonTemplate {
            repetitions: 50,
            horizon: 1_000_000,
            convergence: ConvergenceCriterion::default(),
            x_range: (-50.0, 50.0),
            seed: 1,
            orientation: Fig3Orientation::InEdgesOfLast,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ComparisonTemplate {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub mean_steps_surplus: Option<f64>,
    pub mean_steps_baseline: Option<f64>,
    pub ratio: Option<f64>,
    /// Per repetition: `(seed, surplus steps, baseline steps)`.
    pub runs: Vec<(u64, Option<u64>, Option<u64>)>,
    pub surplus_not_converged: usize,
    pub baseline_not_converged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

impl ComparisonTable {
    /// CSV with columns n, mean_steps_surplus, mean_steps_baseline, ratio.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "mean_steps_surplus", "mean_steps_baseline", "ratio"])?;
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                cell(r.mean_steps_surplus),
                cell(r.mean_steps_baseline),
                cell(r.ratio),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `comparison.csv` and the per-repetition `comparison.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        write_atomic(&dir.join("comparison.csv"), &buf)?;
        write_atomic(
            &dir.join("comparison.json"),
            serde_json::to_string_pretty(self)?.as_bytes(),
        )
    }
}

fn mean(xs: impl Iterator<Item = u64>) -> Option<f64> {
    let (sum, count) = xs.fold((0u64, 0u64), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum as f64 / count as f64)
}

/// Runs both rules on the comparison family for each `n`. Repetitions that
/// do not converge are excluded from the means and reported as warnings.
pub fn run_comparison(n_list: &[usize], template: &ComparisonTemplate) -> Result<ComparisonTable> {
    if template.repetitions < 1 {
        return Err(Error::config("repetitions", "must be at least 1"));
    }
    let (lo, hi) = template.x_range;
    if !(lo < hi) {
        return Err(Error::config("x_range", "need low < high"));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &n in n_list {
        if n < 3 {
            return Err(Error::config(
                "n",
                format!("comparison needs n >= 3, got {n}"),
            ));
        }
        let nf = n as f64;
        let sched =
            TopologySchedule::Static(schedule::fig3_family_oriented(n, template.orientation)?);
        let policy = WeightPolicy::uniform(1.0 / nf, 1.0 / nf, 1.0 / (2.0 * nf));
        let mut runs = Vec::with_capacity(template.repetitions);
        for r in 0..template.repetitions as u64 {
            let seed = template.seed.wrapping_add(r);
            let st0 = uniform_initial(n, lo, hi, seed);
            let time = |alg| {
                time_to_converge(
                    &sched,
                    &policy,
                    &st0,
                    alg,
                    template.convergence,
                    template.horizon,
                )
            };
            runs.push((seed, time(Algorithm::Surplus)?, time(Algorithm::Baseline)?));
        }
        let surplus_nc = runs.iter().filter(|r| r.1.is_none()).count();
        let baseline_nc = runs.iter().filter(|r| r.2.is_none()).count();
        for (label, count) in [("surplus", surplus_nc), ("baseline", baseline_nc)] {
            if count > 0 {
                warnings.push(format!(
                    "n={n}: {count} of {} {label} runs did not converge within {} steps",
                    template.repetitions, template.horizon
                ));
            }
        }
        let ms = mean(runs.iter().filter_map(|r| r.1));
        let mb = mean(runs.iter().filter_map(|r| r.2));
        rows.push(ComparisonRow {
            n,
            mean_steps_surplus: ms,
            mean_steps_baseline: mb,
            ratio: ms.zip(mb).map(|(s, b)| s / b),
            runs,
            surplus_not_converged: surplus_nc,
            baseline_not_converged: baseline_nc,
        });
    }
    Ok(ComparisonTable { rows, warnings })
}
