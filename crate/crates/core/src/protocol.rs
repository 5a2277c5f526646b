//! Agent-level surplus-based averaging.
//!
//! Each agent `i` keeps a state `x_i` and a nonnegative surplus `s_i`. At
//! time `k` it computes the neighbour term `y_i = Σ_j a_ij (x_j − x_i)` over
//! its in-neighbours and applies it only when `y_i ≤ 0`; upward moves are
//! paid for from its own surplus through `ε_i s_i`. Surplus is routed along
//! out-edges with sending weights `b_ih` and absorbs whatever the state
//! changed by, so `Σ (x_i + s_i)` never moves.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Digraph, Node, TopologySchedule};

/// Paired state and surplus vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr")]
pub struct NetworkState {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Deserialize)]
struct StateRepr {
    x: Vec<f64>,
    #[serde(default)]
    s: Option<Vec<f64>>,
}

impl TryFrom<StateRepr> for NetworkState {
    type Error = Error;

    fn try_from(r: StateRepr) -> Result<Self> {
        match r.s {
            Some(s) => NetworkState::new(r.x, s),
            None => Ok(NetworkState::with_zero_surplus(r.x)),
        }
    }
}

impl NetworkState {
    pub fn new(x: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if x.len() != s.len() {
            return Err(Error::DimensionMismatch {
                what: "surplus vector",
                expected: x.len(),
                actual: s.len(),
            });
        }
        Ok(NetworkState { x, s })
    }

    pub fn with_zero_surplus(x: Vec<f64>) -> Self {
        let s = vec![0.0; x.len()];
        NetworkState { x, s }
    }

    /// The average consensus point `(value·1, 0)`.
    pub fn consensus(n: usize, value: f64) -> Self {
        NetworkState::with_zero_surplus(vec![value; n])
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `1ᵀ(x + s)`.
    pub fn total(&self) -> f64 {
        self.x.iter().chain(&self.s).sum()
    }

    /// `1ᵀ(x + s) / n`, the value consensus must reach.
    pub fn average(&self) -> f64 {
        self.total() / self.n() as f64
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::DimensionMismatch {
                what: "network state",
                expected: n,
                actual: self.n(),
            });
        }
        Ok(())
    }
}

/// Which update rule to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Switching enabled: neighbour terms only ever pull a state down.
    #[default]
    Surplus,
    /// The non-switching predecessor (`c_i ≡ 1`); surpluses may go negative.
    Baseline,
}

/// Per-step weight tables, rows indexed by agent.
///
/// `a[i][j]` is the weight agent `i` puts on in-neighbour `j`, `b[i][h]`
/// the share of its surplus agent `i` sends to out-neighbour `h`, and
/// `eps[i]` the fraction of surplus it spends on its own state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightTable {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExplicitWeights {
    /// One table used at every step.
    Constant(WeightTable),
    /// Tables cycled by `k mod len`.
    PerStep { steps: Vec<WeightTable> },
}

/// Source of `a_ij(k)`, `b_ih(k)` and `ε_i(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum WeightPolicy {
    /// `a` on every in-edge, `b` on every out-edge, `eps` at every node.
    Uniform {
        a: f64,
        b: f64,
        eps: f64,
    },
    Explicit(ExplicitWeights),
}

impl WeightPolicy {
    pub fn uniform(a: f64, b: f64, eps: f64) -> Self {
        WeightPolicy::Uniform { a, b, eps }
    }

    /// Index of the table used at time `k`; constant policies always give 0.
    pub fn phase(&self, k: u64) -> usize {
        match self {
            WeightPolicy::Explicit(ExplicitWeights::PerStep { steps }) if !steps.is_empty() => {
                (k % steps.len() as u64) as usize
            }
            _ => 0,
        }
    }

    /// Dense weights for `g` at time `k`. Shapes are checked here; the
    /// parameter rules are checked by [`StepWeights::validate`].
    pub fn weights_at(&self, g: &Digraph, k: u64) -> Result<StepWeights> {
        let n = g.n();
        match self {
            WeightPolicy::Uniform { a, b, eps } => {
                let mut w = StepWeights::zeros(n);
                for (j, i) in g.edges() {
                    w.a[(i - 1) * n + (j - 1)] = *a;
                    w.b[(j - 1) * n + (i - 1)] = *b;
                }
                w.eps.fill(*eps);
                Ok(w)
            }
            WeightPolicy::Explicit(ExplicitWeights::Constant(t)) => StepWeights::from_table(t, n),
            WeightPolicy::Explicit(ExplicitWeights::PerStep { steps }) => {
                if steps.is_empty() {
                    return Err(Error::invalid("explicit weight policy has no tables"));
                }
                StepWeights::from_table(&steps[self.phase(k)], n)
            }
        }
    }
}

/// Weights resolved for one digraph at one time step, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct StepWeights {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    eps: Vec<f64>,
}

impl StepWeights {
    fn zeros(n: usize) -> Self {
        StepWeights {
            n,
            a: vec![0.0; n * n],
            b: vec![0.0; n * n],
            eps: vec![0.0; n],
        }
    }

    fn from_table(t: &WeightTable, n: usize) -> Result<Self> {
        let square = |m: &Vec<Vec<f64>>, what: &'static str| -> Result<Vec<f64>> {
            if m.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual: m.len(),
                });
            }
            let mut flat = Vec::with_capacity(n * n);
            for row in m {
                if row.len() != n {
                    return Err(Error::DimensionMismatch {
                        what,
                        expected: n,
                        actual: row.len(),
                    });
                }
                flat.extend_from_slice(row);
            }
            Ok(flat)
        };
        if t.eps.len() != n {
            return Err(Error::DimensionMismatch {
                what: "eps vector",
                expected: n,
                actual: t.eps.len(),
            });
        }
        Ok(StepWeights {
            n,
            a: square(&t.a, "updating weight table a")?,
            b: square(&t.b, "sending weight table b")?,
            eps: t.eps.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `a_ij`: weight node `i` puts on in-neighbour `j`.
    pub fn a(&self, i: Node, j: Node) -> f64 {
        self.a[(i - 1) * self.n + (j - 1)]
    }

    /// `b_ih`: share of node `i`'s surplus sent to out-neighbour `h`.
    pub fn b(&self, i: Node, h: Node) -> f64 {
        self.b[(i - 1) * self.n + (h - 1)]
    }

    pub fn eps(&self, i: Node) -> f64 {
        self.eps[i - 1]
    }

    /// Checks every parameter rule for `g` and lists each violation.
    pub fn validate(&self, g: &Digraph) -> ValidationReport {
        let mut violations = Vec::new();
        for i in g.nodes() {
            let eps = self.eps(i);
            if !in_open_unit(eps) {
                violations.push(Violation::Eps {
                    node: i,
                    value: eps,
                });
            }
            let mut update_sum = 0.0;
            let mut send_sum = 0.0;
            for j in g.nodes() {
                let a = self.a(i, j);
                let on_edge = g.has_edge(j, i);
                if on_edge {
                    update_sum += a;
                }
                if (on_edge && !in_open_unit(a)) || (!on_edge && a != 0.0) {
                    violations.push(Violation::UpdateWeight {
                        node: i,
                        neighbor: j,
                        value: a,
                        on_edge,
                    });
                }
                let b = self.b(i, j);
                let on_edge = g.has_edge(i, j);
                if on_edge {
                    send_sum += b;
                }
                if (on_edge && !in_open_unit(b)) || (!on_edge && b != 0.0) {
                    violations.push(Violation::SendWeight {
                        node: i,
                        neighbor: j,
                        value: b,
                        on_edge,
                    });
                }
            }
            if !(update_sum < 1.0) {
                violations.push(Violation::UpdateSum {
                    node: i,
                    sum: update_sum,
                });
            }
            if !(send_sum < 1.0 - eps) {
                violations.push(Violation::SendSum {
                    node: i,
                    sum: send_sum,
                    limit: 1.0 - eps,
                });
            }
        }
        ValidationReport { violations }
    }
}

fn in_open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

/// One violated parameter inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    /// `ε_i ∉ (0, 1)`.
    Eps { node: Node, value: f64 },
    /// `a_ij ∉ (0, 1)` on an in-edge, or nonzero off it.
    UpdateWeight {
        node: Node,
        neighbor: Node,
        value: f64,
        on_edge: bool,
    },
    /// `Σ_j a_ij ≥ 1`.
    UpdateSum { node: Node, sum: f64 },
    /// `b_ih ∉ (0, 1)` on an out-edge, or nonzero off it.
    SendWeight {
        node: Node,
        neighbor: Node,
        value: f64,
        on_edge: bool,
    },
    /// `Σ_h b_ih ≥ 1 − ε_i`.
    SendSum { node: Node, sum: f64, limit: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Eps { node, value } => {
                write!(f, "node {node}: eps = {value} is not in (0, 1)")
            }
            Violation::UpdateWeight {
                node,
                neighbor,
                value,
                on_edge: true,
            } => write!(f, "node {node}: a[{node}][{neighbor}] = {value} is not in (0, 1)"),
            Violation::UpdateWeight {
                node,
                neighbor,
                value,
                on_edge: false,
            } => write!(
                f,
                "node {node}: a[{node}][{neighbor}] = {value} but {neighbor} is not an in-neighbour"
            ),
            Violation::UpdateSum { node, sum } => {
                write!(f, "node {node}: updating weights sum to {sum}, need < 1")
            }
            Violation::SendWeight {
                node,
                neighbor,
                value,
                on_edge: true,
            } => write!(f, "node {node}: b[{node}][{neighbor}] = {value} is not in (0, 1)"),
            Violation::SendWeight {
                node,
                neighbor,
                value,
                on_edge: false,
            } => write!(
                f,
                "node {node}: b[{node}][{neighbor}] = {value} but {neighbor} is not an out-neighbour"
            ),
            Violation::SendSum { node, sum, limit } => {
                write!(f, "node {node}: sending weights sum to {sum}, need < {limit}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidWeights(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Checks the parameter rules for `policy` on `g` at time `k`.
pub fn validate_weights(policy: &WeightPolicy, g: &Digraph, k: u64) -> Result<ValidationReport> {
    Ok(policy.weights_at(g, k)?.validate(g))
}

/// Result of one synchronous round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: u64,
    /// Switching decisions `c_i(k)`.
    pub c: Vec<bool>,
    /// `Σ_j a_ij (x_j − x_i)` per node.
    pub neighbor_term: Vec<f64>,
    pub x_next: Vec<f64>,
    pub s_next: Vec<f64>,
}

impl StepRecord {
    pub fn next_state(&self) -> NetworkState {
        NetworkState {
            x: self.x_next.clone(),
            s: self.s_next.clone(),
        }
    }

    /// Number of agents with the neighbour term switched off.
    pub fn switched_off(&self) -> usize {
        self.c.iter().filter(|&&c| !c).count()
    }
}

/// `(c_i, Σ_j a_ij (x_j − x_i))` for node `i`. An agent with no in-neighbours
/// sees an empty sum and keeps `c_i = 1`.
pub fn neighbor_term(g: &Digraph, w: &StepWeights, x: &[f64], i: Node) -> f64 {
    g.in_adj(i)
        .iter()
        .map(|&j| w.a(i, j) * (x[j - 1] - x[i - 1]))
        .sum()
}

/// Switching decision for node `i` under `policy` at time `k`.
pub fn switching_decision(
    g: &Digraph,
    policy: &WeightPolicy,
    k: u64,
    x: &[f64],
    i: Node,
) -> Result<(bool, f64)> {
    if x.len() != g.n() {
        return Err(Error::DimensionMismatch {
            what: "state vector",
            expected: g.n(),
            actual: x.len(),
        });
    }
    g.in_neighbors(i)?;
    let w = policy.weights_at(g, k)?;
    let term = neighbor_term(g, &w, x, i);
    Ok((term <= 0.0, term))
}

/// One round with already validated weights.
pub(crate) fn advance(
    g: &Digraph,
    w: &StepWeights,
    st: &NetworkState,
    algorithm: Algorithm,
    k: u64,
) -> StepRecord {
    let n = g.n();
    let (x, s) = (&st.x, &st.s);
    let mut c = Vec::with_capacity(n);
    let mut terms = Vec::with_capacity(n);
    let mut x_next = Vec::with_capacity(n);
    let mut s_next = Vec::with_capacity(n);
    for i in g.nodes() {
        let term = neighbor_term(g, w, x, i);
        let on = match algorithm {
            Algorithm::Surplus => term <= 0.0,
            Algorithm::Baseline => true,
        };
        let xi = x[i - 1];
        let si = s[i - 1];
        let xn = xi + if on { term } else { 0.0 } + w.eps(i) * si;
        let kept: f64 = 1.0 - g.out_adj(i).iter().map(|&h| w.b(i, h)).sum::<f64>();
        let received: f64 = g.in_adj(i).iter().map(|&j| w.b(j, i) * s[j - 1]).sum();
        c.push(on);
        terms.push(term);
        s_next.push(kept * si + received - (xn - xi));
        x_next.push(xn);
    }
    StepRecord {
        k,
        c,
        neighbor_term: terms,
        x_next,
        s_next,
    }
}

/// One synchronous round of `algorithm` on `g` at time `k`.
pub fn step_with(
    g: &Digraph,
    policy: &WeightPolicy,
    k: u64,
    st: &NetworkState,
    algorithm: Algorithm,
) -> Result<StepRecord> {
    st.check_n(g.n())?;
    let w = policy.weights_at(g, k)?;
    w.validate(g).into_result()?;
    Ok(advance(g, &w, st, algorithm, k))
}

/// One round of the switching surplus algorithm.
pub fn step(g: &Digraph, policy: &WeightPolicy, k: u64, st: &NetworkState) -> Result<StepRecord> {
    step_with(g, policy, k, st, Algorithm::Surplus)
}

/// One round of the non-switching baseline (`c_i ≡ 1`).
pub fn step_baseline(
    g: &Digraph,
    policy: &WeightPolicy,
    k: u64,
    st: &NetworkState,
) -> Result<StepRecord> {
    step_with(g, policy, k, st, Algorithm::Baseline)
}

/// Incremental simulation over a schedule. Validated weights are cached
/// per (graph phase, weight phase) so static and periodic runs validate
/// each distinct graph once.
pub struct Simulation<'a> {
    schedule: &'a TopologySchedule,
    policy: &'a WeightPolicy,
    algorithm: Algorithm,
    state: NetworkState,
    k: u64,
    cache: HashMap<(usize, usize), StepWeights>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        schedule: &'a TopologySchedule,
        policy: &'a WeightPolicy,
        initial: NetworkState,
        algorithm: Algorithm,
    ) -> Result<Self> {
        Simulation::starting_at(schedule, policy, initial, algorithm, 0)
    }

    /// Like [`Simulation::new`], with `initial` taken as the state at time
    /// `start` so the first round uses `G(start)`.
    pub fn starting_at(
        schedule: &'a TopologySchedule,
        policy: &'a WeightPolicy,
        initial: NetworkState,
        algorithm: Algorithm,
        start: u64,
    ) -> Result<Self> {
        initial.check_n(schedule.n())?;
        if let Some(i) = initial.s.iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::invalid(format!(
                "initial surplus s[{}] = {} must be nonnegative",
                i + 1,
                initial.s[i]
            )));
        }
        if let Some(i) = initial.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "initial state x[{}] is not finite",
                i + 1
            )));
        }
        Ok(Simulation {
            schedule,
            policy,
            algorithm,
            state: initial,
            k: start,
            cache: HashMap::new(),
        })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    /// Time index of the current state.
    pub fn time(&self) -> u64 {
        self.k
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let k = self.k;
        let wrap = |e: Error| Error::Step {
            k,
            source: Box::new(e),
        };
        let g = self.schedule.graph_at(k);
        let record = match self.schedule.phase(k) {
            Some(phase) => {
                let key = (phase, self.policy.phase(k));
                if !self.cache.contains_key(&key) {
                    let w = self.policy.weights_at(&g, k).map_err(wrap)?;
                    w.validate(&g).into_result().map_err(wrap)?;
                    self.cache.insert(key, w);
                }
                advance(&g, &self.cache[&key], &self.state, self.algorithm, k)
            }
            None => {
                let w = self.policy.weights_at(&g, k).map_err(wrap)?;
                w.validate(&g).into_result().map_err(wrap)?;
                advance(&g, &w, &self.state, self.algorithm, k)
            }
        };
        self.state.x.clone_from(&record.x_next);
        self.state.s.clone_from(&record.s_next);
        self.k += 1;
        Ok(record)
    }
}

/// A run from `initial`; `records[k]` maps the state at time `k` to `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub initial: NetworkState,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.initial.n()
    }

    /// Number of steps taken.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(x(k), s(k))` for `k = 0..=len()`.
    pub fn states(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        std::iter::once((self.initial.x.as_slice(), self.initial.s.as_slice())).chain(
            self.records
                .iter()
                .map(|r| (r.x_next.as_slice(), r.s_next.as_slice())),
        )
    }

    pub fn state(&self, k: usize) -> Option<NetworkState> {
        match k {
            0 => Some(self.initial.clone()),
            _ => self.records.get(k - 1).map(StepRecord::next_state),
        }
    }

    pub fn final_state(&self) -> NetworkState {
        self.state(self.len()).expect("final state exists")
    }
}

/// Runs `steps` rounds of `algorithm` from `initial`.
pub fn run_with(
    schedule: &TopologySchedule,
    policy: &WeightPolicy,
    initial: &NetworkState,
    steps: u64,
    algorithm: Algorithm,
) -> Result<Trajectory> {
    let mut sim = Simulation::new(schedule, policy, initial.clone(), algorithm)?;
    let records = (0..steps).map(|_| sim.step()).collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        algorithm,
        initial: initial.clone(),
        records,
    })
}

/// Runs `steps` rounds of the surplus algorithm.
pub fn run(
    schedule: &TopologySchedule,
    policy: &WeightPolicy,
    initial: &NetworkState,
    steps: u64,
) -> Result<Trajectory> {
    run_with(schedule, policy, initial, steps, Algorithm::Surplus)
}
