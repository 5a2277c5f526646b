//! Digraphs on the node set `1..=n` and time-varying topology schedules.
//!
//! An edge `(j, i)` means agent `j` communicates to agent `i`. Node
//! identifiers are 1-based at every public interface; adjacency is stored
//! 0-based internally.

use std::borrow::Cow;
use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// 1-based agent identifier.
pub type Node = usize;

/// One topology snapshot `G(k)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DigraphRepr", into = "DigraphRepr")]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(Node, Node)>,
    in_adj: Vec<Vec<Node>>,
    out_adj: Vec<Vec<Node>>,
}

#[derive(Serialize, Deserialize)]
struct DigraphRepr {
    n: usize,
    edges: Vec<(Node, Node)>,
}

impl TryFrom<DigraphRepr> for Digraph {
    type Error = Error;

    fn try_from(repr: DigraphRepr) -> Result<Self> {
        Digraph::new(repr.n, repr.edges)
    }
}

impl From<Digraph> for DigraphRepr {
    fn from(g: Digraph) -> Self {
        DigraphRepr {
            n: g.n,
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl Digraph {
    /// Builds a digraph, rejecting self-loops and out-of-range endpoints.
    /// Repeated edges collapse.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (Node, Node)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("a digraph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (j, i) in edges {
            if !(1..=n).contains(&j) || !(1..=n).contains(&i) {
                return Err(Error::invalid(format!(
                    "edge ({j},{i}) has an endpoint outside 1..={n}"
                )));
            }
            if i == j {
                return Err(Error::invalid(format!(
                    "self-loop ({i},{i}) is not allowed"
                )));
            }
            set.insert((j, i));
        }
        let mut in_adj = vec![Vec::new(); n];
        let mut out_adj = vec![Vec::new(); n];
        for &(j, i) in &set {
            in_adj[i - 1].push(j);
            out_adj[j - 1].push(i);
        }
        for list in in_adj.iter_mut() {
            list.sort_unstable();
        }
        Ok(Digraph {
            n,
            edges: set,
            in_adj,
            out_adj,
        })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Digraph::new(n, std::iter::empty())
    }

    pub fn complete(n: usize) -> Result<Self> {
        Digraph::new(
            n,
            (1..=n).flat_map(|j| (1..=n).filter(move |&i| i != j).map(move |i| (j, i))),
        )
    }

    /// Directed cycle through `nodes` in order, closing back to the first.
    /// One node gives no edges.
    pub fn with_cycle(n: usize, nodes: &[Node]) -> Result<Self> {
        let edges = if nodes.len() < 2 {
            Vec::new()
        } else {
            (0..nodes.len())
                .map(|t| (nodes[t], nodes[(t + 1) % nodes.len()]))
                .collect()
        };
        Digraph::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> std::ops::RangeInclusive<Node> {
        1..=self.n
    }

    /// Edges `(j, i)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (Node, Node)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: Node, to: Node) -> bool {
        self.edges.contains(&(from, to))
    }

    fn check_node(&self, i: Node) -> Result<()> {
        if (1..=self.n).contains(&i) {
            Ok(())
        } else {
            Err(Error::invalid(format!("node {i} outside 1..={}", self.n)))
        }
    }

    /// `{ j : (j, i) ∈ E }`, sorted.
    pub fn in_neighbors(&self, i: Node) -> Result<&[Node]> {
        self.check_node(i)?;
        Ok(&self.in_adj[i - 1])
    }

    /// `{ h : (i, h) ∈ E }`, sorted.
    pub fn out_neighbors(&self, i: Node) -> Result<&[Node]> {
        self.check_node(i)?;
        Ok(&self.out_adj[i - 1])
    }

    // Unchecked variants for hot loops that iterate `nodes()`.
    pub(crate) fn in_adj(&self, i: Node) -> &[Node] {
        &self.in_adj[i - 1]
    }

    pub(crate) fn out_adj(&self, i: Node) -> &[Node] {
        &self.out_adj[i - 1]
    }

    pub fn union(&self, other: &Digraph) -> Result<Digraph> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                what: "digraph union",
                expected: self.n,
                actual: other.n,
            });
        }
        Digraph::new(self.n, self.edges.union(&other.edges).copied())
    }

    /// Nodes reachable from `src` (including `src`), as a 1-based membership
    /// mask indexed `mask[i - 1]`.
    pub fn reachable_from(&self, src: Node) -> Result<Vec<bool>> {
        self.check_node(src)?;
        Ok(bfs(self.n, src, |u| &self.out_adj[u - 1]))
    }

    /// Every node reachable from every other node. A single node is
    /// trivially strongly connected.
    pub fn is_strongly_connected(&self) -> bool {
        let forward = bfs(self.n, 1, |u| &self.out_adj[u - 1]);
        let backward = bfs(self.n, 1, |u| &self.in_adj[u - 1]);
        forward.iter().chain(&backward).all(|&hit| hit)
    }

    /// Strong components (Tarjan). Each component is sorted, and the list is
    /// ordered by smallest member.
    pub fn strong_components(&self) -> Vec<Vec<Node>> {
        let mut comps = tarjan(self);
        for c in comps.iter_mut() {
            c.sort_unstable();
        }
        comps.sort_unstable_by_key(|c| c[0]);
        comps
    }

    /// Strong components that receive no edge from outside themselves.
    pub fn closed_components(&self) -> Vec<Vec<Node>> {
        let comps = self.strong_components();
        let mut owner = vec![0usize; self.n];
        for (c, members) in comps.iter().enumerate() {
            for &v in members {
                owner[v - 1] = c;
            }
        }
        let mut entered = vec![false; comps.len()];
        for &(j, i) in &self.edges {
            if owner[j - 1] != owner[i - 1] {
                entered[owner[i - 1]] = true;
            }
        }
        comps
            .into_iter()
            .zip(entered)
            .filter_map(|(c, hit)| (!hit).then_some(c))
            .collect()
    }

    /// Nodes from which every other node is reachable.
    pub fn globally_reachable_nodes(&self) -> Vec<Node> {
        self.nodes()
            .filter(|&v| {
                bfs(self.n, v, |u| &self.out_adj[u - 1])
                    .iter()
                    .all(|&hit| hit)
            })
            .collect()
    }
}

fn bfs<'a>(n: usize, src: Node, next: impl Fn(Node) -> &'a [Node]) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([src]);
    seen[src - 1] = true;
    while let Some(u) = queue.pop_front() {
        for &v in next(u) {
            if !seen[v - 1] {
                seen[v - 1] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

// Iterative Tarjan so deep chains don't blow the stack.
fn tarjan(g: &Digraph) -> Vec<Vec<Node>> {
    const UNVISITED: usize = usize::MAX;
    let n = g.n;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (vertex, position in its out-adjacency)
        let mut frames = vec![(root, 0usize)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            let succ = &g.out_adj[v];
            if *pos < succ.len() {
                let w = succ[*pos] - 1;
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w + 1);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Rule producing the digraph `G(k)` at each time `k ≥ 0`.
///
/// `Scripted` holds its last graph for every `k` past the end of the list.
/// `Random` draws each ordered pair `(j, i)` independently with probability
/// `p` from a stream keyed by `(seed, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub enum TopologySchedule {
    Static(Digraph),
    Periodic(Vec<Digraph>),
    Scripted(Vec<Digraph>),
    Random { n: usize, p: f64, seed: u64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ScheduleRepr {
    Static { graph: Digraph },
    Periodic { graphs: Vec<Digraph> },
    Scripted { graphs: Vec<Digraph> },
    Random { n: usize, p: f64, seed: u64 },
}

impl TryFrom<ScheduleRepr> for TopologySchedule {
    type Error = Error;

    fn try_from(repr: ScheduleRepr) -> Result<Self> {
        match repr {
            ScheduleRepr::Static { graph } => Ok(TopologySchedule::Static(graph)),
            ScheduleRepr::Periodic { graphs } => TopologySchedule::periodic(graphs),
            ScheduleRepr::Scripted { graphs } => TopologySchedule::scripted(graphs),
            ScheduleRepr::Random { n, p, seed } => TopologySchedule::random(n, p, seed),
        }
    }
}

impl From<TopologySchedule> for ScheduleRepr {
    fn from(s: TopologySchedule) -> Self {
        match s {
            TopologySchedule::Static(graph) => ScheduleRepr::Static { graph },
            TopologySchedule::Periodic(graphs) => ScheduleRepr::Periodic { graphs },
            TopologySchedule::Scripted(graphs) => ScheduleRepr::Scripted { graphs },
            TopologySchedule::Random { n, p, seed } => ScheduleRepr::Random { n, p, seed },
        }
    }
}

fn check_same_n(graphs: &[Digraph]) -> Result<()> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::invalid("schedule needs at least one graph"))?;
    for g in graphs {
        if g.n() != first.n() {
            return Err(Error::DimensionMismatch {
                what: "schedule graph node count",
                expected: first.n(),
                actual: g.n(),
            });
        }
    }
    Ok(())
}

/// Outcome of a joint strong connectivity check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct JointConnectivity {
    pub holds: bool,
    /// True when every start time was covered (static and periodic
    /// schedules). Otherwise the verdict only holds over the horizon.
    pub exhaustive: bool,
    pub checked_starts: u64,
    pub first_failure: Option<u64>,
}

impl TopologySchedule {
    pub fn periodic(graphs: Vec<Digraph>) -> Result<Self> {
        check_same_n(&graphs)?;
        Ok(TopologySchedule::Periodic(graphs))
    }

    pub fn scripted(graphs: Vec<Digraph>) -> Result<Self> {
        check_same_n(&graphs)?;
        Ok(TopologySchedule::Scripted(graphs))
    }

    pub fn random(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("random schedule needs at least one node"));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!(
                "edge probability {p} outside (0, 1]"
            )));
        }
        Ok(TopologySchedule::Random { n, p, seed })
    }

    pub fn n(&self) -> usize {
        match self {
            TopologySchedule::Static(g) => g.n(),
            TopologySchedule::Periodic(gs) | TopologySchedule::Scripted(gs) => gs[0].n(),
            TopologySchedule::Random { n, .. } => *n,
        }
    }

    /// Index of the stored graph used at time `k`, or `None` when the graph
    /// is generated on the fly.
    pub fn phase(&self, k: u64) -> Option<usize> {
        match self {
            TopologySchedule::Static(_) => Some(0),
            TopologySchedule::Periodic(gs) => Some((k % gs.len() as u64) as usize),
            TopologySchedule::Scripted(gs) => Some((k.min(gs.len() as u64 - 1)) as usize),
            TopologySchedule::Random { .. } => None,
        }
    }

    pub fn graph_at(&self, k: u64) -> Cow<'_, Digraph> {
        match self {
            TopologySchedule::Static(g) => Cow::Borrowed(g),
            TopologySchedule::Periodic(gs) | TopologySchedule::Scripted(gs) => {
                Cow::Borrowed(&gs[self.phase(k).expect("stored phase")])
            }
            TopologySchedule::Random { n, p, seed } => Cow::Owned(random_graph(*n, *p, *seed, k)),
        }
    }

    /// `G([k1, k2])`: the union of edge sets over the closed interval.
    pub fn union_digraph(&self, k1: u64, k2: u64) -> Result<Digraph> {
        if k1 > k2 {
            return Err(Error::invalid(format!("empty interval [{k1}, {k2}]")));
        }
        let span = match self {
            TopologySchedule::Static(g) => return Ok(g.clone()),
            // A full period already covers every phase.
            TopologySchedule::Periodic(gs) => (k2 - k1).min(gs.len() as u64 - 1),
            TopologySchedule::Scripted(gs) => {
                // Graphs past the script end repeat the last one.
                let last = gs.len() as u64 - 1;
                k2.min(last.max(k1)) - k1
            }
            TopologySchedule::Random { .. } => k2 - k1,
        };
        let mut edges = BTreeSet::new();
        for k in k1..=k1 + span {
            edges.extend(self.graph_at(k).edges());
        }
        Digraph::new(self.n(), edges)
    }

    /// Checks that `G([k0, k0 + window])` is strongly connected for every
    /// start `k0`. Static and periodic schedules are checked exactly; other
    /// kinds over `k0 ∈ [0, horizon − window]`.
    pub fn joint_connectivity(&self, window: u64, horizon: u64) -> JointConnectivity {
        let (starts, exhaustive) = match self {
            TopologySchedule::Static(_) => (1, true),
            TopologySchedule::Periodic(gs) => (gs.len() as u64, true),
            TopologySchedule::Scripted(_) | TopologySchedule::Random { .. } => {
                (horizon.saturating_sub(window) + 1, false)
            }
        };
        let first_failure = (0..starts).find(|&k0| {
            !self
                .union_digraph(k0, k0 + window)
                .expect("k0 <= k0 + window")
                .is_strongly_connected()
        });
        JointConnectivity {
            holds: first_failure.is_none(),
            exhaustive,
            checked_starts: starts,
            first_failure,
        }
    }

    pub fn is_jointly_strongly_connected(&self, window: u64, horizon: u64) -> bool {
        self.joint_connectivity(window, horizon).holds
    }
}

fn random_graph(n: usize, p: f64, seed: u64, k: u64) -> Digraph {
    let mut rng = rng::stream(seed, k);
    let mut edges = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            if i != j && rng::unit(&mut rng) < p {
                edges.push((j, i));
            }
        }
    }
    Digraph::new(n, edges).expect("generated edges are in range")
}
