//! Topology generators for the reference experiments and the two
//! counterexample families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Digraph, Node, TopologySchedule};
use crate::protocol::NetworkState;

/// Four nodes, period four, one edge per phase: `1→2`, `2→3`, `3→4`, `4→1`.
/// No phase is strongly connected; any four consecutive phases form the
/// directed 4-cycle.
pub fn periodic_ring_4() -> TopologySchedule {
    let phases = [(1, 2), (2, 3), (3, 4), (4, 1)]
        .into_iter()
        .map(|e| Digraph::new(4, [e]).expect("valid edge"))
        .collect();
    TopologySchedule::periodic(phases).expect("phases share n")
}

/// Which way the `n − 2` removed edges point in the comparison family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fig3Orientation {
    /// Remove `h → n` for `h ∈ [2, n−1]`: node `n` hears only from node 1.
    #[default]
    InEdgesOfLast,
    /// Remove `n → h` instead: node `n` talks only to node 1.
    OutEdgesOfLast,
}

/// Complete digraph on `n ≥ 3` nodes minus the edges `(h, n)`,
/// `h ∈ [2, n−1]`. Strongly connected but not balanced.
pub fn fig3_family(n: usize) -> Result<Digraph> {
    fig3_family_oriented(n, Fig3Orientation::InEdgesOfLast)
}

pub fn fig3_family_oriented(n: usize, orientation: Fig3Orientation) -> Result<Digraph> {
    if n < 3 {
        return Err(Error::invalid(format!(
            "comparison family needs n >= 3, got {n}"
        )));
    }
    let removed = |j: Node, i: Node| {
        let (other, last) = match orientation {
            Fig3Orientation::InEdgesOfLast => (j, i),
            Fig3Orientation::OutEdgesOfLast => (i, j),
        };
        last == n && (2..n).contains(&other)
    };
    let edges = (1..=n)
        .flat_map(|j| (1..=n).map(move |i| (j, i)))
        .filter(|&(j, i)| j != i && !removed(j, i));
    Digraph::new(n, edges)
}

/// Static schedule of two disjoint directed cycles on `1..=n1` and
/// `n1+1..=n1+n2`, with state `a` on the first, `b` on the second and zero
/// surplus. Neither state nor surplus ever changes.
pub fn counterexample_two_components(
    n1: usize,
    n2: usize,
    a: f64,
    b: f64,
) -> Result<(TopologySchedule, NetworkState)> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::invalid("both components need at least one node"));
    }
    let n = n1 + n2;
    let first: Vec<Node> = (1..=n1).collect();
    let second: Vec<Node> = (n1 + 1..=n).collect();
    let g = Digraph::with_cycle(n, &first)?.union(&Digraph::with_cycle(n, &second)?)?;
    let x = (1..=n).map(|i| if i <= n1 { a } else { b }).collect();
    Ok((
        TopologySchedule::Static(g),
        NetworkState::with_zero_surplus(x),
    ))
}

/// Static schedule where `1..=n−r` is a directed cycle (the globally
/// reachable set) and each remaining node `h` hears from cycle node
/// `((h − 1) mod (n − r)) + 1`, with nothing flowing back. State `a` on the
/// cycle, `b` elsewhere, zero surplus. Cycle states never change.
pub fn counterexample_reachable_only(
    n: usize,
    r: usize,
    a: f64,
    b: f64,
) -> Result<(TopologySchedule, NetworkState)> {
    if r == 0 || r >= n {
        return Err(Error::invalid(format!(
            "need 1 <= r < n, got r = {r}, n = {n}"
        )));
    }
    let core = n - r;
    let cycle: Vec<Node> = (1..=core).collect();
    let feeds = Digraph::new(n, (core + 1..=n).map(|h| ((h - 1) % core + 1, h)))?;
    let g = Digraph::with_cycle(n, &cycle)?.union(&feeds)?;
    let x = (1..=n).map(|i| if i <= core { a } else { b }).collect();
    Ok((
        TopologySchedule::Static(g),
        NetworkState::with_zero_surplus(x),
    ))
}

/// Each ordered pair present independently with probability `p` at every
/// step, keyed by `(seed, k)`.
pub fn random_schedule(n: usize, p: f64, seed: u64) -> Result<TopologySchedule> {
    TopologySchedule::random(n, p, seed)
}
