//! Stacked matrix form of one round: `[x; s](k+1) = M(k) [x; s](k)` with
//!
//! ```text
//! M = | I − L   E     |
//!     | L       S − E |
//! ```
//!
//! `L` is the switched Laplacian of `A = [c_i a_ij]`, `S = (I − D̃) + B` routes
//! surplus and `E = diag(ε)`. The switching vector `c` depends on the state,
//! so it is an input here. This module shares no arithmetic with
//! [`crate::protocol`] and serves as its oracle.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::protocol::{switching_decision, Algorithm, NetworkState, WeightPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateMatrices {
    /// `[c_i a_ij]`.
    pub adjacency: DMatrix<f64>,
    /// `D − A`.
    pub laplacian: DMatrix<f64>,
    /// `[b_ih]ᵀ`.
    pub routing: DMatrix<f64>,
    /// `(I − D̃) + B`.
    pub surplus: DMatrix<f64>,
    /// `diag(ε_i)`.
    pub eps: DMatrix<f64>,
    /// The full `2n × 2n` update.
    pub m: DMatrix<f64>,
}

impl UpdateMatrices {
    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// `I − L`.
    pub fn state_block(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - &self.laplacian
    }

    /// Writes `M` row-major as CSV, `2n` values per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        for row in self.m.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds every block for `g` under `policy` at time `k` with switching
/// vector `c`.
pub fn build_matrices(
    g: &Digraph,
    policy: &WeightPolicy,
    k: u64,
    c: &[bool],
) -> Result<UpdateMatrices> {
    let n = g.n();
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            what: "switching vector",
            expected: n,
            actual: c.len(),
        });
    }
    let w = policy.weights_at(g, k)?;
    w.validate(g).into_result()?;

    let adjacency = DMatrix::from_fn(n, n, |r, col| if c[r] { w.a(r + 1, col + 1) } else { 0.0 });
    let degree = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        adjacency.row_iter().map(|row| row.sum()),
    ));
    let laplacian = degree - &adjacency;

    let routing = DMatrix::from_fn(n, n, |r, col| w.b(col + 1, r + 1));
    let sent = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        (1..=n).map(|i| (1..=n).map(|h| w.b(i, h)).sum::<f64>()),
    ));
    let identity = DMatrix::<f64>::identity(n, n);
    let surplus = &identity - sent + &routing;
    let eps = DMatrix::from_diagonal(&DVector::from_iterator(n, (1..=n).map(|i| w.eps(i))));

    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n))
        .copy_from(&(&identity - &laplacian));
    m.view_mut((0, n), (n, n)).copy_from(&eps);
    m.view_mut((n, 0), (n, n)).copy_from(&laplacian);
    m.view_mut((n, n), (n, n)).copy_from(&(&surplus - &eps));

    Ok(UpdateMatrices {
        adjacency,
        laplacian,
        routing,
        surplus,
        eps,
        m,
    })
}

/// Multiplies the stacked `[x; s]` by `M`.
pub fn step_matrix(m: &UpdateMatrices, st: &NetworkState) -> Result<NetworkState> {
    let n = m.n();
    if st.n() != n {
        return Err(Error::DimensionMismatch {
            what: "network state",
            expected: n,
            actual: st.n(),
        });
    }
    let stacked = DVector::from_iterator(2 * n, st.x.iter().chain(&st.s).copied());
    let next = &m.m * stacked;
    NetworkState::new(
        next.rows(0, n).iter().copied().collect(),
        next.rows(n, n).iter().copied().collect(),
    )
}

/// Matrix-form round: `c` from the switching rule (or all ones for the
/// baseline), then `M(k)` applied to the stacked state.
pub fn matrix_round(
    g: &Digraph,
    policy: &WeightPolicy,
    k: u64,
    st: &NetworkState,
    algorithm: Algorithm,
) -> Result<NetworkState> {
    let c = match algorithm {
        Algorithm::Surplus => g
            .nodes()
            .map(|i| switching_decision(g, policy, k, &st.x, i).map(|(c, _)| c))
            .collect::<Result<Vec<_>>>()?,
        Algorithm::Baseline => vec![true; g.n()],
    };
    step_matrix(&build_matrices(g, policy, k, &c)?, st)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    StateBlock,
    Surplus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegativeEntry {
    pub block: Block,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Largest deviations from the stochasticity properties.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StochasticityReport {
    /// `max_i |Σ_j (I − L)_ij − 1|`.
    pub state_row_sum: f64,
    /// `max_j |Σ_i S_ij − 1|`.
    pub surplus_col_sum: f64,
    /// `max_j |Σ_i M_ij − 1|`.
    pub m_col_sum: f64,
    /// Negative entries of `I − L` or `S` (1-based indices).
    pub negative: Vec<NegativeEntry>,
}

impl StochasticityReport {
    pub fn max_deviation(&self) -> f64 {
        self.state_row_sum
            .max(self.surplus_col_sum)
            .max(self.m_col_sum)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.negative.is_empty() && self.max_deviation() < tol
    }
}

pub fn check_stochasticity(m: &UpdateMatrices) -> StochasticityReport {
    let state = m.state_block();
    let worst = |it: &mut dyn Iterator<Item = f64>| it.map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let mut negative = Vec::new();
    for (block, mat) in [(Block::StateBlock, &state), (Block::Surplus, &m.surplus)] {
        for r in 0..mat.nrows() {
            for c in 0..mat.ncols() {
                let value = mat[(r, c)];
                if value < 0.0 {
                    negative.push(NegativeEntry {
                        block,
                        row: r + 1,
                        col: c + 1,
                        value,
                    });
                }
            }
        }
    }
    StochasticityReport {
        state_row_sum: worst(&mut state.row_iter().map(|r| r.sum())),
        surplus_col_sum: worst(&mut m.surplus.column_iter().map(|c| c.sum())),
        m_col_sum: worst(&mut m.m.column_iter().map(|c| c.sum())),
        negative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn quarter() -> WeightPolicy {
        WeightPolicy::uniform(0.25, 0.25, 0.25)
    }

    #[test]
    fn two_node_blocks() {
        let g = Digraph::new(2, [(2, 1)]).unwrap();
        let mats = build_matrices(&g, &quarter(), 0, &[true, true]).unwrap();
        assert_eq!(mats.state_block(), dmatrix![0.75, 0.25; 0.0, 1.0]);
        assert_eq!(mats.surplus, dmatrix![1.0, 0.25; 0.0, 0.75]);
        assert!(check_stochasticity(&mats).holds(1e-12));
    }

    #[test]
    fn empty_graph_blocks() {
        let g = Digraph::empty(3).unwrap();
        let mats =
            build_matrices(&g, &WeightPolicy::uniform(0.1, 0.1, 0.4), 0, &[true; 3]).unwrap();
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(mats.laplacian, DMatrix::zeros(3, 3));
        assert_eq!(mats.surplus, i);
        assert_eq!(mats.m.view((0, 0), (3, 3)), i);
        assert_eq!(mats.m.view((0, 3), (3, 3)), mats.eps);
        assert_eq!(mats.m.view((3, 0), (3, 3)), DMatrix::zeros(3, 3));
        assert_eq!(mats.m.view((3, 3), (3, 3)), &i - &mats.eps);
        let report = check_stochasticity(&mats);
        assert_eq!(report.max_deviation(), 0.0);
        assert!(report.negative.is_empty());
    }

    #[test]
    fn switched_off_rows_vanish() {
        let g = Digraph::complete(3).unwrap();
        let mats =
            build_matrices(&g, &WeightPolicy::uniform(0.2, 0.2, 0.2), 0, &[false; 3]).unwrap();
        assert_eq!(mats.adjacency, DMatrix::zeros(3, 3));
        assert_eq!(mats.laplacian, DMatrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_block_has_negative_entries() {
        let g = Digraph::new(2, [(2, 1)]).unwrap();
        let mats = build_matrices(&g, &quarter(), 0, &[true, true]).unwrap();
        assert_eq!(mats.m[(2, 1)], -0.25);
        assert_eq!(mats.m.view((2, 0), (2, 2)), mats.laplacian);
    }

    #[test]
    fn corrupted_surplus_is_flagged() {
        let g = Digraph::with_cycle(3, &[1, 2, 3]).unwrap();
        let mut mats = build_matrices(&g, &quarter(), 0, &[true; 3]).unwrap();
        mats.surplus[(1, 0)] += 1e-3;
        let report = check_stochasticity(&mats);
        assert!((report.surplus_col_sum - 1e-3).abs() < 1e-12);
        assert!(report.m_col_sum < 1e-12);
    }

    #[test]
    fn negative_entries_are_reported() {
        let g = Digraph::with_cycle(2, &[1, 2]).unwrap();
        let mut mats = build_matrices(&g, &quarter(), 0, &[true; 2]).unwrap();
        mats.surplus[(0, 1)] = -0.5;
        let report = check_stochasticity(&mats);
        assert_eq!(
            report.negative,
            vec![NegativeEntry {
                block: Block::Surplus,
                row: 1,
                col: 2,
                value: -0.5
            }]
        );
    }

    #[test]
    fn matrix_step_matches_hand_example() {
        let g = Digraph::new(2, [(2, 1)]).unwrap();
        let st = NetworkState::new(vec![0.0, 1.0], vec![0.0, 0.4]).unwrap();
        let next = matrix_round(&g, &quarter(), 0, &st, Algorithm::Surplus).unwrap();
        let want = [0.0, 1.1, 0.1, 0.2];
        for (got, want) in next.x.iter().chain(&next.s).zip(want) {
            assert!((got - want).abs() < 1e-12);
        }
        let fixed = NetworkState::consensus(2, 0.7);
        let mats = build_matrices(&g, &quarter(), 0, &[true, true]).unwrap();
        assert_eq!(step_matrix(&mats, &fixed).unwrap(), fixed);
        assert!(step_matrix(&mats, &NetworkState::consensus(3, 0.0)).is_err());
    }

    #[test]
    fn csv_dump_is_row_major() {
        let g = Digraph::new(2, [(2, 1)]).unwrap();
        let mats = build_matrices(&g, &quarter(), 0, &[true, true]).unwrap();
        let mut buf = Vec::new();
        mats.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "0.75,0.25,0.25,0");
        assert_eq!(lines[2], "0.25,-0.25,0.75,0.25");
    }

    #[test]
    fn rejects_bad_switch_length() {
        let g = Digraph::new(2, [(2, 1)]).unwrap();
        assert!(build_matrices(&g, &quarter(), 0, &[true]).is_err());
    }
}
