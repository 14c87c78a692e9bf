//! Generators on graphs, assembled from an incidence matrix.

use super::Generator;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Directed edge set over `n` nodes with incidence matrix `B` (`n × |E|`):
/// `B[s][α] = +1` at the start node and `−1` at the end node of edge `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTopology {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub incidence: Matrix,
}

impl EdgeTopology {
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut incidence = Matrix::zeros(nodes, edges.len());
        for (a, &(s, e)) in edges.iter().enumerate() {
            if s >= nodes || e >= nodes {
                return Err(Error::dim("edge endpoint", format!("< {nodes}"), s.max(e)));
            }
            if s == e {
                return Err(Error::Degenerate(format!("self-loop at node {s}")));
            }
            incidence[(s, a)] = 1.0;
            incidence[(e, a)] = -1.0;
        }
        Ok(EdgeTopology {
            nodes,
            edges,
            incidence,
        })
    }

    /// Path `0 → 1 → … → n−1`.
    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect())
    }

    /// Periodic ring with forward edges `i → i+1`, followed by backward edges
    /// `i → i−1` when `both_directions` is set.
    pub fn ring(n: usize, both_directions: bool) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        if both_directions {
            edges.extend((0..n).map(|i| (i, (i + n - 1) % n)));
        }
        Self::new(n, edges)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

/// `L̂ = ℓ̂ Bᵀ` where `ℓ̂[s(α)][α] = w_α`: edge `α` contributes
/// `w_α (f_start − f_end)` to its start node, so every row sums to zero.
pub fn assemble_generator_from_edges(topo: &EdgeTopology, weights: &[f64]) -> Result<Generator> {
    if weights.len() != topo.num_edges() {
        return Err(Error::dim("edge weights", topo.num_edges(), weights.len()));
    }
    let mut m = Matrix::zeros(topo.nodes, topo.nodes);
    for (&(s, e), &w) in topo.edges.iter().zip(weights) {
        m[(s, s)] += w;
        m[(s, e)] -= w;
    }
    Generator::dense(m, format!("edges n={} |E|={}", topo.nodes, topo.num_edges()))
}

/// Symmetric normalization `D^{-1/2} A D^{-1/2}` used by graph convolutions.
/// Isolated nodes keep zero rows.
pub fn normalized_adjacency(adjacency: &Matrix) -> Result<Matrix> {
    if !adjacency.is_square() {
        return Err(Error::dim("adjacency must be square", adjacency.rows(), adjacency.cols()));
    }
    let inv_sqrt: Vec<f64> = adjacency
        .row_sums()
        .into_iter()
        .map(|deg| if deg > 0.0 { 1.0 / deg.sqrt() } else { 0.0 })
        .collect();
    let n = adjacency.rows();
    Ok(Matrix::from_fn(n, n, |r, c| inv_sqrt[r] * adjacency[(r, c)] * inv_sqrt[c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::sw_shift_generator;
    use crate::numerics::cosine_correlation;
    use proptest::prelude::*;

    #[test]
    fn incidence_columns_have_one_plus_and_one_minus() {
        let t = EdgeTopology::ring(5, true).unwrap();
        for a in 0..t.num_edges() {
            let col = t.incidence.column(a);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 3);
        }
    }

    #[test]
    fn path_forward_difference() {
        let t = EdgeTopology::path(3).unwrap();
        let l = assemble_generator_from_edges(&t, &[1.0, 1.0]).unwrap().materialize().unwrap();
        // (L f)_i = f_i − f_{i+1}, last node has no outgoing edge
        let expected = Matrix::from_rows(&[
            vec![1.0, -1.0, 0.0],
            vec![0.0, 1.0, -1.0],
            vec![0.0, 0.0, 0.0],
        ]);
        assert_eq!(l, expected);
        assert!(l.row_sums().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn symmetric_ring_matches_sw_generator() {
        let d = 32;
        let t = EdgeTopology::ring(d, true).unwrap();
        let mut w = vec![0.5; d];
        w.extend(vec![-0.5; d]);
        let l = assemble_generator_from_edges(&t, &w).unwrap().materialize().unwrap();
        let sw = sw_shift_generator(d).unwrap().materialize().unwrap();
        // compare on the nearest-neighbour band; the SW kernel has long tails
        let band = Matrix::from_fn(d, d, |r, c| if l[(r, c)] != 0.0 { sw[(r, c)] } else { 0.0 });
        assert!(cosine_correlation(&l, &band).unwrap() >= 0.9);
        assert!(cosine_correlation(&l, &sw).unwrap() > 0.8);
    }

    #[test]
    fn zero_weights_give_zero_matrix() {
        let t = EdgeTopology::ring(6, false).unwrap();
        let l = assemble_generator_from_edges(&t, &[0.0; 6]).unwrap().materialize().unwrap();
        assert_eq!(l.max_abs(), 0.0);
    }

    #[test]
    fn weight_length_checked() {
        let t = EdgeTopology::path(4).unwrap();
        assert!(matches!(
            assemble_generator_from_edges(&t, &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(EdgeTopology::new(2, vec![(0, 2)]).is_err());
        assert!(EdgeTopology::new(2, vec![(1, 1)]).is_err());
    }

    #[test]
    fn normalized_adjacency_of_path() {
        let a = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ]);
        let n = normalized_adjacency(&a).unwrap();
        assert!((n[(0, 1)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(n, n.transpose());
    }

    proptest! {
        #[test]
        fn assembled_generator_annihilates_constants(
            edges in proptest::collection::vec((0usize..6, 0usize..6), 1..15),
            seed in any::<u64>(),
        ) {
            let edges: Vec<_> = edges.into_iter().filter(|(s, e)| s != e).collect();
            let t = EdgeTopology::new(6, edges).unwrap();
            let mut rng = crate::numerics::SeededRng::new(seed);
            let w: Vec<f64> = (0..t.num_edges()).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let l = assemble_generator_from_edges(&t, &w).unwrap().materialize().unwrap();
            let out = l.matmul(&Matrix::filled(6, 1, 1.0)).unwrap();
            prop_assert!(out.max_abs() < 1e-12);
        }
    }
}
