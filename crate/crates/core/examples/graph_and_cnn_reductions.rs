//! Two special cases of the layer: a circular 1D convolution written with
//! integer shift elements, and a graph convolution obtained from the
//! normalized adjacency as the single generator.
//!
//! cargo run --release --example graph_and_cnn_reductions

use lconv::approx::cnn_equivalence_check;
use lconv::layer::gcn_reduction_check;
use lconv::numerics::{Matrix, SeededRng};

fn main() -> lconv::Result<()> {
    let mut rng = SeededRng::new(3);
    for (d, k) in [(8, 3), (16, 5), (32, 4)] {
        let kernel: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
        let f = rng.normal_matrix(d, 2);
        println!("CNN d={d:<3} k={k}  max abs diff {:.2e}", cnn_equivalence_check(&kernel, &f)?);
    }

    // a 6-node ring with one chord
    let n = 6;
    let mut a = Matrix::zeros(n, n);
    for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)] {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let f = rng.normal_matrix(n, 3 * 4);
    let w = rng.normal_matrix(2, 3);
    println!("GCN n={n}  Frobenius diff {:.2e}", gcn_reduction_check(&f, &a, &w)?);
    Ok(())
}
