//! Matrices of the 12-node benchmark network.

use tvswarm::graph::benchmark_graph;

fn main() {
    let g = benchmark_graph();
    println!("nodes {}, edges {}, connected {}", g.node_count(), g.edge_count(), g.is_connected());
    for i in 0..g.node_count() {
        let nbrs: Vec<usize> = g.neighbors(i).unwrap().iter().map(|j| j + 1).collect();
        println!("  agent {:>2}: degree {} neighbors {:?}", i + 1, g.degree(i), nbrs);
    }
    let l = g.laplacian();
    let d = g.incidence();
    println!("max |L − D Dᵀ| = {:e}", (&l - &d * d.transpose()).amax());
    let spectrum = g.laplacian_spectrum();
    println!("Laplacian spectrum: {:.4?}", spectrum);
    println!("algebraic connectivity {:.4}", spectrum[1]);
}
