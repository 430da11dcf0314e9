//! Undirected interaction graphs and the dense matrices derived from them.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

/// Relative tolerance below which a Laplacian eigenvalue counts as zero.
pub const ZERO_EIG_TOL: f64 = 1e-9;

/// A simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    // normalized (i < j), sorted
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates the edge list. Pairs are unordered, so `(1, 0)` after
    /// `(0, 1)` is a duplicate.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut seen = BTreeSet::new();
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::DuplicateEdge(i, j));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &seen {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: seen.into_iter().collect(),
            neighbors,
        })
    }

    /// Ring `0 - 1 - ... - (n-1) - 0`; needs `n >= 3`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: format!("a cycle needs at least 3 nodes, got {n}"),
            });
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Graph::new(n, &edges)
    }

    /// Random connected graph: a random spanning tree plus each remaining
    /// pair with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut set = BTreeSet::new();
        for k in 1..n {
            let parent = order[rng.gen_range(0..k)];
            let child = order[k];
            set.insert((parent.min(child), parent.max(child)));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if !set.contains(&(i, j)) && rng.gen_bool(extra_edge_prob.clamp(0.0, 1.0)) {
                    set.insert((i, j));
                }
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        Graph::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !visited[j] {
                    visited[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }
}

/// Dense matrices of a connected graph.
///
/// `localized_projection` is `Q = I − S(I + A)`, which equals `S·L`; `S` plays
/// the role of `1/n` and `I + A` the role of `1·1ᵀ` in the exact centering
/// projection `I − 1·1ᵀ/n`, restricted to what a node can see of its
/// neighbors.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub adjacency: DMatrix<f64>,
    pub degree: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub scaling: DMatrix<f64>,
    pub localized_projection: DMatrix<f64>,
    /// Projection onto the column space of `L`.
    pub proj_col: DMatrix<f64>,
    /// Projection onto the null space of `L`.
    pub proj_null: DMatrix<f64>,
    /// Ascending Laplacian spectrum.
    pub laplacian_spectrum: Vec<f64>,
}

impl GraphMatrices {
    pub fn new(g: &Graph) -> Result<Self> {
        if !g.is_connected() {
            return Err(Error::NotConnected);
        }
        let n = g.n();
        let mut adjacency = DMatrix::zeros(n, n);
        for &(i, j) in g.edges() {
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
        let degrees = DVector::from_fn(n, |i, _| g.degree(i) as f64);
        let degree = DMatrix::from_diagonal(&degrees);
        let laplacian = &degree - &adjacency;
        let scaling = DMatrix::from_diagonal(&degrees.map(|d| 1.0 / (d + 1.0)));
        let identity = DMatrix::<f64>::identity(n, n);
        let localized_projection = &identity - &scaling * (&identity + &adjacency);

        let eig = symmetric_eigen(&laplacian)?;
        let zero_tol = ZERO_EIG_TOL * eig.max().max(1.0);
        let mut proj_col = DMatrix::zeros(n, n);
        for (k, &lambda) in eig.values.iter().enumerate() {
            if lambda.abs() >= zero_tol {
                let v = eig.vectors.column(k);
                proj_col += v * v.transpose();
            }
        }
        let proj_null = &identity - &proj_col;

        Ok(GraphMatrices {
            adjacency,
            degree,
            laplacian,
            scaling,
            localized_projection,
            proj_col,
            proj_null,
            laplacian_spectrum: eig.values,
        })
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    /// `Q̄ = S(I + A) = I − Q`.
    pub fn complement_projection(&self) -> DMatrix<f64> {
        let n = self.n();
        &self.scaling * (DMatrix::<f64>::identity(n, n) + &self.adjacency)
    }

    /// Second-smallest Laplacian eigenvalue (algebraic connectivity).
    pub fn fiedler_value(&self) -> f64 {
        self.laplacian_spectrum.get(1).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c6() -> Graph {
        Graph::new(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap()
    }

    #[test]
    fn builds_small_graphs() {
        let p2 = Graph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(p2.edges(), &[(0, 1)]);
        assert_eq!(c6(), Graph::cycle(6).unwrap());
        assert!((0..6).all(|i| c6().degree(i) == 2));
    }

    #[test]
    fn edge_validation_errors() {
        assert_eq!(Graph::new(3, &[(0, 0)]), Err(Error::SelfLoop(0)));
        assert_eq!(Graph::new(3, &[(0, 3)]), Err(Error::IndexOutOfRange { index: 3, n: 3 }));
        assert_eq!(Graph::new(3, &[(0, 1), (1, 0)]), Err(Error::DuplicateEdge(1, 0)));
        assert_eq!(Graph::new(0, &[]), Err(Error::EmptyGraph));
        assert!(Graph::cycle(2).is_err());
    }

    #[test]
    fn connectivity() {
        assert!(c6().is_connected());
        assert!(!Graph::new(2, &[]).unwrap().is_connected());
        assert!(!Graph::new(4, &[(0, 1), (2, 3)]).unwrap().is_connected());
        assert!(Graph::new(1, &[]).unwrap().is_connected());
        assert_eq!(
            GraphMatrices::new(&Graph::new(2, &[]).unwrap()).unwrap_err(),
            Error::NotConnected
        );
    }

    #[test]
    fn path2_matrices() {
        let gm = GraphMatrices::new(&Graph::path(2).unwrap()).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(gm.laplacian, l);
        assert_eq!(gm.scaling, DMatrix::from_diagonal_element(2, 2, 0.5));
        let q = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!((&gm.localized_projection - q).amax() < 1e-15);
    }

    #[test]
    fn cycle6_matrices() {
        let gm = GraphMatrices::new(&c6()).unwrap();
        assert!((&gm.scaling - DMatrix::from_diagonal_element(6, 6, 1.0 / 3.0)).amax() < 1e-15);
        assert!((&gm.localized_projection - &gm.laplacian / 3.0).amax() < 1e-15);
        assert!(gm.proj_null.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn projector_matches_pseudoinverse_formula() {
        // P_L = L (LᵀL)⁺ Lᵀ, via SVD, independent of the Jacobi route.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..8 {
            let g = Graph::random_connected(n, 0.3, &mut rng).unwrap();
            let gm = GraphMatrices::new(&g).unwrap();
            let l = &gm.laplacian;
            let ltl = l.transpose() * l;
            let pinv = ltl.pseudo_inverse(1e-10).unwrap();
            let oracle = l * pinv * l.transpose();
            assert!((&gm.proj_col - oracle).amax() < 1e-10);
        }
    }

    #[test]
    fn projector_algebra_and_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..=10);
            let gm = GraphMatrices::new(&Graph::random_connected(n, 0.4, &mut rng).unwrap()).unwrap();
            let p = &gm.proj_col;
            let pn = &gm.proj_null;
            let l = &gm.laplacian;
            assert!((p * p - p).amax() < 1e-10);
            assert!((pn * pn - pn).amax() < 1e-10);
            assert!((p * pn).amax() < 1e-10);
            assert!((p * l - l).amax() < 1e-10);
            assert!((l * p - l).amax() < 1e-10);
            assert!(pn.iter().all(|&v| (v - 1.0 / n as f64).abs() < 1e-12));
            // I + A = S⁻¹ − L
            let s_inv = gm.scaling.map(|v| if v != 0.0 { 1.0 / v } else { 0.0 });
            let lhs = DMatrix::<f64>::identity(n, n) + &gm.adjacency;
            assert!((lhs - (s_inv - l)).amax() < 1e-12);
            let ones = DVector::from_element(n, 1.0);
            assert!((p * &ones).amax() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn laplacian_and_q_identities(seed in any::<u64>(), n in 1usize..=10, p in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Graph::random_connected(n, p, &mut rng).unwrap();
            let gm = GraphMatrices::new(&g).unwrap();
            let ones = DVector::from_element(n, 1.0);
            prop_assert!((&gm.laplacian * &ones).amax() < 1e-12);
            prop_assert!((&gm.localized_projection * &ones).amax() < 1e-12);
            let sl = &gm.scaling * &gm.laplacian;
            prop_assert!((&gm.localized_projection - sl).amax() < 1e-12);
            prop_assert_eq!(&gm.laplacian, &gm.laplacian.transpose());
            prop_assert!(gm.adjacency.iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert!((0..n).all(|i| gm.adjacency[(i, i)] == 0.0));
            let sum = &gm.proj_col + &gm.proj_null;
            prop_assert!((sum - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        }
    }
}
