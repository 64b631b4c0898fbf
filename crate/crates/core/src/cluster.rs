//! Gaussian cluster-state synthesis.
//!
//! For an adjacency matrix `A`, any factorization `N = RU` of
//! `N = −(iI + A)` with `U` unitary and `R` real gives a unitary whose
//! squeezed state `V = SᵀDS/2` has nullifier covariance
//! `cov(p − Aq) = (I + A²)e^{−2ξ}/2`. Two factorizations are provided: the
//! polar decomposition and row-wise Gram–Schmidt (an RQ decomposition).

use std::path::Path;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{symplectic_from_unitary, GaussianState};
use crate::matrix::{asymmetry, complexify, im, max_abs, max_abs_c, re, symmetrize, CMat, RMat};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGraph {
    a: RMat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeList {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl ClusterGraph {
    /// Rejects adjacency matrices whose asymmetry exceeds 1e−10.
    pub fn new(a: RMat) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(invalid("adjacency matrix must be square and nonempty"));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(invalid("adjacency matrix has non-finite entries"));
        }
        let asym = asymmetry(&a);
        if asym > 1e-10 {
            return Err(invalid(format!("adjacency matrix is not symmetric (asymmetry {asym:e})")));
        }
        Ok(ClusterGraph { a: symmetrize(&a) })
    }

    pub fn edgeless(n: usize) -> Result<Self> {
        Self::new(RMat::zeros(n, n))
    }

    /// Four-node square cluster with unit weights.
    pub fn square() -> Self {
        let a = RMat::from_row_slice(
            4,
            4,
            &[0., 0., 1., 1., 0., 0., 1., 1., 1., 1., 0., 0., 1., 1., 0., 0.],
        );
        ClusterGraph { a }
    }

    pub fn adjacency(&self) -> &RMat {
        &self.a
    }

    pub fn nodes(&self) -> usize {
        self.a.nrows()
    }

    pub fn has_self_loops(&self) -> bool {
        self.a.diagonal().iter().any(|&d| d != 0.0)
    }

    /// `N = −(iI + A)`.
    pub fn n_matrix(&self) -> CMat {
        let n = self.nodes();
        -(CMat::identity(n, n) * Complex64::i() + complexify(&self.a))
    }

    /// Dense CSV, one row per line, no header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("adjacency CSV must be square".into()));
        }
        Self::new(RMat::from_row_iterator(n, n, rows.into_iter().flatten()))
    }

    /// JSON edge list `{n, edges: [[i, j, w], ...]}` with 0-based indices;
    /// each edge sets both `A_ij` and `A_ji`.
    pub fn from_edge_list_json(text: &str) -> Result<Self> {
        let list: EdgeList = serde_json::from_str(text)?;
        let mut a = RMat::zeros(list.n, list.n);
        let mut seen = RMat::zeros(list.n, list.n);
        for &(i, j, w) in &list.edges {
            if i >= list.n || j >= list.n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for n = {}", list.n)));
            }
            if seen[(i, j)] != 0.0 && a[(i, j)] != w {
                return Err(invalid(format!("conflicting weights for edge ({i}, {j})")));
            }
            a[(i, j)] = w;
            a[(j, i)] = w;
            seen[(i, j)] = 1.0;
            seen[(j, i)] = 1.0;
        }
        Self::new(a)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Self::from_edge_list_json(&text)
        } else {
            Self::from_csv(&text)
        }
    }

    pub fn to_csv(&self) -> String {
        self.a
            .row_iter()
            .map(|r| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Polar,
    GramSchmidt,
}

/// Unitary `U` with real witness `R` such that `R U = N′`, where `N′ = P N`
/// for the row premix `P` (identity for the polar route).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterUnitary {
    pub u: CMat,
    pub method: Method,
    pub r: RMat,
    pub premix: RMat,
}

impl ClusterUnitary {
    pub fn nodes(&self) -> usize {
        self.u.nrows()
    }

    /// `‖UU† − I‖∞`
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.nodes();
        max_abs_c(&(&self.u * self.u.adjoint() - CMat::identity(n, n)))
    }

    /// `‖RU − PN‖∞`
    pub fn witness_defect(&self, g: &ClusterGraph) -> f64 {
        let target = complexify(&self.premix) * g.n_matrix();
        max_abs_c(&(complexify(&self.r) * &self.u - target))
    }
}

/// `U = R⁻¹N` with `R = (I + A²)^{1/2}`, the principal square root of `NN†`.
pub fn unitary_polar(g: &ClusterGraph) -> ClusterUnitary {
    let n = g.nodes();
    let a = g.adjacency();
    let gram = symmetrize(&(RMat::identity(n, n) + a * a));
    let eig = SymmetricEigen::new(gram);
    let q = &eig.eigenvectors;
    let root = eig.eigenvalues.map(f64::sqrt);
    let r = symmetrize(&(q * RMat::from_diagonal(&root) * q.transpose()));
    let r_inv = symmetrize(&(q * RMat::from_diagonal(&root.map(|x| 1.0 / x)) * q.transpose()));
    let u = complexify(&r_inv) * g.n_matrix();
    ClusterUnitary { u, method: Method::Polar, r, premix: RMat::identity(n, n) }
}

/// Orthonormalizes the rows of `N′ = P N` in order.
///
/// Each row is normalized to a positive real pivot, so `R = N′U†` is lower
/// triangular with positive diagonal; it must also be real.
pub fn unitary_gram_schmidt(g: &ClusterGraph, premix: Option<&RMat>) -> Result<ClusterUnitary> {
    let n = g.nodes();
    let p = premix.cloned().unwrap_or_else(|| RMat::identity(n, n));
    if p.shape() != (n, n) {
        return Err(invalid("premix must be n x n"));
    }
    let det = p.determinant();
    if !(det.abs() > 1e-12) {
        return Err(invalid("premix matrix is singular"));
    }
    let np = complexify(&p) * g.n_matrix();
    let scale = max_abs_c(&np).max(1.0);
    let mut u = CMat::zeros(n, n);
    for i in 0..n {
        let mut v = np.row(i).into_owned();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for j in 0..i {
                let uj = u.row(j);
                let coeff: Complex64 = v.iter().zip(uj.iter()).map(|(a, b)| a * b.conj()).sum();
                v -= uj * coeff;
            }
        }
        let norm = v.norm();
        if !(norm > 1e-12 * scale) {
            return Err(Error::NumericalFailure(format!("row {i} is linearly dependent on earlier rows")));
        }
        u.set_row(i, &(v / Complex64::new(norm, 0.0)));
    }
    let rc = &np * u.adjoint();
    let imag = max_abs(&im(&rc));
    if imag > 1e-9 {
        return Err(Error::DecompositionViolation(format!("R has imaginary part {imag:e}")));
    }
    let mut r = re(&rc);
    for i in 0..n {
        for j in (i + 1)..n {
            if r[(i, j)].abs() > 1e-9 {
                return Err(Error::DecompositionViolation("R is not lower triangular".into()));
            }
            r[(i, j)] = 0.0;
        }
    }
    Ok(ClusterUnitary { u, method: Method::GramSchmidt, r, premix: p })
}

pub fn cluster_unitary(g: &ClusterGraph, method: Method, premix: Option<&RMat>) -> Result<ClusterUnitary> {
    match method {
        Method::Polar => Ok(unitary_polar(g)),
        Method::GramSchmidt => unitary_gram_schmidt(g, premix),
    }
}

/// Row premix that simplifies the Gram–Schmidt route for the square cluster.
pub fn square_cluster_premix() -> RMat {
    RMat::from_row_slice(
        4,
        4,
        &[1., -1., 0., 0., 0., 0., 1., -1., 1., 0., 0., 0., 0., 0., 1., 0.],
    )
}

/// `V = SᵀDS/2` with `S` from `U` and `D = diag(e^{−2ξ}I, e^{2ξ}I)`.
pub fn cluster_covariance(u: &ClusterUnitary, xi: f64) -> Result<GaussianState> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(invalid("squeezing must be finite and nonnegative"));
    }
    GaussianState::zero_mean(rotated_squeezed_covariance(&u.u, xi)?)
}

/// `SᵀDS/2` for an arbitrary unitary `u`.
pub fn rotated_squeezed_covariance(u: &CMat, xi: f64) -> Result<RMat> {
    let n = u.nrows();
    let s = symplectic_from_unitary(u)?;
    let mut d = DVector::zeros(2 * n);
    for k in 0..n {
        d[k] = (-2.0 * xi).exp();
        d[n + k] = (2.0 * xi).exp();
    }
    Ok(symmetrize(&(s.transpose() * RMat::from_diagonal(&d) * &s * 0.5)))
}

/// Covariance of the nullifiers `p − Aq`: `[−A, I] V [−A, I]ᵀ`.
pub fn nullifier_covariance(state: &GaussianState, g: &ClusterGraph) -> Result<RMat> {
    let n = g.nodes();
    if state.modes() != n {
        return Err(invalid(format!("state has {} modes, graph has {n} nodes", state.modes())));
    }
    let mut m = RMat::zeros(n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&-g.adjacency());
    m.view_mut((0, n), (n, n)).copy_from(&RMat::identity(n, n));
    Ok(symmetrize(&(&m * &state.cov * m.transpose())))
}

/// `(I + A²)e^{−2ξ}/2`.
pub fn expected_nullifier_covariance(g: &ClusterGraph, xi: f64) -> RMat {
    let n = g.nodes();
    let a = g.adjacency();
    (RMat::identity(n, n) + a * a) * ((-2.0 * xi).exp() / 2.0)
}

/// Largest row-wise distance between `u` and `v` after aligning each row of
/// `u` to `v` by a unit phase.
pub fn row_phase_distance(u: &CMat, v: &CMat) -> f64 {
    if u.shape() != v.shape() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for i in 0..u.nrows() {
        let inner: Complex64 = u.row(i).iter().zip(v.row(i).iter()).map(|(a, b)| a.conj() * b).sum();
        let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
        let d = (u.row(i) * phase - v.row(i)).iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        worst = worst.max(d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn printed_square_unitary() -> CMat {
        let s2 = 1.0 / 2f64.sqrt();
        let s10 = 1.0 / 10f64.sqrt();
        CMat::from_row_slice(
            4,
            4,
            &[
                c(0., -s2), c(0., s2), c(0., 0.), c(0., 0.),
                c(0., 0.), c(0., 0.), c(0., -s2), c(0., s2),
                c(0., -s10), c(0., -s10), c(-2. * s10, 0.), c(-2. * s10, 0.),
                c(2. * s10, 0.), c(2. * s10, 0.), c(0., s10), c(0., s10),
            ],
        )
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> ClusterGraph {
        let m = RMat::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let mut a = symmetrize(&m);
        a.fill_diagonal(0.0);
        ClusterGraph::new(a).unwrap()
    }

    #[test]
    fn edgeless_graph() {
        let g = ClusterGraph::edgeless(2).unwrap();
        let u = unitary_polar(&g);
        assert!(max_abs_c(&(&u.u - CMat::identity(2, 2) * c(0., -1.))) < 1e-15);
        assert!(max_abs(&(&u.r - RMat::identity(2, 2))) < 1e-15);
        let gs = unitary_gram_schmidt(&g, None).unwrap();
        assert!(max_abs_c(&(&gs.u - CMat::identity(2, 2) * c(0., -1.))) < 1e-15);
        for xi in [0.0, 1.0] {
            let st = cluster_covariance(&u, xi).unwrap();
            assert!(max_abs(&(nullifier_covariance(&st, &g).unwrap() - expected_nullifier_covariance(&g, xi))) < 1e-14);
        }
    }

    #[test]
    fn two_node_polar() {
        let g = ClusterGraph::new(RMat::from_row_slice(2, 2, &[0., 1., 1., 0.])).unwrap();
        let u = unitary_polar(&g);
        assert!(u.unitarity_defect() < 1e-12);
        assert!(u.witness_defect(&g) < 1e-12);
        // Re U = −R⁻¹A, Im U = −R⁻¹
        let r_inv = u.r.clone().try_inverse().unwrap();
        assert!(max_abs(&(re(&u.u) + &r_inv * g.adjacency())) < 1e-12);
        assert!(max_abs(&(im(&u.u) + &r_inv)) < 1e-12);
        // I + A² = 2I, so R = √2 I and U = −(iI + A)/√2
        let expect = -(CMat::identity(2, 2) * Complex64::i() + complexify(g.adjacency())) / c(2f64.sqrt(), 0.);
        assert!(max_abs_c(&(&u.u - expect)) < 1e-12);
        let xi = 0.4;
        let st = cluster_covariance(&u, xi).unwrap();
        let nc = nullifier_covariance(&st, &g).unwrap();
        assert!(max_abs(&(nc - RMat::identity(2, 2) * (2.0 * (-2.0 * xi).exp() / 2.0))) < 1e-12);
    }

    #[test]
    fn square_cluster_gram_schmidt_reproduces_printed_unitary() {
        let g = ClusterGraph::square();
        let u = unitary_gram_schmidt(&g, Some(&square_cluster_premix())).unwrap();
        assert!(row_phase_distance(&u.u, &printed_square_unitary()) < 1e-12);
        assert!(u.witness_defect(&g) < 1e-12);
        // rows 1–3 match without any phase; row 4 differs by −1
        assert!((u.u[(3, 0)] + printed_square_unitary()[(3, 0)]).norm() < 1e-12);
        for xi in [0.0, 0.5, 1.2] {
            let st = cluster_covariance(&u, xi).unwrap();
            let nc = nullifier_covariance(&st, &g).unwrap();
            let base = RMat::from_row_slice(4, 4, &[3., 2., 0., 0., 2., 3., 0., 0., 0., 0., 3., 2., 0., 0., 2., 3.]);
            assert!(max_abs(&(nc - base * ((-2.0 * xi).exp() / 2.0))) < 1e-12);
        }
    }

    #[test]
    fn square_cluster_polar_also_satisfies_nullifier_law() {
        let g = ClusterGraph::square();
        let u = unitary_polar(&g);
        let st = cluster_covariance(&u, 0.9).unwrap();
        let nc = nullifier_covariance(&st, &g).unwrap();
        assert!(max_abs(&(nc - expected_nullifier_covariance(&g, 0.9))) < 1e-12);
    }

    #[test]
    fn random_graphs_both_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.random_range(1..=8);
            let g = random_graph(&mut rng, n);
            let xi = rng.random_range(0.0..1.5);
            let expect = expected_nullifier_covariance(&g, xi);
            for u in [unitary_polar(&g), unitary_gram_schmidt(&g, None).unwrap()] {
                assert!(u.unitarity_defect() < 1e-9);
                assert!(u.witness_defect(&g) < 1e-9);
                let st = cluster_covariance(&u, xi).unwrap();
                assert!((st.purity().unwrap() - 1.0).abs() < 1e-10);
                assert!(max_abs(&(nullifier_covariance(&st, &g).unwrap() - &expect)) < 1e-9);
            }
            let polar = unitary_polar(&g);
            assert!(max_abs(&(&polar.r - polar.r.transpose())) < 1e-12);
            let gs = unitary_gram_schmidt(&g, None).unwrap();
            assert!(gs.r.diagonal().iter().all(|&d| d > 0.0));
        }
    }

    #[test]
    fn nullifier_shrinks_with_squeezing() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let g = random_graph(&mut rng, 5);
        let u = unitary_polar(&g);
        let mut prev = f64::INFINITY;
        for k in 0..5 {
            let st = cluster_covariance(&u, k as f64).unwrap();
            let now = max_abs(&nullifier_covariance(&st, &g).unwrap());
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn single_node_reduces_to_squeezer() {
        let u = ClusterUnitary {
            u: CMat::identity(1, 1),
            method: Method::Polar,
            r: RMat::identity(1, 1),
            premix: RMat::identity(1, 1),
        };
        let xi = 0.7;
        let st = cluster_covariance(&u, xi).unwrap();
        assert!(max_abs(&(st.cov - crate::system::single_mode_squeezed(xi.tanh()))) < 1e-14);
    }

    #[test]
    fn loaders() {
        let g = ClusterGraph::from_csv("0,0,1,1\n0,0,1,1\n1,1,0,0\n1,1,0,0\n").unwrap();
        assert_eq!(g, ClusterGraph::square());
        let e = r#"{"n":4,"edges":[[0,2,1],[0,3,1],[1,2,1],[1,3,1]]}"#;
        assert_eq!(ClusterGraph::from_edge_list_json(e).unwrap(), ClusterGraph::square());
        assert!(ClusterGraph::from_csv("0,1\n0,0\n").is_err());
        assert!(ClusterGraph::from_csv("0,1,2\n1,0\n").is_err());
        assert!(ClusterGraph::from_edge_list_json(r#"{"n":2,"edges":[[0,5,1]]}"#).is_err());
        assert!(ClusterGraph::from_edge_list_json(r#"{"n":2,"edges":[[0,1,1],[1,0,2]]}"#).is_err());
        assert_eq!(ClusterGraph::from_csv(&g.to_csv()).unwrap(), g);
        let looped = ClusterGraph::new(RMat::identity(2, 2)).unwrap();
        assert!(looped.has_self_loops());
        assert!(!g.has_self_loops());
    }

    #[test]
    fn bad_premix() {
        let g = ClusterGraph::square();
        assert!(unitary_gram_schmidt(&g, Some(&RMat::zeros(4, 4))).is_err());
        assert!(unitary_gram_schmidt(&g, Some(&RMat::identity(3, 3))).is_err());
    }
}
