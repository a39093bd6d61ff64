//! Directed weighted communication graphs and their Laplacians.
//!
//! Orientation: `a[i][j] > 0` means node `i` receives from node `j`, so
//! information flows `j ⇒ i`. Global reachability follows information flow.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral;

/// 1-based node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    /// Zero-based position.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(i: usize) -> Self {
        NodeId(i + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T: Scalar> {
    adjacency: DMatrix<T>,
}

impl<T: Scalar> Topology<T> {
    /// Graph with `m` nodes and no edges.
    pub fn empty(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Invalid("topology needs at least one node".into()));
        }
        Ok(Self { adjacency: DMatrix::zeros(m, m) })
    }

    /// Builds a graph from `(i, j, weight)` triples; `(i, j)` means `i` listens to `j`.
    pub fn from_edges(m: usize, edges: &[(NodeId, NodeId, T)]) -> Result<Self> {
        let mut t = Self::empty(m)?;
        for &(i, j, w) in edges {
            if i.0 == 0 || j.0 == 0 || i.0 > m || j.0 > m {
                return Err(Error::Invalid(format!("edge ({i}, {j}) references a node outside 1..={m}")));
            }
            if i == j {
                return Err(Error::Invalid(format!("self-loop on node {i}")));
            }
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::Invalid(format!("edge ({i}, {j}) weight must be positive and finite")));
            }
            t.adjacency[(i.index(), j.index())] = w;
        }
        Ok(t)
    }

    /// Unit-weight graph from unordered-free `(i, j)` pairs.
    pub fn unit(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let e: Vec<_> = edges.iter().map(|&(i, j)| (NodeId(i), NodeId(j), T::one())).collect();
        Self::from_edges(m, &e)
    }

    /// Complete graph with unit weights.
    pub fn complete(m: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 1..=m {
            for j in 1..=m {
                if i != j {
                    edges.push((i, j));
                }
            }
        }
        Self::unit(m, &edges)
    }

    pub fn from_adjacency(a: DMatrix<T>) -> Result<Self> {
        let m = a.nrows();
        if m == 0 || a.ncols() != m {
            return Err(Error::Invalid("adjacency must be square and non-empty".into()));
        }
        for i in 0..m {
            for j in 0..m {
                let w = a[(i, j)];
                if w < T::zero() || !w.is_finite() {
                    return Err(Error::Invalid(format!("a[{}][{}] must be finite and non-negative", i + 1, j + 1)));
                }
                if i == j && w != T::zero() {
                    return Err(Error::Invalid(format!("self-loop on node {}", i + 1)));
                }
            }
        }
        Ok(Self { adjacency: a })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<T> {
        &self.adjacency
    }

    pub fn weight(&self, i: NodeId, j: NodeId) -> T {
        self.adjacency[(i.index(), j.index())]
    }

    pub fn edges(&self) -> BTreeSet<(NodeId, NodeId)> {
        let m = self.node_count();
        let mut out = BTreeSet::new();
        for i in 0..m {
            for j in 0..m {
                if self.adjacency[(i, j)] > T::zero() {
                    out.insert((NodeId::from_index(i), NodeId::from_index(j)));
                }
            }
        }
        out
    }

    /// Nodes `j` with `a[i][j] > 0`, i.e. the nodes `i` listens to.
    pub fn neighbors(&self, i: NodeId) -> Vec<NodeId> {
        (0..self.node_count())
            .filter(|&j| self.adjacency[(i.index(), j)] > T::zero())
            .map(NodeId::from_index)
            .collect()
    }

    /// Weighted in-degree `Σ_k a[i][k]`, summed in column order.
    pub fn row_sum(&self, i: usize) -> T {
        let m = self.node_count();
        (0..m).filter(|&k| k != i).fold(T::zero(), |s, k| s + self.adjacency[(i, k)])
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.node_count();
        (0..m).all(|i| (0..m).all(|j| self.adjacency[(i, j)] == self.adjacency[(j, i)]))
    }
}

pub fn laplacian<T: Scalar>(t: &Topology<T>) -> DMatrix<T> {
    let m = t.node_count();
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                l[(i, j)] = -t.adjacency[(i, j)];
            }
        }
        l[(i, i)] = t.row_sum(i);
    }
    l
}

/// Row sums accumulated off-diagonal first (column order), then the diagonal.
///
/// This is the same order `laplacian` uses to build its diagonal, so the
/// result is exactly zero for every row of a Laplacian.
pub fn row_sums<T: Scalar>(l: &DMatrix<T>) -> Vec<T> {
    let m = l.nrows();
    (0..m)
        .map(|i| {
            let off = (0..m).filter(|&k| k != i).fold(T::zero(), |s, k| s + l[(i, k)]);
            off + l[(i, i)]
        })
        .collect()
}

/// Nodes whose information reaches every node, found by BFS.
pub fn globally_reachable_nodes<T: Scalar>(t: &Topology<T>) -> BTreeSet<NodeId> {
    let m = t.node_count();
    // listeners[j] = nodes i that receive directly from j
    let mut listeners = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..m {
            if t.adjacency[(i, j)] > T::zero() {
                listeners[j].push(i);
            }
        }
    }
    let mut out = BTreeSet::new();
    for src in 0..m {
        let mut seen = vec![false; m];
        seen[src] = true;
        let mut count = 1;
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            for &w in &listeners[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        if count == m {
            out.insert(NodeId::from_index(src));
        }
    }
    out
}

/// Undirected connectivity, ignoring edge direction.
pub fn is_weakly_connected<T: Scalar>(t: &Topology<T>) -> bool {
    let m = t.node_count();
    let mut seen = vec![false; m];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(v) = queue.pop_front() {
        for w in 0..m {
            if !seen[w] && (t.adjacency[(v, w)] > T::zero() || t.adjacency[(w, v)] > T::zero()) {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<Complex<f64>>,
    pub zero_multiplicity: usize,
    pub left_null_vector: Option<Vec<f64>>,
    pub right_null_vector: Vec<f64>,
}

pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Spectrum of the Laplacian. An eigenvalue counts as zero when
/// `|λ| ≤ tol·(1 + ‖L‖∞)`.
pub fn spectral_summary<T: Scalar>(t: &Topology<T>, tol: f64) -> Result<SpectralSummary> {
    if !(tol > 0.0) {
        return Err(Error::Invalid("zero tolerance must be positive".into()));
    }
    let l = spectral::to_f64_matrix(&laplacian(t));
    let eigenvalues = spectral::eigenvalues(&l)?;
    let threshold = tol * (1.0 + spectral::norm_inf(&l));
    let zero_multiplicity = eigenvalues.iter().filter(|c| c.norm() <= threshold).count();
    let left_null_vector = if zero_multiplicity == 1 { spectral::left_null_vector(&l) } else { None };
    Ok(SpectralSummary {
        eigenvalues,
        zero_multiplicity,
        left_null_vector,
        right_null_vector: vec![1.0; t.node_count()],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub reachable: BTreeSet<NodeId>,
    pub simple_zero: bool,
    /// `{j : x_L[j] > tol}` when a left null vector exists.
    pub support: Option<BTreeSet<NodeId>>,
    /// Some entry of the left null vector is below `-tol`.
    pub negative_entry: bool,
    pub disagreements: Vec<String>,
}

impl Lemma1Report {
    pub fn agrees(&self) -> bool {
        self.disagreements.is_empty()
    }
}

/// Cross-checks the combinatorial and algebraic characterizations of
/// global reachability.
pub fn check_lemma1<T: Scalar>(t: &Topology<T>) -> Result<Lemma1Report> {
    const TOL: f64 = 1e-9;
    let reachable = globally_reachable_nodes(t);
    let summary = spectral_summary(t, DEFAULT_ZERO_TOL)?;
    let simple_zero = summary.zero_multiplicity == 1;
    let mut disagreements = Vec::new();
    if !reachable.is_empty() != simple_zero {
        disagreements.push(format!(
            "combinatorial: {} globally reachable node(s); algebraic: zero multiplicity {}",
            reachable.len(),
            summary.zero_multiplicity
        ));
    }
    let mut negative_entry = false;
    let support = summary.left_null_vector.as_ref().map(|x| {
        negative_entry = x.iter().any(|&v| v < -TOL);
        x.iter()
            .enumerate()
            .filter(|(_, &v)| v > TOL)
            .map(|(j, _)| NodeId::from_index(j))
            .collect::<BTreeSet<_>>()
    });
    if negative_entry {
        disagreements.push("left null vector has a negative entry".into());
    }
    if let Some(s) = &support {
        if simple_zero && !reachable.is_empty() && *s != reachable {
            disagreements.push(format!("support {s:?} != reachable {reachable:?}"));
        }
    }
    Ok(Lemma1Report { reachable, simple_zero, support, negative_entry, disagreements })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Topology<f64> {
        Topology::unit(3, &[(1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn laplacian_k2() {
        let l = laplacian(&Topology::<f64>::complete(2).unwrap());
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_chain() {
        let l = laplacian(&chain());
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0]);
        assert_eq!(l, expected);
    }

    #[test]
    fn laplacian_empty_graph_is_zero() {
        let l = laplacian(&Topology::<f64>::empty(3).unwrap());
        assert_eq!(l, DMatrix::zeros(3, 3));
    }

    #[test]
    fn reachability_examples() {
        assert_eq!(globally_reachable_nodes(&chain()), BTreeSet::from([NodeId(3)]));
        assert_eq!(
            globally_reachable_nodes(&Topology::<f64>::complete(3).unwrap()),
            BTreeSet::from([NodeId(1), NodeId(2), NodeId(3)])
        );
        assert!(globally_reachable_nodes(&Topology::<f64>::empty(2).unwrap()).is_empty());
    }

    #[test]
    fn chain_spectrum() {
        let s = spectral_summary(&chain(), DEFAULT_ZERO_TOL).unwrap();
        let re: Vec<f64> = s.eigenvalues.iter().map(|c| c.re).collect();
        for (got, want) in re.iter().zip([0.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-7, "{re:?}");
        }
        assert_eq!(s.zero_multiplicity, 1);
        let x = s.left_null_vector.unwrap();
        for (got, want) in x.iter().zip([0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_nodes_have_double_zero() {
        let s = spectral_summary(&Topology::<f64>::empty(2).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(s.zero_multiplicity, 2);
        assert!(s.left_null_vector.is_none());
    }

    #[test]
    fn complete_k3_spectrum() {
        let s = spectral_summary(&Topology::<f64>::complete(3).unwrap(), DEFAULT_ZERO_TOL).unwrap();
        let re: Vec<f64> = s.eigenvalues.iter().map(|c| c.re).collect();
        for (got, want) in re.iter().zip([0.0, 3.0, 3.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        for v in s.left_null_vector.unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reachability_check_examples_agree() {
        let r = check_lemma1(&chain()).unwrap();
        assert!(r.agrees());
        assert_eq!(r.support, Some(BTreeSet::from([NodeId(3)])));
        let r = check_lemma1(&Topology::<f64>::empty(2).unwrap()).unwrap();
        assert!(r.agrees() && r.reachable.is_empty() && !r.simple_zero);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Topology::<f64>::unit(2, &[(1, 1)]).is_err());
        assert!(Topology::<f64>::unit(2, &[(1, 3)]).is_err());
        assert!(Topology::<f64>::from_edges(2, &[(NodeId(1), NodeId(2), -1.0)]).is_err());
        assert!(Topology::<f64>::empty(0).is_err());
    }

    #[test]
    fn row_sums_exact_with_awkward_weights() {
        let t = Topology::<f64>::from_edges(
            3,
            &[(NodeId(1), NodeId(2), 0.1), (NodeId(1), NodeId(3), 0.2), (NodeId(2), NodeId(1), 0.7)],
        )
        .unwrap();
        assert!(row_sums(&laplacian(&t)).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn f32_laplacian() {
        let l = laplacian(&Topology::<f32>::complete(2).unwrap());
        assert_eq!(l[(0, 0)], 1.0f32);
        assert!(check_lemma1(&Topology::<f32>::complete(4).unwrap()).unwrap().agrees());
    }
}
