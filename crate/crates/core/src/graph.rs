//! Weighted undirected graphs, the k-NN and path builders, and Cartesian products.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;

/// Default cap on `n1 * n2` for materializing a product adjacency.
pub const PRODUCT_MATERIALIZE_CAP: usize = 4096;

/// A weighted undirected graph stored as a dense symmetric adjacency matrix.
///
/// The adjacency is symmetrized on construction, so `A == A^T` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: RMatrix,
    label: String,
}

impl Graph {
    /// Validates and symmetrizes `adjacency` (`(A + A^T) / 2`).
    ///
    /// Rejects non-square or empty matrices, non-finite or negative weights and
    /// self-loops.
    pub fn new(adjacency: RMatrix, label: impl Into<String>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidSize(format!(
                "adjacency must be square and non-empty, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if let Some(((i, j), _)) = adjacency
            .iter()
            .enumerate()
            .map(|(k, v)| ((k % n, k / n), v))
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NumericInput(format!("adjacency[{i}][{j}] is not finite")));
        }
        let mut sym = RMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let w = if i == j {
                    adjacency[(i, i)]
                } else {
                    0.5 * (adjacency[(i, j)] + adjacency[(j, i)])
                };
                if i == j && w != 0.0 {
                    return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
                }
                if w < 0.0 {
                    return Err(Error::InvalidGraph(format!("negative weight {w} on edge {i}-{j}")));
                }
                sym[(i, j)] = w;
            }
        }
        Ok(Graph {
            adjacency: sym,
            label: label.into(),
        })
    }

    /// Builds a graph from undirected `(src, dst, weight)` triples. Repeated edges overwrite.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], label: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one node".into()));
        }
        let mut a = RMatrix::zeros(n, n);
        for &(s, d, w) in edges {
            if s >= n || d >= n {
                return Err(Error::InvalidGraph(format!("edge {s}-{d} out of range for {n} nodes")));
            }
            if s == d {
                return Err(Error::InvalidGraph(format!("self-loop at node {s}")));
            }
            a[(s, d)] = w;
            a[(d, s)] = w;
        }
        Graph::new(a, label)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &RMatrix {
        &self.adjacency
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Undirected edges `(i, j, w)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn write_edge_list<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src", "dst", "weight"])?;
        for (s, d, wt) in self.edges() {
            w.write_record([s.to_string(), d.to_string(), wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `src,dst,weight` edge list. With `n = None` the node count is one
    /// past the largest index seen.
    pub fn read_edge_list<R: Read>(reader: R, n: Option<usize>, label: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["src", "dst", "weight"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::Parse(format!("edge list header must be src,dst,weight, got {headers:?}")));
        }
        let mut edges = Vec::new();
        for rec in rdr.deserialize::<EdgeRow>() {
            let r = rec?;
            edges.push((r.src, r.dst, r.weight));
        }
        let n = match n {
            Some(n) => n,
            None => edges.iter().map(|&(s, d, _)| s.max(d) + 1).max().unwrap_or(0),
        };
        Graph::from_edges(n, &edges, label)
    }
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
    weight: f64,
}

/// Edge weighting for k-NN graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Unit,
    /// `exp(−d² / 2σ²)`.
    Gaussian { sigma: f64 },
}

/// Unit-weight path graph on `n >= 2` nodes.
pub fn path_graph(n: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("path graph needs n >= 2, got {n}")));
    }
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    Graph::from_edges(n, &edges, format!("path({n})"))
}

/// Cycle graph on `n >= 3` nodes.
pub fn cycle_graph(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::InvalidSize(format!("cycle graph needs n >= 3, got {n}")));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    Graph::from_edges(n, &edges, format!("cycle({n})"))
}

/// k-nearest-neighbour graph over Euclidean points.
///
/// Each point selects its `k` nearest others (equal distances resolved toward
/// the lower index); an edge exists when either endpoint selects the other.
pub fn knn_graph(points: &[Vec<f64>], k: usize, weight_mode: WeightMode) -> Result<Graph> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::shape(format!("{dim} coordinates"), format!("{} for point {i}", p.len())));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericInput(format!("point {i} has a non-finite coordinate")));
        }
    }
    if let WeightMode::Gaussian { sigma } = weight_mode {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("gaussian weight sigma must be positive, got {sigma}")));
        }
    }

    let mut d2 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d == 0.0 {
                return Err(Error::DuplicatePoints { first: i, second: j });
            }
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }

    let mut a = RMatrix::zeros(n, n);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&x, &y| d2[(i, x)].total_cmp(&d2[(i, y)]).then(x.cmp(&y)));
        for &j in &order[..k] {
            let w = match weight_mode {
                WeightMode::Unit => 1.0,
                WeightMode::Gaussian { sigma } => (-d2[(i, j)] / (2.0 * sigma * sigma)).exp(),
            };
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
    }
    Graph::new(a, format!("knn(n={n},k={k})"))
}

/// Reads `id,x1,...,xd` coordinates; rows may appear in any order but ids must cover `0..n`.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers[0].trim() != "id" {
        return Err(Error::Parse("point file header must start with id".into()));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad point id {:?}: {e}", &rec[0])))?;
        let coords = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad coordinate {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, coords));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (id, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(Error::Parse(format!("point ids must be 0..n without gaps, missing {expect}")));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn write_points<W: Write>(points: &[Vec<f64>], writer: W) -> Result<()> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=dim).map(|d| format!("x{d}")));
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Cartesian product `G1 □ G2`.
///
/// Vertices are ordered lexicographically, `(i1, i2) -> i1 * n2 + i2`, which
/// gives the Kronecker sum `A1 ⊗ I + I ⊗ A2`. Transforms never need this
/// matrix; it exists for validation at small sizes.
#[derive(Debug, Clone)]
pub struct ProductGraph {
    g1: Graph,
    g2: Graph,
}

pub fn cartesian_product(g1: &Graph, g2: &Graph) -> ProductGraph {
    ProductGraph {
        g1: g1.clone(),
        g2: g2.clone(),
    }
}

impl ProductGraph {
    pub fn g1(&self) -> &Graph {
        &self.g1
    }

    pub fn g2(&self) -> &Graph {
        &self.g2
    }

    pub fn n(&self) -> usize {
        self.g1.n() * self.g2.n()
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.g2.n() + i2
    }

    pub fn adjacency(&self) -> Result<RMatrix> {
        self.adjacency_with_cap(PRODUCT_MATERIALIZE_CAP)
    }

    pub fn adjacency_with_cap(&self, cap: usize) -> Result<RMatrix> {
        let n = self.n();
        if n > cap {
            return Err(Error::InvalidSize(format!(
                "product graph has {n} nodes, above the materialization cap {cap}"
            )));
        }
        let i1 = RMatrix::identity(self.g1.n(), self.g1.n());
        let i2 = RMatrix::identity(self.g2.n(), self.g2.n());
        Ok(self.g1.adjacency().kronecker(&i2) + i1.kronecker(self.g2.adjacency()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adj(rows: &[&[f64]]) -> RMatrix {
        RMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    #[test]
    fn path_graph_small() {
        assert_eq!(
            path_graph(3).unwrap().adjacency(),
            &adj(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]])
        );
        assert_eq!(path_graph(2).unwrap().adjacency(), &adj(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert!(matches!(path_graph(1), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn graph_rejects_bad_input() {
        assert!(Graph::new(adj(&[&[1.0, 0.0], &[0.0, 0.0]]), "").is_err());
        assert!(Graph::new(adj(&[&[0.0, -1.0], &[-1.0, 0.0]]), "").is_err());
        assert!(matches!(
            Graph::new(adj(&[&[0.0, f64::NAN], &[0.0, 0.0]]), ""),
            Err(Error::NumericInput(_))
        ));
        assert!(Graph::new(RMatrix::zeros(0, 0), "").is_err());
    }

    #[test]
    fn construction_symmetrizes() {
        let g = Graph::new(adj(&[&[0.0, 1.0], &[3.0, 0.0]]), "").unwrap();
        assert_eq!(g.adjacency()[(0, 1)], 2.0);
        assert_eq!(g.adjacency()[(1, 0)], 2.0);
    }

    // Reference k-NN: enumerate every pair, rank by (distance, index).
    fn brute_knn_edges(points: &[Vec<f64>], k: usize) -> Vec<(usize, usize)> {
        let n = points.len();
        let mut edges = std::collections::BTreeSet::new();
        for i in 0..n {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    (d, j)
                })
                .collect();
            cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, j) in &cand[..k] {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        edges.into_iter().collect()
    }

    fn edge_pairs(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().into_iter().map(|(i, j, _)| (i, j)).collect()
    }

    #[test]
    fn knn_collinear() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let g = knn_graph(&pts, 1, WeightMode::Unit).unwrap();
        assert_eq!(edge_pairs(&g), vec![(0, 1), (1, 2)]);
        assert_eq!(edge_pairs(&g), brute_knn_edges(&pts, 1));
    }

    #[test]
    fn knn_unit_square_has_no_diagonals() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let g = knn_graph(&pts, 2, WeightMode::Unit).unwrap();
        assert_eq!(edge_pairs(&g), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        assert_eq!(edge_pairs(&g), brute_knn_edges(&pts, 2));
    }

    #[test]
    fn knn_full_k_is_complete() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.7, (i * i) as f64]).collect();
        let g = knn_graph(&pts, 4, WeightMode::Unit).unwrap();
        assert_eq!(g.edges().len(), 10);
    }

    #[test]
    fn knn_errors() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(knn_graph(&pts, 2, WeightMode::Unit), Err(Error::InvalidK { .. })));
        assert!(matches!(knn_graph(&pts, 0, WeightMode::Unit), Err(Error::InvalidK { .. })));
        let dup = vec![vec![0.0], vec![1.0], vec![0.0]];
        assert!(matches!(
            knn_graph(&dup, 1, WeightMode::Unit),
            Err(Error::DuplicatePoints { first: 0, second: 2 })
        ));
    }

    #[test]
    fn knn_gaussian_weights() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let g = knn_graph(&pts, 1, WeightMode::Gaussian { sigma: 1.0 }).unwrap();
        assert!((g.adjacency()[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.adjacency()[(1, 2)] - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn product_of_two_edges_is_a_four_cycle() {
        let p2 = path_graph(2).unwrap();
        let a = cartesian_product(&p2, &p2).adjacency().unwrap();
        let expected = adj(&[
            &[0.0, 1.0, 1.0, 0.0],
            &[1.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, 1.0],
            &[0.0, 1.0, 1.0, 0.0],
        ]);
        assert_eq!(a, expected);
    }

    #[test]
    fn product_with_single_node_factor() {
        let g1 = path_graph(3).unwrap();
        let single = Graph::new(RMatrix::zeros(1, 1), "single").unwrap();
        let a = cartesian_product(&g1, &single).adjacency().unwrap();
        assert_eq!(&a, g1.adjacency());
    }

    #[test]
    fn product_respects_cap() {
        let g = path_graph(10).unwrap();
        assert!(cartesian_product(&g, &g).adjacency_with_cap(50).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![(i as f64).sin(), (i as f64 * 1.3).cos()]).collect();
        let g = knn_graph(&pts, 2, WeightMode::Gaussian { sigma: 0.5 }).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = Graph::read_edge_list(buf.as_slice(), Some(6), "x").unwrap();
        assert_eq!(back.adjacency(), g.adjacency());

        let mut pbuf = Vec::new();
        write_points(&pts, &mut pbuf).unwrap();
        assert_eq!(read_points(pbuf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn edge_list_rejects_wrong_header() {
        let text = "a,b,c\n0,1,1\n";
        assert!(Graph::read_edge_list(text.as_bytes(), None, "").is_err());
    }

    proptest! {
        #[test]
        fn product_matches_elementwise_definition(
            w1 in proptest::collection::vec(0.0f64..2.0, 3),
            w2 in 0.1f64..2.0,
        ) {
            let g1 = Graph::from_edges(3, &[(0, 1, w1[0]), (1, 2, w1[1]), (0, 2, w1[2])], "g1").unwrap();
            let g2 = Graph::from_edges(2, &[(0, 1, w2)], "g2").unwrap();
            let p = cartesian_product(&g1, &g2);
            let a = p.adjacency().unwrap();
            for i1 in 0..3 { for i2 in 0..2 { for j1 in 0..3 { for j2 in 0..2 {
                let expect = g1.adjacency()[(i1, j1)] * f64::from(u8::from(i2 == j2))
                    + f64::from(u8::from(i1 == j1)) * g2.adjacency()[(i2, j2)];
                prop_assert_eq!(a[(p.index(i1, i2), p.index(j1, j2))], expect);
            }}}}
        }

        #[test]
        fn knn_is_symmetric_and_deterministic(
            coords in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..20),
            k in 1usize..4,
        ) {
            let pts: Vec<Vec<f64>> = coords.iter().map(|&(x, y)| vec![x, y]).collect();
            let distinct = (0..pts.len()).all(|i| (i + 1..pts.len()).all(|j| pts[i] != pts[j]));
            prop_assume!(distinct && k < pts.len());
            let g = knn_graph(&pts, k, WeightMode::Unit).unwrap();
            let a = g.adjacency();
            prop_assert_eq!(a, &a.transpose());
            prop_assert_eq!(edge_pairs(&g), brute_knn_edges(&pts, k));
            let again = knn_graph(&pts, k, WeightMode::Unit).unwrap();
            prop_assert_eq!(a, again.adjacency());
        }
    }
}
