//! Unitary fractional operators.
//!
//! Every operator here is a fractional power `P diag(e^{j·a·θ}) P^H` of some
//! unitary matrix, kept together with its eigen-phase decomposition so that a
//! new order only re-evaluates the diagonal phase factors.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{dft_matrix, scale_columns, scale_rows, to_complex, unit_phases, unitarity_defect, CMatrix, RMatrix};

/// Eigenvalues closer than this (on the unit circle) share one phase.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Per-dimension unitarity tolerance for matrices handed to us.
pub const INPUT_UNITARY_TOL: f64 = 1e-8;
/// Per-dimension unitarity tolerance for matrices we produce.
pub const OUTPUT_UNITARY_TOL: f64 = 1e-9;
/// Per-dimension tolerance for reconstructing a matrix from its cached decomposition.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Orthonormal eigenbasis of a graph adjacency matrix.
///
/// Eigenvalues are sorted in descending order (stable on ties) and every
/// eigenvector has its first largest-magnitude entry positive.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    v: RMatrix,
    lambda: DVector<f64>,
    source: String,
}

impl SpectralBasis {
    pub fn v(&self) -> &RMatrix {
        &self.v
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n();
        (self.v.transpose() * &self.v - RMatrix::identity(n, n)).norm()
    }

    /// `‖V Λ V^T − A‖_F`.
    pub fn reconstruction_error(&self, a: &RMatrix) -> f64 {
        let vl = RMatrix::from_fn(self.n(), self.n(), |i, j| self.v[(i, j)] * self.lambda[j]);
        (vl * self.v.transpose() - a).norm()
    }
}

/// Symmetric eigendecomposition of the adjacency of `g`.
pub fn eigendecompose(g: &Graph) -> Result<SpectralBasis> {
    let a = g.adjacency();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericInput(format!("adjacency of {} has non-finite entries", g.label())));
    }
    let n = g.n();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

    let mut v = RMatrix::zeros(n, n);
    let mut lambda = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        lambda[dst] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        v.set_column(dst, &(col * sign));
    }
    Ok(SpectralBasis {
        v,
        lambda,
        source: g.label().to_string(),
    })
}

/// Eigen-phase decomposition `U = P diag(e^{jθ}) P^H` of a unitary matrix.
///
/// Phases are sorted in descending order. For decompositions computed from a
/// matrix they are principal arguments in `(−π, π]`; the DFRFT stores its
/// generator phases `−πk/2` unreduced instead, since reducing them would change
/// non-integer powers.
#[derive(Debug, Clone)]
pub struct PhaseSpectrum {
    basis: CMatrix,
    phases: Vec<f64>,
}

impl PhaseSpectrum {
    pub(crate) fn from_parts(basis: CMatrix, phases: Vec<f64>) -> Self {
        debug_assert_eq!(basis.ncols(), phases.len());
        PhaseSpectrum { basis, phases }
    }

    /// Decomposes a unitary matrix; fails with [`Error::NotUnitary`] when
    /// `‖U^H U − I‖_F > 1e−8·n`.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        check_unitary(u, INPUT_UNITARY_TOL)?;
        let (basis, eigenvalues) = normal_eigen(u)?;
        let phases = eigenvalues.iter().map(|&mu| principal_phase(mu)).collect();
        Ok(PhaseSpectrum { basis, phases })
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `P diag(e^{j·order·θ}) P^H`; order 0 is the identity exactly.
    pub fn power(&self, order: f64) -> CMatrix {
        if order == 0.0 {
            return CMatrix::identity(self.dim(), self.dim());
        }
        scale_columns(&self.basis, &unit_phases(&self.phases, order)) * self.basis.adjoint()
    }

    /// `d/d(order)` of [`power`](Self::power): `P diag(jθ e^{j·order·θ}) P^H`.
    pub fn power_derivative(&self, order: f64) -> CMatrix {
        let d: Vec<Complex64> = self
            .phases
            .iter()
            .map(|&t| Complex64::new(0.0, t) * Complex64::from_polar(1.0, order * t))
            .collect();
        scale_columns(&self.basis, &d) * self.basis.adjoint()
    }

    /// `P^H X`, the coordinates consumed by [`apply_projected`](Self::apply_projected).
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        self.basis.adjoint() * x
    }

    /// `P diag(e^{j·order·θ}) Z` for `Z = P^H X`; costs `O(n² m)` for an `n x m` signal.
    pub fn apply_projected(&self, order: f64, projected: &CMatrix) -> CMatrix {
        &self.basis * scale_rows(projected, &unit_phases(&self.phases, order))
    }

    pub fn apply_projected_derivative(&self, order: f64, projected: &CMatrix) -> CMatrix {
        let d: Vec<Complex64> = self
            .phases
            .iter()
            .map(|&t| Complex64::new(0.0, t) * Complex64::from_polar(1.0, order * t))
            .collect();
        &self.basis * scale_rows(projected, &d)
    }
}

pub(crate) fn check_unitary(u: &CMatrix, per_dim_tol: f64) -> Result<()> {
    if u.nrows() != u.ncols() || u.nrows() == 0 {
        return Err(Error::shape("non-empty square matrix", format!("{}x{}", u.nrows(), u.ncols())));
    }
    if !crate::linalg::all_finite(u) {
        return Err(Error::NumericInput("matrix has non-finite entries".into()));
    }
    let tol = per_dim_tol * u.nrows() as f64;
    let defect = unitarity_defect(u);
    if defect > tol {
        return Err(Error::NotUnitary { defect, tol });
    }
    Ok(())
}

/// Principal argument in `(−π, π]`; eigenvalues within [`CLUSTER_TOL`] of −1 map to π.
pub(crate) fn principal_phase(mu: Complex64) -> f64 {
    if (mu + 1.0).norm() < CLUSTER_TOL {
        return PI;
    }
    let t = mu.arg();
    if t <= -PI {
        PI
    } else {
        t
    }
}

/// Eigendecomposition of a (numerically) normal matrix.
///
/// Returns unit-norm eigenvalues and an orthonormal eigenvector matrix, sorted
/// by descending principal phase. Eigenvalues within [`CLUSTER_TOL`] of each
/// other are merged onto their mean and the cluster's eigenvectors are
/// re-orthonormalized.
pub(crate) fn normal_eigen(u: &CMatrix) -> Result<(CMatrix, Vec<Complex64>)> {
    let n = u.nrows();
    let schur = Schur::try_new(u.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or_else(|| Error::Decomposition("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();

    let scale = u.norm().max(1.0);
    let mut off = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            off = off.max(t[(i, j)].norm());
        }
    }
    if off > 1e-8 * scale {
        return Err(Error::Decomposition(format!(
            "matrix is not normal: Schur off-diagonal {off:.3e}"
        )));
    }

    let raw: Vec<Complex64> = (0..n).map(|i| t[(i, i)] / t[(i, i)].norm().max(f64::MIN_POSITIVE)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| principal_phase(raw[b]).total_cmp(&principal_phase(raw[a])));

    let mut basis = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &q.column(src));
    }
    let sorted: Vec<Complex64> = order.iter().map(|&i| raw[i]).collect();

    let mut eigenvalues = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (sorted[end] - sorted[end - 1]).norm() < CLUSTER_TOL {
            end += 1;
        }
        let mean: Complex64 = sorted[start..end].iter().sum::<Complex64>() / (end - start) as f64;
        let mean = mean / mean.norm();
        eigenvalues.extend(std::iter::repeat_n(mean, end - start));
        if end - start > 1 {
            orthonormalize_columns(&mut basis, start, end)?;
        }
        start = end;
    }
    Ok((basis, eigenvalues))
}

/// Modified Gram-Schmidt over columns `start..end` (a QR step on the cluster block).
fn orthonormalize_columns(m: &mut CMatrix, start: usize, end: usize) -> Result<()> {
    for j in start..end {
        for k in start..j {
            let qk = m.column(k).clone_owned();
            let proj = qk.dotc(&m.column(j));
            let mut cj = m.column_mut(j);
            cj -= qk * proj;
        }
        let norm = m.column(j).norm();
        if norm < 1e-6 {
            return Err(Error::Decomposition(format!(
                "eigenvector cluster {start}..{end} is rank deficient at column {j}"
            )));
        }
        let mut cj = m.column_mut(j);
        cj /= Complex64::new(norm, 0.0);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Fractional power of a graph Fourier matrix.
    Graph,
    /// Discrete fractional Fourier transform.
    Dfrft,
    /// Temporal basis on the geodesic between a graph basis and the DFRFT.
    Geodesic,
    /// Fractional power of an arbitrary unitary matrix.
    Unitary,
}

/// A unitary operator together with the decomposition it was built from:
/// `matrix = anchor · P diag(e^{j·order·θ}) P^H`, with `anchor = I` except for
/// the geodesic kind, where it is the graph-induced temporal basis and `order`
/// is the coupling parameter.
#[derive(Debug, Clone)]
pub struct FractionalOperator {
    matrix: CMatrix,
    order: f64,
    spectrum: Arc<PhaseSpectrum>,
    anchor: Option<CMatrix>,
    kind: OperatorKind,
}

impl FractionalOperator {
    pub(crate) fn from_spectrum(spectrum: Arc<PhaseSpectrum>, order: f64, kind: OperatorKind) -> Self {
        let matrix = spectrum.power(order);
        FractionalOperator {
            matrix,
            order,
            spectrum,
            anchor: None,
            kind,
        }
    }

    pub(crate) fn anchored(anchor: CMatrix, spectrum: Arc<PhaseSpectrum>, order: f64, kind: OperatorKind) -> Self {
        let matrix = if order == 0.0 {
            anchor.clone()
        } else {
            &anchor * spectrum.power(order)
        };
        FractionalOperator {
            matrix,
            order,
            spectrum,
            anchor: Some(anchor),
            kind,
        }
    }

    /// Same decomposition at another order; only the phase factors change.
    pub fn at_order(&self, order: f64) -> FractionalOperator {
        match &self.anchor {
            None => FractionalOperator::from_spectrum(self.spectrum.clone(), order, self.kind),
            Some(a) => FractionalOperator::anchored(a.clone(), self.spectrum.clone(), order, self.kind),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn phases(&self) -> &[f64] {
        self.spectrum.phases()
    }

    pub fn phase_basis(&self) -> &CMatrix {
        self.spectrum.basis()
    }

    pub fn spectrum(&self) -> &Arc<PhaseSpectrum> {
        &self.spectrum
    }

    pub fn anchor(&self) -> Option<&CMatrix> {
        self.anchor.as_ref()
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.matrix)
    }

    /// Distance between `matrix` and the product rebuilt from the cached decomposition.
    pub fn consistency_defect(&self) -> f64 {
        let rebuilt = self.spectrum.power(self.order);
        let rebuilt = match &self.anchor {
            Some(a) => a * rebuilt,
            None => rebuilt,
        };
        (rebuilt - &self.matrix).norm()
    }

    /// Writes the matrix as CSV, one matrix row per line, entries as `re,im` pairs.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_complex_matrix_csv(&self.matrix, writer)
    }
}

pub fn write_complex_matrix_csv<W: Write>(m: &CMatrix, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        let mut rec = Vec::with_capacity(2 * m.ncols());
        for j in 0..m.ncols() {
            rec.push(m[(i, j)].re.to_string());
            rec.push(m[(i, j)].im.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Graph Fourier matrix `F_G = V^T` (order 1).
pub fn gft_matrix(b: &SpectralBasis) -> Result<FractionalOperator> {
    let f = to_complex(&b.v().transpose());
    let spectrum = PhaseSpectrum::from_unitary(&f)?;
    Ok(FractionalOperator {
        matrix: f,
        order: 1.0,
        spectrum: Arc::new(spectrum),
        anchor: None,
        kind: OperatorKind::Graph,
    })
}

/// `U^α` through per-eigenvalue principal phases.
pub fn unitary_fractional_power(u: &CMatrix, alpha: f64) -> Result<FractionalOperator> {
    let spectrum = PhaseSpectrum::from_unitary(u)?;
    Ok(FractionalOperator::from_spectrum(Arc::new(spectrum), alpha, OperatorKind::Unitary))
}

/// Graph fractional Fourier transform `F_G^α`, the fractional power of the GFT matrix.
pub fn graph_frft(b: &SpectralBasis, alpha: f64) -> Result<FractionalOperator> {
    Ok(gft_matrix(b)?.at_order(alpha))
}

/// Cached eigen-phase decomposition of the GFT matrix of `b`.
pub fn graph_spectrum(b: &SpectralBasis) -> Result<Arc<PhaseSpectrum>> {
    Ok(gft_matrix(b)?.spectrum.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DfrftMode {
    /// Eigenvectors of the DFT-commuting matrix, Hermite-Gaussian ordering.
    #[default]
    Candan,
    /// Principal-phase power of `e^{jπ/4}·DFT`, rotated back.
    PrincipalShifted,
}

/// Discrete fractional Fourier transform `F^α` of size `n`.
pub fn dfrft_matrix(n: usize, alpha: f64, mode: DfrftMode) -> Result<FractionalOperator> {
    let spectrum = dfrft_spectrum(n, mode)?;
    Ok(FractionalOperator::from_spectrum(spectrum, alpha, OperatorKind::Dfrft))
}

/// Eigen-phase decomposition of the DFRFT family, checked to give the DFT at order 1.
pub fn dfrft_spectrum(n: usize, mode: DfrftMode) -> Result<Arc<PhaseSpectrum>> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("DFRFT needs n >= 2, got {n}")));
    }
    let spectrum = match mode {
        DfrftMode::Candan => candan_spectrum(n),
        DfrftMode::PrincipalShifted => {
            let rot = Complex64::from_polar(1.0, PI / 4.0);
            let shifted = PhaseSpectrum::from_unitary(&(dft_matrix(n) * rot))?;
            let phases = shifted.phases.iter().map(|t| t - PI / 4.0).collect();
            PhaseSpectrum::from_parts(shifted.basis, phases)
        }
    };

    let dft = dft_matrix(n);
    let err = (spectrum.power(1.0) - &dft).norm();
    if err > RECONSTRUCTION_TOL * n as f64 {
        let worst = (0..n)
            .map(|k| {
                let v = spectrum.basis.column(k);
                let mu = Complex64::from_polar(1.0, spectrum.phases[k]);
                ((&dft * v) - v * mu).norm()
            })
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        return Err(Error::Construction(format!(
            "DFRFT(n={n}) misses the DFT at order 1 (error {err:.3e}); eigenvector {worst} is not a DFT eigenvector with its assigned eigenvalue"
        )));
    }
    Ok(Arc::new(spectrum))
}

/// DFT-commuting matrix `S`: `S[k][k] = 2cos(2πk/n) − 4`, unit couplings to the
/// circular neighbours (both neighbours coincide when `n = 2`).
pub fn commuting_matrix(n: usize) -> RMatrix {
    let mut s = RMatrix::zeros(n, n);
    for k in 0..n {
        s[(k, k)] = 2.0 * (2.0 * PI * k as f64 / n as f64).cos() - 4.0;
        s[(k, (k + 1) % n)] += 1.0;
        s[(k, (k + n - 1) % n)] += 1.0;
    }
    s
}

/// Eigenvectors of `S` split into the even (`v[k] = v[−k]`) and odd subspaces,
/// each sorted by descending eigenvalue, then interleaved as Hermite orders
/// 0, 1, 2, ...; for even `n` the last even vector takes order `n`.
fn candan_spectrum(n: usize) -> PhaseSpectrum {
    let s = commuting_matrix(n);
    let half = (n - 1) / 2;
    let n_even = n / 2 + 1;
    let n_odd = n - n_even;
    let r = std::f64::consts::FRAC_1_SQRT_2;

    let mut even = RMatrix::zeros(n, n_even);
    even[(0, 0)] = 1.0;
    for k in 1..=half {
        even[(k, k)] = r;
        even[(n - k, k)] = r;
    }
    if n.is_multiple_of(2) {
        even[(n / 2, n_even - 1)] = 1.0;
    }
    let mut odd = RMatrix::zeros(n, n_odd);
    for k in 1..=half {
        odd[(k, k - 1)] = r;
        odd[(n - k, k - 1)] = -r;
    }

    let even_vecs = sorted_subspace_eigenvectors(&s, &even);
    let odd_vecs = sorted_subspace_eigenvectors(&s, &odd);

    let mut by_order: Vec<(usize, DVector<f64>)> = Vec::with_capacity(n);
    for (i, v) in even_vecs.into_iter().enumerate() {
        let k = if n.is_multiple_of(2) && i == n_even - 1 { n } else { 2 * i };
        by_order.push((k, v));
    }
    for (i, v) in odd_vecs.into_iter().enumerate() {
        by_order.push((2 * i + 1, v));
    }
    by_order.sort_by_key(|(k, _)| *k);

    let mut basis = CMatrix::zeros(n, n);
    let mut phases = Vec::with_capacity(n);
    for (col, (k, v)) in by_order.into_iter().enumerate() {
        basis.set_column(col, &v.map(|x| Complex64::new(x, 0.0)));
        phases.push(-PI / 2.0 * k as f64);
    }
    PhaseSpectrum::from_parts(basis, phases)
}

fn sorted_subspace_eigenvectors(s: &RMatrix, sub: &RMatrix) -> Vec<DVector<f64>> {
    if sub.ncols() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(sub.transpose() * s * sub);
    let mut order: Vec<usize> = (0..sub.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .into_iter()
        .map(|c| {
            let v = sub * eig.eigenvectors.column(c);
            let mut pivot = 0;
            for i in 1..v.len() {
                if v[i].abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            if v[pivot] < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cycle_graph, knn_graph, path_graph, WeightMode};
    use crate::linalg::relative_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_graph(n: usize, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        knn_graph(&pts, 3.min(n - 1), WeightMode::Unit).unwrap()
    }

    /// Haar-ish random unitary from QR of a complex Gaussian-like matrix.
    fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let m = CMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        m.qr().q()
    }

    #[test]
    fn path2_basis() {
        let b = eigendecompose(&path_graph(2).unwrap()).unwrap();
        assert!((b.lambda()[0] - 1.0).abs() < 1e-14 && (b.lambda()[1] + 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.v()[(0, 0)] - r).abs() < 1e-14 && (b.v()[(1, 0)] - r).abs() < 1e-14);
        // Both entries of the second vector tie in magnitude; the lower index is made positive.
        assert!((b.v()[(0, 1)] - r).abs() < 1e-14 && (b.v()[(1, 1)] + r).abs() < 1e-14);
    }

    #[test]
    fn empty_graph_basis_is_identity() {
        let g = Graph::new(RMatrix::zeros(3, 3), "empty").unwrap();
        let b = eigendecompose(&g).unwrap();
        assert!(b.lambda().iter().all(|&l| l == 0.0));
        assert!((b.v() - RMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn path3_eigenvalues() {
        // Characteristic polynomial of the 3-path adjacency: λ³ − 2λ.
        let b = eigendecompose(&path_graph(3).unwrap()).unwrap();
        let s2 = 2f64.sqrt();
        for (got, want) in b.lambda().iter().zip([s2, 0.0, -s2]) {
            assert!((got - want).abs() < 1e-14);
            assert!((got.powi(3) - 2.0 * got).abs() < 1e-13);
        }
    }

    #[test]
    fn basis_invariants_on_random_graphs() {
        for (n, seed) in [(5, 1), (12, 2), (30, 3)] {
            let g = random_graph(n, seed);
            let b = eigendecompose(&g).unwrap();
            assert!(b.orthogonality_defect() <= 1e-10 * n as f64);
            assert!(b.reconstruction_error(g.adjacency()) <= 1e-9 * g.adjacency().norm());
            assert!(b.lambda().as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn gft_of_path2() {
        let b = eigendecompose(&path_graph(2).unwrap()).unwrap();
        let f = gft_matrix(&b).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expected = CMatrix::from_row_slice(2, 2, &[c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)]);
        assert!((f.matrix() - expected).norm() < 1e-14);
        assert!((f.matrix() * to_complex(b.v()) - CMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn gft_of_constant_on_cycle_concentrates_on_top_mode() {
        let b = eigendecompose(&cycle_graph(4).unwrap()).unwrap();
        let f = gft_matrix(&b).unwrap();
        let x = CMatrix::from_element(4, 1, c(1.0, 0.0));
        let coeffs = f.matrix() * x;
        // Top eigenvector of the 4-cycle is (1,1,1,1)/2, so the coefficient is 2.
        assert!((coeffs[(0, 0)] - c(2.0, 0.0)).norm() < 1e-13);
        assert!(coeffs.rows(1, 3).norm() < 1e-13);
    }

    #[test]
    fn identity_power() {
        let p = unitary_fractional_power(&CMatrix::identity(4, 4), 0.37).unwrap();
        assert!((p.matrix() - CMatrix::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn phase_doubling() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 1.0), c(0.0, -1.0)]));
        let p = unitary_fractional_power(&u, 2.0).unwrap();
        assert!((p.matrix() + CMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn half_power_of_path2_gft_matches_analytic_form() {
        // F_G of path(2) is symmetric orthogonal with eigenvalues 1 and −1 and
        // eigenvectors (cos(π/8), sin(π/8)) and (−sin(π/8), cos(π/8)).
        let b = eigendecompose(&path_graph(2).unwrap()).unwrap();
        let f = gft_matrix(&b).unwrap();
        let half = f.at_order(0.5);
        let (cs, sn) = ((PI / 8.0).cos(), (PI / 8.0).sin());
        let p = CMatrix::from_row_slice(2, 2, &[c(cs, 0.0), c(-sn, 0.0), c(sn, 0.0), c(cs, 0.0)]);
        let d = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]));
        let expected = &p * d * p.adjoint();
        assert!((half.matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn non_unitary_input_is_rejected() {
        let mut u = CMatrix::identity(3, 3);
        u[(0, 1)] = c(1e-3, 0.0);
        assert!(matches!(unitary_fractional_power(&u, 0.5), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn graph_frft_endpoints_and_additivity() {
        for (n, seed) in [(4, 5), (9, 6), (20, 7)] {
            let b = eigendecompose(&random_graph(n, seed)).unwrap();
            let f1 = gft_matrix(&b).unwrap();
            let nf = n as f64;
            assert!((graph_frft(&b, 0.0).unwrap().matrix() - CMatrix::identity(n, n)).norm() < 1e-9 * nf);
            assert!((graph_frft(&b, 1.0).unwrap().matrix() - f1.matrix()).norm() < 1e-8 * nf);
            let h = graph_frft(&b, 0.5).unwrap();
            assert!((h.matrix() * h.matrix() - f1.matrix()).norm() < 1e-8 * nf);
            let a = f1.at_order(0.3);
            let bb = f1.at_order(-1.1);
            assert!((a.matrix() * bb.matrix() - f1.at_order(-0.8).matrix()).norm() < 1e-8 * nf);
            assert!((f1.at_order(-0.3).matrix() - a.matrix().adjoint()).norm() < 1e-8 * nf);
            for op in [&a, &bb, &h] {
                assert!(op.unitarity_defect() <= OUTPUT_UNITARY_TOL * nf);
                assert!(op.consistency_defect() <= RECONSTRUCTION_TOL * nf);
                assert!(op.phases().iter().all(|&t| t > -PI && t <= PI));
                assert!(op.phases().windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn dfrft_endpoints_and_additivity() {
        for mode in [DfrftMode::Candan, DfrftMode::PrincipalShifted] {
            for n in 2..=17 {
                let nf = n as f64;
                let f0 = dfrft_matrix(n, 0.0, mode).unwrap();
                assert!((f0.matrix() - CMatrix::identity(n, n)).norm() <= 1e-9 * nf);
                let f1 = dfrft_matrix(n, 1.0, mode).unwrap();
                assert!((f1.matrix() - dft_matrix(n)).norm() <= 1e-8 * nf, "n={n} {mode:?}");
                let h = f1.at_order(0.5);
                assert!((h.matrix() * h.matrix() - f1.matrix()).norm() <= 1e-8 * nf);
                assert!(f1.at_order(0.7).unitarity_defect() <= OUTPUT_UNITARY_TOL * nf);
            }
        }
        assert!(dfrft_matrix(1, 0.5, DfrftMode::Candan).is_err());
    }

    #[test]
    fn dfrft_order_two_is_index_reversal() {
        for n in [5, 8] {
            let f2 = dfrft_matrix(n, 2.0, DfrftMode::Candan).unwrap();
            let flip = CMatrix::from_fn(n, n, |i, j| c(f64::from(u8::from((i + j) % n == 0)), 0.0));
            assert!((f2.matrix() - flip).norm() < 1e-9);
        }
    }

    #[test]
    fn fractional_power_ignores_eigenspace_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let q = random_unitary(n, &mut rng);
        let phases = [2.0, 2.0, 2.0, -1.0, -1.0, 0.5];
        let d: Vec<Complex64> = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let mix = |rng: &mut ChaCha8Rng| {
            let r3 = random_unitary(3, rng);
            let r2 = random_unitary(2, rng);
            let mut blk = CMatrix::identity(n, n);
            blk.view_mut((0, 0), (3, 3)).copy_from(&r3);
            blk.view_mut((3, 3), (2, 2)).copy_from(&r2);
            let qm = &q * blk;
            scale_columns(&qm, &d) * qm.adjoint()
        };
        let u1 = mix(&mut rng);
        let u2 = mix(&mut rng);
        for alpha in [0.3, -1.7, 2.5] {
            let p1 = unitary_fractional_power(&u1, alpha).unwrap();
            let p2 = unitary_fractional_power(&u2, alpha).unwrap();
            assert!((p1.matrix() - p2.matrix()).norm() < 1e-8 * n as f64);
        }
    }

    #[test]
    fn minus_one_eigenvalue_takes_phase_pi() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(-1.0, -1e-15), c(1.0, 0.0)]));
        let p = unitary_fractional_power(&u, 0.5).unwrap();
        assert_eq!(p.phases()[0], PI);
        assert!((p.matrix()[(0, 0)] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn random_unitary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 10, 25] {
            let u = random_unitary(n, &mut rng);
            let p = unitary_fractional_power(&u, 1.0).unwrap();
            assert!(relative_diff(p.matrix(), &u) < 1e-10);
        }
    }

    #[test]
    fn determinism() {
        let b = eigendecompose(&random_graph(15, 9)).unwrap();
        let a = graph_frft(&b, 0.37).unwrap();
        let b2 = graph_frft(&b, 0.37).unwrap();
        assert_eq!(a.matrix(), b2.matrix());
        let d1 = dfrft_matrix(9, 0.4, DfrftMode::Candan).unwrap();
        let d2 = dfrft_matrix(9, 0.4, DfrftMode::Candan).unwrap();
        assert_eq!(d1.matrix(), d2.matrix());
    }

    #[test]
    fn operator_csv_layout() {
        let op = dfrft_matrix(2, 1.0, DfrftMode::Candan).unwrap();
        let mut buf = Vec::new();
        op.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 4);
    }
}
