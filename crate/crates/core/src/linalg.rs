//! Dense matrix aliases and small helpers shared by the transform modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> RMatrix {
    m.map(|z| z.re)
}

/// `‖M^H M − I‖_F`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.ncols();
    let mut g = m.adjoint() * m;
    for i in 0..n {
        g[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    g.norm()
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute difference when `b` vanishes.
pub fn relative_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > f64::MIN_POSITIVE {
        diff / scale
    } else {
        diff
    }
}

/// Column-stacking `vec(X)`; nalgebra storage is already column-major.
pub fn vec_columns(m: &CMatrix) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec_columns(v: &DVector<Complex64>, nrows: usize, ncols: usize) -> CMatrix {
    CMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

/// `diag(d) · M` without forming the diagonal matrix.
pub fn scale_rows(m: &CMatrix, d: &[Complex64]) -> CMatrix {
    debug_assert_eq!(m.nrows(), d.len());
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// `M · diag(d)`.
pub fn scale_columns(m: &CMatrix, d: &[Complex64]) -> CMatrix {
    debug_assert_eq!(m.ncols(), d.len());
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

pub fn unit_phases(phases: &[f64], order: f64) -> Vec<Complex64> {
    phases
        .iter()
        .map(|&t| Complex64::from_polar(1.0, order * t))
        .collect()
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Unitary DFT matrix `F[m][k] = e^{−j2πmk/n}/√n`.
pub fn dft_matrix(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |m, k| {
        let angle = -2.0 * std::f64::consts::PI * ((m * k) % n) as f64 / n as f64;
        Complex64::from_polar(scale, angle)
    })
}
