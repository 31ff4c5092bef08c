//! Geodesic coupling between the graph-induced temporal basis and the DFRFT.
//!
//! `W_t = (F_G2^β)^H F^β` is decomposed once per β as `S diag(e^{jθ}) S^H`
//! with principal phases; the coupled basis at λ is then
//! `F_G2^β S diag(e^{jλθ}) S^H`, so sweeping λ only touches the phase factors.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{unitarity_defect, CMatrix};
use crate::operators::{check_unitary, normal_eigen, principal_phase, FractionalOperator, OperatorKind, PhaseSpectrum, INPUT_UNITARY_TOL};

/// Default minimum distance (radians) of every coupling eigenphase from ±π.
pub const DEFAULT_MARGIN_TOL: f64 = 1e-6;

/// Relative change of basis `W_t = (F_G2^β)^H F^β`.
pub fn coupling_operator(f_g2_beta: &FractionalOperator, f_beta: &FractionalOperator) -> Result<CMatrix> {
    coupling_from_matrices(f_g2_beta.matrix(), f_beta.matrix())
}

pub(crate) fn coupling_from_matrices(anchor: &CMatrix, target: &CMatrix) -> Result<CMatrix> {
    if anchor.shape() != target.shape() {
        return Err(Error::shape(
            format!("{:?}", anchor.shape()),
            format!("{:?}", target.shape()),
        ));
    }
    check_unitary(anchor, INPUT_UNITARY_TOL)?;
    check_unitary(target, INPUT_UNITARY_TOL)?;
    Ok(anchor.adjoint() * target)
}

/// `W_t = S_t diag(e^{jθ}) S_t^H` with every `|θ_k| < π − margin_tol`.
#[derive(Debug, Clone)]
pub struct CouplingDecomposition {
    spectrum: Arc<PhaseSpectrum>,
    margin: f64,
}

impl CouplingDecomposition {
    pub fn s(&self) -> &CMatrix {
        self.spectrum.basis()
    }

    pub fn theta(&self) -> &[f64] {
        self.spectrum.phases()
    }

    /// `min_k (π − |θ_k|)`.
    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn spectrum(&self) -> &Arc<PhaseSpectrum> {
        &self.spectrum
    }

    /// `exp(λ log W_t) = S diag(e^{jλθ}) S^H`.
    pub fn interpolant(&self, lambda: f64) -> CMatrix {
        self.spectrum.power(lambda)
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.spectrum.power(1.0)
    }

    pub fn s_unitarity_defect(&self) -> f64 {
        unitarity_defect(self.s())
    }

    /// CSV rows `k,theta,distance_to_pi`, closed by a `margin` row.
    pub fn write_diagnostics<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "theta", "distance_to_pi"])?;
        for (k, &t) in self.theta().iter().enumerate() {
            w.write_record([k.to_string(), t.to_string(), (PI - t.abs()).to_string()])?;
        }
        w.write_record(["margin".to_string(), String::new(), self.margin.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Eigen-phase decomposition of a unitary coupling operator.
///
/// Fails with [`Error::AssumptionViolated`] when some eigenphase lies within
/// `margin_tol` of ±π, where the principal logarithm is undefined.
pub fn phase_decompose(w: &CMatrix, margin_tol: f64) -> Result<CouplingDecomposition> {
    check_unitary(w, INPUT_UNITARY_TOL)?;
    let (basis, eigenvalues) = normal_eigen(w)?;
    let theta: Vec<f64> = eigenvalues.iter().map(|&mu| principal_phase(mu)).collect();
    let (index, margin) = theta
        .iter()
        .map(|t| PI - t.abs())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty spectrum");
    if margin <= margin_tol {
        return Err(Error::AssumptionViolated {
            margin,
            index,
            phase: theta[index],
            tol: margin_tol,
        });
    }
    Ok(CouplingDecomposition {
        spectrum: Arc::new(PhaseSpectrum::from_parts(basis, theta)),
        margin,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("coupling lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// `F_t,GC = F_G2^β · S diag(e^{jλθ}) S^H`.
pub fn geodesic_temporal_basis(
    f_g2_beta: &FractionalOperator,
    decomp: &CouplingDecomposition,
    lambda: f64,
) -> Result<FractionalOperator> {
    anchored_basis(f_g2_beta.matrix(), decomp, lambda)
}

/// The same curve walked from the DFRFT end: `F^β · exp(λ log((F^β)^H F_G2^β))`.
/// `swapped_decomp` decomposes `(F^β)^H F_G2^β`.
pub fn swapped_geodesic_temporal_basis(
    f_beta: &FractionalOperator,
    swapped_decomp: &CouplingDecomposition,
    lambda: f64,
) -> Result<FractionalOperator> {
    anchored_basis(f_beta.matrix(), swapped_decomp, lambda)
}

fn anchored_basis(anchor: &CMatrix, decomp: &CouplingDecomposition, lambda: f64) -> Result<FractionalOperator> {
    check_lambda(lambda)?;
    if anchor.nrows() != decomp.theta().len() {
        return Err(Error::shape(
            format!("{} x {}", decomp.theta().len(), decomp.theta().len()),
            format!("{} x {}", anchor.nrows(), anchor.ncols()),
        ));
    }
    Ok(FractionalOperator::anchored(
        anchor.clone(),
        decomp.spectrum.clone(),
        lambda,
        OperatorKind::Geodesic,
    ))
}

/// Both temporal endpoints at one β plus the decomposition of their coupling.
#[derive(Debug, Clone)]
pub struct TemporalCoupling {
    beta: f64,
    graph_basis: CMatrix,
    dfrft_basis: CMatrix,
    decomp: CouplingDecomposition,
}

impl TemporalCoupling {
    /// Builds `F_G2^β`, `F^β` from cached spectra and decomposes `W_t(β)`.
    pub fn new(graph: &PhaseSpectrum, dfrft: &PhaseSpectrum, beta: f64, margin_tol: f64) -> Result<Self> {
        if graph.dim() != dfrft.dim() {
            return Err(Error::shape(format!("temporal size {}", graph.dim()), format!("DFRFT size {}", dfrft.dim())));
        }
        let graph_basis = graph.power(beta);
        let dfrft_basis = dfrft.power(beta);
        let w = graph_basis.adjoint() * &dfrft_basis;
        let decomp = phase_decompose(&w, margin_tol)?;
        Ok(TemporalCoupling {
            beta,
            graph_basis,
            dfrft_basis,
            decomp,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn graph_basis(&self) -> &CMatrix {
        &self.graph_basis
    }

    pub fn dfrft_basis(&self) -> &CMatrix {
        &self.dfrft_basis
    }

    pub fn decomposition(&self) -> &CouplingDecomposition {
        &self.decomp
    }

    /// Coupled temporal basis at `lambda` as a plain matrix.
    pub fn basis(&self, lambda: f64) -> Result<CMatrix> {
        check_lambda(lambda)?;
        Ok(&self.graph_basis * self.decomp.interpolant(lambda))
    }

    pub fn operator(&self, lambda: f64) -> Result<FractionalOperator> {
        anchored_basis(&self.graph_basis, &self.decomp, lambda)
    }
}

/// Divided differences of `z ↦ z^λ` (principal branch) on the unit-circle
/// eigenvalues `e^{jθ}`; the Fréchet derivative of `W ↦ W^λ` at
/// `W = S diag(e^{jθ}) S^H` in direction `E` is `S (Γ ∘ (S^H E S)) S^H`.
pub(crate) fn power_divided_differences(theta: &[f64], lambda: f64) -> CMatrix {
    let n = theta.len();
    CMatrix::from_fn(n, n, |i, k| {
        let (ti, tk) = (theta[i], theta[k]);
        if (ti - tk).abs() < 1e-8 {
            let t = 0.5 * (ti + tk);
            Complex64::from_polar(lambda, (lambda - 1.0) * t)
        } else {
            let num = Complex64::from_polar(1.0, lambda * ti) - Complex64::from_polar(1.0, lambda * tk);
            let den = Complex64::from_polar(1.0, ti) - Complex64::from_polar(1.0, tk);
            num / den
        }
    })
}
