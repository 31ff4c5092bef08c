//! Separable application of the four transform families to time-vertex signals.
//!
//! A plan pairs a row operator (size `n1`, spatial factor) with a column
//! operator (size `n2`, temporal factor) and applies `X̂ = F_row X F_col^T`.
//! With column-stacked `vec`, this is `(F_col ⊗ F_row) vec(X)`; the Kronecker
//! matrix is only ever built by [`TransformPlan::kronecker_matrix`] for checks.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{TemporalCoupling, DEFAULT_MARGIN_TOL};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{all_finite, real_part, to_complex, CMatrix, RMatrix};
use crate::operators::{
    dfrft_spectrum, eigendecompose, graph_spectrum, DfrftMode, FractionalOperator, OperatorKind, PhaseSpectrum,
    SpectralBasis,
};

/// Largest `n1 * n2` for which [`TransformPlan::kronecker_matrix`] will materialize.
pub const KRONECKER_CAP: usize = 4096;

/// An `n1 x n2` signal: rows are vertices of the spatial graph, columns are time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVertexSignal {
    data: CMatrix,
    real_flag: bool,
}

impl TimeVertexSignal {
    pub fn from_complex(data: CMatrix) -> Result<Self> {
        if !all_finite(&data) {
            return Err(Error::NumericInput("signal has non-finite entries".into()));
        }
        Ok(TimeVertexSignal { data, real_flag: false })
    }

    pub fn from_real(data: &RMatrix) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericInput("signal has non-finite entries".into()));
        }
        Ok(TimeVertexSignal {
            data: to_complex(data),
            real_flag: true,
        })
    }

    pub(crate) fn with_flag(data: CMatrix, real_flag: bool) -> Self {
        TimeVertexSignal { data, real_flag }
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn real_flag(&self) -> bool {
        self.real_flag
    }

    pub fn n1(&self) -> usize {
        self.data.nrows()
    }

    pub fn n2(&self) -> usize {
        self.data.ncols()
    }

    pub fn real_part(&self) -> RMatrix {
        real_part(&self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Headerless CSV, `n1` lines of `n2` values (real parts only).
    pub fn write_real_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_real_matrix_csv(&self.real_part(), writer)
    }

    pub fn read_real_csv<R: Read>(reader: R) -> Result<Self> {
        TimeVertexSignal::from_real(&read_real_matrix_csv(reader)?)
    }

    /// Writes the real and imaginary parts as two headerless CSVs.
    pub fn write_complex_csv<W1: Write, W2: Write>(&self, re: W1, im: W2) -> Result<()> {
        write_real_matrix_csv(&self.data.map(|z| z.re), re)?;
        write_real_matrix_csv(&self.data.map(|z| z.im), im)
    }

    pub fn read_complex_csv<R1: Read, R2: Read>(re: R1, im: R2) -> Result<Self> {
        let re = read_real_matrix_csv(re)?;
        let im = read_real_matrix_csv(im)?;
        if re.shape() != im.shape() {
            return Err(Error::shape(format!("{:?}", re.shape()), format!("{:?}", im.shape())));
        }
        TimeVertexSignal::from_complex(CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
            Complex64::new(re[(i, j)], im[(i, j)])
        }))
    }
}

pub fn write_real_matrix_csv<W: Write>(m: &RMatrix, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_real_matrix_csv<R: Read>(reader: R) -> Result<RMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad value {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::shape(format!("{} columns", first.len()), format!("{} in row {}", row.len(), rows.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    Ok(RMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}

/// The four separable transform families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// One shared order on both graph factors.
    Gfrft2d,
    /// Independent orders on the two graph factors.
    Gbfrft2d,
    /// Graph basis in space, DFRFT in time.
    Jfrft,
    /// Graph basis in space, geodesic-coupled basis in time.
    Gcgfrft,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Gfrft2d, Family::Gbfrft2d, Family::Jfrft, Family::Gcgfrft];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gfrft2d => "gfrft2d",
            Family::Gbfrft2d => "gbfrft2d",
            Family::Jfrft => "jfrft",
            Family::Gcgfrft => "gcgfrft",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown family {s:?} (expected gfrft2d, gbfrft2d, jfrft or gcgfrft)")))
    }
}

/// Fractional orders, always named by axis.
///
/// The JFRFT literature writes the graph order as β and the DFRFT order as α,
/// the GC-GFRFT the other way round; here `spatial` is the row (graph `G1`)
/// order and `temporal` the column order for every family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Orders {
    Shared(f64),
    Pair { spatial: f64, temporal: f64 },
}

impl Orders {
    pub fn pair(spatial: f64, temporal: f64) -> Self {
        Orders::Pair { spatial, temporal }
    }

    pub fn spatial(&self) -> f64 {
        match *self {
            Orders::Shared(a) => a,
            Orders::Pair { spatial, .. } => spatial,
        }
    }

    pub fn temporal(&self) -> f64 {
        match *self {
            Orders::Shared(a) => a,
            Orders::Pair { temporal, .. } => temporal,
        }
    }
}

/// Sidecar metadata written next to a transformed signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMetadata {
    pub n1: usize,
    pub n2: usize,
    pub family: Option<Family>,
    pub orders: Option<Orders>,
    pub lambda: Option<f64>,
}

/// Row and column operators for one family at fixed orders.
#[derive(Debug, Clone)]
pub struct TransformPlan {
    row_op: FractionalOperator,
    col_op: FractionalOperator,
    family: Family,
    orders: Orders,
    lambda: Option<f64>,
}

impl TransformPlan {
    /// Assembles a plan from explicit operators; both must be unitary.
    pub fn from_operators(
        row_op: FractionalOperator,
        col_op: FractionalOperator,
        family: Family,
        orders: Orders,
        lambda: Option<f64>,
    ) -> Result<Self> {
        check_family_orders(family, &orders, lambda)?;
        for op in [&row_op, &col_op] {
            let tol = crate::operators::INPUT_UNITARY_TOL * op.dim() as f64;
            let defect = op.unitarity_defect();
            if defect > tol {
                return Err(Error::NotUnitary { defect, tol });
            }
        }
        Ok(TransformPlan {
            row_op,
            col_op,
            family,
            orders,
            lambda,
        })
    }

    pub fn row_op(&self) -> &FractionalOperator {
        &self.row_op
    }

    pub fn col_op(&self) -> &FractionalOperator {
        &self.col_op
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn orders(&self) -> Orders {
        self.orders
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row_op.dim(), self.col_op.dim())
    }

    fn check_shape(&self, x: &CMatrix) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::shape(format!("{:?}", self.shape()), format!("{:?}", x.shape())));
        }
        Ok(())
    }

    /// `X̂ = F_row · X · F_col^T`.
    pub fn forward(&self, x: &TimeVertexSignal) -> Result<TimeVertexSignal> {
        Ok(TimeVertexSignal::with_flag(self.forward_matrix(x.data())?, x.real_flag()))
    }

    /// `X = F_row^H · X̂ · F_col^*`.
    pub fn inverse(&self, xh: &TimeVertexSignal) -> Result<TimeVertexSignal> {
        Ok(TimeVertexSignal::with_flag(self.inverse_matrix(xh.data())?, xh.real_flag()))
    }

    pub fn forward_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check_shape(x)?;
        Ok(self.row_op.matrix() * x * self.col_op.matrix().transpose())
    }

    pub fn inverse_matrix(&self, xh: &CMatrix) -> Result<CMatrix> {
        self.check_shape(xh)?;
        Ok(self.row_op.matrix().adjoint() * xh * self.col_op.matrix().conjugate())
    }

    /// `F_col ⊗ F_row`, for validation only (refuses above [`KRONECKER_CAP`] vertices).
    pub fn kronecker_matrix(&self) -> Result<CMatrix> {
        let (n1, n2) = self.shape();
        if n1 * n2 > KRONECKER_CAP {
            return Err(Error::InvalidSize(format!(
                "{n1}x{n2} product exceeds the Kronecker materialization cap {KRONECKER_CAP}"
            )));
        }
        Ok(self.col_op.matrix().kronecker(self.row_op.matrix()))
    }

    pub fn metadata(&self) -> SignalMetadata {
        SignalMetadata {
            n1: self.row_op.dim(),
            n2: self.col_op.dim(),
            family: Some(self.family),
            orders: Some(self.orders),
            lambda: self.lambda,
        }
    }
}

fn check_family_orders(family: Family, orders: &Orders, lambda: Option<f64>) -> Result<()> {
    match (family, orders) {
        (Family::Gfrft2d, Orders::Shared(_)) => {}
        (Family::Gfrft2d, Orders::Pair { .. }) => {
            return Err(Error::OrderArity("gfrft2d takes one shared order".into()));
        }
        (_, Orders::Shared(_)) => {
            return Err(Error::OrderArity(format!("{family} takes a (spatial, temporal) order pair")));
        }
        _ => {}
    }
    if !orders.spatial().is_finite() || !orders.temporal().is_finite() {
        return Err(Error::NumericInput("orders must be finite".into()));
    }
    match (family, lambda) {
        (Family::Gcgfrft, None) => Err(Error::OrderArity("gcgfrft needs a coupling lambda".into())),
        (Family::Gcgfrft, Some(l)) if !(0.0..=1.0).contains(&l) => {
            Err(Error::Domain(format!("coupling lambda must lie in [0, 1], got {l}")))
        }
        (Family::Gcgfrft, Some(_)) => Ok(()),
        (_, Some(_)) => Err(Error::OrderArity(format!("{family} has no coupling lambda"))),
        (_, None) => Ok(()),
    }
}

/// Cached spectral data for one product graph: the two graph Fourier
/// decompositions and the DFRFT of the temporal size. Built once; every plan,
/// order and λ afterwards only re-evaluates phase factors (plus an `n2 x n2`
/// coupling factorization per temporal order).
#[derive(Debug, Clone)]
pub struct PlanContext {
    spatial_basis: SpectralBasis,
    temporal_basis: SpectralBasis,
    spatial: Arc<PhaseSpectrum>,
    temporal: Arc<PhaseSpectrum>,
    dfrft: Arc<PhaseSpectrum>,
    dfrft_mode: DfrftMode,
    margin_tol: f64,
}

impl PlanContext {
    pub fn new(g1: &Graph, g2: &Graph) -> Result<Self> {
        PlanContext::with_options(g1, g2, DfrftMode::Candan, DEFAULT_MARGIN_TOL)
    }

    pub fn with_options(g1: &Graph, g2: &Graph, dfrft_mode: DfrftMode, margin_tol: f64) -> Result<Self> {
        let spatial_basis = eigendecompose(g1)?;
        let temporal_basis = eigendecompose(g2)?;
        let spatial = graph_spectrum(&spatial_basis)?;
        let temporal = graph_spectrum(&temporal_basis)?;
        let dfrft = if g2.n() == 1 {
            Arc::new(PhaseSpectrum::from_parts(CMatrix::identity(1, 1), vec![0.0]))
        } else {
            dfrft_spectrum(g2.n(), dfrft_mode)?
        };
        Ok(PlanContext {
            spatial_basis,
            temporal_basis,
            spatial,
            temporal,
            dfrft,
            dfrft_mode,
            margin_tol,
        })
    }

    pub fn n1(&self) -> usize {
        self.spatial.dim()
    }

    pub fn n2(&self) -> usize {
        self.temporal.dim()
    }

    pub fn spatial_basis(&self) -> &SpectralBasis {
        &self.spatial_basis
    }

    pub fn temporal_basis(&self) -> &SpectralBasis {
        &self.temporal_basis
    }

    pub fn spatial_spectrum(&self) -> &Arc<PhaseSpectrum> {
        &self.spatial
    }

    pub fn temporal_spectrum(&self) -> &Arc<PhaseSpectrum> {
        &self.temporal
    }

    pub fn dfrft_spectrum(&self) -> &Arc<PhaseSpectrum> {
        &self.dfrft
    }

    pub fn dfrft_mode(&self) -> DfrftMode {
        self.dfrft_mode
    }

    pub fn margin_tol(&self) -> f64 {
        self.margin_tol
    }

    pub fn temporal_coupling(&self, beta: f64) -> Result<TemporalCoupling> {
        TemporalCoupling::new(&self.temporal, &self.dfrft, beta, self.margin_tol)
    }

    pub fn make_plan(&self, family: Family, orders: Orders, lambda: Option<f64>) -> Result<TransformPlan> {
        check_family_orders(family, &orders, lambda)?;
        let row = FractionalOperator::from_spectrum(self.spatial.clone(), orders.spatial(), OperatorKind::Graph);
        let col = match family {
            Family::Gfrft2d | Family::Gbfrft2d => {
                FractionalOperator::from_spectrum(self.temporal.clone(), orders.temporal(), OperatorKind::Graph)
            }
            Family::Jfrft => FractionalOperator::from_spectrum(self.dfrft.clone(), orders.temporal(), OperatorKind::Dfrft),
            Family::Gcgfrft => {
                let lambda = lambda.expect("checked above");
                self.temporal_coupling(orders.temporal())?.operator(lambda)?
            }
        };
        Ok(TransformPlan {
            row_op: row,
            col_op: col,
            family,
            orders,
            lambda,
        })
    }
}

pub fn make_plan(ctx: &PlanContext, family: Family, orders: Orders, lambda: Option<f64>) -> Result<TransformPlan> {
    ctx.make_plan(family, orders, lambda)
}

pub fn forward(plan: &TransformPlan, x: &TimeVertexSignal) -> Result<TimeVertexSignal> {
    plan.forward(x)
}

pub fn inverse(plan: &TransformPlan, xh: &TimeVertexSignal) -> Result<TimeVertexSignal> {
    plan.inverse(xh)
}
