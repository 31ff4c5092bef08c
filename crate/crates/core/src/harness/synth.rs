use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{path_graph, Graph};
use crate::linalg::RMatrix;
use crate::operators::eigendecompose;
use crate::transforms::TimeVertexSignal;

fn mode_count(bandwidth: f64, n: usize) -> usize {
    ((bandwidth * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

fn leading_modes(g: Option<&Graph>, n: usize, m: usize) -> Result<RMatrix> {
    match g {
        Some(g) => Ok(eigendecompose(g)?.v().columns(0, m).into_owned()),
        None => Ok(RMatrix::from_element(n, 1, 1.0)),
    }
}

/// Band-limited Gaussian field: i.i.d. standard normal coefficients on the
/// leading `⌈b·n1⌉` graph modes and `⌈b·n2⌉` path-graph modes (descending
/// eigenvalue order), scaled so that `‖X‖_F² = n1·n2`.
pub fn synth_signal(g1: &Graph, n2: usize, bandwidth: f64, seed: u64) -> Result<TimeVertexSignal> {
    if !(bandwidth > 0.0 && bandwidth <= 1.0) {
        return Err(Error::Domain(format!("bandwidth must lie in (0, 1], got {bandwidth}")));
    }
    if n2 == 0 {
        return Err(Error::InvalidSize("signal needs at least one time sample".into()));
    }
    let n1 = g1.n();
    let (m1, m2) = (mode_count(bandwidth, n1), mode_count(bandwidth, n2));
    let v1 = leading_modes(Some(g1), n1, m1)?;
    let path = if n2 >= 2 { Some(path_graph(n2)?) } else { None };
    let v2 = leading_modes(path.as_ref(), n2, m2)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = RMatrix::zeros(m1, m2);
    for i in 0..m1 {
        for j in 0..m2 {
            coeffs[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let x = v1 * coeffs * v2.transpose();
    let energy = x.norm_squared();
    if energy == 0.0 {
        return Err(Error::NumericInput("synthesized signal has zero energy".into()));
    }
    TimeVertexSignal::from_real(&(x * ((n1 * n2) as f64 / energy).sqrt()))
}

/// `Y = X + σ·Z` with `Z` i.i.d. standard normal, drawn row-major from a seeded stream.
pub fn add_awgn(x: &TimeVertexSignal, sigma: f64, seed: u64) -> Result<TimeVertexSignal> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise level must be non-negative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = x.data().clone();
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let z: f64 = rng.sample(StandardNormal);
            y[(i, j)].re += sigma * z;
        }
    }
    Ok(TimeVertexSignal::with_flag(y, x.real_flag()))
}

/// `n` points drawn uniformly from the unit square.
pub fn random_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
}
