use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::{coupling_operator, geodesic_temporal_basis, phase_decompose, swapped_geodesic_temporal_basis, DEFAULT_MARGIN_TOL};
use crate::error::Result;
use crate::graph::{cycle_graph, knn_graph, path_graph, WeightMode};
use crate::linalg::{dft_matrix, relative_diff, unitarity_defect, unvec_columns, vec_columns, CMatrix, RMatrix};
use crate::operators::{dfrft_matrix, eigendecompose, FractionalOperator, OperatorKind, gft_matrix, graph_frft, unitary_fractional_power, DfrftMode};
use crate::transforms::{Family, Orders, PlanContext, TimeVertexSignal};
use crate::wiener::{closed_form_h, grad_h, grad_orders, loss, train, train_family, FilterParams, GradMode, Objective, TrainConfig};

use super::synth::random_points;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// `(n1, n2)` instances: a k-NN spatial graph on `n1` random points and a path of length `n2`.
    pub sizes: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    /// Perturb one entry of every operator by 1e-3 before its unitarity check.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            sizes: vec![(4, 3), (6, 5), (8, 4), (5, 2)],
            seeds: vec![1, 2],
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub instance: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn record(&mut self, name: &str, instance: &str, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            instance: instance.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        });
    }

    fn record_result(&mut self, name: &str, instance: &str, tolerance: f64, r: Result<f64>) {
        match r {
            Ok(v) => self.record(name, instance, v, tolerance),
            Err(e) => self.checks.push(Check {
                name: format!("{name} ({e})"),
                instance: instance.to_string(),
                value: f64::NAN,
                tolerance,
                passed: false,
            }),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            writeln!(
                f,
                "{} {:width$} {:>10} {:.3e} <= {:.1e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.instance,
                c.value,
                c.tolerance,
            )?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

const ORDERS: [f64; 5] = [-1.5, -0.5, 0.3, 1.0, 2.0];

fn perturbed(m: &CMatrix, inject: bool) -> CMatrix {
    let mut m = m.clone();
    if inject {
        m[(0, 0)] += Complex64::new(1e-3, 0.0);
    }
    m
}

fn random_complex(n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(n1, n2, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

fn random_real(n1: usize, n2: usize, rng: &mut ChaCha8Rng) -> RMatrix {
    RMatrix::from_fn(n1, n2, |_, _| rng.random::<f64>() - 0.5)
}

/// Runs the operator, coupling, transform and learning invariants on small
/// seeded instances plus the 4-cycle, returning a named pass/fail table.
pub fn verify_properties(opts: &VerifyOptions) -> VerifyReport {
    let mut report = VerifyReport::default();
    for &(n1, n2) in &opts.sizes {
        for &seed in &opts.seeds {
            verify_instance(&mut report, n1, n2, seed, opts.inject_fault);
        }
    }
    verify_degenerate(&mut report, opts.inject_fault);
    report
}

fn verify_instance(report: &mut VerifyReport, n1: usize, n2: usize, seed: u64, inject: bool) {
    let inst = format!("{n1}x{n2}/s{seed}");
    let g1 = match knn_graph(&random_points(n1, seed), 2.min(n1 - 1), WeightMode::Unit) {
        Ok(g) => g,
        Err(e) => return report.record_result("graph.knn", &inst, 0.0, Err(e)),
    };
    let g2 = match path_graph(n2) {
        Ok(g) => g,
        Err(e) => return report.record_result("graph.path", &inst, 0.0, Err(e)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let nf = n1 as f64;

    let a = g1.adjacency();
    report.record("graph.symmetric", &inst, (a - a.transpose()).amax(), 0.0);
    match eigendecompose(&g1) {
        Ok(b) => {
            report.record("graph.eigen_reconstruction", &inst, b.reconstruction_error(a), 1e-10 * nf);
            report.record("graph.eigen_orthogonality", &inst, b.orthogonality_defect(), 1e-10 * nf);
            report.record_result(
                "operators.gft_unitarity",
                &inst,
                1e-9 * nf,
                gft_matrix(&b).map(|f| unitarity_defect(&perturbed(f.matrix(), inject))),
            );
            for &alpha in &ORDERS {
                report.record_result(
                    "operators.gfrft_unitarity",
                    &inst,
                    1e-9 * nf,
                    graph_frft(&b, alpha).map(|f| unitarity_defect(&perturbed(f.matrix(), inject))),
                );
            }
            report.record_result("operators.gfrft_additivity", &inst, 1e-8 * nf, (|| {
                let p = graph_frft(&b, 0.3)?.into_matrix() * graph_frft(&b, 0.9)?.into_matrix();
                Ok((p - graph_frft(&b, 1.2)?.into_matrix()).norm())
            })());
            report.record_result("operators.gfrft_endpoints", &inst, 1e-8 * nf, (|| {
                let id = (graph_frft(&b, 0.0)?.into_matrix() - CMatrix::identity(n1, n1)).norm();
                let one = (graph_frft(&b, 1.0)?.into_matrix() - gft_matrix(&b)?.into_matrix()).norm();
                Ok(id.max(one))
            })());
        }
        Err(e) => report.record_result("graph.eigendecompose", &inst, 0.0, Err(e)),
    }

    let n2f = n2 as f64;
    for mode in [DfrftMode::Candan, DfrftMode::PrincipalShifted] {
        let tag = match mode {
            DfrftMode::Candan => "candan",
            DfrftMode::PrincipalShifted => "principal_shifted",
        };
        report.record_result(&format!("operators.dfrft_{tag}_is_dft"), &inst, 1e-8 * n2f, (|| {
            Ok((dfrft_matrix(n2, 1.0, mode)?.into_matrix() - dft_matrix(n2)).norm())
        })());
        report.record_result(&format!("operators.dfrft_{tag}_additivity"), &inst, 1e-8 * n2f, (|| {
            let p = dfrft_matrix(n2, -0.4, mode)?.into_matrix() * dfrft_matrix(n2, 1.1, mode)?.into_matrix();
            Ok((p - dfrft_matrix(n2, 0.7, mode)?.into_matrix()).norm())
        })());
        for &alpha in &ORDERS {
            report.record_result(
                &format!("operators.dfrft_{tag}_unitarity"),
                &inst,
                1e-9 * n2f,
                dfrft_matrix(n2, alpha, mode).map(|f| unitarity_defect(&perturbed(f.matrix(), inject))),
            );
        }
    }

    let ctx = match PlanContext::new(&g1, &g2) {
        Ok(c) => c,
        Err(e) => return report.record_result("transforms.context", &inst, 0.0, Err(e)),
    };
    verify_coupling(report, &ctx, &inst, inject);
    verify_transforms(report, &ctx, &inst, &mut rng, inject);
    verify_learning(report, &ctx, &inst, &mut rng);
}

fn verify_coupling(report: &mut VerifyReport, ctx: &PlanContext, inst: &str, inject: bool) {
    let n2 = ctx.n2();
    let n2f = n2 as f64;
    let beta = 0.3;
    let r: Result<()> = (|| {
        let tc = ctx.temporal_coupling(beta)?;
        let dec = tc.decomposition();
        report.record("coupling.w_reconstruction", inst, (dec.reconstruct() - tc.graph_basis().adjoint() * tc.dfrft_basis()).norm(), 1e-9 * n2f);
        report.record("coupling.s_unitarity", inst, dec.s_unitarity_defect(), 1e-9 * n2f);
        report.record("coupling.margin_positive", inst, -dec.margin(), -DEFAULT_MARGIN_TOL);
        report.record("coupling.lambda0_endpoint", inst, (tc.basis(0.0)? - tc.graph_basis()).norm(), 1e-8 * n2f);
        report.record("coupling.lambda1_endpoint", inst, (tc.basis(1.0)? - tc.dfrft_basis()).norm(), 1e-8 * n2f);
        let graph_op = ctx.temporal_spectrum().power(beta);
        let dfrft_op = ctx.dfrft_spectrum().power(beta);
        let swapped = phase_decompose(&(dfrft_op.adjoint() * &graph_op), DEFAULT_MARGIN_TOL)?;
        let graph_frac = FractionalOperator::from_spectrum(ctx.temporal_spectrum().clone(), beta, OperatorKind::Graph);
        let dfrft_frac = FractionalOperator::from_spectrum(ctx.dfrft_spectrum().clone(), beta, OperatorKind::Dfrft);
        report.record(
            "coupling.operator_matches_adjoint_product",
            inst,
            (coupling_operator(&graph_frac, &dfrft_frac)? - dec.reconstruct()).norm(),
            1e-9 * n2f,
        );
        let mut worst: f64 = 0.0;
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let fwd = geodesic_temporal_basis(&graph_frac, dec, 1.0 - lambda)?;
            let bwd = swapped_geodesic_temporal_basis(&dfrft_frac, &swapped, lambda)?;
            worst = worst.max(relative_diff(bwd.matrix(), fwd.matrix()));
            report.record("coupling.basis_unitarity", inst, unitarity_defect(&perturbed(fwd.matrix(), inject)), 1e-9 * n2f);
        }
        report.record("coupling.swap_symmetry", inst, worst, 1e-8);
        Ok(())
    })();
    if let Err(e) = r {
        report.record_result("coupling.construction", inst, 0.0, Err(e));
    }
}

fn verify_transforms(report: &mut VerifyReport, ctx: &PlanContext, inst: &str, rng: &mut ChaCha8Rng, inject: bool) {
    let (n1, n2) = (ctx.n1(), ctx.n2());
    let nf = (n1 * n2) as f64;
    let plans = [
        (Family::Gfrft2d, Orders::Shared(0.7), None),
        (Family::Gbfrft2d, Orders::pair(0.7, 0.3), None),
        (Family::Jfrft, Orders::pair(0.7, 0.3), None),
        (Family::Gcgfrft, Orders::pair(0.7, 0.3), Some(0.4)),
    ];
    let x = random_complex(n1, n2, rng);
    for (family, orders, lambda) in plans {
        let name = family.name();
        let kron = (|| {
            let plan = ctx.make_plan(family, orders, lambda)?;
            let k = plan.kronecker_matrix()?;
            let lhs = plan.forward_matrix(&x)?;
            let rhs = unvec_columns(&(&k * vec_columns(&x)), n1, n2);
            Ok((relative_diff(&lhs, &rhs), unitarity_defect(&perturbed(&k, inject))))
        })();
        match kron {
            Ok((equiv, defect)) => {
                report.record(&format!("transforms.{name}_kronecker"), inst, equiv, 1e-10);
                report.record(&format!("transforms.{name}_unitarity"), inst, defect, 1e-9 * nf);
            }
            Err(e) => report.record_result(&format!("transforms.{name}_kronecker"), inst, 1e-10, Err(e)),
        }
        report.record_result(&format!("transforms.{name}_round_trip"), inst, 1e-8, (|| {
            let plan = ctx.make_plan(family, orders, lambda)?;
            let back = plan.inverse_matrix(&plan.forward_matrix(&x)?)?;
            Ok(relative_diff(&back, &x))
        })());
        report.record_result(&format!("transforms.{name}_parseval"), inst, 1e-9, (|| {
            let plan = ctx.make_plan(family, orders, lambda)?;
            Ok((plan.forward_matrix(&x)?.norm() - x.norm()).abs() / x.norm())
        })());
    }
    report.record_result("transforms.additivity", inst, 1e-8, (|| {
        let a = ctx.make_plan(Family::Gcgfrft, Orders::pair(0.4, 0.3), Some(0.6))?;
        let b = ctx.make_plan(Family::Gcgfrft, Orders::pair(0.5, 0.3), Some(0.6))?;
        let spatial_sum = ctx.make_plan(Family::Gcgfrft, Orders::pair(0.9, 0.3), Some(0.6))?;
        let lhs = a.row_op().matrix() * b.row_op().matrix();
        Ok(relative_diff(&lhs, spatial_sum.row_op().matrix()))
    })());
    report.record_result("transforms.degeneracy_chain", inst, 1e-8, (|| {
        let y = ctx.make_plan(Family::Gcgfrft, Orders::pair(0.7, 0.3), Some(0.0))?.forward_matrix(&x)?;
        let z = ctx.make_plan(Family::Gbfrft2d, Orders::pair(0.7, 0.3), None)?.forward_matrix(&x)?;
        let u = ctx.make_plan(Family::Gcgfrft, Orders::pair(0.7, 0.3), Some(1.0))?.forward_matrix(&x)?;
        let v = ctx.make_plan(Family::Jfrft, Orders::pair(0.7, 0.3), None)?.forward_matrix(&x)?;
        Ok(relative_diff(&y, &z).max(relative_diff(&u, &v)))
    })());
    report.record_result("transforms.shared_order", inst, 1e-10, (|| {
        let y = ctx.make_plan(Family::Gbfrft2d, Orders::pair(0.7, 0.7), None)?.forward_matrix(&x)?;
        let z = ctx.make_plan(Family::Gfrft2d, Orders::Shared(0.7), None)?.forward_matrix(&x)?;
        Ok(relative_diff(&y, &z))
    })());
}

fn verify_learning(report: &mut VerifyReport, ctx: &PlanContext, inst: &str, rng: &mut ChaCha8Rng) {
    let (n1, n2) = (ctx.n1(), ctx.n2());
    let xr = random_real(n1, n2, rng);
    let yr = &xr + random_real(n1, n2, rng) * 0.5;
    let (Ok(x), Ok(y)) = (TimeVertexSignal::from_real(&xr), TimeVertexSignal::from_real(&yr)) else {
        return;
    };
    let h = RMatrix::from_fn(n1, n2, |_, _| 0.5 + rng.random::<f64>());
    let params = match FilterParams::new(0.6, 0.3, h, 0.4) {
        Ok(p) => p,
        Err(e) => return report.record_result("wiener.params", inst, 0.0, Err(e)),
    };

    for family in Family::ALL {
        let name = family.name();
        report.record_result(&format!("wiener.{name}_unitary_collapse"), inst, 1e-9, (|| {
            let spatial = loss(ctx, family, &y, &x, &params)?;
            let spectral = Objective::new(ctx, family, params.lambda(), &y, &x)?.loss(&params)?;
            Ok((spatial - spectral).abs() / spatial.max(f64::MIN_POSITIVE))
        })());
        report.record_result(&format!("wiener.{name}_grad_h"), inst, 1e-6, (|| {
            let g = grad_h(ctx, family, &y, &x, &params)?;
            let mut err: f64 = 0.0;
            let eps = 1e-6;
            for k in 0..g.len() {
                let mut p = params.clone();
                p.h[k] += eps;
                let up = loss(ctx, family, &y, &x, &p)?;
                p.h[k] -= 2.0 * eps;
                let down = loss(ctx, family, &y, &x, &p)?;
                err = err.max(((up - down) / (2.0 * eps) - g[k]).abs());
            }
            Ok(err / g.amax().max(f64::MIN_POSITIVE))
        })());
        report.record_result(&format!("wiener.{name}_analytic_orders"), inst, 1e-5, (|| {
            let fd = grad_orders(ctx, family, &y, &x, &params, GradMode::Fd, 1e-5)?;
            let an = grad_orders(ctx, family, &y, &x, &params, GradMode::Analytic, 0.0)?;
            let diff = (fd.0 - an.0).hypot(fd.1 - an.1);
            Ok(diff / an.0.hypot(an.1).max(f64::MIN_POSITIVE))
        })());
    }

    report.record_result("wiener.closed_form_optimality", inst, 1e-9, (|| {
        let h_only = TrainConfig {
            lr_orders: 0.0,
            init_order: 0.3,
            ..TrainConfig::default()
        };
        let gd = train(ctx, &y, &x, 0.4, &h_only)?;
        let mut p = gd.params.clone();
        p.h = closed_form_h(ctx, Family::Gcgfrft, &y, &x, &p)?;
        let best = loss(ctx, Family::Gcgfrft, &y, &x, &p)?;
        Ok((best - gd.final_loss).max(0.0))
    })());
    report.record_result("wiener.determinism_and_lambda_fixed", inst, 0.0, (|| {
        let cfg = TrainConfig {
            epochs: 10,
            init_order: 0.3,
            ..TrainConfig::default()
        };
        let a = train_family(ctx, Family::Gcgfrft, &y, &x, 0.4, &cfg)?;
        let b = train_family(ctx, Family::Gcgfrft, &y, &x, 0.4, &cfg)?;
        let same = a.trace == b.trace && a.params == b.params && a.params.lambda().to_bits() == 0.4f64.to_bits();
        Ok(if same { 0.0 } else { 1.0 })
    })());
}

/// The 4-cycle has adjacency eigenvalue 0 twice, so `exp(jA)` has a repeated
/// eigenvalue; its fractional power must not depend on the eigenvector choice.
fn verify_degenerate(report: &mut VerifyReport, inject: bool) {
    let inst = "C4";
    let r: Result<()> = (|| {
        let g = cycle_graph(4)?;
        let b = eigendecompose(&g)?;
        let v = b.v().map(|x| Complex64::new(x, 0.0));
        let lam = b.lambda();
        let zero: Vec<usize> = (0..4).filter(|&i| lam[i].abs() < 1e-10).collect();
        report.record("degenerate.repeated_eigenvalue_present", inst, if zero.len() == 2 { 0.0 } else { 1.0 }, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let build = |rng: &mut ChaCha8Rng| {
            let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let mut mixed = v.clone();
            let (c0, c1) = (v.column(zero[0]).into_owned(), v.column(zero[1]).into_owned());
            mixed.set_column(zero[0], &(&c0 * Complex64::new(t.cos(), 0.0) + &c1 * Complex64::new(t.sin(), 0.0)));
            mixed.set_column(zero[1], &(&c1 * Complex64::new(t.cos(), 0.0) - &c0 * Complex64::new(t.sin(), 0.0)));
            let d: Vec<Complex64> = (0..4).map(|i| Complex64::from_polar(1.0, lam[i])).collect();
            crate::linalg::scale_columns(&mixed, &d) * mixed.adjoint()
        };
        let u1 = build(&mut rng);
        let u2 = build(&mut rng);
        let alpha = 0.37;
        let expected = {
            let d: Vec<Complex64> = (0..4).map(|i| Complex64::from_polar(1.0, alpha * lam[i])).collect();
            crate::linalg::scale_columns(&v, &d) * v.adjoint()
        };
        let p1 = unitary_fractional_power(&u1, alpha)?;
        let p2 = unitary_fractional_power(&u2, alpha)?;
        report.record("degenerate.eigenspace_independence", inst, (p1.matrix() - p2.matrix()).norm(), 1e-8 * 4.0);
        report.record("degenerate.matches_spectral_power", inst, (p1.matrix() - expected).norm(), 1e-8 * 4.0);
        report.record("degenerate.unitarity", inst, unitarity_defect(&perturbed(p1.matrix(), inject)), 1e-9 * 4.0);
        let f = graph_frft(&b, 0.5)?;
        report.record("degenerate.gfrft_unitarity", inst, unitarity_defect(&perturbed(f.matrix(), inject)), 1e-9 * 4.0);
        Ok(())
    })();
    if let Err(e) = r {
        report.record_result("degenerate.construction", inst, 0.0, Err(e));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let r = verify_properties(&VerifyOptions::default());
        assert!(r.all_passed(), "{r}");
        assert!(r.checks.iter().any(|c| c.name == "degenerate.eigenspace_independence"));
        assert!(r.checks.len() > 100);
    }

    #[test]
    fn injected_fault_is_detected() {
        let opts = VerifyOptions {
            sizes: vec![(4, 3)],
            seeds: vec![1],
            inject_fault: true,
        };
        let r = verify_properties(&opts);
        assert!(!r.all_passed());
        assert!(r.failures().all(|c| c.name.contains("unitarity")));
        assert!(r.failures().any(|c| c.name == "operators.gfrft_unitarity"));
    }

    #[test]
    fn csv_table_lists_every_check() {
        let r = verify_properties(&VerifyOptions {
            sizes: vec![(3, 2)],
            seeds: vec![1],
            inject_fault: false,
        });
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), r.checks.len() + 1);
        assert!(text.starts_with("name,instance,value,tolerance,passed"));
    }
}
