use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMatrix;
use crate::transforms::{write_real_matrix_csv, Family, PlanContext, TimeVertexSignal};
use crate::wiener::{closed_form_h, denoise_with, train, train_family, FilterParams, TrainOutcome};

use super::config::BenchmarkConfig;
use super::metrics::{metrics, opt_float, Metrics};
use super::synth::{add_awgn, synth_signal};

pub const NOISY_METHOD: &str = "noisy";
pub const ORACLE_METHOD: &str = "oracle_wiener";

/// One scored estimate. Failed rows keep `status` as the error text and leave metrics empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub status: String,
    #[serde(with = "opt_float")]
    pub mse: Option<f64>,
    #[serde(with = "opt_float")]
    pub psnr: Option<f64>,
    #[serde(with = "opt_float")]
    pub ssim: Option<f64>,
    #[serde(with = "opt_float")]
    pub alpha: Option<f64>,
    #[serde(with = "opt_float")]
    pub beta: Option<f64>,
    #[serde(with = "opt_float")]
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    #[serde(with = "opt_float")]
    pub initial_loss: Option<f64>,
    #[serde(with = "opt_float")]
    pub final_loss: Option<f64>,
    pub estimate_file: Option<String>,
}

/// The coupled family trained at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub seed: u64,
    pub lambda: f64,
    pub status: String,
    #[serde(with = "opt_float")]
    pub final_loss: Option<f64>,
    #[serde(with = "opt_float")]
    pub mse: Option<f64>,
    #[serde(with = "opt_float")]
    pub psnr: Option<f64>,
    #[serde(with = "opt_float")]
    pub ssim: Option<f64>,
    #[serde(with = "opt_float")]
    pub alpha: Option<f64>,
    #[serde(with = "opt_float")]
    pub beta: Option<f64>,
}

/// Mean metrics of the successful rows of one (method, σ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub sigma: f64,
    pub rows: usize,
    #[serde(with = "opt_float")]
    pub mean_mse: Option<f64>,
    #[serde(with = "opt_float")]
    pub mean_psnr: Option<f64>,
    #[serde(with = "opt_float")]
    pub mean_ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Everything a benchmark produced. Wall times live in `timings` only, so
/// `report.csv` / `report.json` are reproducible byte for byte.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
    pub sweep: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
    pub timings: Vec<TimingRow>,
    /// Clean signal per seed.
    pub signals: Vec<(u64, RMatrix)>,
    /// Estimates keyed by the row's `estimate_file`.
    pub estimates: Vec<(String, RMatrix)>,
    pub params: Vec<(String, FilterParams)>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    rows: &'a [ReportRow],
    lambda_sweep: &'a [SweepRow],
    summary: &'a [SummaryRow],
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl MetricReport {
    pub fn report_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn report_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ReportJson {
            rows: &self.rows,
            lambda_sweep: &self.sweep,
            summary: &self.summary,
        })?)
    }

    /// Writes `report.csv`, `report.json`, `lambda_sweep.csv`, `timings.csv`,
    /// and the persisted signals, estimates and learned parameters.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("estimates"))?;
        fs::create_dir_all(dir.join("signals"))?;
        fs::create_dir_all(dir.join("params"))?;
        fs::write(dir.join("report.csv"), self.report_csv()?)?;
        fs::write(dir.join("report.json"), self.report_json()?)?;
        write_csv(&dir.join("lambda_sweep.csv"), &self.sweep)?;
        write_csv(&dir.join("timings.csv"), &self.timings)?;
        for (seed, x) in &self.signals {
            write_real_matrix_csv(x, BufWriter::new(File::create(dir.join(signal_file(*seed)))?))?;
        }
        for (name, m) in &self.estimates {
            write_real_matrix_csv(m, BufWriter::new(File::create(dir.join(name))?))?;
        }
        for (name, p) in &self.params {
            fs::write(dir.join(name), serde_json::to_string_pretty(&p.to_json())?)?;
        }
        Ok(())
    }
}

pub fn signal_file(seed: u64) -> String {
    format!("signals/x_seed{seed}.csv")
}

fn estimate_file(method: &str, sigma: f64, seed: u64) -> String {
    format!("estimates/{method}_sigma{sigma}_seed{seed}.csv")
}

fn params_file(method: &str, sigma: f64, seed: u64) -> String {
    format!("params/{method}_sigma{sigma}_seed{seed}.json")
}

fn noise_seed(seed: u64, sigma: f64) -> u64 {
    seed.rotate_left(32) ^ sigma.to_bits() ^ 0x9e37_79b9_7f4a_7c15
}

struct Scored {
    row: ReportRow,
    estimate: Option<RMatrix>,
    params: Option<FilterParams>,
    wall_time: f64,
}

fn failed(method: &str, sigma: f64, seed: u64, e: &Error) -> ReportRow {
    ReportRow {
        method: method.to_string(),
        sigma,
        seed,
        status: format!("error: {e}"),
        mse: None,
        psnr: None,
        ssim: None,
        alpha: None,
        beta: None,
        lambda: None,
        epochs: None,
        initial_loss: None,
        final_loss: None,
        estimate_file: None,
    }
}

fn scored_row(method: &str, sigma: f64, seed: u64, m: &Metrics) -> ReportRow {
    ReportRow {
        status: "ok".into(),
        mse: Some(m.mse),
        psnr: Some(m.psnr),
        ssim: Some(m.ssim),
        estimate_file: Some(estimate_file(method, sigma, seed)),
        ..failed(method, sigma, seed, &Error::Config(String::new()))
    }
}

type Trained = (TrainOutcome, Metrics, RMatrix);

struct Case<'a> {
    ctx: &'a PlanContext,
    cfg: &'a BenchmarkConfig,
    sigma: f64,
    seed: u64,
    x: TimeVertexSignal,
    y: TimeVertexSignal,
    max_value: f64,
}

impl Case<'_> {
    fn score(&self, params: &FilterParams, family: Family) -> Result<(Metrics, RMatrix)> {
        let est = denoise_with(self.ctx, family, &self.y, params)?.estimate.real_part();
        Ok((metrics(&self.x.real_part(), &est, self.max_value)?, est))
    }

    fn trained(&self, method: &str, family: Family, out: &TrainOutcome, m: &Metrics) -> ReportRow {
        ReportRow {
            alpha: Some(out.params.alpha),
            beta: Some(out.params.beta),
            lambda: (family == Family::Gcgfrft).then_some(out.params.lambda()),
            epochs: Some(out.trace.len()),
            initial_loss: out.trace.first().map(|t| t.loss),
            final_loss: Some(out.final_loss),
            ..scored_row(method, self.sigma, self.seed, m)
        }
    }

    fn noisy(&self) -> Scored {
        let start = Instant::now();
        let est = self.y.real_part();
        let (row, estimate) = match metrics(&self.x.real_part(), &est, self.max_value) {
            Ok(m) => (scored_row(NOISY_METHOD, self.sigma, self.seed, &m), Some(est)),
            Err(e) => (failed(NOISY_METHOD, self.sigma, self.seed, &e), None),
        };
        Scored {
            row,
            estimate,
            params: None,
            wall_time: start.elapsed().as_secs_f64(),
        }
    }

    /// Closed-form filter in the unfractioned product-graph spectrum (α = β = 1, λ = 0).
    fn oracle(&self) -> Scored {
        let start = Instant::now();
        let result = (|| {
            let (n1, n2) = (self.ctx.n1(), self.ctx.n2());
            let mut p = FilterParams::initial(n1, n2, 1.0, 0.0)?;
            p.h = closed_form_h(self.ctx, Family::Gcgfrft, &self.y, &self.x, &p)?;
            let (m, est) = self.score(&p, Family::Gcgfrft)?;
            Ok::<_, Error>((p, m, est))
        })();
        let (row, estimate, params) = match result {
            Ok((p, m, est)) => {
                let row = ReportRow {
                    alpha: Some(1.0),
                    beta: Some(1.0),
                    lambda: Some(0.0),
                    ..scored_row(ORACLE_METHOD, self.sigma, self.seed, &m)
                };
                (row, Some(est), Some(p))
            }
            Err(e) => (failed(ORACLE_METHOD, self.sigma, self.seed, &e), None, None),
        };
        Scored {
            row,
            estimate,
            params,
            wall_time: start.elapsed().as_secs_f64(),
        }
    }

    fn family(&self, family: Family) -> Scored {
        let start = Instant::now();
        let method = family.name();
        let result = (|| {
            let out = train_family(self.ctx, family, &self.y, &self.x, 0.0, &self.cfg.train)?;
            let (m, est) = self.score(&out.params, family)?;
            Ok::<_, Error>((out, m, est))
        })();
        let (row, estimate, params) = match result {
            Ok((out, m, est)) => (self.trained(method, family, &out, &m), Some(est), Some(out.params)),
            Err(e) => (failed(method, self.sigma, self.seed, &e), None, None),
        };
        Scored {
            row,
            estimate,
            params,
            wall_time: start.elapsed().as_secs_f64(),
        }
    }

    /// Trains the coupled family at every grid point; the reported row is the
    /// grid point with the smallest MSE (ties to the smaller λ).
    fn coupled(&self) -> (Scored, Vec<SweepRow>) {
        let start = Instant::now();
        let method = Family::Gcgfrft.name();
        let runs: Vec<(f64, Result<Trained>)> = self
            .cfg
            .lambda_grid
            .par_iter()
            .map(|&lambda| {
                let r = train(self.ctx, &self.y, &self.x, lambda, &self.cfg.train).and_then(|out| {
                    let (m, est) = self.score(&out.params, Family::Gcgfrft)?;
                    Ok((out, m, est))
                });
                (lambda, r)
            })
            .collect();

        let sweep = runs
            .iter()
            .map(|(lambda, r)| match r {
                Ok((out, m, _)) => SweepRow {
                    sigma: self.sigma,
                    seed: self.seed,
                    lambda: *lambda,
                    status: "ok".into(),
                    final_loss: Some(out.final_loss),
                    mse: Some(m.mse),
                    psnr: Some(m.psnr),
                    ssim: Some(m.ssim),
                    alpha: Some(out.params.alpha),
                    beta: Some(out.params.beta),
                },
                Err(e) => SweepRow {
                    sigma: self.sigma,
                    seed: self.seed,
                    lambda: *lambda,
                    status: format!("error: {e}"),
                    final_loss: None,
                    mse: None,
                    psnr: None,
                    ssim: None,
                    alpha: None,
                    beta: None,
                },
            })
            .collect();

        let mut best: Option<usize> = None;
        for (i, (lambda, r)) in runs.iter().enumerate() {
            if let Ok((_, m, _)) = r {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (bl, br) = &runs[b];
                        let bm = &br.as_ref().expect("best is Ok").1;
                        m.mse < bm.mse || (m.mse == bm.mse && lambda < bl)
                    }
                };
                if better {
                    best = Some(i);
                }
            }
        }
        let mut runs = runs;
        let scored = match best {
            Some(i) => {
                let (_, r) = runs.swap_remove(i);
                let (out, m, est) = r.expect("best is Ok");
                Scored {
                    row: self.trained(method, Family::Gcgfrft, &out, &m),
                    estimate: Some(est),
                    params: Some(out.params),
                    wall_time: 0.0,
                }
            }
            None => {
                let reasons: Vec<String> = runs
                    .iter()
                    .filter_map(|(l, r)| r.as_ref().err().map(|e| format!("lambda={l}: {e}")))
                    .collect();
                let e = Error::GridExhausted(reasons.join("; "));
                Scored {
                    row: failed(method, self.sigma, self.seed, &e),
                    estimate: None,
                    params: None,
                    wall_time: 0.0,
                }
            }
        };
        (
            Scored {
                wall_time: start.elapsed().as_secs_f64(),
                ..scored
            },
            sweep,
        )
    }
}

fn summarize(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(m, s)| *m == r.method && *s == r.sigma) {
            keys.push((r.method.clone(), r.sigma));
        }
    }
    keys.into_iter()
        .map(|(method, sigma)| {
            let ok: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.method == method && r.sigma == sigma && r.mse.is_some())
                .collect();
            let mean = |f: &dyn Fn(&ReportRow) -> Option<f64>| {
                (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            SummaryRow {
                rows: ok.len(),
                mean_mse: mean(&|r| r.mse),
                mean_psnr: mean(&|r| r.psnr),
                mean_ssim: mean(&|r| r.ssim),
                method,
                sigma,
            }
        })
        .collect()
}

/// Runs the sweep described by `cfg`, writing outputs when `cfg.output_dir` is set.
///
/// Each (σ, seed) case produces the two baseline rows followed by one row per
/// configured family, in configuration order. Training failures are recorded
/// in the row's `status` and the sweep continues.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let g1 = cfg.spatial.build()?;
    let g2 = cfg.temporal.build()?;
    let ctx = PlanContext::with_options(&g1, &g2, cfg.dfrft_mode, cfg.margin_tol)?;

    let signals: Vec<(u64, TimeVertexSignal)> = cfg
        .seeds
        .iter()
        .map(|&seed| Ok((seed, synth_signal(&g1, g2.n(), cfg.bandwidth, seed)?)))
        .collect::<Result<_>>()?;

    let cases: Vec<(f64, usize)> = cfg
        .sigma_list
        .iter()
        .flat_map(|&s| (0..signals.len()).map(move |k| (s, k)))
        .collect();

    let results: Vec<Result<(Vec<Scored>, Vec<SweepRow>)>> = cases
        .par_iter()
        .map(|&(sigma, k)| {
            let (seed, x) = &signals[k];
            let y = add_awgn(x, sigma, noise_seed(*seed, sigma))?;
            let max_value = cfg.max_value.unwrap_or_else(|| x.real_part().amax());
            let case = Case {
                ctx: &ctx,
                cfg,
                sigma,
                seed: *seed,
                x: x.clone(),
                y,
                max_value: if max_value > 0.0 { max_value } else { 1.0 },
            };
            let mut scored = vec![case.noisy(), case.oracle()];
            let mut sweep = Vec::new();
            for &family in &cfg.families {
                if family == Family::Gcgfrft {
                    let (s, rows) = case.coupled();
                    scored.push(s);
                    sweep = rows;
                } else {
                    scored.push(case.family(family));
                }
            }
            Ok((scored, sweep))
        })
        .collect();

    let mut report = MetricReport {
        rows: Vec::new(),
        sweep: Vec::new(),
        summary: Vec::new(),
        timings: Vec::new(),
        signals: signals.iter().map(|(s, x)| (*s, x.real_part())).collect(),
        estimates: Vec::new(),
        params: Vec::new(),
    };
    for r in results {
        let (scored, sweep) = r?;
        for s in scored {
            report.timings.push(TimingRow {
                method: s.row.method.clone(),
                sigma: s.row.sigma,
                seed: s.row.seed,
                wall_time_s: s.wall_time,
            });
            if let (Some(name), Some(est)) = (&s.row.estimate_file, s.estimate) {
                report.estimates.push((name.clone(), est));
            }
            if let Some(p) = s.params {
                report.params.push((params_file(&s.row.method, s.row.sigma, s.row.seed), p));
            }
            report.rows.push(s.row);
        }
        report.sweep.extend(sweep);
    }
    report.summary = summarize(&report.rows);
    if let Some(dir) = &cfg.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}
