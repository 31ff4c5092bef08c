use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use gcfrft::harness::{add_awgn, metrics, run_benchmark, synth_signal, verify_properties, BenchmarkConfig, VerifyOptions};
use gcfrft::operators::{dfrft_matrix, write_complex_matrix_csv};
use gcfrft::transforms::{Family, Orders, PlanContext, TimeVertexSignal};
use gcfrft::wiener::{denoise_with, lambda_grid_search, train_family, TrainOutcome};
use gcfrft::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gcfrft", version, about = "Fractional graph transforms, learned spectral denoising and benchmarks")]
struct Cli {
    /// Benchmark-style JSON config supplying graphs, training settings and sweep parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthesis; for `benchmark` it replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to FRFT_THREADS, then the number of cores).
    #[arg(long, global = true, env = "FRFT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a clean band-limited signal and a noisy observation.
    Gen {
        #[arg(long, default_value_t = 0.9)]
        sigma: f64,
    },
    /// Apply a separable transform (or its inverse) to a signal.
    Transform {
        /// Real part (or the whole real signal), headerless CSV.
        #[arg(long)]
        input: PathBuf,
        /// Optional imaginary part.
        #[arg(long)]
        input_imag: Option<PathBuf>,
        #[arg(long, value_parser = parse_family)]
        family: Family,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        inverse: bool,
    },
    /// Train orders and filter on one (noisy, clean) pair and write the estimate.
    Denoise {
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long, value_parser = parse_family, default_value = "gcgfrft")]
        family: Family,
        /// Fixed coupling; without it the configured λ grid is searched.
        #[arg(long)]
        lambda: Option<f64>,
        /// Peak value for PSNR/SSIM (default: largest |clean| entry).
        #[arg(long)]
        max_value: Option<f64>,
    },
    /// Run the configured benchmark sweep.
    Benchmark,
    /// Run the property suite and print a pass/fail table.
    Verify {
        /// Instances as `n1xn2`, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Perturb every operator before its unitarity check.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Write one operator matrix as CSV of interleaved real/imaginary parts.
    DumpOperator {
        #[arg(long, value_enum)]
        kind: OperatorChoice,
        #[arg(long)]
        order: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Size for `dfrft` (defaults to the temporal graph size).
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorChoice {
    /// Spatial graph fractional transform.
    Spatial,
    /// Temporal graph fractional transform.
    Temporal,
    Dfrft,
    /// Geodesic-coupled temporal basis at (order, lambda).
    Coupled,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> anyhow::Result<BenchmarkConfig> {
    let cfg = match &cli.config {
        Some(p) => BenchmarkConfig::from_json_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => BenchmarkConfig::default(),
    };
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> anyhow::Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn context(cfg: &BenchmarkConfig) -> anyhow::Result<(gcfrft::graph::Graph, gcfrft::graph::Graph, PlanContext)> {
    let g1 = cfg.spatial.build()?;
    let g2 = cfg.temporal.build()?;
    let ctx = PlanContext::with_options(&g1, &g2, cfg.dfrft_mode, cfg.margin_tol)?;
    Ok((g1, g2, ctx))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_signal(re: &Path, im: Option<&Path>) -> anyhow::Result<TimeVertexSignal> {
    let open = |p: &Path| File::open(p).with_context(|| format!("opening {}", p.display()));
    Ok(match im {
        Some(im) => TimeVertexSignal::read_complex_csv(open(re)?, open(im)?)?,
        None => TimeVertexSignal::read_real_csv(open(re)?)?,
    })
}

fn create(path: PathBuf) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn gen(cli: &Cli, sigma: f64) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    let g1 = cfg.spatial.build()?;
    let g2 = cfg.temporal.build()?;
    let x = synth_signal(&g1, g2.n(), cfg.bandwidth, seed)?;
    let y = add_awgn(&x, sigma, seed.wrapping_add(1))?;
    let dir = out_dir(cli)?;
    x.write_real_csv(create(dir.join("clean.csv"))?)?;
    y.write_real_csv(create(dir.join("noisy.csv"))?)?;
    g1.write_edge_list(create(dir.join("spatial_edges.csv"))?)?;
    g2.write_edge_list(create(dir.join("temporal_edges.csv"))?)?;
    println!("wrote {}x{} signal (seed {seed}, sigma {sigma}) to {}", x.n1(), x.n2(), dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn transform(
    cli: &Cli,
    input: &Path,
    input_imag: Option<&Path>,
    family: Family,
    alpha: f64,
    beta: Option<f64>,
    lambda: Option<f64>,
    inverse: bool,
) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let (_, _, ctx) = context(&cfg)?;
    let orders = match (family, beta) {
        (Family::Gfrft2d, None) => Orders::Shared(alpha),
        (Family::Gfrft2d, Some(_)) => bail!(Error::OrderArity("gfrft2d takes a single shared order".into())),
        (_, Some(b)) => Orders::pair(alpha, b),
        (_, None) => bail!(Error::OrderArity(format!("{family} needs --beta"))),
    };
    let plan = ctx.make_plan(family, orders, lambda)?;
    let x = read_signal(input, input_imag)?;
    let y = if inverse { plan.inverse(&x)? } else { plan.forward(&x)? };
    let dir = out_dir(cli)?;
    y.write_complex_csv(create(dir.join("output_re.csv"))?, create(dir.join("output_im.csv"))?)?;
    write_json(&dir.join("metadata.json"), &plan.metadata())?;
    println!("wrote {} {}x{} to {}", if inverse { "inverse" } else { "forward" }, y.n1(), y.n2(), dir.display());
    Ok(())
}

fn denoise_cmd(cli: &Cli, noisy: &Path, clean: &Path, family: Family, lambda: Option<f64>, max_value: Option<f64>) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let (_, _, ctx) = context(&cfg)?;
    let y = read_signal(noisy, None)?;
    let x = read_signal(clean, None)?;
    let dir = out_dir(cli)?;
    let outcome: TrainOutcome = match (family, lambda) {
        (Family::Gcgfrft, None) => {
            let search = lambda_grid_search(&ctx, &y, &x, &cfg.lambda_grid, &cfg.train)?;
            #[derive(Serialize)]
            struct GridRow {
                lambda: f64,
                final_loss: Option<f64>,
                status: String,
            }
            let mut w = csv::Writer::from_writer(create(dir.join("lambda_table.csv"))?);
            for e in &search.table {
                w.serialize(GridRow {
                    lambda: e.lambda,
                    final_loss: e.outcome.as_ref().ok().map(|o| o.final_loss),
                    status: e.outcome.as_ref().err().map(|e| format!("error: {e}")).unwrap_or_else(|| "ok".into()),
                })?;
            }
            w.flush()?;
            search.best().clone()
        }
        (f, l) => train_family(&ctx, f, &y, &x, l.unwrap_or(0.0), &cfg.train)?,
    };
    let est = denoise_with(&ctx, family, &y, &outcome.params)?.estimate;
    let truth = x.real_part();
    let peak = max_value.or(cfg.max_value).unwrap_or_else(|| truth.amax());
    let m = metrics(&truth, &est.real_part(), if peak > 0.0 { peak } else { 1.0 })?;
    est.write_real_csv(create(dir.join("estimate.csv"))?)?;
    write_json(&dir.join("params.json"), &outcome.params.to_json())?;
    outcome.write_trace_csv(create(dir.join("trace.csv"))?)?;
    #[derive(Serialize)]
    struct Summary {
        family: Family,
        mse: f64,
        psnr: String,
        ssim: f64,
        final_loss: f64,
    }
    let summary = Summary {
        family,
        mse: m.mse,
        psnr: if m.psnr.is_infinite() { "inf".into() } else { m.psnr.to_string() },
        ssim: m.ssim,
        final_loss: outcome.final_loss,
    };
    write_json(&dir.join("metrics.json"), &summary)?;
    println!(
        "{family}: alpha {:.4} beta {:.4} lambda {} mse {:.6} psnr {} ssim {:.4}",
        outcome.params.alpha,
        outcome.params.beta,
        outcome.params.lambda(),
        m.mse,
        summary.psnr,
        m.ssim
    );
    Ok(())
}

fn benchmark(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if cli.out.is_some() || cfg.output_dir.is_none() {
        cfg.output_dir = Some(out_dir(cli)?);
    }
    let report = run_benchmark(&cfg)?;
    for s in &report.summary {
        println!(
            "{:>14} sigma {:<4} mean mse {}",
            s.method,
            s.sigma,
            s.mean_mse.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
        );
    }
    let failed = report.rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} rows ({failed} failed) written to {}",
        report.rows.len(),
        cfg.output_dir.as_deref().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn parse_size(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s.split_once('x').with_context(|| format!("size `{s}` must look like 6x4"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// Returns whether every check passed.
fn verify(cli: &Cli, sizes: &[String], seeds: &[u64], inject_fault: bool) -> anyhow::Result<bool> {
    let mut opts = VerifyOptions {
        inject_fault,
        ..VerifyOptions::default()
    };
    if !sizes.is_empty() {
        opts.sizes = sizes
            .iter()
            .map(|s| parse_size(s).map_err(|e| anyhow::Error::new(Error::Config(e.to_string()))))
            .collect::<anyhow::Result<_>>()?;
        if let Some(&(n1, n2)) = opts.sizes.iter().find(|(a, b)| *a < 2 || *b < 2 || *a > 16 || *b > 16) {
            bail!(Error::Config(format!("verify sizes must lie in 2..=16, got {n1}x{n2}")));
        }
    }
    if !seeds.is_empty() {
        opts.seeds = seeds.to_vec();
    } else if let Some(seed) = cli.seed {
        opts.seeds = vec![seed];
    }
    let report = verify_properties(&opts);
    println!("{report}");
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        report.write_csv(create(dir.join("verify.csv"))?)?;
    }
    Ok(report.all_passed())
}

fn dump_operator(cli: &Cli, kind: OperatorChoice, order: f64, lambda: f64, n: Option<usize>) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli)?;
    let (name, matrix) = match kind {
        OperatorChoice::Dfrft => {
            let n = match n {
                Some(n) => n,
                None => cfg.temporal.build()?.n(),
            };
            ("dfrft", dfrft_matrix(n, order, cfg.dfrft_mode)?.into_matrix())
        }
        _ => {
            let (_, _, ctx) = context(&cfg)?;
            match kind {
                OperatorChoice::Spatial => ("spatial", ctx.spatial_spectrum().power(order)),
                OperatorChoice::Temporal => ("temporal", ctx.temporal_spectrum().power(order)),
                _ => ("coupled", ctx.temporal_coupling(order)?.basis(lambda)?),
            }
        }
    };
    let path = dir.join(format!("{name}_operator.csv"));
    write_complex_matrix_csv(&matrix, create(path.clone())?)?;
    println!("wrote {}x{} {name} operator to {}", matrix.nrows(), matrix.ncols(), path.display());
    Ok(())
}

/// 2 for configuration problems, 3 when the principal-logarithm assumption fails.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            if e.is_assumption_violation() || matches!(e, Error::GridExhausted(_)) {
                return 3;
            }
            if matches!(
                e,
                Error::Config(_)
                    | Error::Domain(_)
                    | Error::OrderArity(_)
                    | Error::InvalidK { .. }
                    | Error::InvalidSize(_)
                    | Error::ShapeMismatch { .. }
                    | Error::Parse(_)
                    | Error::Json(_)
                    | Error::Csv(_)
                    | Error::Io(_)
                    | Error::InvalidGraph(_)
                    | Error::DuplicatePoints { .. }
                    | Error::NumericInput(_)
            ) {
                return 2;
            }
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<std::num::ParseIntError>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global()?;
    }
    match &cli.command {
        Command::Gen { sigma } => gen(cli, *sigma)?,
        Command::Transform {
            input,
            input_imag,
            family,
            alpha,
            beta,
            lambda,
            inverse,
        } => transform(cli, input, input_imag.as_deref(), *family, *alpha, *beta, *lambda, *inverse)?,
        Command::Denoise {
            noisy,
            clean,
            family,
            lambda,
            max_value,
        } => denoise_cmd(cli, noisy, clean, *family, *lambda, *max_value)?,
        Command::Benchmark => benchmark(cli)?,
        Command::Verify { sizes, seeds, inject_fault } => return verify(cli, sizes, seeds, *inject_fault),
        Command::DumpOperator { kind, order, lambda, n } => dump_operator(cli, *kind, *order, *lambda, *n)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
