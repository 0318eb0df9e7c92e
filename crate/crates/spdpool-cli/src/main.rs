//! Command-line harness for the covariance pooling kernels.
//!
//! Exit codes: 0 on success, 1 when a verification fails or a run
//! diverges, 2 on usage or input errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use spdpool_cli::benchrun::{self, BenchSettings};
use spdpool_cli::certify::{self, CertifyOp, TrialSettings};
use spdpool_cli::props;
use spdpool_cli::report::{print_table, write_rows};
use spdpool_cli::toy::SyntheticTaskSpec;
use spdpool_cli::train::{toy_train_on, Pooling, ToyReport, TrainConfig};
use spdpool_core::io::{read_symmetric_file, write_matrix_file};
use spdpool_core::mpn::{lerm, powe_metric, MpnVariant};
use spdpool_core::newton_schulz::{isqrt_forward, PreNormMode};
use spdpool_core::{matpow_via_eig, Error, DEFAULT_ALPHA, DEFAULT_NS_ITERATIONS, DEFAULT_TRUNCATION};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "spdpool",
    about = "Covariance pooling kernels: square roots, gradient certification, metric checks, benchmarks, and a synthetic second-order task",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Matrix square root of a symmetric PSD matrix file.
    Sqrt(SqrtArgs),
    /// Certify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Verify the estimator-minimizer and metric-limit propositions.
    Props(PropsArgs),
    /// Time the eigendecomposition path against the iterative one.
    Bench(BenchArgs),
    /// Distances between two SPD matrix files.
    Metric(MetricArgs),
    /// Train on the synthetic second-order task.
    ToyTrain(ToyTrainArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SqrtMethod {
    Eig,
    Ns,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormModeArg {
    Trace,
    Fro,
}

impl From<NormModeArg> for PreNormMode {
    fn from(m: NormModeArg) -> Self {
        match m {
            NormModeArg::Trace => PreNormMode::Trace,
            NormModeArg::Fro => PreNormMode::Frobenius,
        }
    }
}

#[derive(Args)]
struct SqrtArgs {
    /// Input matrix in the shared text format.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "ns")]
    method: SqrtMethod,
    /// Newton-Schulz iteration count.
    #[arg(long, default_value_t = DEFAULT_NS_ITERATIONS)]
    iters: usize,
    #[arg(long, value_enum, default_value = "trace")]
    mode: NormModeArg,
    /// Output path for the square root.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradcheckOpArg {
    Cov,
    Mpn,
    Gauss,
    Isqrt,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MpnKindArg {
    Plain,
    Ml2,
    Mfro,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    op: GradcheckOpArg,
    /// Matrix order of the random inputs.
    #[arg(long, default_value_t = 6)]
    dim: usize,
    /// Sample count of random feature matrices.
    #[arg(long, default_value_t = 12)]
    samples: usize,
    /// Newton-Schulz iteration count (isqrt op).
    #[arg(long, default_value_t = DEFAULT_NS_ITERATIONS)]
    iters: usize,
    /// Power normalization variant (mpn op).
    #[arg(long, value_enum, default_value = "plain")]
    variant: MpnKindArg,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "trace")]
    mode: NormModeArg,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file (.jsonl or .csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropArg {
    PoweLimit,
    VnmleArgmin,
    All,
}

#[derive(Args)]
struct PropsArgs {
    #[arg(long, value_enum, default_value = "all")]
    prop: PropArg,
    /// Comma-separated decreasing exponent grid.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    perturbations: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated matrix orders.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Comma-separated Newton-Schulz iteration counts.
    #[arg(long = "ns-iters", value_delimiter = ',', default_values_t = [1usize, 5, 20])]
    ns_iters: Vec<usize>,
    /// Condition number of the random inputs.
    #[arg(long, default_value_t = 10.0)]
    cond: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long = "in1")]
    input1: PathBuf,
    #[arg(long = "in2")]
    input2: PathBuf,
    /// Power-Euclidean exponent.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Gap,
    Mpncov,
    Isqrt,
}

#[derive(Args)]
struct ToyTrainArgs {
    #[arg(long, value_enum, default_value = "isqrt")]
    pooling: PoolingArg,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Sweep of exponents for the power-normalized run (overrides
    /// --alpha; one report row per value).
    #[arg(long = "sweep-alphas", value_delimiter = ',')]
    sweep_alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_NS_ITERATIONS)]
    iters: usize,
    #[arg(long, value_enum, default_value = "trace")]
    mode: NormModeArg,
    /// Apply signed-square-root + l2 normalization to the pooled vector.
    #[arg(long)]
    epn: bool,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Samples per bag.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Bags per class.
    #[arg(long, default_value_t = 60)]
    bags: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sqrt(args) => cmd_sqrt(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Props(args) => cmd_props(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Metric(args) => cmd_metric(args),
        Command::ToyTrain(args) => cmd_toy_train(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_)
                | Error::ParseError(_)
                | Error::ConfigError(_)
                | Error::ShapeError(_)
                | Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn cmd_sqrt(args: SqrtArgs) -> spdpool_core::Result<bool> {
    let sigma = read_symmetric_file(&args.input)?;
    let oracle = matpow_via_eig(&sigma, 0.5, DEFAULT_TRUNCATION)?;
    let z = match args.method {
        SqrtMethod::Eig => oracle.clone(),
        SqrtMethod::Ns => isqrt_forward(&sigma, args.iters, args.mode.into())?.0,
    };
    write_matrix_file(&args.out, z.as_dense())?;
    let rel = z.as_dense().sub(oracle.as_dense())?.frobenius_norm() / oracle.frobenius_norm();
    println!(
        "square root of order-{} matrix written to {} (relative error vs eig oracle: {rel:.3e})",
        sigma.dim(),
        args.out.display()
    );
    Ok(true)
}

fn cmd_gradcheck(args: GradcheckArgs) -> spdpool_core::Result<bool> {
    let seed = spdpool_cli::resolve_seed(args.seed)?;
    let settings = TrialSettings {
        dim: args.dim,
        samples: args.samples,
        trials: args.trials,
        seed,
        ..TrialSettings::default()
    };
    let variant = match args.variant {
        MpnKindArg::Plain => MpnVariant::plain(args.alpha)?,
        MpnKindArg::Ml2 => MpnVariant::matrix_l2(args.alpha)?,
        MpnKindArg::Mfro => MpnVariant::matrix_fro(args.alpha)?,
    };
    let ops: Vec<CertifyOp> = match args.op {
        GradcheckOpArg::Cov => vec![CertifyOp::Covariance],
        GradcheckOpArg::Mpn => vec![CertifyOp::Mpn { variant }],
        GradcheckOpArg::Gauss => vec![CertifyOp::GaussEmbed],
        GradcheckOpArg::Isqrt => vec![CertifyOp::Isqrt {
            mode: args.mode.into(),
            iterations: args.iters,
        }],
        GradcheckOpArg::All => certify::acceptance_ops(),
    };

    let mut all_reports = Vec::new();
    for op in ops {
        all_reports.extend(certify::run_trials(op, &settings)?);
    }

    let rows: Vec<Vec<String>> = all_reports
        .iter()
        .map(|r| {
            vec![
                r.op.clone(),
                r.shape.clone(),
                format!("{:.1e}", r.epsilon),
                format!("{:.3e}", r.max_rel_error),
                format!("{:.3e}", r.max_abs_error),
                r.worst_index.to_string(),
                if r.pass { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    print_table(
        &["op", "shape", "eps", "max rel err", "max abs err", "worst", "status"],
        &rows,
    );
    if let Some(path) = &args.out {
        write_rows(path, &all_reports)?;
        println!("report written to {}", path.display());
    }
    let all_pass = all_reports.iter().all(|r| r.pass);
    println!(
        "{}/{} trials passed",
        all_reports.iter().filter(|r| r.pass).count(),
        all_reports.len()
    );
    Ok(all_pass)
}

fn cmd_props(args: PropsArgs) -> spdpool_core::Result<bool> {
    let seed = spdpool_cli::resolve_seed(args.seed)?;
    let mut pass = true;

    if matches!(args.prop, PropArg::PoweLimit | PropArg::All) {
        let alphas = args.alphas.clone().unwrap_or_else(props::default_alpha_grid);
        let report = props::verify_powe_limit(args.trials, args.dim, &alphas, seed)?;
        println!(
            "power metric limit: {} pairs at order {} (monotone clause spectra in [1,10], limit clause in [0.1,10])",
            args.trials, args.dim
        );
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                vec![
                    format!("{:.6}", r.alpha),
                    format!("{:.4e}", r.mean_abs_gap),
                    format!("{:.4e}", r.max_abs_gap),
                    format!("{:.4e}", r.max_rel_gap),
                ]
            })
            .collect();
        print_table(&["alpha", "mean |gap|", "max |gap|", "max rel gap"], &rows);
        println!(
            "monotone: {}; final relative gap on [0.1,10] spectra: {:.3e}; {}",
            report.monotone,
            report.final_rel_gap,
            if report.pass { "pass" } else { "FAIL" }
        );
        if let Some(path) = &args.out {
            write_rows(path, &report.rows)?;
        }
        pass &= report.pass;
    }

    if matches!(args.prop, PropArg::VnmleArgmin | PropArg::All) {
        let report =
            props::verify_vnmle_argmin(args.trials, args.dim.min(6), args.perturbations, seed)?;
        println!(
            "estimator minimizer: {} trials, {} perturbations each; max gradient entry {:.3e}; perturbations all larger: {}; {}",
            report.trials,
            report.perturbations_per_trial,
            report.max_gradient_entry,
            report.all_perturbations_larger,
            if report.pass { "pass" } else { "FAIL" }
        );
        pass &= report.pass;
    }

    Ok(pass)
}

fn cmd_bench(args: BenchArgs) -> spdpool_core::Result<bool> {
    let seed = spdpool_cli::resolve_seed(args.seed)?;
    let settings = BenchSettings {
        dims: args.dims,
        batch: args.batch,
        ns_iters: args.ns_iters,
        cond: args.cond,
        seed,
    };
    let rows = benchrun::run(&settings)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.dim.to_string(),
                r.batch.to_string(),
                r.iters.map_or(String::new(), |n| n.to_string()),
                format!("{:.3}", r.forward_ms),
                format!("{:.3}", r.backward_ms),
                r.rel_err_vs_eig
                    .map_or(String::new(), |e| format!("{e:.3e}")),
            ]
        })
        .collect();
    print_table(
        &["method", "dim", "batch", "iters", "fwd ms", "bwd ms", "rel err vs eig"],
        &table,
    );
    if let Some(path) = &args.out {
        write_rows(path, &rows)?;
        println!("report written to {}", path.display());
    }
    Ok(true)
}

fn cmd_metric(args: MetricArgs) -> spdpool_core::Result<bool> {
    let a = read_symmetric_file(&args.input1)?;
    let b = read_symmetric_file(&args.input2)?;
    let powe = powe_metric(&a, &b, args.alpha)?;
    let log_euclidean = lerm(&a, &b)?;

    #[derive(serde::Serialize)]
    struct MetricRow {
        alpha: f64,
        powe: f64,
        lerm: f64,
    }
    let row = MetricRow {
        alpha: args.alpha,
        powe,
        lerm: log_euclidean,
    };
    println!(
        "power-Euclidean (alpha = {}): {powe:.9}\nlog-Euclidean: {log_euclidean:.9}",
        args.alpha
    );
    if let Some(path) = &args.out {
        write_rows(path, &[row])?;
    }
    Ok(true)
}

fn cmd_toy_train(args: ToyTrainArgs) -> spdpool_core::Result<bool> {
    let seed = spdpool_cli::resolve_seed(args.seed)?;
    let spec = SyntheticTaskSpec {
        classes: args.classes,
        dim: args.dim,
        samples_per_bag: args.samples,
        bags_per_class: args.bags,
        seed,
        ..SyntheticTaskSpec::default()
    };
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        threads: args.threads,
        seed,
        ..TrainConfig::default()
    };
    let data = spdpool_cli::toy::generate(&spec)?;

    let poolings: Vec<Pooling> = match (args.pooling, &args.sweep_alphas) {
        (PoolingArg::Mpncov, Some(alphas)) => alphas
            .iter()
            .map(|&a| {
                MpnVariant::plain(a).map(|variant| Pooling::MatrixPower { variant })
            })
            .collect::<spdpool_core::Result<_>>()?,
        (PoolingArg::Mpncov, None) => vec![Pooling::MatrixPower {
            variant: MpnVariant::plain(args.alpha)?,
        }],
        (PoolingArg::Gap, _) => vec![Pooling::Gap],
        (PoolingArg::Isqrt, _) => vec![Pooling::IterativeSqrt {
            iterations: args.iters,
            mode: args.mode.into(),
        }],
    };

    let mut reports: Vec<ToyReport> = Vec::new();
    for pooling in poolings {
        let report = toy_train_on(&data, &spec, &cfg, pooling, args.epn)?;
        reports.push(report);
    }

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.alpha.map_or(String::new(), |a| format!("{a}")),
                r.iters.map_or(String::new(), |n| n.to_string()),
                r.epn.to_string(),
                format!("{:.3}", r.train_accuracy),
                format!("{:.3}", r.test_accuracy),
                format!("{:.4}", r.final_loss),
            ]
        })
        .collect();
    print_table(
        &["method", "alpha", "iters", "epn", "train acc", "test acc", "loss"],
        &rows,
    );
    if let Some(path) = &args.out {
        write_rows(path, &reports)?;
        println!("report written to {}", path.display());
    }
    Ok(true)
}
