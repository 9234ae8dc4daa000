use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use qknn::format::sig6;
use qknn::simulate::{gen_scenario, ErrorDist, Scenario};
use qknn::{
    fit_with, predict, quantile_objective, select_lambda, Criterion, FitConfig, KnnGraph, Metric,
    QuantileLevel, SelectOptions, SolverKind,
};
use qknn_cli::bench::{run_bench, write_table, write_timing, BenchConfig, BenchSolver};
use qknn_cli::grid::GridSpec;
use qknn_cli::{config, io};

/// Quantile regression with a fused-lasso penalty on a K-nearest-neighbor graph.
///
/// Every command also accepts `--config <file>` with `key = value` lines
/// named after the long flags; flags given on the command line win.
#[derive(Parser)]
#[command(name = "qknn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a data set from a simulation scenario.
    Simulate(SimulateArgs),
    /// Fit at a single penalty level.
    Fit(FitArgs),
    /// Predict new points from a fit by K-NN averaging.
    Predict(PredictArgs),
    /// Choose the penalty on a grid by BIC, SIC or cross-validation.
    Select(SelectArgs),
    /// Monte Carlo benchmark over scenarios, sizes and solvers.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario 1-4.
    #[arg(long)]
    scenario: u8,
    #[arg(long)]
    n: usize,
    /// gaussian, cauchy or t<df>.
    #[arg(long)]
    error: ErrorDist,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolverOpts {
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Neighbors per point in the graph and in prediction.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// admm, mm (median only) or l2 (squared loss).
    #[arg(long, default_value = "admm")]
    solver: SolverKind,
    /// Stopping threshold on the change of the iterate.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// ADMM augmented-Lagrangian parameter.
    #[arg(long, default_value_t = 0.5)]
    step: f64,
    /// MM denominator perturbation.
    #[arg(long)]
    eps_mm: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverOpts {
    fn fit_config(&self, lambda: f64, default_max_iter: Option<usize>) -> Result<FitConfig> {
        let cfg = FitConfig {
            step: self.step,
            tol: self.tol,
            max_iter: self.max_iter.or(default_max_iter),
            eps_mm: self.eps_mm,
            seed: self.seed,
            ..FitConfig::new(QuantileLevel::new(self.tau)?, lambda)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverOpts,
    /// Also write the K-NN graph edge list here.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Output of `fit` or `select --fit-output`.
    #[arg(long)]
    model: PathBuf,
    /// Query points; the leading columns are used as covariates.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
}

/// Iteration cap used on selection paths unless `--max-iter` is given.
const PATH_MAX_ITER: usize = 5000;

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Per-penalty report: lambda, criterion, dof, converged.
    #[arg(long)]
    output: PathBuf,
    /// Also write the chosen fit here.
    #[arg(long)]
    fit_output: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
    #[arg(long, default_value = "bic")]
    criterion: Criterion,
    /// Fusion threshold of the degrees of freedom.
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    /// Penalty grid as min:max:count[:log|lin].
    #[arg(long, default_value = "0.01:10:12:log")]
    grid: GridSpec,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    scenarios: Vec<u8>,
    #[arg(long = "n", value_delimiter = ',', default_value = "1000")]
    sizes: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "qknn-admm,qknn-mm,knn-l2"
    )]
    solvers: Vec<BenchSolver>,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "0.01:10:12:log")]
    grid: GridSpec,
    /// Penalty grid of the squared-loss baseline.
    #[arg(long, default_value = "0.01:1000:11:log")]
    l2_grid: GridSpec,
    #[arg(long, default_value = "bic")]
    criterion: Criterion,
    #[arg(long, default_value_t = 0.01)]
    kappa: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = PATH_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    output: PathBuf,
    /// Time against n per solver.
    #[arg(long)]
    timing_output: Option<PathBuf>,
    /// Write NA instead of times so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => bail!("--threads must be >= 1"),
        Some(t) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()?
            .install(f)),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let sample = gen_scenario(
        Scenario::from_id(a.scenario)?,
        a.n,
        QuantileLevel::new(a.tau)?,
        a.error,
        a.seed,
    )?;
    let mut w = io::create(&a.output)?;
    sample.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let loaded = io::load_csv(&a.input)?;
    let data = &loaded.data;
    let cfg = a.solver.fit_config(a.lambda, None)?;
    let graph = KnnGraph::build(data.x(), a.solver.k, Metric::Euclidean)?;
    if let Some(path) = &a.dump_graph {
        let mut w = io::create(path)?;
        graph.write_edge_list(&mut w)?;
        w.flush()?;
    }
    let (res, _) = fit_with(a.solver.solver, data, &graph, &cfg, None)?;
    io::write_columns(
        &a.output,
        &loaded.x_names,
        data,
        &[("theta_hat", &res.theta)],
    )?;
    let objective = quantile_objective(data.y(), &res.theta, cfg.tau, cfg.lambda, &graph)?;
    println!(
        "solver={} lambda={} objective={} iterations={} converged={}",
        a.solver.solver,
        sig6(cfg.lambda),
        sig6(objective),
        res.iterations,
        res.converged
    );
    if !res.converged {
        eprintln!("warning: iteration cap reached before the tolerance was met");
    }
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<()> {
    let model = io::read_table(&a.model)?;
    let cols = model.header.len();
    if cols < 3 || model.header[cols - 1] != "theta_hat" {
        bail!(
            "{}: not a fit file (expected covariates, y, theta_hat)",
            a.model.display()
        );
    }
    if model.rows.is_empty() {
        bail!("{}: empty model", a.model.display());
    }
    let d = cols - 2;
    let query = io::read_table(&a.input)?;
    if query.header.len() < d {
        bail!(
            "{}: needs at least {d} covariate columns, found {}",
            a.input.display(),
            query.header.len()
        );
    }
    let qx = query.matrix(d);
    let pred = predict(
        model.matrix(d).view(),
        &model.column(cols - 1),
        qx.view(),
        a.k,
    )?;
    let mut w = io::create(&a.output)?;
    let mut header = model.header[..d].to_vec();
    header.push("prediction".into());
    writeln!(w, "{}", header.join(","))?;
    for (row, p) in qx.outer_iter().zip(&pred) {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        cells.push(sig6(*p));
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let loaded = io::load_csv(&a.input)?;
    let data = &loaded.data;
    let cfg = a.solver.fit_config(0.0, Some(PATH_MAX_ITER))?;
    let graph = KnnGraph::build(data.x(), a.solver.k, Metric::Euclidean)?;
    let opts = SelectOptions {
        criterion: a.criterion,
        solver: a.solver.solver,
        kappa: a.kappa,
        folds: a.folds,
        seed: a.solver.seed,
    };
    let grid = a.grid.values();
    let rep = with_threads(a.threads, || {
        select_lambda(data, &graph, &cfg, &grid, &opts)
    })??;
    let mut w = io::create(&a.output)?;
    rep.write_csv(&mut w)?;
    w.flush()?;
    if let Some(path) = &a.fit_output {
        io::write_columns(
            path,
            &loaded.x_names,
            data,
            &[("theta_hat", rep.chosen_fit())],
        )?;
    }
    let skipped = rep.converged.iter().filter(|c| !**c).count();
    println!(
        "criterion={} lambda={} value={} dof={} unconverged_points={skipped}",
        rep.criterion,
        sig6(rep.chosen_lambda),
        sig6(rep.criterion_values[rep.chosen_index]),
        rep.dof_values[rep.chosen_index]
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let scenarios = a
        .scenarios
        .iter()
        .map(|&s| Scenario::from_id(s))
        .collect::<qknn::Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        scenarios,
        sizes: a.sizes,
        solvers: a.solvers,
        replicates: a.replicates,
        seed: a.seed,
        k: a.k,
        grid: a.grid.values(),
        l2_grid: a.l2_grid.values(),
        select: SelectOptions {
            criterion: a.criterion,
            solver: SolverKind::Admm,
            kappa: a.kappa,
            folds: a.folds,
            seed: a.seed,
        },
        fit: FitConfig {
            tol: a.tol,
            max_iter: Some(a.max_iter),
            ..FitConfig::new(QuantileLevel::MEDIAN, 0.0)
        },
        timing: !a.no_timing,
    };
    cfg.fit.validate()?;
    let results = with_threads(a.threads, || run_bench(&cfg))??;
    for r in &results {
        if let Err(e) = &r.mse {
            let c = &r.cell;
            eprintln!(
                "warning: cell scenario={} n={} error={} tau={} solver={} failed: {e}",
                c.scenario,
                c.n,
                c.error,
                sig6(c.tau.value()),
                c.solver
            );
        }
    }
    let mut w = io::create(&a.output)?;
    write_table(&mut w, &cfg, &results)?;
    w.flush()?;
    if let Some(path) = &a.timing_output {
        let mut w = io::create(path)?;
        write_timing(&mut w, &cfg, &results)?;
        w.flush()?;
    }
    Ok(())
}

fn run(args: Vec<String>) -> Result<()> {
    let args = config::expand_args(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            bail!("{}", first.trim_start_matches("error: "));
        }
    };
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Select(a) => select(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
