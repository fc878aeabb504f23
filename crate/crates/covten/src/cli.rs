//! Command-line surface: simulate, fit, complete, evaluate, tune, experiment.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (files, shapes,
//! parse failures), 3 numerical failure (every restart degenerate).
//!
//! Solver options may also come from a `key = value` config file passed with
//! `--config`; explicit flags win over file values. Keys use the long flag
//! names (`tol`, `max-iters`, `restarts`, `seed`, `sparsity-frac`,
//! `fix-shared`, `jitter`, `rtpm-starts`, `rtpm-iters`, `svd-iters`,
//! `svd-tol`).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::init::InitConfig;
use crate::io;
use crate::model::{metrics, reconstruct, CoupledModel};
use crate::sim::{run_experiment, Scenario};
use crate::solver::{complete, fit_auto, Dataset, SolverConfig};
use crate::tensor::Covariate;
use crate::tune::{tune, TuneGrid};

#[derive(Parser)]
#[command(
    name = "covten",
    version,
    about = "Covariate-assisted sparse CP tensor completion",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic data files and the generating truth model
    Simulate(SimulateArgs),
    /// Fit a coupled model to a tensor file and covariate matrices
    Fit(FitArgs),
    /// Evaluate model values at a list of coordinates
    Complete(CompleteArgs),
    /// Normalized recovery errors of an estimated model against a reference
    Evaluate(EvaluateArgs),
    /// Sequential rank-then-sparsity selection by BIC
    Tune(TuneArgs),
    /// Replicated synthetic experiments over parameter lists, CSV output
    Experiment(ExperimentArgs),
}

fn parse_mode_count(s: &str) -> std::result::Result<(usize, usize), String> {
    let (m, c) = s
        .split_once(':')
        .ok_or_else(|| format!("expected mode:count, found {s:?}"))?;
    Ok((
        m.trim().parse().map_err(|e| format!("bad mode: {e}"))?,
        c.trim().parse().map_err(|e| format!("bad count: {e}"))?,
    ))
}

fn parse_mode_path(s: &str) -> std::result::Result<(usize, PathBuf), String> {
    let (m, p) = s
        .split_once(':')
        .ok_or_else(|| format!("expected mode:path, found {s:?}"))?;
    Ok((
        m.trim().parse().map_err(|e| format!("bad mode: {e}"))?,
        PathBuf::from(p),
    ))
}

/// `key = value` lines; `#` starts a comment.
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or(Error::Parse {
                    line: i + 1,
                    message: "expected `key = value`".into(),
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| Error::Parse {
                line: 0,
                message: format!("config key {key:?} has unparsable value {raw:?}"),
            }),
        }
    }
}

#[derive(Args, Clone)]
struct SolverOpts {
    /// Uniform fraction of entries kept per uncoupled tensor mode
    #[arg(long)]
    sparsity_frac: Option<f64>,
    /// Per-mode tensor budget override, `mode:count` (repeatable)
    #[arg(long = "budget", value_parser = parse_mode_count)]
    budgets: Vec<(usize, usize)>,
    /// Per-mode covariate-column budget, `mode:count` (repeatable)
    #[arg(long = "covariate-budget", value_parser = parse_mode_count)]
    covariate_budgets: Vec<(usize, usize)>,
    /// Relative factor-change stopping tolerance [default: 1e-7]
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep cap per restart [default: 200]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Randomized initializations [default: 10]
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep coupled-mode factors at their spectral initialization
    #[arg(long)]
    fix_shared: bool,
    /// Relative jitter scale for restarts beyond the first [default: 0.1]
    #[arg(long)]
    jitter: Option<f64>,
    /// Power-method starts per component [default: 30]
    #[arg(long)]
    rtpm_starts: Option<usize>,
    /// Power-method rounds per start [default: 50]
    #[arg(long)]
    rtpm_iters: Option<usize>,
    /// SVD power-iteration cap [default: 5000]
    #[arg(long)]
    svd_iters: Option<usize>,
    /// SVD vector-change tolerance [default: 1e-10]
    #[arg(long)]
    svd_tol: Option<f64>,
    /// Optional `key = value` file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SolverOpts {
    fn resolve(&self, data: &Dataset, rank: usize) -> Result<(SolverConfig, InitConfig)> {
        let file = FileConfig::load(self.config.as_deref())?;
        let dims = data.obs.dims();
        let spec = data.coupling_spec();

        let frac = match self.sparsity_frac {
            Some(f) => Some(f),
            None => file.get::<f64>("sparsity-frac")?,
        };
        let mut tensor_budgets: Vec<usize> = (0..dims.order())
            .map(|k| match frac {
                Some(f) if !spec.is_coupled(k) => {
                    ((f * dims.size(k) as f64).ceil() as usize).clamp(1, dims.size(k))
                }
                _ => dims.size(k),
            })
            .collect();
        for &(mode, count) in &self.budgets {
            if mode >= dims.order() {
                return Err(Error::ModeOutOfRange {
                    mode,
                    order: dims.order(),
                });
            }
            tensor_budgets[mode] = count;
        }
        let mut covariate_budgets: Vec<Option<usize>> = (0..dims.order())
            .map(|k| data.covariate(k).map(|c| c.matrix.cols()))
            .collect();
        for &(mode, count) in &self.covariate_budgets {
            if covariate_budgets.get(mode).copied().flatten().is_none() {
                return Err(Error::NotCoupled { mode });
            }
            covariate_budgets[mode] = Some(count);
        }

        let seed = match self.seed {
            Some(s) => s,
            None => file.get::<u64>("seed")?.unwrap_or(0),
        };
        let solver = SolverConfig {
            rank,
            tensor_budgets,
            covariate_budgets,
            tol: match self.tol {
                Some(t) => t,
                None => file.get::<f64>("tol")?.unwrap_or(1e-7),
            },
            max_iters: match self.max_iters {
                Some(i) => i,
                None => file.get::<usize>("max-iters")?.unwrap_or(200),
            },
            restarts: match self.restarts {
                Some(r) => r,
                None => file.get::<usize>("restarts")?.unwrap_or(10),
            },
            fix_shared: self.fix_shared || file.get::<bool>("fix-shared")?.unwrap_or(false),
            restart_jitter: match self.jitter {
                Some(j) => j,
                None => file.get::<f64>("jitter")?.unwrap_or(0.1),
            },
            seed,
        };
        let init = InitConfig {
            rtpm_starts: match self.rtpm_starts {
                Some(v) => v,
                None => file.get::<usize>("rtpm-starts")?.unwrap_or(30),
            },
            rtpm_iters: match self.rtpm_iters {
                Some(v) => v,
                None => file.get::<usize>("rtpm-iters")?.unwrap_or(50),
            },
            svd_power_iters: match self.svd_iters {
                Some(v) => v,
                None => file.get::<usize>("svd-iters")?.unwrap_or(5000),
            },
            svd_tol: match self.svd_tol {
                Some(v) => v,
                None => file.get::<f64>("svd-tol")?.unwrap_or(1e-10),
            },
            restart_jitter: solver.restart_jitter,
            seed,
        };
        Ok((solver, init))
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Tensor sizes, comma-separated
    #[arg(long, default_value = "30,30,30,30", value_delimiter = ',')]
    dims: Vec<usize>,
    /// Coupled mode and covariate width, `mode:width` (repeatable;
    /// default 0:30)
    #[arg(long = "couple", value_parser = parse_mode_count)]
    couple: Vec<(usize, usize)>,
    /// Drop all covariates (overrides --couple)
    #[arg(long)]
    no_covariates: bool,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    /// Fraction of entries kept per uncoupled truth column
    #[arg(long, default_value_t = 0.4)]
    keep_frac: f64,
    #[arg(long, default_value_t = 0.001)]
    eta_t: f64,
    #[arg(long, default_value_t = 0.001)]
    eta_m: f64,
    /// Reveal probability
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <prefix>.tensor, <prefix>.mode<k>.matrix,
    /// <prefix>.truth.model
    #[arg(long)]
    out_prefix: String,
}

fn scenario_from(args: &SimulateArgs) -> Result<Scenario> {
    let dims = args.dims.clone();
    let mut widths = vec![None; dims.len()];
    if !args.no_covariates {
        let couples = if args.couple.is_empty() {
            vec![(0usize, 30usize)]
        } else {
            args.couple.clone()
        };
        for (mode, width) in couples {
            if mode >= dims.len() {
                return Err(Error::ModeOutOfRange {
                    mode,
                    order: dims.len(),
                });
            }
            widths[mode] = Some(width);
        }
    }
    Ok(Scenario {
        dims,
        covariate_widths: widths,
        rank: args.rank,
        keep_fraction: args.keep_frac,
        eta_tensor: args.eta_t,
        eta_matrix: args.eta_m,
        reveal_prob: args.p,
        replicas: 1,
        seed: args.seed,
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let sc = scenario_from(&args)?;
    sc.validate()?;
    let truth = crate::sim::gen_truth(&sc)?;
    let (obs, covs) =
        crate::sim::corrupt(&truth, sc.eta_tensor, sc.eta_matrix, sc.reveal_prob, sc.seed)?;
    let prefix = &args.out_prefix;
    let tensor_path = PathBuf::from(format!("{prefix}.tensor"));
    io::write_tensor(&tensor_path, &obs)?;
    println!(
        "wrote {} ({} observed entries)",
        tensor_path.display(),
        obs.len()
    );
    for (k, cov) in covs.iter().enumerate() {
        if let Some(cov) = cov {
            let path = PathBuf::from(format!("{prefix}.mode{k}.matrix"));
            io::write_covariate(&path, cov)?;
            println!("wrote {}", path.display());
        }
    }
    let model_path = PathBuf::from(format!("{prefix}.truth.model"));
    io::write_model(&model_path, &io::ModelRecord::bare(truth.model))?;
    println!("wrote {}", model_path.display());
    Ok(())
}

fn load_dataset(tensor: &Path, covariates: &[(usize, PathBuf)]) -> Result<Dataset> {
    let obs = io::read_tensor(tensor)?;
    let mut covs: Vec<Option<Covariate>> = vec![None; obs.dims().order()];
    for (mode, path) in covariates {
        if *mode >= covs.len() {
            return Err(Error::ModeOutOfRange {
                mode: *mode,
                order: covs.len(),
            });
        }
        covs[*mode] = Some(io::read_covariate(path)?);
    }
    Dataset::new(obs, covs)
}

#[derive(Args)]
struct FitArgs {
    /// Observed tensor file
    #[arg(long)]
    tensor: PathBuf,
    /// Covariate matrix per coupled mode, `mode:path` (repeatable)
    #[arg(long = "covariate", value_parser = parse_mode_path)]
    covariates: Vec<(usize, PathBuf)>,
    #[arg(long)]
    rank: usize,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Optional objective-trace file, one value per sweep
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let data = load_dataset(&args.tensor, &args.covariates)?;
    let (solver_cfg, init_cfg) = args.solver.resolve(&data, args.rank)?;
    let fitted = fit_auto(&data, &solver_cfg, &init_cfg)?;
    io::write_model(&args.out, &io::ModelRecord::from_fit(&fitted))?;
    if let Some(path) = &args.trace_out {
        let mut text = String::new();
        for v in &fitted.objective_trace {
            text.push_str(&io::fmt_f64(*v));
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    println!(
        "fit: objective {:.6e}, {} sweeps, converged {}, restart {}",
        fitted.final_objective(),
        fitted.iterations,
        fitted.converged,
        fitted.restart_index
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    model: PathBuf,
    /// Coordinate list file (`coords <K> base=<0|1>` header)
    #[arg(long)]
    coords: PathBuf,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_complete(args: CompleteArgs) -> Result<()> {
    let rec = io::read_model(&args.model)?;
    let coords = io::read_coords(&args.coords)?;
    let values = complete(&rec.model, &coords)?;
    let order = rec.model.order();
    let mut csv = String::new();
    let head: Vec<String> = (0..order).map(|k| format!("c{k}")).collect();
    csv.push_str(&head.join(","));
    csv.push_str(",value\n");
    for (c, v) in coords.iter().zip(&values) {
        let words: Vec<String> = c.iter().map(|x| x.to_string()).collect();
        csv.push_str(&words.join(","));
        csv.push(',');
        csv.push_str(&io::fmt_f64(*v));
        csv.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimated model file
    #[arg(long)]
    est: PathBuf,
    /// Reference (truth) model file
    #[arg(long)]
    truth: PathBuf,
    /// Output CSV; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let est = io::read_model(&args.est)?.model;
    let truth = io::read_model(&args.truth)?.model;
    // an uncoupled estimate is comparable to a coupled truth on the tensor side
    let (est, truth) = if est.coupling_spec() == truth.coupling_spec() {
        (est, truth)
    } else {
        (
            CoupledModel::uncoupled(est.cp),
            CoupledModel::uncoupled(truth.cp),
        )
    };
    let truth_tensor = reconstruct(&truth.cp)?;
    let report = metrics(&est, &truth, &truth_tensor)?;
    let csv = io::metrics_csv(&report);
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long = "covariate", value_parser = parse_mode_path)]
    covariates: Vec<(usize, PathBuf)>,
    /// Candidate ranks
    #[arg(long, default_value = "1,2,3,4,5", value_delimiter = ',')]
    ranks: Vec<usize>,
    /// Candidate sparsity fractions
    #[arg(long, default_value = "0.2,0.4,0.6,0.8,0.9,1.0", value_delimiter = ',')]
    fracs: Vec<f64>,
    #[command(flatten)]
    solver: SolverOpts,
    /// Output model file for the winning fit
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of every stage's BIC values
    #[arg(long)]
    bic_out: Option<PathBuf>,
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let data = load_dataset(&args.tensor, &args.covariates)?;
    let (base_cfg, init_cfg) = args.solver.resolve(&data, 1)?;
    let grid = TuneGrid {
        ranks: args.ranks.clone(),
        sparsity_fracs: args.fracs.clone(),
    };
    let outcome = tune(&data, &grid, &base_cfg, &init_cfg)?;
    io::write_model(&args.out, &io::ModelRecord::from_fit(&outcome.best))?;
    if let Some(path) = &args.bic_out {
        fs::write(path, io::tune_csv(&outcome))?;
    }
    println!(
        "tune: rank {}, sparsity fraction {}, objective {:.6e}",
        outcome.rank,
        outcome.sparsity_frac,
        outcome.best.final_objective()
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value = "30,30,30,30", value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long = "couple", value_parser = parse_mode_count)]
    couple: Vec<(usize, usize)>,
    #[arg(long)]
    no_covariates: bool,
    /// Ranks, one scenario per value
    #[arg(long, default_value = "2", value_delimiter = ',')]
    rank: Vec<usize>,
    #[arg(long, default_value_t = 0.4)]
    keep_frac: f64,
    /// Tensor noise levels, one scenario per value
    #[arg(long, default_value = "0.001", value_delimiter = ',')]
    eta_t: Vec<f64>,
    /// Matrix noise levels, one scenario per value
    #[arg(long, default_value = "0.001", value_delimiter = ',')]
    eta_m: Vec<f64>,
    /// Reveal probabilities, one scenario per value
    #[arg(long, default_value = "0.1", value_delimiter = ',')]
    p: Vec<f64>,
    /// First-mode sizes, one scenario per value (overrides dims[0])
    #[arg(long, value_delimiter = ',')]
    d1: Option<Vec<usize>>,
    #[arg(long, default_value_t = 30)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Skip the zero-coupling ablation
    #[arg(long)]
    no_ablation: bool,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Optional gnuplot-compatible data file
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let d1_list = args.d1.clone().unwrap_or_else(|| vec![args.dims[0]]);
    let run_cfg = crate::sim::RunConfig {
        restarts: args.restarts,
        tol: args.tol,
        max_iters: args.max_iters,
        init: InitConfig::default(),
        with_ablation: !args.no_ablation,
    };
    let mut outcomes = Vec::new();
    for &d1 in &d1_list {
        for &rank in &args.rank {
            for &eta_t in &args.eta_t {
                for &eta_m in &args.eta_m {
                    for &p in &args.p {
                        let mut dims = args.dims.clone();
                        dims[0] = d1;
                        let sim_args = SimulateArgs {
                            dims: dims.clone(),
                            couple: args.couple.clone(),
                            no_covariates: args.no_covariates,
                            rank,
                            keep_frac: args.keep_frac,
                            eta_t,
                            eta_m,
                            p,
                            seed: args.seed,
                            out_prefix: String::new(),
                        };
                        let mut sc = scenario_from(&sim_args)?;
                        sc.replicas = args.replicas;
                        eprintln!(
                            "scenario d1={d1} rank={rank} eta_t={eta_t} eta_m={eta_m} p={p} ({} replicas)",
                            args.replicas
                        );
                        outcomes.push(run_experiment(&sc, &run_cfg)?);
                    }
                }
            }
        }
    }
    fs::write(&args.out, io::experiment_csv(&outcomes))?;
    println!("wrote {}", args.out.display());
    if let Some(path) = &args.plot_out {
        fs::write(path, io::experiment_plot_data(&outcomes))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Degenerate(_)
        | Error::AllRestartsDegenerate { .. }
        | Error::SvdNoConvergence { .. } => 3,
        _ => 2,
    }
}

/// Parse and dispatch; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Fit(args) => cmd_fit(args),
        Cmd::Complete(args) => cmd_complete(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
        Cmd::Tune(args) => cmd_tune(args),
        Cmd::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
