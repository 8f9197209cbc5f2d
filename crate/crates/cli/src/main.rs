//! Command-line entry point: homophily statistics, dataset conversion and
//! synthesis, lifelong evaluation runs, sweeps and score dumps.

use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use graph_ood::config::RunConfig;
use graph_ood::harness::{
    curves_to_tsv, default_alpha_grid, default_q_grid, run_lifelong, run_task, sweep_alpha, sweep_q,
};
use graph_ood::io::{
    convert_citation_raw, convert_linqs, load_bundle, save_bundle, synth_generate, write_converted,
    ConvertOptions, RawCitationFiles, SynthConfig,
};
use graph_ood::seed::derive_seed;
use graph_ood::{Error, Graph64, Stream64};

#[derive(Parser, Debug)]
#[command(name = "graph-ood", version, about = "Out-of-distribution detection on attributed graphs")]
struct Cli {
    /// Directory receiving every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the run config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of worker threads used for independent tasks.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the homophily measures of a bundle as JSON.
    Homophily { bundle: PathBuf },
    /// Generate a synthetic bundle into `<out>/<name>`.
    Synth { config: PathBuf, name: PathBuf },
    /// Convert raw citation files into a bundle written to `<out>`.
    Convert(ConvertArgs),
    /// Run the lifelong evaluation and write report.json and report.tsv.
    Run { config: PathBuf },
    /// Mean AUROC against the GOOD weight; writes alpha_curve.tsv.
    SweepAlpha {
        config: PathBuf,
        /// Comma-separated α grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Micro-F1 of Open-WRF against q and of the naive threshold against
    /// δ over the same grid; writes q_curve.tsv.
    SweepQ {
        config: PathBuf,
        /// Comma-separated grid, shared by q and δ.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Write per-vertex scores and decisions of every task.
    Scores { config: PathBuf },
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Citation pairs, `id_a id_b` per line
    #[arg(long, requires_all = ["features", "labels"], conflicts_with_all = ["content", "cites"])]
    edges: Option<PathBuf>,
    /// Feature rows, `id x_1 ... x_D` per line
    #[arg(long)]
    features: Option<PathBuf>,
    /// Class names, `id class_name` per line
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Publication years, `id year` per line
    #[arg(long)]
    years: Option<PathBuf>,
    /// LINQS `.content` file (id, features, class name per line).
    #[arg(long, requires = "cites")]
    content: Option<PathBuf>,
    /// LINQS `.cites` file.
    #[arg(long)]
    cites: Option<PathBuf>,
    /// Skip edges whose endpoints have no feature row.
    #[arg(long)]
    drop_dangling: bool,
}

fn config_error(msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(msg.to_string())
}

fn create_out(dir: &Path) -> graph_ood::Result<()> {
    fs::create_dir_all(dir).map_err(|e| config_error(format!("cannot create {}: {e}", dir.display())))
}

fn emit(path: &Path, contents: &str) -> graph_ood::Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    println!("{}", path.display());
    Ok(())
}

fn load_run(cli: &Cli, path: &Path) -> graph_ood::Result<(RunConfig, Graph64)> {
    let mut cfg = RunConfig::load(path).map_err(|e| match e {
        Error::Io { path, source } => config_error(format!("cannot read {}: {source}", path.display())),
        other => other,
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let g = load_bundle(&cfg.dataset)?;
    log::info!(
        "loaded {} vertices, {} edges, {} classes from {}",
        g.num_vertices(),
        g.num_edges(),
        g.num_classes(),
        cfg.dataset.display()
    );
    Ok((cfg, g))
}

fn stream(cfg: &RunConfig, g: &Graph64) -> graph_ood::Result<Stream64> {
    cfg.protocol.build(g, derive_seed(cfg.seed, &[u64::MAX]))
}

fn run(cli: &Cli) -> graph_ood::Result<()> {
    match &cli.command {
        Command::Homophily { bundle } => {
            let g: Graph64 = load_bundle(bundle)?;
            let report = graph_ood::graph::homophily_measures(&g)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Synth { config, name } => {
            if name.is_absolute() || name.components().any(|c| !matches!(c, Component::Normal(_))) {
                return Err(config_error(format!("bundle name {} must be a plain relative path", name.display())));
            }
            let text = fs::read_to_string(config)
                .map_err(|e| config_error(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg: SynthConfig =
                serde_json::from_str(&text).map_err(|e| config_error(format!("synth config: {e}")))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let g: Graph64 = synth_generate(&cfg)?;
            for p in save_bundle(&g, &cli.out.join(name))? {
                println!("{}", p.display());
            }
        }
        Command::Convert(args) => {
            let opts = ConvertOptions {
                drop_dangling: args.drop_dangling,
            };
            let converted = match (&args.edges, &args.content) {
                (Some(edges), None) => {
                    let files = RawCitationFiles {
                        edges: edges.clone(),
                        features: args.features.clone().expect("required by clap"),
                        labels: args.labels.clone().expect("required by clap"),
                        years: args.years.clone(),
                    };
                    convert_citation_raw::<f64>(&files, opts)?
                }
                (None, Some(content)) => convert_linqs::<f64>(content, args.cites.as_ref().expect("required by clap"), opts)?,
                _ => return Err(config_error("give either --edges/--features/--labels or --content/--cites")),
            };
            create_out(&cli.out)?;
            for p in write_converted(&converted, &cli.out)? {
                println!("{}", p.display());
            }
        }
        Command::Run { config } => {
            let (cfg, g) = load_run(cli, config)?;
            let tasks = stream(&cfg, &g)?;
            let start = Instant::now();
            let mut report = run_lifelong(&tasks, &cfg.pipeline, cfg.seed, cli.threads)?;
            log::info!("{} tasks in {:.2?}", tasks.tasks.len(), start.elapsed());
            report.config = serde_json::to_value(&cfg).expect("config serializes");
            create_out(&cli.out)?;
            emit(&cli.out.join("report.json"), &report.to_json())?;
            emit(&cli.out.join("report.tsv"), &report.to_tsv())?;
        }
        Command::SweepAlpha { config, alphas } => {
            let (cfg, g) = load_run(cli, config)?;
            let grid = alphas.clone().unwrap_or_else(default_alpha_grid);
            let curve = sweep_alpha(&stream(&cfg, &g)?, &cfg.pipeline, &grid, cfg.seed)?;
            create_out(&cli.out)?;
            emit(&cli.out.join("alpha_curve.tsv"), &curves_to_tsv(&[curve], "auroc"))?;
        }
        Command::SweepQ { config, grid } => {
            let (cfg, g) = load_run(cli, config)?;
            let grid = grid.clone().unwrap_or_else(default_q_grid);
            let curves = sweep_q(&stream(&cfg, &g)?, &cfg.pipeline, &grid, &grid, cfg.seed)?;
            for c in &curves {
                log::info!("{}: area {:.4}", c.method, c.area());
            }
            create_out(&cli.out)?;
            emit(&cli.out.join("q_curve.tsv"), &curves_to_tsv(&curves, "f1"))?;
        }
        Command::Scores { config } => {
            let (cfg, g) = load_run(cli, config)?;
            let tasks = stream(&cfg, &g)?;
            create_out(&cli.out)?;
            for (i, task) in tasks.tasks.iter().enumerate() {
                let outcome = run_task(task, &cfg.pipeline, derive_seed(cfg.seed, &[i as u64]))?;
                let ids = &task.eval_vertices;
                let scores = outcome.final_scores.select(ids);
                emit(&cli.out.join(format!("scores_{}.tsv", task.name)), &scores.to_tsv(Some(ids)))?;
                emit(
                    &cli.out.join(format!("decisions_{}.tsv", task.name)),
                    &outcome.decision.to_tsv(ids, scores.as_slice())?,
                )?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAPH_OOD_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
