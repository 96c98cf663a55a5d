use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmeb::graph::{generate_sbm, make_splits, write_graph_bundle, SbmParams, SplitFractions};
use gmeb::harness::{
    load_dir, report, run_sweep, run_track, save_jsonl, ExperimentConfig, ReportKind, RunRecord,
    Track,
};
use gmeb::seed::SeedTree;

#[derive(Parser)]
#[command(name = "bench", version, about = "Graph model-extraction benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one track of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        track: Option<Track>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list, replacing the config's.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run every point of the config's sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summarize the JSONL records in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: ReportKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a planted-partition graph as a bundle directory.
    GenSbm {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sbm")]
        name: String,
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0.05)]
        p_in: f64,
        #[arg(long, default_value_t = 0.005)]
        p_out: f64,
        #[arg(long, default_value_t = 32)]
        feat_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        feat_signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn summarize(records: &[RunRecord], path: &std::path::Path) {
    let errors = records.iter().filter(|r| r.is_error()).count();
    println!(
        "wrote {} records ({} errors) to {}",
        records.len(),
        errors,
        path.display()
    );
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    out: Option<PathBuf>,
    workers: Option<usize>,
) {
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if workers.is_some() {
        cfg.workers = workers;
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> gmeb::Result<()> {
    match cli.cmd {
        Cmd::Run {
            config,
            track,
            out,
            seeds,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, out, workers);
            if let Some(t) = track {
                cfg.track = t;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            let root = SeedTree::from_env_or(cfg.root_seed).seed();
            let records = run_track(&cfg, 0, root)?;
            let path = cfg.output_dir.join(format!("{}.jsonl", cfg.track.as_str()));
            save_jsonl(&records, &path)?;
            summarize(&records, &path);
        }
        Cmd::Sweep {
            config,
            out,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, out, workers);
            let root = SeedTree::from_env_or(cfg.root_seed).seed();
            let records = run_sweep(&cfg, root)?;
            let path = cfg
                .output_dir
                .join(format!("sweep-{}.jsonl", cfg.track.as_str()));
            save_jsonl(&records, &path)?;
            summarize(&records, &path);
        }
        Cmd::Report { input, kind, out } => {
            let records = load_dir(&input)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            report(&records, kind, File::create(&out)?)?;
            println!("{} records summarized into {}", records.len(), out.display());
        }
        Cmd::GenSbm {
            out,
            name,
            n,
            classes,
            p_in,
            p_out,
            feat_dim,
            feat_signal,
            seed,
        } => {
            let params = SbmParams {
                n,
                num_classes: classes,
                p_in,
                p_out,
                feat_dim,
                feat_signal,
            };
            let tree = SeedTree::new(seed);
            let g = generate_sbm(&params, tree.child("dataset-gen").seed())?;
            let splits = make_splits(&g, &SplitFractions::default(), tree.child("splits").seed())?;
            let dir = write_graph_bundle(&out, &name, &g, &splits.spec)?;
            println!(
                "wrote {} nodes, {} edges to {}",
                g.num_nodes(),
                g.num_edges(),
                dir.display()
            );
        }
    }
    Ok(())
}
