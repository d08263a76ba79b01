//! Thin command-line front end over the library pipeline. Every subcommand
//! maps onto one pipeline stage (or a small orchestration of them) and
//! operates on a run directory.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use hedseg::phantom::PhantomSpec;
use hedseg::pipeline::{self, RunConfig, Stage};
use hedseg::{eval, phantom};

#[derive(Parser)]
#[command(name = "hedseg", about = "Edge-guided liver segmentation pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Run directory holding all stage inputs and outputs.
    #[arg(long)]
    run_dir: PathBuf,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl StageArgs {
    fn load(&self) -> hedseg::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => pipeline::load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest DICOM (or generate phantoms) into normalized slices.
    Convert(StageArgs),
    /// Contrast-enhance converted slices.
    Enhance(StageArgs),
    /// Train the edge network on enhanced training slices.
    TrainHed(StageArgs),
    /// Write per-slice edge probability maps.
    Edges(StageArgs),
    /// Multiply enhanced slices with their edge maps.
    Fuse(StageArgs),
    /// Train the instance-segmentation detector on fused slices.
    TrainSeg(StageArgs),
    /// Run the detector on held-out slices.
    Infer(StageArgs),
    /// Clean up raw predictions (largest component, hole filling).
    Postprocess(StageArgs),
    /// Score cleaned predictions and write reports.
    Eval(StageArgs),
    /// Run every stage start to finish.
    Run(StageArgs),
    /// Generate a synthetic phantom dataset.
    Phantoms {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        image_size: usize,
        #[arg(long, default_value_t = 10)]
        slices_per_patient: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train with and without edge fusion and report the Dice delta.
    Ablation(StageArgs),
    /// Compare the held-out scores of two finished runs.
    Compare {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        /// Output markdown table.
        #[arg(long)]
        out: PathBuf,
    },
}

fn stage_of(command: &Command) -> Option<Stage> {
    let name = match command {
        Command::Convert(_) => "convert",
        Command::Enhance(_) => "enhance",
        Command::TrainHed(_) => "train-hed",
        Command::Edges(_) => "edges",
        Command::Fuse(_) => "fuse",
        Command::TrainSeg(_) => "train-seg",
        Command::Infer(_) => "infer",
        Command::Postprocess(_) => "postprocess",
        Command::Eval(_) => "eval",
        _ => return None,
    };
    Some(Stage::from_str(name).expect("stage names stay in sync"))
}

fn run(cli: Cli) -> hedseg::Result<()> {
    if let Some(stage) = stage_of(&cli.command) {
        let args = match &cli.command {
            Command::Convert(a)
            | Command::Enhance(a)
            | Command::TrainHed(a)
            | Command::Edges(a)
            | Command::Fuse(a)
            | Command::TrainSeg(a)
            | Command::Infer(a)
            | Command::Postprocess(a)
            | Command::Eval(a) => a,
            _ => unreachable!(),
        };
        let cfg = args.load()?;
        pipeline::run_pipeline(&args.run_dir, &cfg, &[stage])?;
        println!("stage {stage} done in {}", args.run_dir.display());
        return Ok(());
    }
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            pipeline::run_all(&args.run_dir, &cfg)?;
            let dice = pipeline::run_mean_dice(&args.run_dir)?;
            println!("run complete, held-out mean dice {dice:.4}");
        }
        Command::Phantoms {
            out_dir,
            count,
            image_size,
            slices_per_patient,
            seed,
        } => {
            let spec = PhantomSpec {
                count,
                image_size,
                slices_per_patient,
                seed,
                ..Default::default()
            };
            let manifest = phantom::generate_phantoms(&spec, &out_dir)?;
            println!("wrote {count} phantoms, manifest {}", manifest.display());
        }
        Command::Ablation(args) => {
            let cfg = args.load()?;
            let rows = pipeline::run_ablation(&args.run_dir, &cfg)?;
            for row in &rows {
                println!(
                    "{}: {} {:.4} vs {} {:.4} (delta {:+.4})",
                    row.modality, row.method_a, row.mean_a, row.method_b, row.mean_b, row.delta
                );
            }
        }
        Command::Compare { run_a, run_b, out } => {
            let a = eval::evaluate(&run_a.join("pred"), &run_a.join("val_manifest.txt"), "a")?;
            let b = eval::evaluate(&run_b.join("pred"), &run_b.join("val_manifest.txt"), "b")?;
            let rows = eval::compare(&a, &b)?;
            eval::write_comparison(&rows, &out)?;
            for row in &rows {
                println!(
                    "{}: a {:.4} vs b {:.4} (delta {:+.4})",
                    row.modality, row.mean_a, row.mean_b, row.delta
                );
            }
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
