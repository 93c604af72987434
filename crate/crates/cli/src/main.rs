//! `ambiance`: predict the ambiance of commercial places from the profile
//! pictures of their visitors.
//!
//! Exit codes: 0 success, 1 validation findings, 2 stage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ambiance_core::cluster::TargetMode;
use ambiance_core::pipeline::{
    self, AnnotationKind, DatasetLayout, RunConfig, StageError,
};

#[derive(Parser)]
#[command(
    name = "ambiance",
    about = "Predict place ambiance from visitors' profile pictures",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Dataset root (contains places/, ratings.csv, …)
    dataset: PathBuf,
    /// Output directory for artifacts and reports
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run seed; recorded in every artifact
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annotation source
    #[arg(long, value_parser = parse_annotations, default_value = "stub")]
    annotations: AnnotationKind,
    /// Significance threshold for correlation reports
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// How a cluster turns member ratings into its score
    #[arg(long, value_parser = parse_target_mode, default_value = "target")]
    target_mode: TargetMode,
    /// Accept places with fewer than 25 pictures (minimum 5)
    #[arg(long)]
    allow_partial: bool,
}

fn parse_annotations(text: &str) -> Result<AnnotationKind, String> {
    match text {
        "remote" => Ok(AnnotationKind::Remote),
        "file" => Ok(AnnotationKind::File),
        "stub" => Ok(AnnotationKind::Stub),
        other => Err(format!("unknown annotation source {other:?} (remote|file|stub)")),
    }
}

fn parse_target_mode(text: &str) -> Result<TargetMode, String> {
    match text {
        "target" => Ok(TargetMode::Target),
        "mean" => Ok(TargetMode::Mean),
        other => Err(format!("unknown target mode {other:?} (target|mean)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-picture features (cached by content hash)
    Extract(CommonArgs),
    /// Aggregate extracted features into 129-element place profiles
    Aggregate(CommonArgs),
    /// Cluster the 72 ambiance dimensions and emit target scores
    Cluster(CommonArgs),
    /// Compute both feature-ambiance correlation matrices
    Correlate(CommonArgs),
    /// Leave-one-out prediction of every ambiance dimension
    Predict(CommonArgs),
    /// People-vs-algorithm accuracy comparison table
    Compare(CommonArgs),
    /// Run every stage and write the full report bundle
    Pipeline(CommonArgs),
    /// Check dataset layout, annotations, ratings coverage, and manifests
    Validate(CommonArgs),
    /// Generate a synthetic demo dataset
    GenDemo {
        /// Directory to create the dataset in
        dataset: PathBuf,
        #[arg(long, default_value_t = 16)]
        places: usize,
        #[arg(long, default_value_t = 25)]
        pictures: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn config_of(args: &CommonArgs) -> RunConfig {
    let mut config = RunConfig::new(args.out.clone());
    config.seed = args.seed;
    config.annotations = args.annotations.clone();
    config.alpha = args.alpha;
    config.target_mode = args.target_mode;
    config.allow_partial = args.allow_partial;
    config
}

fn run(command: Command) -> Result<ExitCode, StageError> {
    match command {
        Command::Extract(args) => {
            let outcome =
                pipeline::run_extract(&DatasetLayout::new(&args.dataset), &config_of(&args))?;
            eprintln!(
                "extracted {} pictures ({} recomputed, {} cached)",
                outcome.recomputed + outcome.reused,
                outcome.recomputed,
                outcome.reused
            );
        }
        Command::Aggregate(args) => {
            let config = config_of(&args);
            let features = pipeline::load_features(&config)?;
            let profiles = pipeline::run_aggregate(&features, &config)?;
            eprintln!("aggregated {} places", profiles.len());
        }
        Command::Cluster(args) => {
            let config = config_of(&args);
            let layout = DatasetLayout::new(&args.dataset);
            let ratings = pipeline::load_ratings(&layout)?;
            let outcome = pipeline::run_cluster(&layout, &config, &ratings)?;
            eprintln!(
                "selected k={} (silhouette {:.4}); relabeled to {} clusters",
                outcome.raw.k, outcome.raw.silhouette, outcome.relabeled.k
            );
        }
        Command::Correlate(args) => {
            let config = config_of(&args);
            let profiles = pipeline::load_profiles(&config)?;
            let arrangement = pipeline::load_arrangement(&config)?;
            let face = pipeline::load_targets(&config, "targets_face_driven")?;
            let spot = pipeline::load_targets(&config, "targets_on_the_spot")?;
            let names = arrangement.cluster_names();
            pipeline::run_correlate(&profiles, &face, &spot, &names, &config)?;
            eprintln!("wrote correlation matrices for {} dimensions", names.len());
        }
        Command::Predict(args) => {
            let config = config_of(&args);
            let profiles = pipeline::load_profiles(&config)?;
            let arrangement = pipeline::load_arrangement(&config)?;
            let spot = pipeline::load_targets(&config, "targets_on_the_spot")?;
            let report =
                pipeline::run_predict(&profiles, &spot, &arrangement.cluster_names(), &config)?;
            for dim in &report.dimensions {
                eprintln!("{:>24}  %MSE {:6.3}", dim.dimension, dim.percent_mse);
            }
        }
        Command::Compare(args) => {
            let config = config_of(&args);
            let arrangement = pipeline::load_arrangement(&config)?;
            let face = pipeline::load_targets(&config, "targets_face_driven")?;
            let spot = pipeline::load_targets(&config, "targets_on_the_spot")?;
            let report = pipeline::load_report(&config)?;
            let people = pipeline::load_matrix(&config, "face_driven")?;
            let algorithm = pipeline::load_matrix(&config, "on_the_spot")?;
            let table = pipeline::run_compare(
                &face,
                &spot,
                &arrangement.cluster_names(),
                &report,
                &people,
                &algorithm,
                &config,
            )?;
            eprintln!("compared {} dimensions", table.rows.len());
        }
        Command::Pipeline(args) => {
            let config = config_of(&args);
            let summary = pipeline::run_pipeline(&DatasetLayout::new(&args.dataset), &config)?;
            eprintln!(
                "pipeline complete: {} places, {} pictures, k={} -> {}",
                summary.places,
                summary.pictures,
                summary.selected_k,
                config.out_dir.display()
            );
        }
        Command::Validate(args) => {
            let config = config_of(&args);
            let findings = pipeline::validate(&DatasetLayout::new(&args.dataset), &config);
            if findings.is_empty() {
                eprintln!("dataset is clean");
            } else {
                for finding in &findings {
                    println!("{}: {}", finding.location, finding.message);
                }
                return Ok(ExitCode::from(1));
            }
        }
        Command::GenDemo {
            dataset,
            places,
            pictures,
            seed,
        } => {
            ambiance_core::synth::generate_demo_dataset(&dataset, places, pictures, seed)
                .map_err(|e| StageError {
                    stage: "gen-demo",
                    message: e.to_string(),
                })?;
            eprintln!(
                "wrote demo dataset: {places} places x {pictures} pictures at {}",
                dataset.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
