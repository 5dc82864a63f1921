use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use voxrisk::cohort::MetadataLadderLevel;
use voxrisk::evaluation::{FeatureSource, SpeechScope};
use voxrisk::synth::{SynthEffect, SynthSpec};
use voxrisk_cli::{cmd_ablation, cmd_evaluate, cmd_extract, cmd_segment, cmd_stats, cmd_synth, CliError, RunConfig};

/// Speech-based suicide-risk screening pipeline.
///
/// Settings come from `--config` (TOML); flags override the file.
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
#[derive(Parser)]
#[command(name = "voxrisk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Experiment seed for inner CV folds and permutations; for `synth`, the cohort seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Speech scope(s), comma separated: all, picture_description, neutral_text, vowels.
    #[arg(long, global = true, value_delimiter = ',')]
    scope: Vec<SpeechScope>,
    /// Feature source(s), comma separated. For `extract`, the sources to compute.
    #[arg(long, global = true, value_delimiter = ',')]
    features: Vec<FeatureSource>,
    /// Metadata level F1..F10 to fuse.
    #[arg(long = "metadata-level", global = true)]
    metadata_level: Option<MetadataLadderLevel>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split recordings into utterance segments and write the duration table.
    Segment {
        #[arg(long)]
        audio: Option<PathBuf>,
        #[arg(long)]
        manifests: Option<PathBuf>,
    },
    /// Compute acoustic feature vectors for every segment.
    Extract,
    /// Leave-one-subject-out evaluation.
    Evaluate {
        /// Metadata CSV.
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Directory of precomputed embedding files.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Also compute a label-permutation chance band with this many runs.
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Metadata fusion ladder F1..F10 against all speech scopes.
    Ablation {
        /// Metadata CSV.
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Directory of precomputed embedding files.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Generate a synthetic cohort.
    Synth {
        /// JSON synthesis spec; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        subjects: usize,
        #[arg(long, default_value_t = 0.5)]
        class_ratio: f64,
        #[arg(long)]
        f0_shift: Option<f64>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        shimmer: Option<f64>,
    },
    /// Recompute the segment duration table.
    Stats,
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(level) = common.metadata_level {
        cfg.experiment.metadata_level = Some(level);
    }
    if let Some(out) = &common.out {
        cfg.paths.out_dir = out.clone();
    }
    if let [one] = common.scope.as_slice() {
        cfg.experiment.speech_scope = *one;
    }
    if let [one] = common.features.as_slice() {
        cfg.experiment.feature_source = one.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Segment { audio, manifests } => {
            cfg.paths.audio_dir = audio.or(cfg.paths.audio_dir);
            cfg.paths.manifest_dir = manifests.or(cfg.paths.manifest_dir);
            print!("{}", cmd_segment(&cfg)?.to_text());
        }
        Command::Extract => {
            if !cli.common.features.is_empty() {
                cfg.extract_sources = cli
                    .common
                    .features
                    .iter()
                    .map(|f| match f {
                        FeatureSource::Acoustic(a) => Ok(*a),
                        other => Err(CliError::Config(format!("`{other}` cannot be extracted from audio"))),
                    })
                    .collect::<Result<_, _>>()?;
            }
            let n = cmd_extract(&cfg)?;
            println!("extracted features for {n} segments");
        }
        Command::Evaluate {
            metadata,
            embeddings,
            permutations,
        } => {
            cfg.paths.metadata = metadata.or(cfg.paths.metadata);
            cfg.paths.embeddings_dir = embeddings.or(cfg.paths.embeddings_dir);
            cfg.permutations = permutations.unwrap_or(cfg.permutations);
            let outcome = cmd_evaluate(&cfg, &cli.common.features, &cli.common.scope)?;
            for (r, p) in outcome.reports.iter().zip(&outcome.paths) {
                println!(
                    "{:<24} {:<20} segment {:.4}  subject {:.4}  {}",
                    r.config.feature_source.to_string(),
                    r.config.speech_scope.to_string(),
                    r.balanced_accuracy_segment,
                    r.balanced_accuracy_subject,
                    p.display()
                );
            }
        }
        Command::Ablation { metadata, embeddings } => {
            cfg.paths.metadata = metadata.or(cfg.paths.metadata);
            cfg.paths.embeddings_dir = embeddings.or(cfg.paths.embeddings_dir);
            print!("{}", cmd_ablation(&cfg)?.to_text());
        }
        Command::Synth {
            spec,
            subjects,
            class_ratio,
            f0_shift,
            jitter,
            shimmer,
        } => {
            let mut spec = match spec {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                }
                None => SynthSpec {
                    n_subjects: subjects,
                    class_ratio,
                    effect: SynthEffect::default(),
                    seed: 0,
                },
            };
            if let Some(seed) = cli.common.seed {
                spec.seed = seed;
            }
            spec.effect.f0_shift_hz = f0_shift.unwrap_or(spec.effect.f0_shift_hz);
            spec.effect.jitter_amount = jitter.unwrap_or(spec.effect.jitter_amount);
            spec.effect.shimmer_amount = shimmer.unwrap_or(spec.effect.shimmer_amount);
            let out = cli.common.out.unwrap_or_else(|| PathBuf::from("synth"));
            cmd_synth(&spec, &out)?;
            println!(
                "wrote synthetic cohort of {} subjects to {}",
                spec.n_subjects,
                out.display()
            );
        }
        Command::Stats => print!("{}", cmd_stats(&cfg)?.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = cli
        .common
        .config
        .as_ref()
        .and_then(|p| RunConfig::load(p).ok())
        .map_or("info".to_string(), |c| c.log_level);
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
