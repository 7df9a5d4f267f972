use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use radcap_core::data::{parse_iu_reports, write_synthetic_dataset, DatasetManifest, DatasetSource};
use radcap_core::encoder::{attention_heatmap, encode};
use radcap_core::image::{encode_grid_p2, load_image, load_netpbm};
use radcap_core::metrics::evaluate_corpus;
use radcap_core::pipeline::{caption_image, train_on_manifest};
use radcap_core::{Checkpoint, RunConfig};

#[derive(Parser)]
#[command(name = "radcap", version, about = "Train and evaluate a small image-captioning transformer")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Synthetic,
    IuXml,
}

impl From<Source> for DatasetSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Synthetic => DatasetSource::Synthetic,
            Source::IuXml => DatasetSource::IuXml,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic shapes dataset (PGM images plus manifest.tsv).
    SynthData {
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a manifest from IU-style XML reports.
    IuManifest {
        #[arg(long)]
        xml_dir: PathBuf,
        /// Directory holding `<image id>.pgm` / `.ppm` files.
        #[arg(long)]
        image_dir: PathBuf,
        /// Manifest TSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a manifest and write a checkpoint.
    Train {
        /// TOML file with [encoder], [decoder] and [train] sections; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Manifest TSV (`image_path<TAB>caption`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "synthetic")]
        source: Source,
        /// Checkpoint path to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss CSV path; defaults to `<out>.loss.csv`.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        /// Tokens seen fewer times than this map to <unk>.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Caption images with a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest whose images are captioned (captions in it are ignored).
        #[arg(long, conflicts_with = "images")]
        manifest: Option<PathBuf>,
        /// Image files to caption.
        #[arg(required_unless_present = "manifest")]
        images: Vec<PathBuf>,
        /// Output file for `path<TAB>caption` lines; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against references and write a metric report.
    Evaluate {
        /// `path<TAB>caption` lines, as written by `generate`.
        #[arg(long)]
        predictions: PathBuf,
        /// Reference manifest TSV.
        #[arg(long)]
        references: PathBuf,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include per-sentence scores.
        #[arg(long)]
        per_sentence: bool,
    },
    /// Export one encoder attention row as a patch-grid heatmap.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 0)]
        head: usize,
        /// Query patch index (row-major over the patch grid).
        #[arg(long, default_value_t = 0)]
        patch: usize,
        /// Output prefix; writes `<out>.csv` and `<out>.pgm`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData { count, seed, out } => {
            let manifest = write_synthetic_dataset(&out, count, seed)?;
            log::info!("wrote {} samples to {}", manifest.len(), out.display());
        }
        Command::IuManifest { xml_dir, image_dir, out } => {
            let outcome = parse_iu_reports(&xml_dir, &image_dir)?;
            write(&out, &outcome.manifest.to_tsv())?;
            log::info!(
                "{} entries, {} reports skipped",
                outcome.manifest.len(),
                outcome.skipped.len()
            );
        }
        Command::Train {
            config,
            data,
            source,
            out,
            loss_log,
            min_count,
        } => {
            let run = match &config {
                Some(path) => RunConfig::load(path).with_context(|| format!("config {}", path.display()))?,
                None => RunConfig::default(),
            };
            let manifest = DatasetManifest::load(&data, source.into())?;
            if manifest.is_empty() {
                bail!("manifest {} has no entries", data.display());
            }
            let (checkpoint, log) = train_on_manifest(&manifest, &run, min_count)?;
            checkpoint.save(&out)?;
            let loss_path = loss_log.unwrap_or_else(|| with_suffix(&out, ".loss.csv"));
            write(&loss_path, &log.to_csv())?;
            if let Some(l) = log.final_epoch_loss() {
                log::info!("final epoch loss {l:.6}");
            }
        }
        Command::Generate {
            checkpoint,
            manifest,
            images,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let paths = match manifest {
                Some(m) => DatasetManifest::load(&m, DatasetSource::Synthetic)?
                    .entries
                    .into_iter()
                    .map(|e| e.image)
                    .collect(),
                None => images,
            };
            let mut text = String::new();
            for path in &paths {
                let image = load_netpbm(path)?;
                let caption = caption_image(&ckpt, &image).with_context(|| format!("captioning {}", path.display()))?;
                text.push_str(&format!("{}\t{caption}\n", path.display()));
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Evaluate {
            predictions,
            references,
            out,
            per_sentence,
        } => {
            let pairs = pair_predictions(&predictions, &references)?;
            let report = evaluate_corpus(&pairs)?;
            emit(out.as_deref(), &(report.to_json(per_sentence) + "\n"))?;
        }
        Command::Heatmap {
            checkpoint,
            image,
            layer,
            head,
            patch,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let enc = &ckpt.config.encoder;
            let img = load_image(&image, enc.image_size, enc.channels)?;
            let encoded = encode(&img, enc, &ckpt.params)?;
            let grid = attention_heatmap(&encoded, layer, head, patch)?;
            let csv: String = grid
                .iter()
                .map(|row| row.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
                .collect();
            write(&with_suffix(&out, ".csv"), &csv)?;
            write(&with_suffix(&out, ".pgm"), &encode_grid_p2(&grid))?;
        }
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Canonical form used to match prediction paths with manifest paths.
fn key(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Joins predictions to references by image path, in reference order.
fn pair_predictions(predictions: &Path, references: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(predictions).with_context(|| format!("reading {}", predictions.display()))?;
    let mut predicted = HashMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (path, caption) = line
            .split_once('\t')
            .with_context(|| format!("{} line {} has no tab separator", predictions.display(), n + 1))?;
        predicted.insert(key(Path::new(path)), caption.to_string());
    }
    let refs = DatasetManifest::load(references, DatasetSource::Synthetic)?;
    let mut pairs = Vec::with_capacity(refs.len());
    for e in refs.entries {
        let Some(pred) = predicted.remove(&key(&e.image)) else {
            bail!("no prediction for {}", e.image.display());
        };
        pairs.push((pred, e.caption));
    }
    if let Some(extra) = predicted.keys().next() {
        bail!("prediction for {} has no reference", extra.display());
    }
    Ok(pairs)
}
