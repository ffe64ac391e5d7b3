use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use vistrack::gradcheck::{run_gradient_check, REL_TOLERANCE};
use vistrack::io::{self, AnnotationSet, Category, DetectionSet};
use vistrack::pseudo_pair::pairs_for_videos;
use vistrack::{evaluate, generate, merge_tracks, track_video, Error, RunConfig, VideoMeta, VideoTracks};

#[derive(Parser)]
#[command(name = "vistrack", version, about = "Online video instance segmentation toolkit")]
struct Cli {
    /// Cap on worker threads (overrides the config's `threads`).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Associate per-frame detections into tracks.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score results against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also print a plain-text table to stdout.
        #[arg(long)]
        table: bool,
    },
    /// Make pseudo key/reference pairs by cropping annotated frames twice.
    Pseudopair {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge several results files by spatio-temporal NMS.
    Fuse {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus (annotations, detections, identity key).
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check the embedding loss gradient against finite differences.
    Losscheck {
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        Error::Parse { .. }
        | Error::Schema { .. }
        | Error::CountsMismatch { .. }
        | Error::InvalidCounts(_)
        | Error::InvalidBox(_)
        | Error::DimensionMismatch(_)
        | Error::DuplicateInstanceId(_)
        | Error::UnknownVideoId(_)
        | Error::UnknownCategory(_)
        | Error::VideoMismatch(_) => 2,
        Error::InvalidConfig(_) | Error::ConfigInfeasible(_) => 3,
        _ => 4,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn write(path: &Path, contents: String) -> Result<(), Error> {
    fs::write(path, contents)?;
    Ok(())
}

fn track(detections: &Path, cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let set = io::load_detections(detections)?;
    let results = set
        .videos
        .par_iter()
        .map(|v| track_video(&v.frames, &cfg.association, v.meta).map(|tracks| VideoTracks { meta: v.meta, tracks }))
        .collect::<Result<Vec<_>, _>>()?;
    io::save_results(&results, out)
}

fn eval(gt: &Path, results: &Path, cfg: &RunConfig, out: &Path, table: bool) -> Result<(), Error> {
    let annotations = io::load_annotations(gt)?;
    let preds = io::load_results(results)?;
    let report = evaluate(&preds, &annotations.videos, &cfg.eval)?;
    write(out, io::report_to_string(&report))?;
    if table {
        print!("{}", report.to_table(&cfg.eval.max_detections));
    }
    Ok(())
}

fn pseudopair(annotations: &Path, cfg: &RunConfig, seed: Option<u64>, out: &Path) -> Result<(), Error> {
    let set = io::load_annotations(annotations)?;
    let pairs = pairs_for_videos(&set.videos, &cfg.crop, seed.unwrap_or(cfg.crop.rng_seed))?;
    io::save_pairs(&pairs, out)
}

fn fuse(inputs: &[PathBuf], cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    let sets = inputs
        .iter()
        .map(|p| io::load_results(p))
        .collect::<Result<Vec<_>, _>>()?;
    // video id -> (meta, one track set per input, empty where absent)
    let mut videos: BTreeMap<u64, (VideoMeta, Vec<VideoTracks>)> = BTreeMap::new();
    for (s, set) in sets.iter().enumerate() {
        for vt in set {
            let (meta, per_input) = videos.entry(vt.meta.video_id).or_insert_with(|| {
                let empty = VideoTracks {
                    meta: vt.meta,
                    tracks: Vec::new(),
                };
                (vt.meta, vec![empty; sets.len()])
            });
            if meta.length != vt.meta.length {
                return Err(Error::VideoMismatch(format!(
                    "video {} has length {} in one input and {} in another",
                    meta.video_id, meta.length, vt.meta.length
                )));
            }
            if meta.height == 0 {
                meta.height = vt.meta.height;
                meta.width = vt.meta.width;
            }
            per_input[s].tracks = vt.tracks.clone();
        }
    }
    let merged = videos
        .into_par_iter()
        .map(|(_, (meta, mut per_input))| {
            for vt in per_input.iter_mut() {
                vt.meta = meta;
            }
            merge_tracks(&per_input, &cfg.fusion, &meta).map(|tracks| VideoTracks { meta, tracks })
        })
        .collect::<Result<Vec<_>, _>>()?;
    io::save_results(&merged, out)
}

fn synth(cfg: &RunConfig, seed: Option<u64>, out_dir: &Path) -> Result<(), Error> {
    let mut scfg = cfg.synth.clone();
    if let Some(s) = seed {
        scfg.rng_seed = s;
    }
    let corpus = generate(&scfg)?;
    let annotations = AnnotationSet {
        videos: corpus.ground_truth,
        categories: corpus
            .categories
            .iter()
            .map(|&id| Category {
                id,
                name: format!("class{id}"),
            })
            .collect(),
    };
    let detections = DetectionSet {
        embedding_dim: scfg.embedding_dim as usize,
        videos: corpus.detections,
    };
    let ann = io::annotations_to_string(&annotations);
    let det = io::detections_to_string(&detections);
    let ids = io::identity_to_string(&corpus.identity_key);
    fs::create_dir_all(out_dir)?;
    write(&out_dir.join("annotations.json"), ann)?;
    write(&out_dir.join("detections.json"), det)?;
    write(&out_dir.join("identity.json"), ids)
}

fn losscheck(samples: usize, seed: u64) -> Result<(), Error> {
    let report = run_gradient_check(samples, seed)?;
    println!(
        "samples {} components {} max relative error {:.3e} max absolute error {:.3e} failures {}",
        report.samples, report.components, report.max_rel_error, report.max_abs_error, report.failures
    );
    if report.passed() {
        println!("PASS (tolerance {REL_TOLERANCE:e})");
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{} gradient components exceed tolerance {REL_TOLERANCE:e}",
            report.failures
        )))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config_path = match &cli.command {
        Command::Track { config, .. }
        | Command::Eval { config, .. }
        | Command::Pseudopair { config, .. }
        | Command::Fuse { config, .. }
        | Command::Synth { config, .. } => config.clone(),
        Command::Losscheck { .. } => None,
    };
    let cfg = load_config(config_path.as_deref())?;
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Track { detections, out, .. } => track(&detections, &cfg, &out),
        Command::Eval {
            gt,
            results,
            out,
            table,
            ..
        } => eval(&gt, &results, &cfg, &out, table),
        Command::Pseudopair {
            annotations, seed, out, ..
        } => pseudopair(&annotations, &cfg, seed, &out),
        Command::Fuse { inputs, out, .. } => fuse(&inputs, &cfg, &out),
        Command::Synth { seed, out_dir, .. } => synth(&cfg, seed, &out_dir),
        Command::Losscheck { samples, seed } => losscheck(samples, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
