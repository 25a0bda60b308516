//! Command-line pipeline: synthesize a dataset, train, embed a split and
//! evaluate retrieval.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use triplace_core::metric::{mine_triplets, train, SampleInput, TrainOutcome};
use triplace_core::network::Network;
use triplace_core::serialize::{load_descriptors, load_model, save_descriptors, save_model};
use triplace_core::{Error, Result};
use triplace_data::{load_preprocessed, synth_generate, DatasetManifest, PreprocessTarget, RevisitMode, Split};
use triplace_eval::{export_results, format_summary, pr_curve, read_pose_entries, DescriptorDb, PrResult};

pub use config::ExperimentConfig;

const MODULE: &str = "cli";

#[derive(Parser, Debug)]
#[command(name = "triplace", version, about = "Camera-LiDAR place descriptor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value = "same")]
        mode: RevisitMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on every sample of a dataset; writes the model, `<out>.cfg` and
    /// `<out>.loss.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write descriptors of one split in ascending id order.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-1 retrieval of query descriptors against database descriptors.
    /// Pose lines are matched to database rows first, then query rows.
    Eval {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        dpos: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Path of the resolved configuration stored next to a model file.
pub fn config_path(model: &Path) -> PathBuf {
    model.with_extension("cfg")
}

pub fn loss_path(model: &Path) -> PathBuf {
    model.with_extension("loss.csv")
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(MODULE, path, e))?;
    ExperimentConfig::parse(&text).map_err(|e| match e {
        Error::Format { module, message } => Error::Format {
            module,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn target(cfg: &ExperimentConfig) -> PreprocessTarget {
    let e = &cfg.model.embedding;
    PreprocessTarget {
        height: e.image_height,
        width: e.image_width,
        num_points: e.num_points,
    }
}

fn load_inputs(manifest: &DatasetManifest, ids: &[u64], cfg: &ExperimentConfig) -> Result<BTreeMap<u64, SampleInput>> {
    ids.iter()
        .map(|&id| {
            let s = load_preprocessed(manifest, id, target(cfg))?;
            Ok((
                id,
                SampleInput {
                    image: s.image,
                    cloud: s.cloud,
                },
            ))
        })
        .collect()
}

/// Mine tuples over the whole dataset, train from a seeded initialization
/// and write the model with its configuration and loss history.
pub fn train_dataset(data: &Path, cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<TrainOutcome> {
    let manifest = DatasetManifest::open(data)?;
    let t = &cfg.train;
    let tuples = mine_triplets(&manifest.positions(), t.d_pos, t.d_neg, seed.wrapping_add(1), t.num_tuples)?;
    let net = Network::new(cfg.model.clone())?;
    let mut params = net.init_params::<f32>(seed)?;
    let samples = load_inputs(&manifest, &manifest.all_ids(), cfg)?;
    let outcome = train(&net, &mut params, &samples, &tuples, t, seed.wrapping_add(2), |_, _| {})?;
    save_model(&params, out)?;
    let cfg_out = config_path(out);
    fs::write(&cfg_out, cfg.to_text()).map_err(|e| Error::io(MODULE, &cfg_out, e))?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in outcome.loss_history.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    let loss_out = loss_path(out);
    fs::write(&loss_out, csv).map_err(|e| Error::io(MODULE, &loss_out, e))?;
    Ok(outcome)
}

pub fn embed_split(model: &Path, data: &Path, split: Split, out: &Path) -> Result<usize> {
    let cfg = read_config(&config_path(model))?;
    let params = load_model(model)?;
    let net = Network::new(cfg.model.clone())?;
    let manifest = DatasetManifest::open(data)?;
    let ids = manifest.ids(split);
    let mut rows = Vec::with_capacity(ids.len());
    for (_, s) in load_inputs(&manifest, &ids, &cfg)? {
        rows.push(net.embed(&params, &s.image, &s.cloud)?);
    }
    save_descriptors(&rows, cfg.model.descriptor_dim(), out)?;
    Ok(rows.len())
}

pub fn evaluate(db: &Path, query: &Path, poses: &Path, d_pos: f64, out: &Path) -> Result<PrResult> {
    let (_, db_rows) = load_descriptors(db)?;
    let (_, q_rows) = load_descriptors(query)?;
    let entries = read_pose_entries(poses)?;
    let (nd, nq) = (db_rows.len(), q_rows.len());
    if entries.len() != nd + nq {
        return Err(Error::format(
            "evalkit",
            format!(
                "{} lists {} poses but the descriptor files hold {} ({nd} database + {nq} query)",
                poses.display(),
                entries.len(),
                nd + nq
            ),
        ));
    }
    let db = DescriptorDb::new(db_rows, &entries[..nd])?;
    let queries = DescriptorDb::new(q_rows, &entries[nd..])?;
    let pr = pr_curve(&db, &queries, d_pos, None)?;
    export_results(&pr, out)?;
    Ok(pr)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, s: String| {
        let _ = writeln!(out, "{s}");
    };
    match cli.command {
        Command::Synth { out: dir, scenes, mode, seed } => {
            let m = synth_generate(&dir, scenes, mode, seed)?;
            say(out, format!("wrote {} samples to {}", m.all_ids().len(), dir.display()));
        }
        Command::Train { data, config, out: model, seed } => {
            let cfg = read_config(&config)?;
            let o = train_dataset(&data, &cfg, &model, seed)?;
            let last = o.loss_history.last().copied().unwrap_or(f64::NAN);
            say(out, format!("trained {} steps, final loss {last}", o.loss_history.len()));
        }
        Command::Embed { model, data, split, out: file } => {
            let n = embed_split(&model, &data, split, &file)?;
            say(out, format!("wrote {n} descriptors to {}", file.display()));
        }
        Command::Eval { db, query, poses, dpos, out: base } => {
            let pr = evaluate(&db, &query, &poses, dpos, &base)?;
            let _ = write!(out, "{}", format_summary(&pr));
        }
    }
    Ok(())
}

/// Run with explicit output streams. Exit codes: 0 success, 1 contract or
/// format error, 2 I/O error.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{MODULE}: {e}");
            return 1;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
