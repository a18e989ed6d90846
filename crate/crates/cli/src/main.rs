//! `mmego` command-line tool: data engine, benchmark builder, training,
//! two-pass inference and debiased evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mmego::benchkit::{build_benchmark, stats, term_frequencies, write_terms_csv, McqConfig, McqItem};
use mmego::dataforge::{
    balance, forge, load_narrations, read_id_list, split_by_ids, synth_narrated_videos, Backend, BalanceConfig,
    Conversation, ForgeConfig, FrameSampling, RemoteBackend, RemoteConfig,
};
use mmego::embedkit::{
    encode_video, read_image_dir, read_raw_frames, synth_video, EncoderConfig, MockEncoder, SynthSpec,
    VideoFrames,
};
use mmego::evalharness::{
    alpha_sweep, mda, run_predictions, write_mda_csv, write_sweep_csv, AnswerMode, BiasSet, MmEgoAdapter,
    ModelAdapter, Prediction, VideoBank,
};
use mmego::jsonl::{read_jsonl, write_jsonl};
use mmego::microlm::{CosineSchedule, OptimizerConfig, OptimizerKind};
use mmego::pointerkit::{
    conversation_examples, scores_svg, train_model, write_scores_csv, InferOptions, MmEgo, MmEgoConfig,
    SelectionPolicy, TrainConfig,
};
use mmego::toytask;

#[derive(Parser)]
#[command(name = "mmego", version, about = "Question-aware key-frame selection for long egocentric video QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Narration-to-QA data engine.
    #[command(subcommand)]
    Forge(ForgeCmd),
    /// Multiple-choice benchmark construction.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Train a model on forged data or on the synthetic toy task.
    Train(TrainArgs),
    /// Two-pass inference on one video.
    Infer(InferArgs),
    /// Evaluation and debiasing.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum ForgeCmd {
    /// Generate QA conversations from a directory of narrated-video JSON files.
    Generate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "template")]
        backend: BackendKind,
        #[arg(long, default_value_t = 12)]
        n_questions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        remote: RemoteArgs,
    },
    /// Down-sample conversations so length buckets are balanced.
    Balance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.1)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bucket upper edges in seconds.
        #[arg(long, value_delimiter = ',', default_values_t = vec![120.0, 600.0, 1200.0, 2400.0, 3600.0])]
        edges: Vec<f64>,
    },
    /// Split conversations by video id list files.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        train_ids: PathBuf,
        #[arg(long)]
        test_ids: PathBuf,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
    },
    /// Write synthetic narrated videos, one JSON file each.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Template,
    Remote,
}

#[derive(Args)]
struct SamplingArgs {
    /// Source frame rate used to map narration spans to frames.
    #[arg(long, default_value_t = 1.0)]
    fps: f64,
    #[arg(long, default_value_t = 300)]
    max_frames: usize,
}

#[derive(Args)]
struct RemoteArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080/generate")]
    remote_url: String,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = "MMEGO_QA_TOKEN")]
    token_env: String,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Convert QA conversations into a letter-balanced MCQ benchmark.
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        max_per_video: usize,
        /// Also write length, letter and term statistics CSVs here.
        #[arg(long)]
        stats_dir: Option<PathBuf>,
    },
    /// Write statistics CSVs for an existing benchmark.
    Stats {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct VideoArgs {
    /// Directory holding `<video_id>.raw` files or `<video_id>/` image folders.
    #[arg(long)]
    videos: Option<PathBuf>,
    /// Frame rate of the stored frames.
    #[arg(long, default_value_t = 1.0)]
    video_fps: f64,
    #[arg(long, default_value_t = 0)]
    encoder_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Output checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// Train on the synthetic toy task instead of forged data.
    #[arg(long)]
    toy: bool,
    /// Conversations JSONL (required unless --toy).
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    video: VideoArgs,
    /// Model config JSON; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    turns_per_example: usize,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw frame file or image directory.
    #[arg(long, conflicts_with = "synth")]
    video: Option<PathBuf>,
    /// Synthetic video, e.g. `frames=64 seed=1 pattern=moving-blob`.
    #[arg(long)]
    synth: Option<String>,
    #[arg(long)]
    question: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    video_fps: f64,
    #[arg(long, default_value_t = 0)]
    encoder_seed: u64,
    /// Write per-frame scores as CSV.
    #[arg(long)]
    dump_scores: Option<PathBuf>,
    /// Write a bar chart of the scores as SVG.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    bench: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Name used in reports; defaults to the checkpoint directory name.
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Select evenly spaced frames instead of pointer-selected ones.
    #[arg(long)]
    uniform: bool,
    #[arg(long, value_enum, default_value = "likelihood")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    max_in_flight: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Likelihood,
    Generate,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Predict every benchmark item.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        video: VideoArgs,
        #[arg(long)]
        out: PathBuf,
        /// Question-only mode; with --bias-out also writes the language-bias set.
        #[arg(long)]
        no_visual: bool,
        #[arg(long)]
        bias_out: Option<PathBuf>,
    },
    /// Debiased accuracy table from prediction and bias-set files.
    Mda {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        preds: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        bias: Vec<PathBuf>,
        /// Model names, one per predictions file.
        #[arg(long, value_delimiter = ',')]
        names: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MDA as a function of the exploration weight.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        video: VideoArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0])]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        bias: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Forge(c) => forge_cmd(c),
        Command::Bench(c) => bench_cmd(c),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Eval(c) => eval_cmd(c),
    }
}

fn forge_cmd(cmd: ForgeCmd) -> Result<()> {
    match cmd {
        ForgeCmd::Generate { input, out, backend, n_questions, seed, sampling, remote } => {
            let videos = load_narrations(&input).with_context(|| format!("reading {}", input.display()))?;
            let backend = match backend {
                BackendKind::Template => Backend::Template,
                BackendKind::Remote => Backend::Remote(RemoteBackend::new(RemoteConfig {
                    url: remote.remote_url,
                    token_env: Some(remote.token_env),
                    timeout_ms: remote.timeout_ms,
                    retries: remote.retries,
                    max_in_flight: remote.max_in_flight,
                    ..RemoteConfig::default()
                })),
            };
            let cfg = ForgeConfig {
                n_questions,
                seed,
                sampling: FrameSampling { fps: sampling.fps, max_frames: sampling.max_frames },
            };
            let convs = forge(&videos, &backend, &cfg)?;
            write_jsonl(&out, &convs)?;
            let qas: usize = convs.iter().map(|c| c.qa.len()).sum();
            log::info!("wrote {} conversations with {qas} QA pairs to {}", convs.len(), out.display());
        }
        ForgeCmd::Balance { input, out, ratio, seed, edges } => {
            let convs: Vec<Conversation> = read_jsonl(&input)?;
            let (kept, report) = balance(convs, &BalanceConfig { edges_s: edges, ratio, seed })?;
            write_jsonl(&out, &kept)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        ForgeCmd::Split { input, train_ids, test_ids, out_train, out_test } => {
            let convs: Vec<Conversation> = read_jsonl(&input)?;
            let split = split_by_ids(convs, &read_id_list(&train_ids)?, &read_id_list(&test_ids)?)?;
            write_jsonl(&out_train, &split.train)?;
            write_jsonl(&out_test, &split.test)?;
            log::info!(
                "train {} / test {} / unassigned {}",
                split.train.len(),
                split.test.len(),
                split.unassigned.len()
            );
        }
        ForgeCmd::Synth { out, count, seed } => {
            fs::create_dir_all(&out)?;
            for v in synth_narrated_videos(count, seed) {
                fs::write(out.join(format!("{}.json", v.video_id)), serde_json::to_string_pretty(&v)?)?;
            }
        }
    }
    Ok(())
}

fn write_stats(items: &[McqItem], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let s = stats(items);
    s.write_length_csv(fs::File::create(dir.join("lengths.csv"))?)?;
    s.write_letters_csv(fs::File::create(dir.join("letters.csv"))?)?;
    write_terms_csv(fs::File::create(dir.join("terms.csv"))?, &term_frequencies(items))?;
    log::info!("{} videos, {} questions, letters {:?}", s.total_videos, s.total_qas, s.letters);
    Ok(())
}

fn bench_cmd(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Build { input, out, seed, max_per_video, stats_dir } => {
            let convs: Vec<Conversation> = read_jsonl(&input)?;
            let (items, report) = build_benchmark(&convs, &McqConfig { seed, max_per_video, ..McqConfig::default() })?;
            write_jsonl(&out, &items)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = stats_dir {
                write_stats(&items, &dir)?;
            }
        }
        BenchCmd::Stats { bench, out_dir } => write_stats(&read_jsonl::<McqItem>(&bench)?, &out_dir)?,
    }
    Ok(())
}

fn load_video(path: &Path, video_id: &str, fps: f64) -> Result<VideoFrames> {
    let v = if path.is_dir() { read_image_dir(path, video_id, fps)? } else { read_raw_frames(path, video_id, fps)? };
    Ok(v)
}

fn find_video(dir: &Path, video_id: &str, fps: f64) -> Result<VideoFrames> {
    let raw = dir.join(format!("{video_id}.raw"));
    let folder = dir.join(video_id);
    if raw.is_file() {
        load_video(&raw, video_id, fps)
    } else if folder.is_dir() {
        load_video(&folder, video_id, fps)
    } else {
        bail!("no frames for {video_id} under {}", dir.display())
    }
}

fn encoder_for(cfg: &MmEgoConfig, seed: u64) -> MockEncoder {
    MockEncoder::new(EncoderConfig { grid: cfg.grid, dim: cfg.enc_dim, seed })
}

/// Encodes every video referenced by `ids` once.
fn video_bank<'a>(ids: impl Iterator<Item = &'a str>, args: &VideoArgs, cfg: &MmEgoConfig) -> Result<VideoBank> {
    let dir = args.videos.as_ref().ok_or_else(|| anyhow!("--videos is required for visual evaluation"))?;
    let enc = encoder_for(cfg, args.encoder_seed);
    let mut bank = VideoBank::default();
    let unique: std::collections::BTreeSet<&str> = ids.collect();
    for id in unique {
        let v = find_video(dir, id, args.video_fps)?;
        let (_, maps) = encode_video(&v, &enc, cfg.max_frames)?;
        bank.insert(id, maps);
    }
    Ok(bank)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let seed = a.seed;
    let (mut model, examples) = if a.toy {
        let toy = toytask::ToyConfig::default();
        let recipe = toytask::default_recipe(seed);
        let data = toytask::generate(&toy, recipe.train_videos, seed)?;
        (MmEgo::new(toytask::toy_model_config(&toy, seed))?, toytask::training_examples(&data, &recipe.ks)?)
    } else {
        let data = a.data.as_ref().ok_or_else(|| anyhow!("--data is required unless --toy is set"))?;
        let cfg: MmEgoConfig = match &a.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => MmEgoConfig::default(),
        };
        let convs: Vec<Conversation> = read_jsonl(data)?;
        let bank = video_bank(convs.iter().map(|c| c.video_id.as_str()), &a.video, &cfg)?;
        let mut examples = Vec::new();
        for c in &convs {
            let v = bank.get(&c.video_id)?;
            examples.extend(conversation_examples(c, v.features, cfg.k, a.turns_per_example)?);
        }
        (MmEgo::new(cfg)?, examples)
    };
    let train = TrainConfig {
        steps: a.steps,
        batch_size: a.batch_size,
        seed,
        optimizer: OptimizerConfig {
            kind: OptimizerKind::adam(),
            schedule: CosineSchedule { base_lr: a.lr, min_lr: 0.0, total_steps: a.steps },
            clip_norm: Some(1.0),
        },
    };
    log::info!("training on {} examples for {} steps", examples.len(), a.steps);
    train_model(&mut model, &examples, &train, |step, l| {
        if step % 25 == 0 || step + 1 == a.steps {
            log::info!("step {step}: lm {:.4} pointer {:.4}", l.lm_loss, l.pointer_loss);
        }
    })?;
    fs::create_dir_all(&a.out)?;
    model.save(&a.out)?;
    log::info!("saved checkpoint to {}", a.out.display());
    Ok(())
}

fn infer_cmd(a: InferArgs) -> Result<()> {
    let model = MmEgo::load(&a.model)?;
    let video = match (&a.video, &a.synth) {
        (Some(p), _) => load_video(p, "video", a.video_fps)?,
        (None, Some(spec)) => synth_video(&spec.parse::<SynthSpec>()?, "synth")?,
        (None, None) => bail!("pass --video or --synth"),
    };
    let (indices, maps) = encode_video(&video, &encoder_for(&model.config, a.encoder_seed), model.config.max_frames)?;
    let emb = model.embed(&maps, indices)?;
    let opts = InferOptions {
        k: a.k.unwrap_or(model.config.k),
        alpha: a.alpha.unwrap_or(model.config.alpha),
        policy: SelectionPolicy::Pointer,
    };
    let out = model.infer(&emb, &a.question, opts)?;
    let source: Vec<usize> = out.selection.indices.iter().map(|&i| emb.frame_indices[i]).collect();
    println!("answer: {}", out.answer);
    println!("selected frames: {source:?}");
    if let Some(p) = &a.dump_scores {
        write_scores_csv(BufWriter::new(fs::File::create(p)?), &out.scores, &out.selection)?;
    }
    if let Some(p) = &a.svg {
        fs::write(p, scores_svg(&out.scores, &out.selection, &a.question))?;
    }
    Ok(())
}

fn adapter_for(m: &ModelArgs, alpha: Option<f64>) -> Result<MmEgoAdapter> {
    let model = MmEgo::load(&m.model).with_context(|| format!("loading {}", m.model.display()))?;
    let id = m.model_id.clone().unwrap_or_else(|| {
        m.model.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
    });
    let opts = InferOptions {
        k: m.frames.unwrap_or(model.config.k),
        alpha: alpha.or(m.alpha).unwrap_or(model.config.alpha),
        policy: if m.uniform { SelectionPolicy::Uniform } else { SelectionPolicy::Pointer },
    };
    let mode = match m.mode {
        ModeArg::Likelihood => AnswerMode::Likelihood,
        ModeArg::Generate => AnswerMode::Generate,
    };
    Ok(MmEgoAdapter::new(id, model, opts, mode))
}

fn read_bias(paths: &[PathBuf]) -> Result<Vec<BiasSet>> {
    paths.iter().map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?)).collect()
}

fn eval_cmd(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Run { model, video, out, no_visual, bias_out } => {
            let bench: Vec<McqItem> = read_jsonl(&model.bench)?;
            let adapter = adapter_for(&model, None)?;
            let bank = if no_visual {
                None
            } else {
                Some(video_bank(bench.iter().map(|i| i.video_id.as_str()), &video, &adapter.model().config)?)
            };
            let run = run_predictions(&adapter, &bench, bank.as_ref(), model.max_in_flight)?;
            write_jsonl(&out, &run.predictions)?;
            for (id, e) in &run.failures {
                log::warn!("{id}: {e}");
            }
            if let Some(p) = bias_out {
                if !no_visual {
                    bail!("--bias-out requires --no-visual");
                }
                let biased = bench
                    .iter()
                    .zip(&run.predictions)
                    .filter(|(it, p)| p.choice == Some(it.correct))
                    .map(|(it, _)| it.question_id.clone())
                    .collect();
                let set = BiasSet { model_id: adapter.model_id().to_string(), biased_question_ids: biased };
                fs::write(p, serde_json::to_string_pretty(&set)?)?;
            }
        }
        EvalCmd::Mda { bench, preds, bias, names, out } => {
            let bench: Vec<McqItem> = read_jsonl(&bench)?;
            if !names.is_empty() && names.len() != preds.len() {
                bail!("--names needs one name per predictions file");
            }
            let named = preds
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let name = names.get(i).cloned().unwrap_or_else(|| {
                        p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("model{i}"))
                    });
                    Ok((name, read_jsonl::<Prediction>(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let report = mda(&named, &read_bias(&bias)?, &bench)?;
            match out {
                Some(p) => write_mda_csv(fs::File::create(p)?, &report)?,
                None => write_mda_csv(std::io::stdout(), &report)?,
            }
        }
        EvalCmd::Sweep { model, video, alphas, bias, out } => {
            let bench: Vec<McqItem> = read_jsonl(&model.bench)?;
            let probe = adapter_for(&model, None)?;
            let bank = video_bank(bench.iter().map(|i| i.video_id.as_str()), &video, &probe.model().config)?;
            let factory = |alpha: f64| -> mmego::Result<Box<dyn ModelAdapter>> {
                adapter_for(&model, Some(alpha))
                    .map(|a| Box::new(a) as Box<dyn ModelAdapter>)
                    .map_err(|e| mmego::Error::Invalid(e.to_string()))
            };
            let rows = alpha_sweep(factory, &bench, &bank, &read_bias(&bias)?, &alphas, model.max_in_flight)?;
            write_sweep_csv(fs::File::create(&out)?, &rows)?;
            let summary: BTreeMap<String, Option<f64>> =
                rows.iter().map(|r| (r.alpha.to_string(), r.mda.avg())).collect();
            log::info!("MDA avg by alpha: {summary:?}");
        }
    }
    Ok(())
}
