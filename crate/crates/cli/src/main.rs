mod config;
mod wav;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use unifront::analysis::{emit_bank_report, frontend_row, parameter_table, MIN_SHUFFLES};
use unifront::checks::{frontend_grad_check, op_grad_check, toy_composites, CheckResult, OP_SCOPES};
use unifront::frontends::{count_parameters, Frontend, FrontendConfig};
use unifront::io::{read_checkpoint, write_checkpoint, write_features};
use unifront::specaugment::apply_stft_masks;
use unifront::training::{train_toy, MaskPlacement};
use unifront::RandomSource;

use config::{preset, reference_millions, RunConfig, PRESETS};
use wav::{read_wav, write_wav, SAMPLE_RATE};

#[derive(Parser, Debug)]
#[command(name = "unifront", version, about = "Speech feature front-ends: extraction, checks, toy training and filter analysis")]
struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct FrontendArg {
    /// Front-end preset; see `unifront params --list`.
    #[arg(long)]
    frontend: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract features from a 16 kHz mono PCM16 WAV file.
    Extract {
        input: PathBuf,
        #[command(flatten)]
        fe: FrontendArg,
        /// Stop after the extractor instead of running the VGG block.
        #[arg(long)]
        no_subsample: bool,
    },
    /// Parameter counts against published reference values.
    Params {
        #[command(flatten)]
        fe: FrontendArg,
        /// Print the preset names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Finite-difference gradient checks for an operation or a front-end preset.
    Gradcheck {
        /// An operation, a preset name, `ops`, `frontends` or `all`.
        scope: String,
        /// Coordinates sampled per parameter in front-end checks.
        #[arg(long, default_value_t = 6)]
        max_coords: usize,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Train a front-end with CTC on the synthetic tone task.
    TrainToy {
        #[command(flatten)]
        fe: FrontendArg,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, value_enum)]
        mask: Option<MaskArg>,
    },
    /// Frequency-response analysis of a first-layer filter bank.
    Analyze {
        /// Checkpoint written by `train-toy`; a freshly initialised bank otherwise.
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        fe: FrontendArg,
        #[arg(long, default_value_t = MIN_SHUFFLES)]
        shuffles: usize,
    },
    /// Apply STFT-domain SpecAugment masks to a WAV file.
    Mask {
        input: PathBuf,
        #[arg(long)]
        max_time_masks: Option<usize>,
        #[arg(long)]
        max_time_width: Option<usize>,
        #[arg(long)]
        max_feature_masks: Option<usize>,
        #[arg(long)]
        max_feature_width: Option<usize>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MaskArg {
    Off,
    Features,
    Stft,
}

impl From<MaskArg> for MaskPlacement {
    fn from(m: MaskArg) -> Self {
        match m {
            MaskArg::Off => MaskPlacement::Off,
            MaskArg::Features => MaskPlacement::Features,
            MaskArg::Stft => MaskPlacement::Stft,
        }
    }
}

/// Exit 1 for failed checks, 2 for bad input or configuration.
enum Failure {
    Input(anyhow::Error),
    Check(String),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: Option<PathBuf>,
}

impl Ctx {
    fn rng(&self) -> RandomSource {
        RandomSource::new(self.seed)
    }

    fn out(&self, what: &str) -> anyhow::Result<&Path> {
        self.out.as_deref().ok_or_else(|| anyhow!("--out is required: {what}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(cli.config.as_deref()).map_err(Failure::from).and_then(|cfg| {
        let seed = cli.seed.or(cfg.seed).unwrap_or(0);
        run(cli.command, &Ctx { cfg, seed, out: cli.out })
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, ctx: &Ctx) -> Outcome {
    match command {
        Command::Extract { input, fe, no_subsample } => extract(ctx, &input, fe, no_subsample),
        Command::Params { fe, list } => params(ctx, fe, list),
        Command::Gradcheck { scope, max_coords, corrupt } => gradcheck(ctx, &scope, max_coords, corrupt),
        Command::TrainToy { fe, epochs, batch_size, mask } => train(ctx, fe, epochs, batch_size, mask),
        Command::Analyze { checkpoint, fe, shuffles } => analyze(ctx, checkpoint.as_deref(), fe, shuffles),
        Command::Mask { input, max_time_masks, max_time_width, max_feature_masks, max_feature_width } => {
            let mut spec = ctx.cfg.mask;
            spec.max_time_masks = max_time_masks.unwrap_or(spec.max_time_masks);
            spec.max_time_width = max_time_width.unwrap_or(spec.max_time_width);
            spec.max_feature_masks = max_feature_masks.unwrap_or(spec.max_feature_masks);
            spec.max_feature_width = max_feature_width.unwrap_or(spec.max_feature_width);
            let out = ctx.out("path of the masked WAV")?;
            let w = read_wav(&input)?;
            let masked = apply_stft_masks(&w, &spec, &mut ctx.rng())?;
            write_wav(out, &masked)?;
            println!("wrote {} samples to {}", masked.len(), out.display());
            Ok(())
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn extract(ctx: &Ctx, input: &Path, fe: FrontendArg, no_subsample: bool) -> Outcome {
    let out = ctx.out("path of the feature file")?;
    let cfg = ctx.cfg.frontend(fe.frontend.as_deref(), "log_mel")?;
    let w = read_wav(input)?;
    let frontend = Frontend::new(cfg, ctx.cfg.model_dim(), SAMPLE_RATE, &mut ctx.rng())?;
    let f = if no_subsample { frontend.features(&w)? } else { frontend.subsampled_features(&w)? };
    let mut file = create(out)?;
    write_features(&mut file, &f)?;
    file.flush()?;
    println!("{}\t{} frames\t{} dims", frontend.config().name(), f.frames(), f.dim());
    Ok(())
}

fn params(ctx: &Ctx, fe: FrontendArg, list: bool) -> Outcome {
    if list {
        PRESETS.iter().for_each(|p| println!("{p}"));
        return Ok(());
    }
    let names: Vec<String> = match &fe.frontend {
        Some(n) => vec![n.clone()],
        None if ctx.cfg.frontend.is_some() => vec![String::new()],
        None => ["log_mel", "scf", "wav2vec_fe", "generic2d", "generic2d_small"].map(String::from).to_vec(),
    };
    let dim = ctx.cfg.model_dim();
    let mut text = String::from("preset\ttotal_params\treference_millions\tdeviation_pct\n");
    let mut rows = Vec::new();
    for name in &names {
        let cfg = if name.is_empty() { ctx.cfg.frontend(None, "")? } else { preset(name)? };
        let label = if name.is_empty() { cfg.name().to_string() } else { name.clone() };
        let total = count_parameters(&cfg, Some(dim)).total();
        let (reference, deviation) = match reference_millions(&label) {
            Some(r) => (format!("{r}"), format!("{:.2}", 100.0 * (total as f64 / (r * 1e6) - 1.0))),
            None => ("-".into(), "-".into()),
        };
        text.push_str(&format!("{label}\t{total}\t{reference}\t{deviation}\n"));
        rows.push(frontend_row(&cfg, dim, SAMPLE_RATE));
    }
    print!("{text}");
    if let Some(out) = &ctx.out {
        write_text(out, &parameter_table(&rows))?;
    }
    Ok(())
}

fn gradcheck(ctx: &Ctx, scope: &str, max_coords: usize, corrupt: bool) -> Outcome {
    let mut rng = ctx.rng();
    let mut results: Vec<CheckResult> = Vec::new();
    let ops: Vec<&str> = match scope {
        "ops" | "all" => OP_SCOPES.to_vec(),
        s if OP_SCOPES.contains(&s) => vec![s],
        _ => Vec::new(),
    };
    for op in &ops {
        results.extend(op_grad_check(op, &mut rng, corrupt)?);
    }
    let composites: Vec<FrontendConfig> = match scope {
        "frontends" | "all" => toy_composites(),
        s if OP_SCOPES.contains(&s) || s == "ops" => Vec::new(),
        s => vec![preset(s)?],
    };
    for cfg in &composites {
        results.extend(frontend_grad_check(cfg, &mut rng, corrupt, max_coords)?);
    }
    let mut failed = 0;
    for r in &results {
        let ok = r.report.passed();
        failed += usize::from(!ok);
        println!("{}\t{:.3e}\t{}", r.name, r.report.max_rel_error, if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} gradient checks failed", results.len())));
    }
    Ok(())
}

fn train(ctx: &Ctx, fe: FrontendArg, epochs: Option<usize>, batch_size: Option<usize>, mask: Option<MaskArg>) -> Outcome {
    let dir = ctx.out("directory for report.jsonl and model.ckpt")?;
    let cfg = ctx.cfg.frontend(fe.frontend.as_deref(), "toy_generic2d")?;
    let mut opts = ctx.cfg.train.clone();
    opts.epochs = epochs.unwrap_or(opts.epochs);
    opts.batch_size = batch_size.unwrap_or(opts.batch_size);
    if let Some(m) = mask {
        opts.mask_placement = m.into();
    }
    if let Some(d) = ctx.cfg.model_dim {
        opts.model_dim = d;
    }
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let outcome = train_toy(&cfg, &ctx.cfg.task, &opts, &mut ctx.rng())?;
    for e in &outcome.report.epochs {
        println!("epoch {}\tloss {:.4}\tdev_accuracy {:.3}\tlr {:.2e}", e.epoch, e.mean_loss, e.dev_accuracy, e.last_lr);
    }
    write_text(&dir.join("report.jsonl"), &outcome.report.to_json_lines())?;
    let mut ckpt = create(&dir.join("model.ckpt"))?;
    write_checkpoint(&mut ckpt, &outcome.model.params())?;
    ckpt.flush()?;
    let used = RunConfig { seed: Some(ctx.seed), frontend: Some(cfg), train: opts, ..ctx.cfg.clone() };
    write_text(&dir.join("config.toml"), &toml::to_string(&used)?)?;
    println!("loss_reduction {:.3}\tfinal_dev_accuracy {:.3}", outcome.report.loss_reduction(), outcome.report.final_dev_accuracy());
    Ok(())
}

fn analyze(ctx: &Ctx, checkpoint: Option<&Path>, fe: FrontendArg, shuffles: usize) -> Outcome {
    let dir = ctx.out("directory for the analysis tables")?;
    // A checkpoint from train-toy sits next to the config it was trained with.
    let sibling = checkpoint.and_then(|c| c.parent()).map(|p| p.join("config.toml")).filter(|p| p.exists());
    let cfg = match (&fe.frontend, &ctx.cfg.frontend, sibling) {
        (None, None, Some(path)) => RunConfig::load(Some(&path))?.frontend(None, "generic2d")?,
        _ => ctx.cfg.frontend(fe.frontend.as_deref(), "generic2d")?,
    };
    let mut rng = ctx.rng();
    let mut frontend = Frontend::new(cfg.clone(), ctx.cfg.model_dim(), SAMPLE_RATE, &mut rng.fork(1))?;
    if let Some(path) = checkpoint {
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let params = read_checkpoint(&mut BufReader::new(file))?;
        frontend.params_mut().load_values(&params)?;
    }
    let bank = frontend
        .first_layer_bank()
        .ok_or_else(|| anyhow!("{} has no waveform-level filter bank", cfg.name()))??;
    let report = emit_bank_report(&bank, SAMPLE_RATE, shuffles, &mut rng.fork(2))?;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let rows: Vec<_> = PRESETS
        .iter()
        .filter(|n| reference_millions(n).is_some())
        .map(|n| preset(n).map(|c| frontend_row(&c, ctx.cfg.model_dim(), SAMPLE_RATE)))
        .collect::<anyhow::Result<_>>()?;
    write_text(&dir.join("params.tsv"), &parameter_table(&rows))?;
    write_text(&dir.join("filters_unsorted.tsv"), &report.filters_unsorted)?;
    write_text(&dir.join("filters_sorted.tsv"), &report.filters_sorted)?;
    write_text(&dir.join("responses_unsorted.tsv"), &report.responses_unsorted)?;
    write_text(&dir.join("responses_sorted.tsv"), &report.responses_sorted)?;
    write_text(&dir.join("summary.tsv"), &report.summary())?;
    print!("{}", report.summary());
    Ok(())
}
