mod config;
mod desk;
mod manifest;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use figlang::generator::{read_requests, Decode, GenRequest, Mode};
use figlang::metrics::{pca_probe, write_probe};
use figlang::model::load_checkpoint;
use figlang::trainer::Variant;
use figlang::{FormCode, TaggedText};

use crate::config::{resolve, Overrides};
use crate::manifest::ManifestBuilder;
use crate::stages::{ClassifierConfig, FilterConfig, FinetuneConfig, PretrainConfig, SynthConfig};

/// Multi-figurative rewriting pipeline.
#[derive(Parser)]
#[command(name = "figlang", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic parallel corpus and paraphrase pool.
    Synth(SynthArgs),
    /// Train one literal-vs-form classifier per figurative form.
    TrainClassifiers(ClassifierArgs),
    /// Select paraphrase pairs by classifier confidence.
    Filter(FilterArgs),
    /// Denoising pre-training.
    Pretrain(PretrainArgs),
    /// Paraphrase and figurative training stages for one variant.
    Finetune(FinetuneArgs),
    /// Rewrite texts with a trained checkpoint.
    Generate(GenerateArgs),
    /// Score a directory of generations.
    Evaluate(EvaluateArgs),
    /// PCA of encoder states for two sentences.
    Probe(ProbeArgs),
    /// Run the whole pipeline on the synthetic benchmark.
    ReproduceDesk(DeskArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of raw paraphrase candidate pairs.
    #[arg(long)]
    paraphrase: Option<usize>,
    /// Cap on the HYPERBOLE and IDIOM training splits.
    #[arg(long)]
    scarce_train: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifierArgs {
    /// Directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Parallel TSV of candidate pairs.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    classifiers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    grad_accum: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainFlags {
    fn apply(&self, o: &mut Overrides, prefix: &[&str]) {
        let p = |k: &'static str| [prefix, &[k]].concat();
        o.set(&p("batch_size"), self.batch_size)
            .set(&p("grad_accum_steps"), self.grad_accum)
            .set(&p("learning_rate"), self.lr)
            .set(&p("patience"), self.patience)
            .set(&p("max_epochs"), self.max_epochs)
            .set(&p("seed"), self.seed);
    }
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    enc_layers: Option<usize>,
    #[arg(long)]
    dec_layers: Option<usize>,
    #[arg(long)]
    ffn: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    init_seed: Option<u64>,
}

impl ModelFlags {
    fn apply(&self, o: &mut Overrides, prefix: &[&str]) {
        let p = |k: &'static str| [prefix, &[k]].concat();
        o.set(&p("d_model"), self.d_model)
            .set(&p("n_heads"), self.heads)
            .set(&p("n_enc_layers"), self.enc_layers)
            .set(&p("n_dec_layers"), self.dec_layers)
            .set(&p("ffn_width"), self.ffn)
            .set(&p("max_len"), self.max_len)
            .set(&p("dropout"), self.dropout)
            .set(&p("init_seed"), self.init_seed);
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Directory written by `filter`.
    #[arg(long)]
    pretrain_data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FinetuneArgs {
    /// BART-MULTI-ANALOG, PT-TO-FT or MFLAG.
    #[arg(long)]
    variant: String,
    /// Pre-trained checkpoint; without it the variant trains from scratch.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    pretrain_data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Applied to both supervised stages.
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    upsample_to: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// `form TAB text TAB target_form`, or `form TAB text` with --target-form.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "direct")]
    mode: ModeArg,
    #[arg(long)]
    target_form: Option<String>,
    /// Beam width; greedy when absent.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, default_value_t = figlang::generator::DEFAULT_MAX_NEW_TOKENS)]
    max_new_tokens: usize,
    /// Decode without form injection (PT-TO-FT and BART-MULTI-ANALOG).
    #[arg(long)]
    no_inject: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Direct,
    Pivot,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of `<system>/<src>-<tgt>.tsv` result files.
    #[arg(long)]
    generations: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    classifiers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Extra semantic scorer (available: token-f1).
    #[arg(long = "plugin")]
    plugins: Vec<String>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    a_form: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    b_form: String,
    /// Form injected while encoding sentence A; no injection when absent.
    #[arg(long)]
    target_form: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DeskArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Bad invocation detected after parsing; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_form(s: &str) -> Result<FormCode> {
    s.to_uppercase()
        .parse()
        .map_err(|_| usage(format!("unknown form {s:?}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let mut o = Overrides::new();
            o.set(&["n_per_form"], a.n)
                .set(&["seed"], a.seed)
                .set(&["paraphrase_pool"], a.paraphrase)
                .set(&["scarce_train"], a.scarce_train);
            let cfg: SynthConfig = resolve(&SynthConfig::default(), a.config.as_deref(), o)?;
            let m = ManifestBuilder::start("synth", &cfg, Some(cfg.seed));
            stages::synth(&cfg, &a.out)?;
            m.output("data", &a.out).finish(&a.out)?;
        }
        Command::TrainClassifiers(a) => {
            let mut o = Overrides::new();
            o.set(&["seed"], a.seed)
                .set(&["epochs"], a.epochs)
                .set(&["learning_rate"], a.lr)
                .set(&["l2"], a.l2);
            let cfg: ClassifierConfig =
                resolve(&ClassifierConfig::default(), a.config.as_deref(), o)?;
            let m = ManifestBuilder::start("train-classifiers", &cfg, Some(cfg.seed));
            let suite = stages::train_classifiers(&cfg, &a.data, &a.out)?;
            for (form, r) in &suite.reports {
                println!(
                    "{form}\tP={:.4}\tR={:.4}\tF1={:.4}",
                    r.precision, r.recall, r.f1
                );
            }
            m.input("data", &a.data)
                .output("classifiers", &a.out)
                .finish(&a.out)?;
        }
        Command::Filter(a) => {
            let cfg: FilterConfig = resolve(
                &FilterConfig::default(),
                a.config.as_deref(),
                Overrides::new(),
            )?;
            let m = ManifestBuilder::start("filter", &cfg, None);
            let summary = stages::filter(&cfg, &a.pairs, &a.classifiers, &a.out)?;
            for (form, n) in &summary.retained {
                println!("{form}\t{n}/{}", summary.scored);
            }
            m.input("pairs", &a.pairs)
                .input("classifiers", &a.classifiers)
                .output("pretrain_data", &a.out)
                .finish(&a.out)?;
        }
        Command::Pretrain(a) => {
            let mut o = Overrides::new();
            a.train.apply(&mut o, &["train"]);
            a.model.apply(&mut o, &["model"]);
            let cfg: PretrainConfig = resolve(&PretrainConfig::default(), a.config.as_deref(), o)?;
            let m = ManifestBuilder::start("pretrain", &cfg, Some(cfg.train.seed));
            let ckpt = stages::pretrain(&cfg, &a.corpus, &a.pretrain_data, &a.out)?;
            m.input("corpus", &a.corpus)
                .input("pretrain_data", &a.pretrain_data)
                .output("checkpoint", &ckpt)
                .finish(&a.out)?;
        }
        Command::Finetune(a) => {
            let variant: Variant = a
                .variant
                .parse()
                .map_err(|e: figlang::Error| usage(e.to_string()))?;
            let mut o = Overrides::new();
            for stage in ["denoise", "paraphrase", "figurative"] {
                a.train.apply(&mut o, &["schedule", stage]);
            }
            o.set(&["upsample_to"], a.upsample_to);
            let cfg: FinetuneConfig = resolve(&FinetuneConfig::default(), a.config.as_deref(), o)?;
            let m = ManifestBuilder::start(
                &format!("finetune-{}", variant.name().to_lowercase()),
                &cfg,
                None,
            );
            let ckpt = stages::finetune(
                &cfg,
                variant,
                a.init.as_deref(),
                &a.corpus,
                &a.pretrain_data,
                &a.out,
            )?;
            let m = match &a.init {
                Some(p) => m.input("init", p),
                None => m,
            };
            m.input("corpus", &a.corpus)
                .input("pretrain_data", &a.pretrain_data)
                .output("checkpoint", &ckpt)
                .finish(&a.out)?;
        }
        Command::Generate(a) => generate(a)?,
        Command::Evaluate(a) => {
            let m = ManifestBuilder::start("evaluate", &a.plugins, None);
            let summary = stages::evaluate(
                &a.generations,
                &a.corpus,
                &a.classifiers,
                &a.plugins,
                &a.out,
            )?;
            for (system, reports) in &summary.reports {
                println!("{system}: {} directions", reports.len());
            }
            m.input("generations", &a.generations)
                .input("corpus", &a.corpus)
                .input("classifiers", &a.classifiers)
                .output("eval", &a.out)
                .finish(&a.out)?;
        }
        Command::Probe(a) => {
            let model = load_checkpoint::<f32>(&a.checkpoint)?;
            let text_a = TaggedText::parse(parse_form(&a.a_form)?, &a.a)?;
            let text_b = TaggedText::parse(parse_form(&a.b_form)?, &a.b)?;
            let target = a.target_form.as_deref().map(parse_form).transpose()?;
            let m = ManifestBuilder::start(
                "probe",
                &(&a.a, &a.a_form, &a.b, &a.b_form, &a.target_form),
                None,
            );
            let rows = pca_probe(&model, &text_a, target, &text_b)?;
            write_probe(&a.out, &rows)?;
            m.input("checkpoint", &a.checkpoint)
                .output("probe", &a.out)
                .finish(parent_dir(&a.out))?;
        }
        Command::ReproduceDesk(a) => {
            let mut o = Overrides::new();
            o.set(&["seed"], a.seed);
            let cfg: desk::DeskConfig =
                resolve(&desk::DeskConfig::default(), a.config.as_deref(), o)?;
            desk::reproduce(&cfg.seeded(), &a.out)?;
        }
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mode = match a.mode {
        ModeArg::Direct => Mode::Direct,
        ModeArg::Pivot => Mode::Pivot,
    };
    let target = a.target_form.as_deref().map(parse_form).transpose()?;
    if mode == Mode::Pivot && target == Some(FormCode::Literal) {
        return Err(usage(
            "--mode pivot needs a figurative --target-form, not LITERAL",
        ));
    }
    let decode = match a.beam {
        None => Decode::Greedy,
        Some(0) => return Err(usage("--beam must be at least 1")),
        Some(w) => Decode::Beam(w),
    };
    if a.max_new_tokens == 0 {
        return Err(usage("--max-new-tokens must be at least 1"));
    }
    let requests: Vec<GenRequest> = match target {
        Some(t) => figlang::corpus::io::read_monolingual(&a.input)?
            .into_iter()
            .map(|source| GenRequest {
                source,
                target_form: t,
                mode,
                decode,
                max_new_tokens: a.max_new_tokens,
                inject: !a.no_inject,
            })
            .collect(),
        None => read_requests(&a.input, mode, decode, a.max_new_tokens, !a.no_inject)?,
    };
    if let Some(i) = requests
        .iter()
        .position(|r| mode == Mode::Pivot && r.target_form == FormCode::Literal)
    {
        return Err(usage(format!(
            "row {}: pivot mode cannot target LITERAL",
            i + 1
        )));
    }
    let model = load_checkpoint::<f32>(&a.checkpoint).context("loading checkpoint")?;
    let m = ManifestBuilder::start(
        "generate",
        &serde_json::json!({
            "mode": format!("{mode:?}").to_lowercase(),
            "decode": decode,
            "max_new_tokens": a.max_new_tokens,
            "inject": !a.no_inject,
            "target_form": target,
        }),
        None,
    );
    stages::generate_file(&model, &requests, &a.out)?;
    m.input("checkpoint", &a.checkpoint)
        .input("input", &a.input)
        .output("results", &a.out)
        .finish(parent_dir(&a.out))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
