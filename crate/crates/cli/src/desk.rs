//! `reproduce-desk`: the whole pipeline on the synthetic benchmark.

use std::path::Path;

use anyhow::Result;
use figlang::generator::{Decode, Mode};
use figlang::model::load_checkpoint;
use figlang::trainer::{ScheduleConfig, Stage, TrainConfig, Variant};
use figlang::{FormCode, Model, TaggedText};
use serde::{Deserialize, Serialize};

use crate::manifest::ManifestBuilder;
use crate::stages::{
    self, direction_file, ClassifierConfig, FilterConfig, FinetuneConfig, ModelSpec,
    PretrainConfig, SynthConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub classifier: ClassifierConfig,
    pub filter: FilterConfig,
    pub model: ModelSpec,
    pub denoise: TrainConfig,
    pub finetune: FinetuneConfig,
    pub max_new_tokens: usize,
    /// Also train and decode the PT-TO-FT comparison model.
    pub with_pt_to_ft: bool,
}

impl Default for DeskConfig {
    fn default() -> Self {
        let stage = |stage, lr, epochs| TrainConfig {
            batch_size: 16,
            grad_accum_steps: 1,
            learning_rate: lr,
            patience: 2,
            max_epochs: epochs,
            stage,
            ..TrainConfig::default()
        };
        DeskConfig {
            seed: 0,
            synth: SynthConfig {
                n_per_form: 400,
                seed: 0,
                paraphrase_pool: 2000,
                scarce_train: Some(100),
            },
            classifier: ClassifierConfig::default(),
            filter: FilterConfig::default(),
            model: ModelSpec {
                d_model: 64,
                n_heads: 4,
                n_enc_layers: 2,
                n_dec_layers: 2,
                ffn_width: 128,
                max_len: 40,
                dropout: 0.1,
                init_seed: 0,
            },
            denoise: stage(Stage::Denoise, 2e-3, 3),
            finetune: FinetuneConfig {
                schedule: ScheduleConfig {
                    denoise: stage(Stage::Denoise, 2e-3, 3),
                    paraphrase: stage(Stage::Paraphrase, 2e-3, 3),
                    figurative: stage(Stage::Figurative, 1e-3, 12),
                    paraphrase_inject: true,
                },
                upsample_forms: stages::SCARCE_FORMS.to_vec(),
                upsample_to: 320,
                upsample_seed: 0,
                model: ModelSpec::default(),
            },
            max_new_tokens: 40,
            with_pt_to_ft: true,
        }
    }
}

impl DeskConfig {
    /// Propagates the top-level seed into every stage.
    pub fn seeded(mut self) -> Self {
        let s = self.seed;
        self.synth.seed = s;
        self.classifier.seed = s;
        self.model.init_seed = s;
        self.denoise.seed = s;
        self.finetune.schedule.denoise.seed = s;
        self.finetune.schedule.paraphrase.seed = s;
        self.finetune.schedule.figurative.seed = s;
        self.finetune.upsample_seed = s;
        self.finetune.model = self.model;
        self
    }
}

fn step(name: &str) {
    eprintln!("[reproduce-desk] {name}");
}

/// Runs synth, classifiers, filter, pretrain, finetune (PT-TO-FT and MFLAG),
/// generation (direct and pivot) and evaluation under `out`.
pub fn reproduce(cfg: &DeskConfig, out: &Path) -> Result<()> {
    let data = out.join("data");
    let classifiers = out.join("classifiers");
    let pretrain_data = out.join("pretrain_data");
    let models = out.join("models");
    let generations = out.join("generations");
    let eval = out.join("eval");

    step("synth");
    let m = ManifestBuilder::start("synth", &cfg.synth, Some(cfg.synth.seed));
    stages::synth(&cfg.synth, &data)?;
    m.output("data", &data).finish(&data)?;

    step("train-classifiers");
    let m = ManifestBuilder::start(
        "train-classifiers",
        &cfg.classifier,
        Some(cfg.classifier.seed),
    );
    stages::train_classifiers(&cfg.classifier, &data, &classifiers)?;
    m.input("data", &data)
        .output("classifiers", &classifiers)
        .finish(&classifiers)?;

    step("filter");
    let pool = data.join("paraphrase.tsv");
    let m = ManifestBuilder::start("filter", &cfg.filter, None);
    stages::filter(&cfg.filter, &pool, &classifiers, &pretrain_data)?;
    m.input("pairs", &pool)
        .input("classifiers", &classifiers)
        .output("pretrain_data", &pretrain_data)
        .finish(&pretrain_data)?;

    step("pretrain");
    let pcfg = PretrainConfig {
        model: cfg.model,
        train: cfg.denoise,
    };
    let m = ManifestBuilder::start("pretrain", &pcfg, Some(cfg.denoise.seed));
    let pretrained = stages::pretrain(&pcfg, &data, &pretrain_data, &models)?;
    m.input("corpus", &data)
        .input("pretrain_data", &pretrain_data)
        .output("checkpoint", &pretrained)
        .finish(&models)?;

    let mut variants = vec![Variant::Mflag];
    if cfg.with_pt_to_ft {
        variants.insert(0, Variant::PtToFt);
    }
    let mut trained = Vec::new();
    for v in variants {
        step(&format!("finetune {v}"));
        let m = ManifestBuilder::start(
            &format!("finetune-{}", v.name().to_lowercase()),
            &cfg.finetune,
            Some(cfg.seed),
        );
        let ckpt = stages::finetune(
            &cfg.finetune,
            v,
            Some(&pretrained),
            &data,
            &pretrain_data,
            &models,
        )?;
        m.input("init", &pretrained)
            .output("checkpoint", &ckpt)
            .finish(&models)?;
        trained.push((v, load_checkpoint::<f32>(&ckpt)?));
    }

    let corpus = stages::load_corpus_dir(&data)?;
    for (v, model) in &trained {
        let system = v.name().to_lowercase();
        step(&format!("generate {system}"));
        let m = ManifestBuilder::start(&format!("generate-{system}"), &cfg.max_new_tokens, None);
        let dir = generations.join(&system);
        decode_directions(model, v.injects(), cfg, &corpus, Mode::Direct, &dir)?;
        m.output("generations", &dir).finish(&dir)?;
        if *v == Variant::Mflag {
            step("generate mflag-bt");
            let dir = generations.join("mflag-bt");
            let m = ManifestBuilder::start("generate-mflag-bt", &cfg.max_new_tokens, None);
            decode_directions(model, true, cfg, &corpus, Mode::Pivot, &dir)?;
            m.output("generations", &dir).finish(&dir)?;
        }
    }

    step("evaluate");
    let m = ManifestBuilder::start("evaluate", &Vec::<String>::new(), None);
    stages::evaluate(&generations, &data, &classifiers, &[], &eval)?;
    m.input("generations", &generations)
        .output("eval", &eval)
        .finish(&eval)?;

    let m = ManifestBuilder::start("reproduce-desk", cfg, Some(cfg.seed));
    m.output("root", out).finish(out)?;
    Ok(())
}

/// Direct mode covers literal->figurative, figurative->literal and
/// figurative->figurative; pivot mode only figurative->figurative.
fn decode_directions(
    model: &Model,
    inject: bool,
    cfg: &DeskConfig,
    corpus: &std::collections::BTreeMap<FormCode, figlang::corpus::Splits>,
    mode: Mode,
    dir: &Path,
) -> Result<()> {
    for (&form, splits) in corpus {
        let literals: Vec<TaggedText> = splits.test.iter().map(|p| p.source.clone()).collect();
        let figuratives: Vec<TaggedText> = splits.test.iter().map(|p| p.target.clone()).collect();
        let mut jobs = Vec::new();
        if mode == Mode::Direct {
            jobs.push((FormCode::Literal, form, &literals));
            jobs.push((form, FormCode::Literal, &figuratives));
        }
        for target in FormCode::FIGURATIVE.into_iter().filter(|&t| t != form) {
            jobs.push((form, target, &figuratives));
        }
        for (src, tgt, texts) in jobs {
            let reqs =
                stages::requests(texts, tgt, mode, Decode::Greedy, cfg.max_new_tokens, inject);
            stages::generate_file(model, &reqs, &dir.join(direction_file(src, tgt)))?;
        }
    }
    Ok(())
}
