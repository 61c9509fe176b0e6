//! The pipeline steps behind each subcommand, shared with `reproduce-desk`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use figlang::classifier::{
    cross_form_matrix, evaluate_classifier, train_classifier, ClassifierReport, FormClassifier,
    FormScorer, TrainParams,
};
use figlang::corpus::io::{read_corpus, write_corpus, write_scored};
use figlang::corpus::{
    filter_pairs, synth_corpus, synth_paraphrase_pool, upsample, Splits, FILTER_THRESHOLDS,
};
use figlang::generator::{
    generate_batch, read_result_outputs, write_results, Decode, GenRequest, GenRequestRow, Mode,
};
use figlang::metrics::{
    evaluate_direction, write_table, DirectionData, EvalReport, NotForm, TableRow, TokenF1,
};
use figlang::model::{load_checkpoint, save_checkpoint, ModelConfig};
use figlang::trainer::{
    build_variant, finish_variant, pretrain_denoise, DataBundle, ScheduleConfig, TrainConfig,
    Variant,
};
use figlang::{FormCode, Model, ParallelPair, ScoredPair, TaggedText, Vocab};
use serde::{Deserialize, Serialize};

pub fn form_dir(form: FormCode) -> String {
    form.name().to_lowercase()
}

pub fn direction_file(source: FormCode, target: FormCode) -> String {
    format!("{}-{}.tsv", form_dir(source), form_dir(target))
}

fn parse_direction_file(name: &str) -> Option<(FormCode, FormCode)> {
    let stem = name.strip_suffix(".tsv")?;
    let (a, b) = stem.split_once('-')?;
    Some((
        a.to_uppercase().parse().ok()?,
        b.to_uppercase().parse().ok()?,
    ))
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_per_form: usize,
    pub seed: u64,
    /// Size of the literal paraphrase pool (0 writes none).
    pub paraphrase_pool: usize,
    /// Truncates the HYPERBOLE and IDIOM training splits, mimicking their
    /// scarcity in the real data.
    pub scarce_train: Option<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_form: 1000,
            seed: 0,
            paraphrase_pool: 2000,
            scarce_train: None,
        }
    }
}

pub const SCARCE_FORMS: [FormCode; 2] = [FormCode::Hyperbole, FormCode::Idiom];

/// Writes `<out>/<form>/{train,valid,test}.tsv` and `<out>/paraphrase.tsv`.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<()> {
    if cfg.n_per_form == 0 {
        bail!("n_per_form must be at least 1");
    }
    for (form, mut splits) in synth_corpus(cfg.n_per_form, cfg.seed) {
        if let Some(n) = cfg.scarce_train.filter(|_| SCARCE_FORMS.contains(&form)) {
            splits.train.truncate(n);
        }
        let dir = out.join(form_dir(form));
        write_corpus(&splits.train, dir.join("train.tsv"))?;
        write_corpus(&splits.valid, dir.join("valid.tsv"))?;
        write_corpus(&splits.test, dir.join("test.tsv"))?;
    }
    if cfg.paraphrase_pool > 0 {
        write_corpus(
            &synth_paraphrase_pool(cfg.paraphrase_pool, cfg.seed),
            out.join("paraphrase.tsv"),
        )?;
    }
    Ok(())
}

pub fn load_corpus_dir(dir: &Path) -> Result<BTreeMap<FormCode, Splits>> {
    let mut out = BTreeMap::new();
    for form in FormCode::FIGURATIVE {
        let d = dir.join(form_dir(form));
        let read = |s: &str| {
            read_corpus(d.join(format!("{s}.tsv"))).with_context(|| format!("loading {form} data"))
        };
        out.insert(
            form,
            Splits {
                train: read("train")?,
                valid: read("valid")?,
                test: read("test")?,
            },
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------- classifiers

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        ClassifierConfig {
            seed: 0,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            l2: p.l2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierSuite {
    pub reports: BTreeMap<FormCode, ClassifierReport>,
    pub cross_form: figlang::classifier::CrossFormMatrix,
    pub diagonal_dominant: bool,
}

fn classifier_path(dir: &Path, form: FormCode) -> PathBuf {
    dir.join(format!("{}.json", form_dir(form)))
}

/// One classifier per figurative form: positives are the form's training
/// targets, negatives their literal sources.
pub fn train_classifiers(
    cfg: &ClassifierConfig,
    data: &Path,
    out: &Path,
) -> Result<ClassifierSuite> {
    let corpus = load_corpus_dir(data)?;
    let params = TrainParams {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        l2: cfg.l2,
    };
    let mut classifiers = BTreeMap::new();
    let mut reports = BTreeMap::new();
    let mut tests = BTreeMap::new();
    for (form, splits) in &corpus {
        let pos: Vec<TaggedText> = splits.train.iter().map(|p| p.target.clone()).collect();
        let neg: Vec<TaggedText> = splits.train.iter().map(|p| p.source.clone()).collect();
        let clf = train_classifier(*form, &pos, &neg, cfg.seed, params)?;
        clf.save(classifier_path(out, *form))?;
        reports.insert(*form, evaluate_classifier(&clf, &splits.test));
        tests.insert(*form, splits.test.clone());
        classifiers.insert(*form, clf);
    }
    let cross_form = cross_form_matrix(&classifiers, &tests)?;
    let suite = ClassifierSuite {
        reports,
        diagonal_dominant: cross_form.is_row_diagonal_dominant(),
        cross_form,
    };
    write_json(&out.join("report.json"), &suite)?;
    let mut tsv = String::from("classifier");
    for f in &suite.cross_form.forms {
        tsv.push('\t');
        tsv.push_str(f.name());
    }
    tsv.push('\n');
    for (f, row) in suite.cross_form.forms.iter().zip(&suite.cross_form.f1) {
        tsv.push_str(f.name());
        for v in row {
            tsv.push_str(&format!("\t{v:.4}"));
        }
        tsv.push('\n');
    }
    fs::write(out.join("cross_form.tsv"), tsv)?;
    Ok(suite)
}

pub fn load_classifiers(dir: &Path) -> Result<BTreeMap<FormCode, FormClassifier>> {
    FormCode::FIGURATIVE
        .iter()
        .map(|&f| {
            let clf = FormClassifier::load(classifier_path(dir, f))?;
            if clf.form() != f {
                bail!(
                    "{} holds a {} classifier",
                    classifier_path(dir, f).display(),
                    clf.form()
                );
            }
            Ok((f, clf))
        })
        .collect()
}

// ---------------------------------------------------------------- filter

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub thresholds: BTreeMap<FormCode, f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            thresholds: FILTER_THRESHOLDS.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSummary {
    pub scored: usize,
    pub retained: BTreeMap<FormCode, usize>,
}

/// Scores every literal paraphrase pair against each form's classifier and
/// keeps those whose source reads literal and target reads as the form.
/// Retained targets are relabelled with the form.
pub fn filter(
    cfg: &FilterConfig,
    pairs_path: &Path,
    classifiers: &Path,
    out: &Path,
) -> Result<FilterSummary> {
    let pairs = read_corpus(pairs_path)?;
    let clfs = load_classifiers(classifiers)?;
    let mut retained = BTreeMap::new();
    for (form, clf) in &clfs {
        let sigma = *cfg
            .thresholds
            .get(form)
            .with_context(|| format!("no threshold for {form}"))?;
        let scored: Vec<ScoredPair> = pairs
            .iter()
            .map(|p| {
                let relabelled = ParallelPair::new(p.source.clone(), p.target.with_form(*form));
                let p_src = 1.0 - clf.predict_proba(p.source.tokens());
                let p_tgt = clf.predict_proba(p.target.tokens());
                Ok(ScoredPair::new(relabelled, p_src, p_tgt)?)
            })
            .collect::<Result<_>>()?;
        write_scored(&scored, out.join(format!("scored_{}.tsv", form_dir(*form))))?;
        let kept = filter_pairs(&scored, sigma);
        write_corpus(&kept, out.join(format!("{}.tsv", form_dir(*form))))?;
        retained.insert(*form, kept.len());
    }
    let summary = FilterSummary {
        scored: pairs.len(),
        retained,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn load_pretrain_dir(dir: &Path) -> Result<BTreeMap<FormCode, Vec<ParallelPair>>> {
    FormCode::FIGURATIVE
        .iter()
        .map(|&f| Ok((f, read_corpus(dir.join(format!("{}.tsv", form_dir(f))))?)))
        .collect()
}

/// Every 20th pair goes to validation.
fn hold_out<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (i, x) in items.iter().enumerate() {
        if i % 20 == 19 {
            valid.push(x.clone());
        } else {
            train.push(x.clone());
        }
    }
    (train, valid)
}

// ---------------------------------------------------------------- training

/// Transformer shape; the vocabulary size comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_width: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let d = ModelConfig::desk(0);
        ModelSpec {
            d_model: d.d_model,
            n_heads: d.n_heads,
            n_enc_layers: d.n_enc_layers,
            n_dec_layers: d.n_dec_layers,
            ffn_width: d.ffn_width,
            max_len: d.max_len,
            dropout: d.dropout,
            init_seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn init(&self, vocab: Vocab) -> Result<Model> {
        let cfg = ModelConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_enc_layers: self.n_enc_layers,
            n_dec_layers: self.n_dec_layers,
            ffn_width: self.ffn_width,
            vocab_size: vocab.len(),
            max_len: self.max_len,
            dropout: self.dropout,
        };
        Ok(Model::new(cfg, vocab, self.init_seed)?)
    }
}

/// Every word in the corpus splits and the pre-training pairs, sorted.
pub fn build_vocab(
    corpus: &BTreeMap<FormCode, Splits>,
    pretrain: &BTreeMap<FormCode, Vec<ParallelPair>>,
) -> Vocab {
    let mut words = BTreeSet::new();
    let pairs = corpus
        .values()
        .flat_map(|s| s.train.iter().chain(&s.valid).chain(&s.test))
        .chain(pretrain.values().flatten());
    for p in pairs {
        for t in p.source.tokens().iter().chain(p.target.tokens()) {
            words.insert(t.clone());
        }
    }
    Vocab::from_words(words.iter().map(String::as_str))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
}

fn denoise_corpora(
    pretrain: &BTreeMap<FormCode, Vec<ParallelPair>>,
) -> (BTreeMap<FormCode, Vec<TaggedText>>, Vec<TaggedText>) {
    // literal sources and figurative targets of the filtered pairs
    let mut texts: BTreeMap<FormCode, Vec<TaggedText>> = BTreeMap::new();
    for (form, pairs) in pretrain {
        for p in pairs {
            texts
                .entry(FormCode::Literal)
                .or_default()
                .push(p.source.clone());
            texts.entry(*form).or_default().push(p.target.clone());
        }
    }
    let mut train = BTreeMap::new();
    let mut valid = Vec::new();
    for (form, t) in texts {
        let (tr, va) = hold_out(&t);
        train.insert(form, tr);
        valid.extend(va);
    }
    (train, valid)
}

/// Denoising pre-training. Writes `pretrained.json` and `pretrain.log.jsonl`.
pub fn pretrain(
    cfg: &PretrainConfig,
    corpus_dir: &Path,
    pretrain_dir: &Path,
    out: &Path,
) -> Result<PathBuf> {
    let corpus = load_corpus_dir(corpus_dir)?;
    let pre = load_pretrain_dir(pretrain_dir)?;
    let model = cfg.model.init(build_vocab(&corpus, &pre))?;
    let (train, valid) = denoise_corpora(&pre);
    if train.values().all(Vec::is_empty) {
        bail!("no pre-training texts survived filtering");
    }
    let (params, log) = pretrain_denoise(model, &train, &valid, &cfg.train)?;
    let ckpt = out.join("pretrained.json");
    save_checkpoint(&params, &ckpt)?;
    log.write_jsonl(out.join("pretrain.log.jsonl"))?;
    Ok(ckpt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub schedule: ScheduleConfig,
    /// Forms whose training pairs are replicated up to `upsample_to`.
    pub upsample_forms: Vec<FormCode>,
    pub upsample_to: usize,
    pub upsample_seed: u64,
    /// Used only when no initial checkpoint is given.
    pub model: ModelSpec,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            schedule: ScheduleConfig::default(),
            upsample_forms: SCARCE_FORMS.to_vec(),
            upsample_to: 10_000,
            upsample_seed: 0,
            model: ModelSpec::default(),
        }
    }
}

fn both_directions(pairs: &[ParallelPair]) -> Vec<ParallelPair> {
    pairs
        .iter()
        .flat_map(|p| [p.clone(), p.reversed()])
        .collect()
}

/// Stage data: literal<->figurative pairs in both directions for the
/// paraphrase and figurative stages.
pub fn data_bundle(
    cfg: &FinetuneConfig,
    corpus: &BTreeMap<FormCode, Splits>,
    pretrain: &BTreeMap<FormCode, Vec<ParallelPair>>,
) -> Result<DataBundle> {
    let mut bundle = DataBundle::default();
    for (form, splits) in corpus {
        let train = if cfg.upsample_forms.contains(form) {
            upsample(&splits.train, cfg.upsample_to, cfg.upsample_seed)?
        } else {
            splits.train.clone()
        };
        bundle.figurative_train.extend(both_directions(&train));
        bundle
            .figurative_valid
            .extend(both_directions(&splits.valid));
    }
    for pairs in pretrain.values() {
        let (train, valid) = hold_out(pairs);
        bundle.paraphrase_train.extend(both_directions(&train));
        bundle.paraphrase_valid.extend(both_directions(&valid));
    }
    let (denoise_train, denoise_valid) = denoise_corpora(pretrain);
    bundle.denoise_train = denoise_train;
    bundle.denoise_valid = denoise_valid;
    Ok(bundle)
}

/// Trains `variant`, from `init` when given (skipping denoising) or from a
/// fresh model. Writes `<variant>.json` and one log per stage.
pub fn finetune(
    cfg: &FinetuneConfig,
    variant: Variant,
    init: Option<&Path>,
    corpus_dir: &Path,
    pretrain_dir: &Path,
    out: &Path,
) -> Result<PathBuf> {
    let corpus = load_corpus_dir(corpus_dir)?;
    let pre = load_pretrain_dir(pretrain_dir)?;
    let data = data_bundle(cfg, &corpus, &pre)?;
    let (params, logs) = match init {
        Some(path) => finish_variant(variant, load_checkpoint::<f32>(path)?, &data, &cfg.schedule)?,
        None => build_variant(
            variant,
            cfg.model.init(build_vocab(&corpus, &pre))?,
            &data,
            &cfg.schedule,
        )?,
    };
    let name = variant.name().to_lowercase();
    let ckpt = out.join(format!("{name}.json"));
    save_checkpoint(&params, &ckpt)?;
    for log in &logs {
        if let Some(first) = log.epochs.first() {
            log.write_jsonl(out.join(format!(
                "{name}.{}.log.jsonl",
                first.stage.name().to_lowercase()
            )))?;
        }
    }
    Ok(ckpt)
}

// ---------------------------------------------------------------- generation

/// Generates for every request and writes the results file.
pub fn generate_file(model: &Model, requests: &[GenRequest], out: &Path) -> Result<()> {
    let results = generate_batch(model, requests)?;
    write_results(out, requests, &results)?;
    Ok(())
}

/// Requests for one direction over `sources`.
pub fn requests(
    sources: &[TaggedText],
    target: FormCode,
    mode: Mode,
    decode: Decode,
    max_new_tokens: usize,
    inject: bool,
) -> Vec<GenRequest> {
    sources
        .iter()
        .map(|s| GenRequest {
            source: s.clone(),
            target_form: target,
            mode,
            decode,
            max_new_tokens,
            inject,
        })
        .collect()
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub reports: BTreeMap<String, Vec<EvalReport>>,
}

/// Evaluates every `<system>/<src>-<tgt>.tsv` under `generations`.
///
/// Literal sources are scored against the gold targets of the test split,
/// figurative targets-to-literal against the gold literal, figurative to
/// figurative against the source and its gold literal. Writes one JSON per
/// direction plus `table3.tsv` (literal<->figurative) and `table4.tsv`
/// (figurative<->figurative).
pub fn evaluate(
    generations: &Path,
    corpus_dir: &Path,
    classifiers: &Path,
    plugins: &[String],
    out: &Path,
) -> Result<EvalSummary> {
    let corpus = load_corpus_dir(corpus_dir)?;
    let clfs = load_classifiers(classifiers)?;
    let plugin_objs: Vec<&dyn figlang::metrics::SemanticScorer> = plugins
        .iter()
        .map(|p| match p.as_str() {
            "token-f1" => Ok(&TokenF1 as &dyn figlang::metrics::SemanticScorer),
            other => bail!("unknown plugin {other:?}"),
        })
        .collect::<Result<_>>()?;

    // literal text -> figurative text per form and back, over test splits
    let mut to_fig: HashMap<(FormCode, String), TaggedText> = HashMap::new();
    let mut to_lit: HashMap<(FormCode, String), TaggedText> = HashMap::new();
    for (form, s) in &corpus {
        for p in &s.test {
            to_fig.insert((*form, p.source.text()), p.target.clone());
            to_lit.insert((*form, p.target.text()), p.source.clone());
        }
    }
    let lookup =
        |map: &HashMap<(FormCode, String), TaggedText>, form: FormCode, row: &GenRequestRow| {
            map.get(&(form, row.source.text()))
                .cloned()
                .with_context(|| format!("no {form} test item for source {:?}", row.source.text()))
        };

    let mut systems: Vec<PathBuf> = fs::read_dir(generations)
        .with_context(|| format!("reading {}", generations.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    systems.retain(|p| p.is_dir());
    systems.sort();

    let mut summary = EvalSummary {
        reports: BTreeMap::new(),
    };
    let mut table3 = Vec::new();
    let mut table4 = Vec::new();
    for sys_dir in systems {
        let system = sys_dir.file_name().unwrap().to_string_lossy().to_string();
        let mut files: Vec<(String, FormCode, FormCode)> = fs::read_dir(&sys_dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().to_string();
                parse_direction_file(&name).map(|(a, b)| (name, a, b))
            })
            .collect();
        files.sort();
        let mut reports = Vec::new();
        for (name, src, tgt) in files {
            let rows = read_result_outputs(sys_dir.join(&name))?;
            if rows
                .iter()
                .any(|(r, _)| r.source.form() != src || r.target_form != tgt)
            {
                bail!("{}: rows do not match direction {src}->{tgt}", name);
            }
            let outputs: Vec<TaggedText> = rows.iter().map(|(_, o)| o.clone()).collect();
            let sources: Vec<TaggedText> = rows.iter().map(|(r, _)| r.source.clone()).collect();
            let report = if src == FormCode::Literal {
                let refs = rows
                    .iter()
                    .map(|(r, _)| lookup(&to_fig, tgt, r))
                    .collect::<Result<Vec<_>>>()?;
                let data = DirectionData {
                    source_form: src,
                    target_form: tgt,
                    outputs: &outputs,
                    references: &refs,
                    literal: None,
                };
                evaluate_direction(data, &clfs[&tgt], None, &plugin_objs)?
            } else {
                let lits = rows
                    .iter()
                    .map(|(r, _)| lookup(&to_lit, src, r))
                    .collect::<Result<Vec<_>>>()?;
                let not_src = NotForm(&clfs[&src]);
                if tgt == FormCode::Literal {
                    let data = DirectionData {
                        source_form: src,
                        target_form: tgt,
                        outputs: &outputs,
                        references: &lits,
                        literal: None,
                    };
                    evaluate_direction(data, &not_src, Some(&clfs[&src]), &plugin_objs)?
                } else {
                    let data = DirectionData {
                        source_form: src,
                        target_form: tgt,
                        outputs: &outputs,
                        references: &sources,
                        literal: Some(&lits),
                    };
                    evaluate_direction(data, &clfs[&tgt], Some(&clfs[&src]), &plugin_objs)?
                }
            };
            report.write_json(out.join(&system).join(name.replace(".tsv", ".json")))?;
            reports.push(report);
        }
        let lit_fig: Vec<EvalReport> = reports
            .iter()
            .filter(|r| r.source_form == FormCode::Literal)
            .cloned()
            .collect();
        let fig_lit: Vec<EvalReport> = reports
            .iter()
            .filter(|r| r.target_form == FormCode::Literal)
            .cloned()
            .collect();
        let fig_fig: Vec<EvalReport> = reports
            .iter()
            .filter(|r| r.source_form.is_figurative() && r.target_form.is_figurative())
            .cloned()
            .collect();
        table3.extend(
            lit_fig
                .iter()
                .chain(&fig_lit)
                .map(|r| TableRow::from_report(&system, r)),
        );
        if !lit_fig.is_empty() {
            table3.push(TableRow::macro_average(
                &system,
                "LITERAL->FIGURATIVE",
                &lit_fig,
            )?);
        }
        if !fig_lit.is_empty() {
            table3.push(TableRow::macro_average(
                &system,
                "FIGURATIVE->LITERAL",
                &fig_lit,
            )?);
        }
        table4.extend(fig_fig.iter().map(|r| TableRow::from_report(&system, r)));
        if !fig_fig.is_empty() {
            table4.push(TableRow::macro_average(
                &system,
                "FIGURATIVE->FIGURATIVE",
                &fig_fig,
            )?);
        }
        summary.reports.insert(system, reports);
    }
    write_table(out.join("table3.tsv"), &table3)?;
    write_table(out.join("table4.tsv"), &table4)?;
    Ok(summary)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}
