//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 3, 9, 10, 11 and 13 share two full `reproduce-desk`
//! runs of the release pipeline.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use figlang::corpus::{filter_pairs, mask_words, upsample, FILTER_THRESHOLDS, MASK};
use figlang::metrics::{bleu, harmonic_mean, pca, pca_probe, read_table, TableRow};
use figlang::model::{inject, load_checkpoint, ModelConfig};
use figlang::{FormCode, Model, Model64, ParallelPair, ScoredPair, TaggedText, Vocab};
use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_harmonic_mean() -> Outcome {
    let a = harmonic_mean(0.844, 0.556).map_err(|e| e.to_string())?;
    let b = harmonic_mean(0.953, 0.745).map_err(|e| e.to_string())?;
    check(
        (a - 0.670).abs() <= 0.001 && (b - 0.836).abs() <= 0.001,
        format!("hm(0.844,0.556)={a:.4} hm(0.953,0.745)={b:.4}"),
    )
}

fn c2_injection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=32);
        let d = rng.random_range(1..=128);
        let w = Array2::from_shape_fn((m, d), |_| rng.random_range(-3.0..3.0f64));
        let f = Array1::from_shape_fn(d, |_| rng.random_range(-3.0..3.0f64));
        let got = inject(&w, f.view()).map_err(|e| e.to_string())?;
        let want = &w + &f;
        worst = got
            .iter()
            .zip(&want)
            .fold(worst, |acc, (a, b)| acc.max((a - b).abs()));
    }
    check(
        worst < 1e-6,
        format!("max |inject - (W + F)| = {worst:.2e} over 100 draws"),
    )
}

fn c3_param_counts(run: &Path) -> Outcome {
    let load = |name: &str| {
        load_checkpoint::<f32>(run.join("models").join(name)).map_err(|e| e.to_string())
    };
    let (mflag, ptft) = (load("mflag.json")?, load("pt-to-ft.json")?);
    check(
        mflag.param_count() == ptft.param_count(),
        format!(
            "MFLAG {} vs PT-TO-FT {}",
            mflag.param_count(),
            ptft.param_count()
        ),
    )
}

fn c4_gradient_check() -> Outcome {
    let vocab = Vocab::from_words("the cat sat on a mat dog ran far away".split(' '));
    let cfg = ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 2,
        n_dec_layers: 2,
        ffn_width: 32,
        vocab_size: vocab.len(),
        max_len: 16,
        dropout: 0.0,
    };
    let mut m = Model64::new(cfg, vocab, 4).map_err(|e| e.to_string())?;
    let original = TaggedText::parse(FormCode::Idiom, "the dog ran far away on a mat").unwrap();
    let corrupted = mask_words(&original, 0.35, 4);
    let ex = m
        .example(&corrupted, &original, true)
        .map_err(|e| e.to_string())?;
    let (_, grads) = m.loss_and_grad(&ex, None).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let (h, mut worst, mut n) = (1e-5, 0.0f64, 0);
    let n_tensors = m.tensors().len();
    while n < 240 {
        let ti = n % n_tensors;
        let cols = m.tensors()[ti].ncols();
        let flat = rng.random_range(0..m.tensors()[ti].len());
        let idx = (flat / cols, flat % cols);
        let orig = m.tensors()[ti][idx];
        m.tensors_mut()[ti][idx] = orig + h;
        let up = m.sequence_loss(&ex).map_err(|e| e.to_string())?;
        m.tensors_mut()[ti][idx] = orig - h;
        let down = m.sequence_loss(&ex).map_err(|e| e.to_string())?;
        m.tensors_mut()[ti][idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[ti][idx];
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        n += 1;
    }
    check(
        worst < 1e-3,
        format!("worst relative error {worst:.2e} over {n} parameters"),
    )
}

fn c5_mask_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let words = ["the", "cat", "sat", "on", "a", "mat", "quickly"];
    let (mut total, mut masked, mut seed) = (0usize, 0usize, 0u64);
    while total < 20_000 {
        let len = rng.random_range(1..20);
        let text: Vec<&str> = (0..len).map(|_| *words.choose(&mut rng).unwrap()).collect();
        let t = TaggedText::parse(FormCode::Simile, &text.join(" ")).unwrap();
        let out = mask_words(&t, 0.35, seed);
        seed += 1;
        total += t.len();
        masked += out.tokens().iter().filter(|w| *w == MASK).count();
    }
    let frac = masked as f64 / total as f64;
    check(
        (0.33..=0.37).contains(&frac),
        format!("{masked}/{total} = {frac:.4}"),
    )
}

fn c6_upsampling() -> Outcome {
    let pairs: Vec<ParallelPair> = (0..1177)
        .map(|i| {
            let w = format!("w{i}");
            ParallelPair::new(
                TaggedText::parse(FormCode::Literal, &w).unwrap(),
                TaggedText::parse(FormCode::Idiom, &w).unwrap(),
            )
        })
        .collect();
    let out = upsample(&pairs, 10_000, 6).map_err(|e| e.to_string())?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in &out {
        *counts.entry(p.source.text()).or_default() += 1;
    }
    let ok =
        out.len() == 10_000 && counts.len() == 1177 && counts.values().all(|c| *c == 8 || *c == 9);
    let nines = counts.values().filter(|c| **c == 9).count();
    check(
        ok,
        format!(
            "{} pairs, {} distinct, {nines} with multiplicity 9",
            out.len(),
            counts.len()
        ),
    )
}

fn c7_filtering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut boundary = 0;
    for &(form, sigma) in &FILTER_THRESHOLDS {
        let scored: Vec<ScoredPair> = (0..1000)
            .map(|i| {
                let draw = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
                    0 => sigma,
                    _ => rng.random_range(0.0..=1.0),
                };
                let (ps, pt) = (draw(&mut rng), draw(&mut rng));
                let pair = ParallelPair::new(
                    TaggedText::parse(FormCode::Literal, &format!("s{i}")).unwrap(),
                    TaggedText::parse(form, &format!("t{i}")).unwrap(),
                );
                ScoredPair::new(pair, ps, pt).unwrap()
            })
            .collect();
        boundary += scored
            .iter()
            .filter(|s| s.p_source_literal == sigma || s.p_target_figurative == sigma)
            .count();
        let kept = filter_pairs(&scored, sigma);
        let expected: Vec<ParallelPair> = scored
            .iter()
            .filter(|s| s.p_source_literal > sigma && s.p_target_figurative > sigma)
            .map(|s| s.pair.clone())
            .collect();
        if kept != expected {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0 && boundary > 0,
        format!("5 forms x 1000 pairs, {boundary} boundary scores, {mismatches} mismatching forms"),
    )
}

/// Corpus BLEU from clipped n-gram counts kept in hash maps.
fn reference_bleu(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let counts = |toks: &[String], n: usize| {
        let mut m: HashMap<Vec<String>, usize> = HashMap::new();
        for w in toks.windows(n) {
            *m.entry(w.to_vec()).or_default() += 1;
        }
        m
    };
    let (mut hit, mut all) = ([0f64; 4], [0f64; 4]);
    for (c, r) in cands.iter().zip(refs) {
        for n in 1..=4 {
            let rc = counts(r, n);
            for (g, k) in counts(c, n) {
                hit[n - 1] += k.min(rc.get(&g).copied().unwrap_or(0)) as f64;
                all[n - 1] += k as f64;
            }
        }
    }
    let c_len: usize = cands.iter().map(Vec::len).sum();
    let r_len: usize = refs.iter().map(Vec::len).sum();
    if c_len == 0 || hit.contains(&0.0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|i| (hit[i] / all[i]).ln()).sum::<f64>() / 4.0;
    let bp = if c_len < r_len {
        1.0 - r_len as f64 / c_len as f64
    } else {
        0.0
    };
    (log_p + bp).exp()
}

fn c8_bleu() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = ["a", "b", "c", "d", "e"];
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..6);
        let sent = |rng: &mut ChaCha8Rng| -> Vec<String> {
            (0..rng.random_range(1..12))
                .map(|_| vocab.choose(rng).unwrap().to_string())
                .collect()
        };
        let refs: Vec<Vec<String>> = (0..n).map(|_| sent(&mut rng)).collect();
        let cands: Vec<Vec<String>> = refs
            .iter()
            .map(|r| {
                let mut c = r.clone();
                for w in c.iter_mut() {
                    if rng.random_bool(0.2) {
                        *w = vocab.choose(&mut rng).unwrap().to_string();
                    }
                }
                if rng.random_bool(0.3) {
                    c.truncate(c.len().div_ceil(2));
                }
                c
            })
            .collect();
        let got = bleu(&cands, &refs).map_err(|e| e.to_string())?;
        let want = reference_bleu(&cands, &refs);
        if want > 0.0 {
            nonzero += 1;
        }
        worst = worst.max((got - want).abs());
    }
    let x = vec!["the cat sat on the mat".split(' ').collect::<Vec<_>>()];
    let ident = bleu(&x, &x).map_err(|e| e.to_string())?;
    let the = bleu(
        &[vec!["the"; 4]],
        &[vec!["the", "cat", "is", "on", "the", "mat"]],
    )
    .map_err(|e| e.to_string())?;
    check(
        worst < 1e-9 && nonzero >= 10 && (ident - 1.0).abs() < 1e-12 && the == 0.0,
        format!("max |bleu - oracle| = {worst:.1e} ({nonzero}/50 nonzero), bleu(x,x)={ident}, \"the the the the\"={the}"),
    )
}

fn read_rows(run: &Path, table: &str) -> Result<Vec<TableRow>, String> {
    read_table(run.join("eval").join(table)).map_err(|e| e.to_string())
}

fn c9_end_to_end(run: &Path, elapsed: Duration) -> Outcome {
    let rows = read_rows(run, "table3.tsv")?;
    let mut lines = Vec::new();
    let mut ok = elapsed <= Duration::from_secs(15 * 60);
    for form in FormCode::FIGURATIVE {
        let direction = format!("LITERAL->{}", form.name());
        let row = rows
            .iter()
            .find(|r| r.system == "mflag" && r.direction == direction)
            .ok_or(format!("no mflag row for {direction}"))?;
        ok &= row.tgt >= 0.90 && row.bleu >= 0.70;
        lines.push(format!(
            "{}: tgt {:.3} bleu {:.3}",
            form.name(),
            row.tgt,
            row.bleu
        ));
    }
    check(
        ok,
        format!("{} in {:.0}s", lines.join(", "), elapsed.as_secs_f64()),
    )
}

fn c10_dr_vs_bt(run: &Path) -> Outcome {
    let rows = read_rows(run, "table4.tsv")?;
    let get = |system: &str| {
        rows.iter()
            .find(|r| r.system == system && r.direction == "FIGURATIVE->FIGURATIVE")
            .cloned()
            .ok_or(format!("no {system} FIGURATIVE->FIGURATIVE row"))
    };
    let (dr, bt) = (get("mflag")?, get("mflag-bt")?);
    let (dr_src, bt_src) = (dr.src.unwrap_or(f64::NAN), bt.src.unwrap_or(f64::NAN));
    check(
        dr_src > bt_src && (bt.tgt >= dr.tgt || (bt.tgt - dr.tgt).abs() <= 0.05),
        format!(
            "SRC DR {dr_src:.4} vs BT {bt_src:.4}, TGT DR {:.4} vs BT {:.4}",
            dr.tgt, bt.tgt
        ),
    )
}

fn c11_classifiers(run: &Path) -> Outcome {
    let text =
        std::fs::read_to_string(run.join("classifiers/report.json")).map_err(|e| e.to_string())?;
    let suite: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut f1s = Vec::new();
    for form in FormCode::FIGURATIVE {
        let f1 = suite["reports"][form.name()]["f1"]
            .as_f64()
            .unwrap_or(f64::NAN);
        ok &= f1 >= 0.95;
        f1s.push(format!("{} {f1:.3}", form.name()));
    }
    let matrix: Vec<Vec<f64>> =
        serde_json::from_value(suite["cross_form"]["f1"].clone()).map_err(|e| e.to_string())?;
    let square = matrix.len() == 5 && matrix.iter().all(|r| r.len() == 5);
    let dominant = square
        && matrix
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().all(|&v| v <= r[i]));
    check(
        ok && dominant,
        format!(
            "F1 {}; 5x5 {square}, row-dominant {dominant}",
            f1s.join(", ")
        ),
    )
}

fn c12_pca() -> Outcome {
    let vocab = Vocab::from_words("the cat sat on a mat like rock".split(' '));
    let m = Model::new(ModelConfig::desk(vocab.len()), vocab, 12).map_err(|e| e.to_string())?;
    let a = TaggedText::parse(FormCode::Literal, "the cat sat on a mat").unwrap();
    let b = TaggedText::parse(FormCode::Simile, "the cat sat like a rock").unwrap();
    let rows = pca_probe(&m, &a, Some(FormCode::Simile), &b).map_err(|e| e.to_string())?;
    let expected_rows = a.serialized_len() + b.serialized_len();

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let fit = pca(&data).map_err(|e| e.to_string())?;
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let [u, v] = &fit.components;
    let ortho = (dot(u, u) - 1.0)
        .abs()
        .max((dot(v, v) - 1.0).abs())
        .max(dot(u, v).abs());

    let dir: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
    let offset: Vec<f64> = (0..8).map(|i| (i * i) as f64).collect();
    let line: Vec<Vec<f64>> = (0..10)
        .map(|k| {
            dir.iter()
                .zip(&offset)
                .map(|(d, o)| o + k as f64 * d)
                .collect()
        })
        .collect();
    let second = pca(&line).map_err(|e| e.to_string())?.explained_variance[1];
    check(
        rows.len() == expected_rows && ortho < 1e-9 && second < 1e-8,
        format!("{} rows for {expected_rows} tokens, orthonormality error {ortho:.1e}, rank-1 second variance {second:.1e}", rows.len()),
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".manifest.json") {
                let digest = Sha256::digest(std::fs::read(&path).unwrap_or_default()).to_vec();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), digest);
            }
        }
    }
    out
}

fn c13_determinism(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (files_under(a), files_under(b));
    let differing: Vec<_> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let has = |sub: &str| fa.keys().any(|k| k.starts_with(sub));
    let covered = has("models") && has("generations") && has("eval");
    check(
        differing.is_empty() && covered,
        if differing.is_empty() {
            format!("{} files byte-identical (manifests excluded)", fa.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn reproduce(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_figlang"))
        .args(["reproduce-desk", "--seed", "0", "--out"])
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("reproduce-desk exited with {status}"));
    }
    Ok(start.elapsed())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let (run_a, run_b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = reproduce(&run_a);
    let second = reproduce(&run_b);
    let desk = |f: &dyn Fn(&Path, Duration) -> Outcome| match &first {
        Ok(t) => f(&run_a, *t),
        Err(e) => Err(e.clone()),
    };

    let results: Vec<(&str, Outcome)> = vec![
        ("harmonic mean reference cells", c1_harmonic_mean()),
        ("injection reduces to W + F", c2_injection()),
        ("no new parameters", desk(&|run, _| c3_param_counts(run))),
        ("gradient check", c4_gradient_check()),
        ("masking rate", c5_mask_rate()),
        ("upsampling 1177 -> 10000", c6_upsampling()),
        ("threshold filtering", c7_filtering()),
        ("BLEU oracle equivalence", c8_bleu()),
        ("end-to-end synthetic run", desk(&c9_end_to_end)),
        ("DR vs BT trend", desk(&|run, _| c10_dr_vs_bt(run))),
        ("classifier suite", desk(&|run, _| c11_classifiers(run))),
        ("PCA probe", c12_pca()),
        (
            "determinism",
            match (&first, &second) {
                (Ok(_), Ok(_)) => c13_determinism(&run_a, &run_b),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            },
        ),
    ];

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
