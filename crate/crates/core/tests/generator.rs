use figlang::corpus::{lexicon, synth_corpus};
use figlang::generator::{
    generate, generate_batch, read_requests, read_result_outputs, write_results, Decode,
    GenRequest, Mode,
};
use figlang::model::ModelConfig;
use figlang::{Error, FormCode, Model, TaggedText, Vocab};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(seed: u64) -> Model {
    let words = lexicon();
    let v = Vocab::from_words(words.iter().map(String::as_str));
    let cfg = ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ffn_width: 32,
        vocab_size: v.len(),
        max_len: 40,
        dropout: 0.0,
    };
    Model::new(cfg, v, seed).unwrap()
}

fn sources(n: usize) -> Vec<TaggedText> {
    synth_corpus(n, 5)[&FormCode::Hyperbole]
        .train
        .iter()
        .map(|p| p.target.clone())
        .collect()
}

fn short(req: GenRequest) -> GenRequest {
    GenRequest {
        max_new_tokens: 12,
        ..req
    }
}

#[test]
fn request_invariants() {
    let m = model(0);
    let src = sources(10).remove(0);
    let err = generate(&m, &GenRequest::pivot(src.clone(), FormCode::Literal)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
    let zero = GenRequest {
        max_new_tokens: 0,
        ..GenRequest::direct(src.clone(), FormCode::Idiom)
    };
    assert!(generate(&m, &zero).is_err());
    let beam0 = GenRequest {
        decode: Decode::Beam(0),
        ..GenRequest::direct(src, FormCode::Idiom)
    };
    assert!(generate(&m, &beam0).is_err());
}

#[test]
fn direct_output_form_and_determinism() {
    let m = model(1);
    for src in sources(10).into_iter().take(4) {
        let req = short(GenRequest::direct(src, FormCode::Simile));
        let a = generate(&m, &req).unwrap();
        let b = generate(&m, &req).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.output.form(), FormCode::Simile);
        assert!(a.pivot_text.is_none());
        assert!(a.token_log_probs.iter().all(|l| *l <= 0.0 && l.is_finite()));
        if a.truncated {
            assert_eq!(a.token_log_probs.len(), 12);
        } else {
            assert_eq!(a.token_log_probs.len(), a.output.len() + 1);
        }
    }
}

#[test]
fn pivot_is_two_direct_hops() {
    let m = model(2);
    for src in sources(10).into_iter().take(4) {
        let piv = generate(&m, &short(GenRequest::pivot(src.clone(), FormCode::Idiom))).unwrap();
        let lit = generate(&m, &short(GenRequest::direct(src, FormCode::Literal))).unwrap();
        let hop2 = generate(
            &m,
            &short(GenRequest::direct(lit.output.clone(), FormCode::Idiom)),
        )
        .unwrap();
        let pivot_text = piv.pivot_text.clone().unwrap();
        assert_eq!(pivot_text.form(), FormCode::Literal);
        assert_eq!(pivot_text, lit.output);
        assert_eq!(piv.output, hop2.output);
        assert_eq!(piv.token_log_probs, hop2.token_log_probs);
        assert_eq!(piv.truncated, lit.truncated || hop2.truncated);
    }
}

#[test]
fn truncation_is_flagged() {
    let m = model(3);
    let src = sources(10).remove(0);
    let r = generate(
        &m,
        &GenRequest {
            max_new_tokens: 1,
            ..GenRequest::direct(src, FormCode::Sarcasm)
        },
    )
    .unwrap();
    assert_eq!(r.token_log_probs.len(), 1);
    assert_eq!(r.truncated, !r.output.is_empty());
}

#[test]
fn overlength_source_rejected() {
    let m = model(0);
    let long = TaggedText::new(FormCode::Literal, vec!["the"; 45]).unwrap();
    assert!(matches!(
        generate(&m, &GenRequest::direct(long, FormCode::Idiom)),
        Err(Error::TooLong { .. })
    ));
}

#[test]
fn beam_width_one_equals_greedy() {
    let m = model(4);
    for src in sources(10).into_iter().take(3) {
        let g = generate(
            &m,
            &short(GenRequest::direct(src.clone(), FormCode::Metaphor)),
        )
        .unwrap();
        let b = generate(
            &m,
            &short(GenRequest {
                decode: Decode::Beam(1),
                ..GenRequest::direct(src, FormCode::Metaphor)
            }),
        )
        .unwrap();
        assert_eq!(g.output, b.output);
    }
}

#[test]
fn beam_search_runs() {
    let m = model(4);
    let src = sources(10).remove(0);
    let r = generate(
        &m,
        &short(GenRequest {
            decode: Decode::Beam(3),
            ..GenRequest::direct(src, FormCode::Metaphor)
        }),
    )
    .unwrap();
    assert_eq!(r.output.form(), FormCode::Metaphor);
}

#[test]
fn batch_matches_sequential() {
    let m = model(5);
    let mut reqs: Vec<GenRequest> = sources(20)
        .into_iter()
        .take(8)
        .enumerate()
        .map(|(i, s)| {
            let form = FormCode::FIGURATIVE[i % 5];
            if i % 2 == 0 && form != FormCode::Literal {
                short(GenRequest::pivot(s, form))
            } else {
                short(GenRequest::direct(s, form))
            }
        })
        .collect();
    reqs.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let batch = generate_batch(&m, &reqs).unwrap();
    for (r, b) in reqs.iter().zip(&batch) {
        assert_eq!(&generate(&m, r).unwrap(), b);
    }
    assert_eq!(generate_batch(&m, &reqs[..1]).unwrap()[0], batch[0]);
    assert!(generate_batch(&m, &[]).unwrap().is_empty());
}

#[test]
fn batch_errors_carry_index() {
    let m = model(0);
    let src = sources(10);
    let reqs = vec![
        short(GenRequest::direct(src[0].clone(), FormCode::Idiom)),
        short(GenRequest {
            mode: Mode::Pivot,
            ..GenRequest::direct(src[1].clone(), FormCode::Literal)
        }),
    ];
    let err = generate_batch(&m, &reqs).unwrap_err();
    assert!(matches!(err, Error::BatchItem { index: 1, .. }), "{err}");

    let mixed = vec![
        short(GenRequest::direct(src[0].clone(), FormCode::Idiom)),
        GenRequest {
            decode: Decode::Beam(2),
            ..short(GenRequest::direct(src[1].clone(), FormCode::Idiom))
        },
    ];
    assert!(generate_batch(&m, &mixed).is_err());
}

#[test]
fn results_file_round_trip() {
    let m = model(6);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.tsv");
    let src = sources(10);
    std::fs::write(
        &input,
        format!(
            "HYPERBOLE\t{}\tIDIOM\nHYPERBOLE\t{}\tSIMILE\n",
            src[0].text(),
            src[1].text()
        ),
    )
    .unwrap();
    let reqs = read_requests(&input, Mode::Pivot, Decode::Greedy, 12, true).unwrap();
    assert_eq!(reqs.len(), 2);
    assert_eq!(reqs[1].target_form, FormCode::Simile);
    let res = generate_batch(&m, &reqs).unwrap();
    let out = dir.path().join("out.tsv");
    write_results(&out, &reqs, &res).unwrap();
    let back = read_result_outputs(&out).unwrap();
    for ((row, text), (q, r)) in back.iter().zip(reqs.iter().zip(&res)) {
        assert_eq!(row.source, q.source);
        assert_eq!(text, &r.output);
    }
    let raw = std::fs::read_to_string(&out).unwrap();
    assert_eq!(raw.lines().next().unwrap().split('\t').count(), 6);
}
