use figlang::metrics::{bleu, harmonic_mean};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Reference corpus BLEU written from the textbook definition: list every
// n-gram occurrence, clip by counting equal n-grams in the reference.
fn oracle(cands: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, reference) in cands.iter().zip(refs) {
        c += cand.len();
        r += reference.len();
        for n in 1..=4 {
            if cand.len() < n {
                continue;
            }
            let grams: Vec<&[String]> = (0..=cand.len() - n).map(|i| &cand[i..i + n]).collect();
            let ref_grams: Vec<&[String]> = if reference.len() >= n {
                (0..=reference.len() - n)
                    .map(|i| &reference[i..i + n])
                    .collect()
            } else {
                Vec::new()
            };
            total[n - 1] += grams.len();
            let mut seen: Vec<&[String]> = Vec::new();
            for g in &grams {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g);
                let in_cand = grams.iter().filter(|x| *x == g).count();
                let in_ref = ref_grams.iter().filter(|x| *x == g).count();
                matched[n - 1] += in_cand.min(in_ref);
            }
        }
    }
    if c == 0 || matched.contains(&0) {
        return 0.0;
    }
    let mut prod = 1.0f64;
    for n in 0..4 {
        prod *= matched[n] as f64 / total[n] as f64;
    }
    let bp = if c <= r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * prod.powf(0.25)
}

fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let words = ["a", "b", "c", "d", "e", "A"];
    let n = rng.random_range(1..6);
    let sent = |rng: &mut ChaCha8Rng, len: usize| -> Vec<String> {
        (0..len)
            .map(|_| words.choose(rng).unwrap().to_string())
            .collect()
    };
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for _ in 0..n {
        let len = rng.random_range(3..12);
        let r = sent(rng, len);
        // candidates are noisy copies so precisions are rarely all zero
        let mut c: Vec<String> = r.iter().filter(|_| rng.random_bool(0.8)).cloned().collect();
        for _ in 0..rng.random_range(0..3) {
            let at = rng.random_range(0..=c.len());
            c.insert(at, words.choose(rng).unwrap().to_string());
        }
        cands.push(c);
        refs.push(r);
    }
    (cands, refs)
}

#[test]
fn bleu_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nonzero = 0;
    for _ in 0..50 {
        let (c, r) = random_corpus(&mut rng);
        let got = bleu(&c, &r).unwrap();
        let want = oracle(&c, &r);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}: {c:?} / {r:?}");
        if want > 0.0 {
            nonzero += 1;
        }
    }
    assert!(
        nonzero >= 10,
        "oracle corpora too degenerate ({nonzero} nonzero)"
    );
}

#[test]
fn bleu_identity_and_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (c, r) = random_corpus(&mut rng);
        let long: Vec<Vec<String>> = r.iter().filter(|s| s.len() >= 4).cloned().collect();
        if !long.is_empty() {
            assert_eq!(bleu(&long, &long).unwrap(), 1.0);
        }
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.shuffle(&mut rng);
        let pc: Vec<_> = idx.iter().map(|&i| c[i].clone()).collect();
        let pr: Vec<_> = idx.iter().map(|&i| r[i].clone()).collect();
        assert!((bleu(&c, &r).unwrap() - bleu(&pc, &pr).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn bleu_clipped_repetition_is_zero() {
    let c = vec![vec!["the"; 4]];
    let r = vec![vec!["the", "cat"]];
    assert_eq!(bleu(&c, &r).unwrap(), 0.0);
    assert_eq!(
        oracle(
            &[vec!["the".to_string(); 4]],
            &[vec!["the".into(), "cat".into()]]
        ),
        0.0
    );
}

#[test]
fn bleu_is_case_sensitive() {
    let c = vec![vec!["The", "cat", "sat", "down", "here"]];
    let r = vec![vec!["the", "cat", "sat", "down", "here"]];
    assert!(bleu(&c, &r).unwrap() < 1.0);
}

#[test]
fn empty_candidate_scores_no_higher() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let (mut c, r) = random_corpus(&mut rng);
        let fixed: Vec<Vec<String>> = c
            .iter()
            .zip(&r)
            .enumerate()
            .map(|(i, (_, rr))| if i == 0 { rr.clone() } else { c[i].clone() })
            .collect();
        c[0].clear();
        assert!(bleu(&c, &r).unwrap() <= bleu(&fixed, &r).unwrap());
    }
}

#[test]
fn harmonic_mean_paper_cells() {
    assert!((harmonic_mean(0.844, 0.556).unwrap() - 0.670).abs() <= 0.001);
    assert!((harmonic_mean(0.953, 0.745).unwrap() - 0.836).abs() <= 0.001);
    let a: f64 = 0.73;
    assert!((harmonic_mean(a, 1.0).unwrap() - 2.0 * a / (a + 1.0)).abs() < 1e-15);
}
