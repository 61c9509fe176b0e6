/// Number of hash buckets (2^18).
pub const HASH_BUCKETS: usize = 1 << 18;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn bucket(h: u64) -> u32 {
    (h % HASH_BUCKETS as u64) as u32
}

/// Sorted, deduplicated `(bucket, value)` entries with unit L2 norm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector(pub Vec<(u32, f64)>);

impl SparseVector {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.0.iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hashed n-gram counts of a token sequence, L2-normalized.
///
/// Word n-grams for n = 1..=3 and character n-grams for n = 3..=5 over the
/// space-joined text padded with one space on each side.
pub fn featurize(tokens: &[String]) -> SparseVector {
    let mut hashes: Vec<u32> = Vec::new();
    for n in 1..=3 {
        for gram in tokens.windows(n) {
            let mut parts: Vec<&[u8]> = vec![b"w"];
            parts.extend(gram.iter().map(|t| t.as_bytes()));
            hashes.push(bucket(fnv1a(&parts)));
        }
    }
    let text: Vec<char> = format!(" {} ", tokens.join(" ")).chars().collect();
    for n in 3..=5 {
        for gram in text.windows(n) {
            let s: String = gram.iter().collect();
            hashes.push(bucket(fnv1a(&[b"c", s.as_bytes()])));
        }
    }
    hashes.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for h in hashes {
        match entries.last_mut() {
            Some((last, c)) if *last == h => *c += 1.0,
            _ => entries.push((h, 1.0)),
        }
    }
    let norm = entries.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, c) in &mut entries {
            *c /= norm;
        }
    }
    SparseVector(entries)
}
