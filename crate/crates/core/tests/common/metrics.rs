//! Brute-force metric definitions written from the textbook formulas:
//! precision and recall first, then their harmonic mean; LCS by trying
//! every subsequence; n-gram counts by nested scans.

use rand::Rng;

/// Lowercase, punctuation to space, drop articles, single spaces.
pub fn normalize(s: &str) -> String {
    let mut words = Vec::new();
    let mut cur = String::new();
    for ch in s.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words.retain(|w| w != "a" && w != "an" && w != "the");
    words.join(" ")
}

/// Size of the multiset intersection, by striking matched tokens.
pub fn common(pred: &[&str], gold: &[&str]) -> usize {
    let mut pool: Vec<&str> = gold.to_vec();
    let mut n = 0;
    for w in pred {
        if let Some(i) = pool.iter().position(|g| g == w) {
            pool.remove(i);
            n += 1;
        }
    }
    n
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn nf1(pred: &str, refs: &[String]) -> f64 {
    let mut best: f64 = 0.0;
    for r in refs {
        let (p, g) = (normalize(pred), normalize(r));
        let pt: Vec<&str> = p.split(' ').filter(|w| !w.is_empty()).collect();
        let gt: Vec<&str> = g.split(' ').filter(|w| !w.is_empty()).collect();
        let f = if pt.is_empty() || gt.is_empty() {
            if pt.is_empty() && gt.is_empty() {
                100.0
            } else {
                0.0
            }
        } else {
            let c = common(&pt, &gt) as f64;
            100.0 * harmonic(c / pt.len() as f64, c / gt.len() as f64)
        };
        best = best.max(f);
    }
    best
}

pub fn em(pred: &str, refs: &[String]) -> f64 {
    if refs.iter().any(|r| normalize(r) == normalize(pred)) {
        100.0
    } else {
        0.0
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn toks(s: &str) -> Vec<String> {
    s.to_lowercase().split_whitespace().map(str::to_string).collect()
}

fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return Vec::new();
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

/// Clipped n-gram matches: each prediction n-gram may claim one unclaimed
/// equal reference n-gram.
pub fn clipped(pred: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let p = grams(pred, n);
    let mut pool = grams(reference, n);
    let total_r = pool.len();
    let mut hits = 0;
    for g in &p {
        if let Some(i) = pool.iter().position(|r| r == g) {
            pool.remove(i);
            hits += 1;
        }
    }
    (hits, p.len(), total_r)
}

pub fn bleu(preds: &[String], refs: &[String]) -> f64 {
    let mut hits = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0, 0);
    for (p, g) in preds.iter().zip(refs) {
        let (p, g) = (toks(p), toks(g));
        c += p.len();
        r += g.len();
        for n in 1..=4 {
            let (h, t, _) = clipped(&p, &g, n);
            hits[n - 1] += h;
            totals[n - 1] += t;
        }
    }
    if hits.contains(&0) {
        return 0.0;
    }
    let product: f64 = (0..4).map(|i| hits[i] as f64 / totals[i] as f64).product();
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * product.powf(0.25)
}

/// Longest common subsequence by checking every subsequence of `a`.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 12, "exhaustive LCS only for short inputs");
    let is_subseq = |sel: &[&String]| {
        let mut it = b.iter();
        sel.iter().all(|w| it.any(|x| x == *w))
    };
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sel: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sel.len() > best && is_subseq(&sel) {
            best = sel.len();
        }
    }
    best
}

fn f_from_counts(hits: usize, np: usize, nr: usize) -> f64 {
    if np == 0 && nr == 0 {
        return 100.0;
    }
    if np == 0 || nr == 0 {
        return 0.0;
    }
    100.0 * harmonic(hits as f64 / np as f64, hits as f64 / nr as f64)
}

pub fn rouge(pred: &str, reference: &str) -> [f64; 3] {
    let (p, g) = (toks(pred), toks(reference));
    let (h1, p1, r1) = clipped(&p, &g, 1);
    let (h2, p2, r2) = clipped(&p, &g, 2);
    [f_from_counts(h1, p1, r1), f_from_counts(h2, p2, r2), f_from_counts(lcs(&p, &g), p.len(), g.len())]
}

pub fn rouge_avg(preds: &[String], refs: &[String]) -> f64 {
    let per: Vec<f64> = preds
        .iter()
        .zip(refs)
        .map(|(p, g)| {
            let [a, b, c] = rouge(p, g);
            (a + b + c) / 3.0
        })
        .collect();
    mean(&per)
}

pub fn cf1(preds: &[String], golds: &[String]) -> f64 {
    let null = |s: &str| normalize(s) == "unanswerable";
    let answered = preds.iter().filter(|p| !null(p)).count();
    let answerable = golds.iter().filter(|g| !null(g)).count();
    let tp = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| !null(p) && !null(g) && normalize(p) == normalize(g))
        .count();
    let precision = if answered == 0 { 0.0 } else { tp as f64 / answered as f64 };
    let recall = if answerable == 0 { 0.0 } else { tp as f64 / answerable as f64 };
    100.0 * harmonic(precision, recall)
}

pub fn lf_em(preds: &[String], golds: &[String]) -> f64 {
    let canon = |s: &str| {
        let mut out = String::new();
        let mut gap = false;
        for ch in s.trim().chars() {
            if ch.is_whitespace() {
                gap = true;
            } else {
                if gap && !out.is_empty() {
                    out.push(' ');
                }
                gap = false;
                out.extend(ch.to_lowercase());
            }
        }
        out
    };
    let per: Vec<f64> = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| if canon(p) == canon(g) { 100.0 } else { 0.0 })
        .collect();
    mean(&per)
}

/// Sorted `(slot, value)` pairs of a rendered belief state.
pub fn state_pairs(s: &str) -> Vec<(String, String)> {
    let mut pairs: Vec<(String, String)> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let cut = p.find(['=', ':']).expect("separator");
            let clean = |x: &str| x.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
            (clean(&p[..cut]), clean(&p[cut + 1..]))
        })
        .collect();
    pairs.sort();
    pairs
}

pub fn ds_em(preds: &[String], golds: &[String]) -> f64 {
    let hits = preds.iter().zip(golds).filter(|(p, g)| state_pairs(p) == state_pairs(g)).count();
    100.0 * hits as f64 / golds.len() as f64
}

const WORDS: [&str; 8] = ["cat", "dog", "the", "a", "sat", "Ran", "red", "an"];

/// Space-separated words from a tiny pool (articles and case included).
pub fn random_text(rng: &mut impl Rng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Random belief state rendered with mixed separators, spacing and case.
pub fn random_state(rng: &mut impl Rng) -> String {
    let slots = ["food", "area", "price", "request"];
    let values = ["thai", "north", "cheap", "phone"];
    let mut parts = Vec::new();
    for s in slots {
        if rng.gen_bool(0.5) {
            let v = values[rng.gen_range(0..values.len())];
            let sep = if rng.gen_bool(0.5) { "=" } else { ": " };
            let slot = if rng.gen_bool(0.3) { s.to_uppercase() } else { s.to_string() };
            parts.push(format!("{slot}{sep}{v}"));
        }
    }
    let k = parts.len();
    if k > 1 {
        let i = rng.gen_range(0..k);
        parts.swap(0, i);
    }
    parts.join(", ")
}
