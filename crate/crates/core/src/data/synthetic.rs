//! Synthetic tasks that each isolate one output mode of the decoder:
//! copying from the context, copying from the question, and generating
//! from the vocabulary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::example::Example;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    CopySpan,
    Classify,
    Generate,
    Mixed,
}

impl SyntheticKind {
    pub fn task_name(self) -> &'static str {
        match self {
            SyntheticKind::CopySpan => "copy_span",
            SyntheticKind::Classify => "classify",
            SyntheticKind::Generate => "generate",
            SyntheticKind::Mixed => "mixed",
        }
    }

    pub fn from_task(name: &str) -> Option<Self> {
        match name {
            "copy_span" => Some(SyntheticKind::CopySpan),
            "classify" => Some(SyntheticKind::Classify),
            "generate" => Some(SyntheticKind::Generate),
            "mixed" => Some(SyntheticKind::Mixed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub count: usize,
    pub seed: u64,
    /// Number of distinct context words.
    #[serde(default = "defaults::alphabet")]
    pub alphabet: usize,
    #[serde(default = "defaults::min_len")]
    pub min_len: usize,
    #[serde(default = "defaults::max_len")]
    pub max_len: usize,
    /// Longest span asked for by `copy_span`.
    #[serde(default = "defaults::max_span")]
    pub max_span: usize,
}

mod defaults {
    pub fn alphabet() -> usize {
        20
    }
    pub fn min_len() -> usize {
        3
    }
    pub fn max_len() -> usize {
        6
    }
    pub fn max_span() -> usize {
        3
    }
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, count: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind,
            count,
            seed,
            alphabet: defaults::alphabet(),
            min_len: defaults::min_len(),
            max_len: defaults::max_len(),
            max_span: defaults::max_span(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("synthetic spec: {m}")));
        if self.alphabet < 2 {
            return bad("alphabet must hold at least 2 words");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.max_span == 0 || self.max_span > self.min_len {
            return bad("need 1 <= max_span <= min_len");
        }
        Ok(())
    }
}

const LABELS: [(&str, &str); 10] = [
    ("positive", "negative"),
    ("happy", "angry"),
    ("yes", "no"),
    ("true", "false"),
    ("good", "bad"),
    ("high", "low"),
    ("left", "right"),
    ("up", "down"),
    ("hot", "cold"),
    ("big", "small"),
];

/// Every label word `classify` can emit.
pub fn label_words() -> Vec<&'static str> {
    LABELS.iter().flat_map(|&(a, b)| [a, b]).collect()
}

fn base26(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// `n` distinct lowercase letter words: a, b, …, z, aa, ab, … with the
/// articles `an` and `the` skipped.
pub fn alphabet_words(n: usize) -> Vec<String> {
    (0..)
        .map(base26)
        .filter(|w| w != "an" && w != "the")
        .take(n)
        .collect()
}

/// Target word of context word `i` under the `generate` codebook. Targets
/// never coincide with alphabet words.
pub fn codebook(i: usize, alphabet: usize) -> String {
    format!("g{}", (i * 7 + 3) % alphabet)
}

fn sentence(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Vec<usize> {
    let len = rng.gen_range(spec.min_len..=spec.max_len);
    (0..len).map(|_| rng.gen_range(0..spec.alphabet)).collect()
}

fn one(kind: SyntheticKind, rng: &mut ChaCha8Rng, spec: &SyntheticSpec, alpha: &[String]) -> Result<Example> {
    let idx = sentence(rng, spec);
    let ctx: Vec<&str> = idx.iter().map(|&i| alpha[i].as_str()).collect();
    let context = ctx.join(" ");
    let (question, answer) = match kind {
        SyntheticKind::CopySpan => {
            let span = rng.gen_range(1..=spec.max_span.min(idx.len()));
            let start = rng.gen_range(0..=idx.len() - span);
            (
                format!("copy span {} {}", start + 1, start + span),
                ctx[start..start + span].join(" "),
            )
        }
        SyntheticKind::Classify => {
            let (a, b) = LABELS[rng.gen_range(0..LABELS.len())];
            let (x, y) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let pick = if idx[0].is_multiple_of(2) { x } else { y };
            (format!("is it {x} or {y} ?"), pick.to_string())
        }
        SyntheticKind::Generate => {
            let out: Vec<String> = idx.iter().map(|&i| codebook(i, spec.alphabet)).collect();
            ("translate".to_string(), out.join(" "))
        }
        SyntheticKind::Mixed => unreachable!("mixed is expanded by the caller"),
    };
    Example::new(kind.task_name(), context, question, answer)
}

/// Deterministic for a fixed spec. `Mixed` yields `count` examples of each
/// of the three kinds, concatenated in the order copy_span, classify,
/// generate.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Example>> {
    spec.validate()?;
    let alpha = alphabet_words(spec.alphabet);
    let kinds: Vec<SyntheticKind> = match spec.kind {
        SyntheticKind::Mixed => vec![SyntheticKind::CopySpan, SyntheticKind::Classify, SyntheticKind::Generate],
        k => vec![k],
    };
    let mut out = Vec::with_capacity(spec.count * kinds.len());
    for (n, kind) in kinds.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(n as u64 * 0x9E37_79B9));
        for _ in 0..spec.count {
            out.push(one(kind, &mut rng, spec, &alpha)?);
        }
    }
    Ok(out)
}
