//! Verification scoring: pair sampling, FAR/FRR sweeps and the equal error rate.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

pub const COSINE_TAG: &str = "cosine";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    /// Name of the similarity that produced the scores.
    pub score: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>, score: impl Into<String>) -> Self {
        ScoreSet {
            genuine,
            impostor,
            score: score.into(),
            warnings: Vec::new(),
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairPolicy {
    /// Impostor pairs drawn per genuine pair.
    pub impostor_ratio: usize,
    /// Genuine pairs are subsampled down to this count when set.
    pub max_genuine: Option<usize>,
    pub seed: u64,
}

impl Default for PairPolicy {
    fn default() -> Self {
        PairPolicy {
            impostor_ratio: 10,
            max_genuine: None,
            seed: 0,
        }
    }
}

fn subsample<R: Rng + ?Sized>(mut pairs: Vec<(usize, usize)>, keep: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if keep >= pairs.len() {
        return pairs;
    }
    let mut idx = index::sample(rng, pairs.len(), keep).into_vec();
    idx.sort_unstable();
    let out = idx.iter().map(|&i| pairs[i]).collect();
    pairs.clear();
    out
}

/// Genuine pairs `(i, j)`, `i < j`, of every same-class couple (subsampled
/// per policy) and `impostor_ratio` times as many distinct cross-class pairs,
/// capped at the number that exist.
pub fn sample_pairs(labels: &[usize], policy: &PairPolicy) -> (Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<String>) {
    let n = labels.len();
    let mut r = rng::stream(policy.seed, rng::TAG_PAIRS);
    let mut genuine = Vec::new();
    let mut class_sizes = std::collections::BTreeMap::new();
    for (i, &li) in labels.iter().enumerate() {
        *class_sizes.entry(li).or_insert(0usize) += 1;
        for j in i + 1..n {
            if labels[j] == li {
                genuine.push((i, j));
            }
        }
    }
    let warnings = class_sizes
        .iter()
        .filter(|(_, &c)| c == 1)
        .map(|(k, _)| format!("class {k} has a single test image and contributes no genuine pairs"))
        .collect();
    if let Some(cap) = policy.max_genuine {
        genuine = subsample(genuine, cap, &mut r);
    }
    let same: usize = class_sizes.values().map(|c| c * (c - 1) / 2).sum();
    let cross_total = n * n.saturating_sub(1) / 2 - same;
    let want = (genuine.len() * policy.impostor_ratio).min(cross_total);
    let impostor = if want * 2 >= cross_total {
        let all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| labels[i] != labels[j])
            .collect();
        subsample(all, want, &mut r)
    } else {
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let (a, b) = (r.random_range(0..n), r.random_range(0..n));
            let p = (a.min(b), a.max(b));
            if labels[a] != labels[b] && seen.insert(p) {
                out.push(p);
            }
        }
        out
    };
    (genuine, impostor, warnings)
}

/// Cosine scores of sampled genuine and impostor pairs over `embeddings`.
pub fn score_pairs(embeddings: &[Vec<f64>], labels: &[usize], policy: &PairPolicy) -> Result<ScoreSet> {
    if embeddings.len() != labels.len() {
        return Err(Error::shape("score_pairs", "labels", embeddings.len(), labels.len()));
    }
    let (gp, ip, warnings) = sample_pairs(labels, policy);
    let score = |&(i, j): &(usize, usize)| cosine(&embeddings[i], &embeddings[j]);
    let mut set = ScoreSet::new(gp.iter().map(score).collect(), ip.iter().map(score).collect(), COSINE_TAG);
    set.warnings = warnings;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
    pub eer_threshold: f64,
}

/// Thresholds above which every distinct score is added to the uniform grid.
pub const DISTINCT_SCORE_LIMIT: usize = 10_000;

fn sorted_finite(name: &str, v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("sweep_roc", format!("no {name} scores")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{name} scores")));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// FAR/FRR sweep. `FAR(t)` is the fraction of impostor scores `>= t`,
/// `FRR(t)` the fraction of genuine scores `< t`. The EER is read off by
/// linear interpolation between the two thresholds bracketing the sign
/// change of `FAR - FRR`.
pub fn sweep_roc(scores: &ScoreSet, num_thresholds: usize) -> Result<RocCurve> {
    if num_thresholds < 2 {
        return Err(Error::invalid("sweep_roc", format!("need >= 2 thresholds, got {num_thresholds}")));
    }
    let gen = sorted_finite("genuine", &scores.genuine)?;
    let imp = sorted_finite("impostor", &scores.impostor)?;
    let lo = gen[0].min(imp[0]);
    let hi = gen[gen.len() - 1].max(imp[imp.len() - 1]);
    let mut thresholds: Vec<f64> = (0..num_thresholds)
        .map(|i| lo + (hi - lo) * i as f64 / (num_thresholds - 1) as f64)
        .collect();
    let mut distinct: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= DISTINCT_SCORE_LIMIT {
        thresholds.extend(distinct);
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (gen.len() as f64, imp.len() as f64);
    let far: Vec<f64> = thresholds
        .iter()
        .map(|&t| (imp.len() - imp.partition_point(|&s| s < t)) as f64 / ni)
        .collect();
    let frr: Vec<f64> = thresholds.iter().map(|&t| gen.partition_point(|&s| s < t) as f64 / ng).collect();

    let diff = |i: usize| far[i] - frr[i];
    let (eer, eer_threshold) = match (0..thresholds.len()).find(|&i| diff(i) <= 0.0) {
        Some(0) => ((far[0] + frr[0]) / 2.0, thresholds[0]),
        Some(i) => {
            let (d0, d1) = (diff(i - 1), diff(i));
            let a = d0 / (d0 - d1);
            let lerp = |v: &[f64]| v[i - 1] + a * (v[i] - v[i - 1]);
            ((lerp(&far) + lerp(&frr)) / 2.0, lerp(&thresholds))
        }
        None => {
            let i = (0..thresholds.len())
                .min_by(|&a, &b| diff(a).abs().total_cmp(&diff(b).abs()))
                .expect("non-empty sweep");
            ((far[i] + frr[i]) / 2.0, thresholds[i])
        }
    };
    Ok(RocCurve {
        thresholds,
        far,
        frr,
        eer,
        eer_threshold,
    })
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,far,frr\n");
        for ((t, a), r) in self.thresholds.iter().zip(&self.far).zip(&self.frr) {
            let _ = writeln!(s, "{t:.8},{a:.8},{r:.8}");
        }
        s
    }

    pub fn eer_summary(&self, scores: &ScoreSet) -> String {
        let v = serde_json::json!({
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "score": scores.score,
            "genuine_pairs": scores.genuine.len(),
            "impostor_pairs": scores.impostor.len(),
            "thresholds": self.thresholds.len(),
        });
        serde_json::to_string_pretty(&v).expect("plain json") + "\n"
    }
}
