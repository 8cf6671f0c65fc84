use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContributionKind, ContributionRecord, StudyWindow};
use crate::error::{Error, Result};

/// Weekly sharing rates for one pair: the fraction of the smaller
/// community's active authors posting in both, and the probability that a
/// token of either community comes from their shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSchedule {
    pub i: String,
    pub j: String,
    pub user_rate: Vec<f64>,
    pub topic_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub communities: Vec<String>,
    pub start: NaiveDate,
    pub weeks: usize,
    /// Size of each community's (and each scheduled pair's) author pool.
    pub authors_per_pool: usize,
    /// Size of each community's (and each scheduled pair's) vocabulary.
    pub tokens_per_pool: usize,
    pub words_per_post: usize,
    /// Active authors per community and week, `activity[c][w]`.
    pub activity: Vec<Vec<usize>>,
    pub schedule: Vec<PairSchedule>,
    pub seed: u64,
}

pub fn constant_activity(n: usize, weeks: usize, k: usize) -> Vec<Vec<usize>> {
    vec![vec![k; weeks]; n]
}

impl SyntheticCorpusSpec {
    pub fn window(&self) -> Result<StudyWindow> {
        StudyWindow::new(self.start, self.start + chrono::Days::new(7 * self.weeks as u64))
    }

    fn validate(&self) -> Result<BTreeMap<&str, usize>> {
        let index: BTreeMap<&str, usize> = self.communities.iter().enumerate().map(|(k, c)| (c.as_str(), k)).collect();
        if index.len() != self.communities.len() {
            return Err(Error::invalid("duplicate community names"));
        }
        if self.weeks == 0 || self.words_per_post == 0 || self.tokens_per_pool == 0 {
            return Err(Error::invalid("weeks, words per post and pool vocabulary must be positive"));
        }
        if self.activity.len() != self.communities.len() || self.activity.iter().any(|a| a.len() != self.weeks) {
            return Err(Error::invalid("activity must give one count per community and week"));
        }
        if self.activity.iter().flatten().any(|&k| k > self.authors_per_pool) {
            return Err(Error::invalid("weekly activity exceeds the author pool"));
        }
        let mut user_sum = vec![vec![0.0; self.weeks]; self.communities.len()];
        let mut topic_sum = user_sum.clone();
        for p in &self.schedule {
            let (Some(&a), Some(&b)) = (index.get(p.i.as_str()), index.get(p.j.as_str())) else {
                return Err(Error::UnknownCommunity(format!("{}/{}", p.i, p.j)));
            };
            if a == b {
                return Err(Error::invalid("a schedule pair must join two communities"));
            }
            if p.user_rate.len() != self.weeks || p.topic_rate.len() != self.weeks {
                return Err(Error::invalid(format!("schedule {}-{} must cover every week", p.i, p.j)));
            }
            for w in 0..self.weeks {
                for r in [p.user_rate[w], p.topic_rate[w]] {
                    if !(0.0..=1.0).contains(&r) {
                        return Err(Error::invalid(format!("infeasible sharing rate {r} for {}-{}", p.i, p.j)));
                    }
                }
                for c in [a, b] {
                    user_sum[c][w] += p.user_rate[w];
                    topic_sum[c][w] += p.topic_rate[w];
                }
            }
        }
        for (c, name) in self.communities.iter().enumerate() {
            if user_sum[c].iter().chain(&topic_sum[c]).any(|&s| s > 1.0 + 1e-12) {
                return Err(Error::invalid(format!("sharing rates of `{name}` sum above 1")));
            }
        }
        Ok(index)
    }
}

/// One submission per active author and week. Authors and words are drawn
/// from community pools, or from a pair's shared pools at the scheduled rates.
pub fn synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<ContributionRecord>> {
    let index = spec.validate()?;
    let window = spec.window()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.communities.len();
    let pairs: Vec<(usize, usize, &PairSchedule)> = spec
        .schedule
        .iter()
        .map(|p| (index[p.i.as_str()], index[p.j.as_str()], p))
        .collect();
    let mut out = Vec::new();
    for w in 0..spec.weeks {
        let mut authors: Vec<Vec<String>> = vec![Vec::new(); n];
        for (pi, &(a, b, p)) in pairs.iter().enumerate() {
            let k = spec.activity[a][w].min(spec.activity[b][w]);
            let shared = (p.user_rate[w] * k as f64).round() as usize;
            for m in sample(&mut rng, spec.authors_per_pool, shared) {
                let name = format!("p{pi}u{m}");
                authors[a].push(name.clone());
                authors[b].push(name);
            }
        }
        for (c, list) in authors.iter_mut().enumerate() {
            let own = spec.activity[c][w].saturating_sub(list.len());
            list.extend(sample(&mut rng, spec.authors_per_pool, own).into_iter().map(|m| format!("c{c}u{m}")));
        }
        for (c, list) in authors.iter().enumerate() {
            let topic: Vec<(usize, f64)> = pairs
                .iter()
                .enumerate()
                .filter(|(_, (a, b, _))| *a == c || *b == c)
                .map(|(pi, (_, _, p))| (pi, p.topic_rate[w]))
                .collect();
            for author in list {
                let words: Vec<String> = (0..spec.words_per_post)
                    .map(|_| {
                        let mut u: f64 = rng.random();
                        let m = rng.random_range(0..spec.tokens_per_pool);
                        for &(pi, rate) in &topic {
                            if u < rate {
                                return format!("p{pi}w{m}");
                            }
                            u -= rate;
                        }
                        format!("c{c}w{m}")
                    })
                    .collect();
                out.push(ContributionRecord {
                    community: spec.communities[c].clone(),
                    author: author.clone(),
                    timestamp: window.week_start_ts(w) + rng.random_range(0..7 * 86_400),
                    kind: ContributionKind::Submission,
                    text: words.join(" "),
                    nsfw: false,
                });
            }
        }
    }
    Ok(out)
}
