//! Tokenization, PMI phrase detection and greedy phrase matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContributionRecord, StudyWindow};
use crate::error::{Error, Result};

/// Lowercases, drops URLs and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        if is_url(&lower) {
            continue;
        }
        out.extend(
            lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_string),
        );
    }
    out
}

fn is_url(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    w.starts_with("http://") || w.starts_with("https://") || w.starts_with("www.")
}

/// A tokenized contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub community: String,
    pub week: usize,
    pub tokens: Vec<String>,
}

pub fn documents(
    records: &[ContributionRecord],
    communities: &BTreeSet<String>,
    window: &StudyWindow,
) -> Vec<Document> {
    records
        .iter()
        .filter(|r| communities.contains(&r.community))
        .filter_map(|r| {
            let week = window.week_index_of(r.timestamp)?;
            let tokens = tokenize(&r.text);
            (!tokens.is_empty()).then(|| Document {
                community: r.community.clone(),
                week,
                tokens,
            })
        })
        .collect()
}

/// Seeded Bernoulli sample of documents.
pub fn sample_documents(docs: &[Document], rate: f64, seed: u64) -> Vec<Document> {
    if rate >= 1.0 {
        return docs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter()
        .filter(|_| rng.random::<f64>() < rate)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhraseConfig {
    pub max_len: usize,
    pub pmi_min: f64,
    pub min_count: u64,
    pub min_df: usize,
}

impl Default for PhraseConfig {
    fn default() -> Self {
        Self {
            max_len: 4,
            pmi_min: 3.0,
            min_count: 3_500,
            min_df: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseEntry {
    pub tokens: Vec<String>,
    pub count: u64,
    pub df: usize,
    /// Natural-log PMI; 0 for single tokens.
    pub pmi: f64,
}

impl PhraseEntry {
    pub fn phrase(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhraseVocabulary {
    pub entries: Vec<PhraseEntry>,
}

/// `ln( P(phrase) / Π P(token) )` with every probability estimated as a
/// count over the same total token count.
pub fn pmi(phrase_count: u64, token_counts: &[u64], total_tokens: u64) -> f64 {
    let n = total_tokens as f64;
    let mut score = (phrase_count as f64 / n).ln();
    for &c in token_counts {
        score -= (c as f64 / n).ln();
    }
    score
}

/// Counts every n-gram up to `max_len` (overlapping occurrences, never
/// crossing document boundaries) and keeps phrases meeting all thresholds.
pub fn detect_phrases(docs: &[Document], cfg: &PhraseConfig) -> PhraseVocabulary {
    if docs.is_empty() || cfg.max_len == 0 {
        return PhraseVocabulary::default();
    }
    let mut interner: HashMap<&str, u32> = HashMap::new();
    let mut names: Vec<&str> = Vec::new();
    let mut order: Vec<&Document> = docs.iter().collect();
    order.sort_by(|a, b| a.community.cmp(&b.community));

    struct Stat {
        count: u64,
        df: usize,
        last_community: usize,
    }
    let mut stats: HashMap<Vec<u32>, Stat> = HashMap::new();
    let mut total_tokens = 0u64;
    let mut community_idx = 0usize;
    let mut prev_community: Option<&str> = None;
    for doc in order {
        if prev_community != Some(doc.community.as_str()) {
            community_idx += 1;
            prev_community = Some(doc.community.as_str());
        }
        let ids: Vec<u32> = doc
            .tokens
            .iter()
            .map(|t| {
                *interner.entry(t.as_str()).or_insert_with(|| {
                    names.push(t.as_str());
                    (names.len() - 1) as u32
                })
            })
            .collect();
        total_tokens += ids.len() as u64;
        for start in 0..ids.len() {
            for len in 1..=cfg.max_len.min(ids.len() - start) {
                let key = ids[start..start + len].to_vec();
                let s = stats.entry(key).or_insert(Stat {
                    count: 0,
                    df: 0,
                    last_community: 0,
                });
                s.count += 1;
                if s.last_community != community_idx {
                    s.last_community = community_idx;
                    s.df += 1;
                }
            }
        }
    }

    let mut entries = Vec::new();
    for (key, s) in &stats {
        if s.df < cfg.min_df {
            continue;
        }
        let tokens: Vec<String> = key.iter().map(|&i| names[i as usize].to_string()).collect();
        if key.len() == 1 {
            entries.push(PhraseEntry {
                tokens,
                count: s.count,
                df: s.df,
                pmi: 0.0,
            });
            continue;
        }
        if s.count < cfg.min_count {
            continue;
        }
        let unigram_counts: Vec<u64> = key.iter().map(|&i| stats[&vec![i]].count).collect();
        let score = pmi(s.count, &unigram_counts, total_tokens);
        if score >= cfg.pmi_min {
            entries.push(PhraseEntry {
                tokens,
                count: s.count,
                df: s.df,
                pmi: score,
            });
        }
    }
    entries.sort_by(|a, b| a.tokens.cmp(&b.tokens));
    PhraseVocabulary { entries }
}

impl PhraseVocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.entries.iter().map(|e| e.tokens.len()).max().unwrap_or(0)
    }

    pub fn matcher(&self) -> PhraseMatcher {
        PhraseMatcher {
            lookup: self
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| (e.tokens.clone(), i))
                .collect(),
            max_len: self.max_len(),
        }
    }

    /// TSV: `phrase<TAB>count<TAB>df<TAB>pmi`, tokens joined by single spaces.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "phrase\tcount\tdf\tpmi")?;
        for e in &self.entries {
            writeln!(w, "{}\t{}\t{}\t{}", e.phrase(), e.count, e.df, e.pmi)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::invalid(format!("vocabulary line {}: `{line}`", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            entries.push(PhraseEntry {
                tokens: fields[0].split(' ').map(str::to_string).collect(),
                count: fields[1].parse().map_err(|_| bad())?,
                df: fields[2].parse().map_err(|_| bad())?,
                pmi: fields[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { entries })
    }
}

/// Greedy longest-match, left-to-right, non-overlapping phrase matcher.
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    lookup: HashMap<Vec<String>, usize>,
    max_len: usize,
}

impl PhraseMatcher {
    /// Vocabulary index of each matched term, in order.
    pub fn match_terms(&self, tokens: &[String]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.lookup.get(&tokens[i..i + len]).map(|&id| (id, len)));
            match hit {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

pub type TermCounts = BTreeMap<String, BTreeMap<usize, u64>>;

/// Full-period and weekly `(community, term) -> count` tables.
pub fn term_counts(
    docs: &[Document],
    matcher: &PhraseMatcher,
    communities: &BTreeSet<String>,
    weeks: usize,
) -> (TermCounts, Vec<TermCounts>) {
    let mut full: TermCounts = communities.iter().map(|c| (c.clone(), BTreeMap::new())).collect();
    let mut weekly = vec![TermCounts::new(); weeks];
    for d in docs {
        if !communities.contains(&d.community) || d.week >= weeks {
            continue;
        }
        for term in matcher.match_terms(&d.tokens) {
            *full.get_mut(&d.community).unwrap().entry(term).or_default() += 1;
            *weekly[d.week]
                .entry(d.community.clone())
                .or_default()
                .entry(term)
                .or_default() += 1;
        }
    }
    (full, weekly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(c: &str, text: &str) -> Document {
        Document {
            community: c.into(),
            week: 0,
            tokens: tokenize(text),
        }
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Hello, World! see https://x.com/a?b=1 and (www.foo.org) it's 42"),
            vec!["hello", "world", "see", "and", "it", "s", "42"]
        );
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn ratio_twenty_is_just_below_three() {
        // P(ab) = 2/1000, P(a) = P(b) = 10/1000: ratio exactly 20.
        let score = pmi(2, &[10, 10], 1000);
        assert!((score - 20f64.ln()).abs() < 1e-12);
        assert!((score - 2.995732273553991).abs() < 1e-12);
        assert!(score < 3.0);
    }

    #[test]
    fn perfect_association() {
        // each token appears only inside the phrase
        let c = 7;
        let n = 500;
        let score = pmi(c, &[c, c], n);
        let p = c as f64 / n as f64;
        assert!((score + p.ln()).abs() < 1e-12);
        assert!(score > 0.0);
    }

    #[test]
    fn empty_corpus() {
        assert!(detect_phrases(&[], &PhraseConfig::default()).is_empty());
    }

    #[test]
    fn thresholds_applied() {
        let mut docs = Vec::new();
        for c in ["a", "b", "c"] {
            for _ in 0..5 {
                docs.push(doc(c, "new york pizza is great"));
                docs.push(doc(c, "the the the the the the the the the"));
            }
        }
        docs.push(doc("d", "zebra"));
        let cfg = PhraseConfig {
            max_len: 3,
            pmi_min: 1.0,
            min_count: 10,
            min_df: 2,
        };
        let vocab = detect_phrases(&docs, &cfg);
        let phrases: Vec<String> = vocab.entries.iter().map(PhraseEntry::phrase).collect();
        assert!(phrases.contains(&"new york".to_string()));
        assert!(phrases.contains(&"new york pizza".to_string()));
        // df 1
        assert!(!phrases.contains(&"zebra".to_string()));
        // highly frequent token: bigram "the the" has low PMI
        assert!(!phrases.contains(&"the the".to_string()));
        assert!(phrases.contains(&"the".to_string()));
        for e in &vocab.entries {
            assert!(e.df >= 2);
            if e.tokens.len() > 1 {
                assert!(e.pmi >= 1.0 && e.count >= 10);
            }
        }
    }

    #[test]
    fn greedy_longest_match() {
        let vocab = PhraseVocabulary {
            entries: ["new", "york", "new york", "new york city", "city", "york city"]
                .iter()
                .map(|p| PhraseEntry {
                    tokens: p.split(' ').map(str::to_string).collect(),
                    count: 1,
                    df: 2,
                    pmi: 0.0,
                })
                .collect(),
        };
        let m = vocab.matcher();
        let toks = tokenize("new york city york city new new york unknown");
        let names: Vec<String> = m
            .match_terms(&toks)
            .into_iter()
            .map(|i| vocab.entries[i].phrase())
            .collect();
        assert_eq!(names, vec!["new york city", "york city", "new", "new york"]);
    }

    #[test]
    fn vocabulary_tsv_roundtrip() {
        let vocab = PhraseVocabulary {
            entries: vec![PhraseEntry {
                tokens: vec!["a".into(), "b".into()],
                count: 12,
                df: 3,
                pmi: 3.25,
            }],
        };
        let mut buf = Vec::new();
        vocab.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "phrase\tcount\tdf\tpmi\na b\t12\t3\t3.25\n");
        assert_eq!(PhraseVocabulary::read_tsv(buf.as_slice()).unwrap(), vocab);
    }
}
