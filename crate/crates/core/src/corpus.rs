//! Contribution ingestion, study-window bucketing and weekly activity panels.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_WEEK: i64 = 7 * 24 * 3600;

const ZSTD_MAGIC: [u8; 4] = [0x28, 0xB5, 0x2F, 0xFD];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContributionKind {
    Submission,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub community: String,
    pub author: String,
    pub timestamp: i64,
    pub kind: ContributionKind,
    pub text: String,
    pub nsfw: bool,
}

/// Half-open study window `[start, end)` split into 7-day weeks aligned to `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end <= start {
            return Err(Error::invalid(format!(
                "study window end {end} is not after start {start}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn start_ts(&self) -> i64 {
        self.start.and_time(NaiveTime::MIN).and_utc().timestamp()
    }

    pub fn end_ts(&self) -> i64 {
        self.end.and_time(NaiveTime::MIN).and_utc().timestamp()
    }

    /// Number of weeks, `ceil((end - start) / 7 days)`.
    pub fn weeks(&self) -> usize {
        let span = self.end_ts() - self.start_ts();
        ((span + SECONDS_PER_WEEK - 1) / SECONDS_PER_WEEK) as usize
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start_ts() && ts < self.end_ts()
    }

    pub fn week_index_of(&self, ts: i64) -> Option<usize> {
        self.contains(ts)
            .then(|| ((ts - self.start_ts()) / SECONDS_PER_WEEK) as usize)
    }

    /// First second of week `w`.
    pub fn week_start_ts(&self, w: usize) -> i64 {
        self.start_ts() + w as i64 * SECONDS_PER_WEEK
    }
}

/// Why lines or records were dropped during ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropTally {
    pub malformed: u64,
    pub outside_window: u64,
    pub deleted_author: u64,
    pub blank_lines: u64,
}

impl DropTally {
    pub fn total(&self) -> u64 {
        self.malformed + self.outside_window + self.deleted_author
    }

    fn merge(&mut self, other: &DropTally) {
        self.malformed += other.malformed;
        self.outside_window += other.outside_window;
        self.deleted_author += other.deleted_author;
        self.blank_lines += other.blank_lines;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<ContributionRecord>,
    pub dropped: DropTally,
}

#[derive(Deserialize)]
struct RawLine {
    subreddit: Option<String>,
    author: Option<String>,
    created_utc: Option<serde_json::Value>,
    title: Option<String>,
    selftext: Option<String>,
    body: Option<String>,
    over_18: Option<bool>,
}

fn parse_timestamp(v: &serde_json::Value) -> Option<i64> {
    match v {
        serde_json::Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f as i64)),
        // Some archive dumps quote the epoch seconds.
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

enum LineOutcome {
    Record(ContributionRecord),
    Blank,
    Malformed,
    Outside,
    Deleted,
}

fn parse_line(line: &str, window: &StudyWindow) -> LineOutcome {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return LineOutcome::Blank;
    }
    let raw: RawLine = match serde_json::from_str(trimmed) {
        Ok(r) => r,
        Err(_) => return LineOutcome::Malformed,
    };
    let (Some(community), Some(ts)) = (
        raw.subreddit.filter(|s| !s.is_empty()),
        raw.created_utc.as_ref().and_then(parse_timestamp),
    ) else {
        return LineOutcome::Malformed;
    };
    let author = match raw.author {
        Some(a) if !a.is_empty() && a != "[deleted]" => a,
        _ => return LineOutcome::Deleted,
    };
    if !window.contains(ts) {
        return LineOutcome::Outside;
    }
    let (kind, text) = if raw.body.is_some() && raw.title.is_none() {
        (ContributionKind::Comment, raw.body.unwrap_or_default())
    } else {
        let mut text = raw.title.unwrap_or_default();
        if let Some(s) = raw.selftext.filter(|s| !s.is_empty()) {
            if !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&s);
        }
        (ContributionKind::Submission, text)
    };
    let nsfw = kind == ContributionKind::Submission && raw.over_18.unwrap_or(false);
    LineOutcome::Record(ContributionRecord {
        community,
        author,
        timestamp: ts,
        kind,
        text,
        nsfw,
    })
}

/// Parses a block of lines. Lines are independent, so callers may shard a
/// stream into blocks and merge the results in order.
pub fn ingest_lines<'a, I>(lines: I, window: &StudyWindow) -> Ingested
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = Ingested::default();
    for line in lines {
        match parse_line(line, window) {
            LineOutcome::Record(r) => out.records.push(r),
            LineOutcome::Blank => out.dropped.blank_lines += 1,
            LineOutcome::Malformed => out.dropped.malformed += 1,
            LineOutcome::Outside => out.dropped.outside_window += 1,
            LineOutcome::Deleted => out.dropped.deleted_author += 1,
        }
    }
    out
}

/// Writes records in the line-delimited JSON shape [`ingest_ndjson`] reads.
pub fn write_ndjson<W: Write>(records: &[ContributionRecord], mut w: W) -> Result<()> {
    for r in records {
        let mut obj = serde_json::json!({
            "subreddit": r.community,
            "author": r.author,
            "created_utc": r.timestamp,
        });
        match r.kind {
            ContributionKind::Submission => {
                obj["title"] = r.text.clone().into();
                obj["over_18"] = r.nsfw.into();
            }
            ContributionKind::Comment => obj["body"] = r.text.clone().into(),
        }
        serde_json::to_writer(&mut w, &obj)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads line-delimited JSON (plain or zstd-compressed). Malformed lines are
/// tallied, I/O failures are fatal.
pub fn ingest_ndjson<R: Read>(reader: R, window: &StudyWindow) -> Result<Ingested> {
    let mut buffered = BufReader::new(reader);
    let head = buffered.fill_buf()?;
    let compressed = head.len() >= 4 && head[..4] == ZSTD_MAGIC;
    let lines: Box<dyn BufRead> = if compressed {
        Box::new(BufReader::new(zstd::stream::read::Decoder::with_buffer(
            buffered,
        )?))
    } else {
        Box::new(buffered)
    };

    use rayon::prelude::*;
    const CHUNK: usize = 1 << 14;
    let mut out = Ingested::default();
    let mut chunk: Vec<String> = Vec::with_capacity(CHUNK);
    let flush = |chunk: &mut Vec<String>, out: &mut Ingested| {
        let parts: Vec<Ingested> = chunk
            .par_chunks(1024)
            .map(|c| ingest_lines(c.iter().map(String::as_str), window))
            .collect();
        for p in parts {
            out.records.extend(p.records);
            out.dropped.merge(&p.dropped);
        }
        chunk.clear();
    };
    for line in lines.split(b'\n') {
        let bytes = line?;
        match String::from_utf8(bytes) {
            Ok(s) => chunk.push(s),
            Err(_) => out.dropped.malformed += 1,
        }
        if chunk.len() == CHUNK {
            flush(&mut chunk, &mut out);
        }
    }
    flush(&mut chunk, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EligibilityThresholds {
    /// Minimum fraction of window weeks with at least one contribution.
    pub min_active_week_fraction: f64,
    /// Maximum fraction of submissions flagged NSFW.
    pub max_nsfw_fraction: f64,
}

impl Default for EligibilityThresholds {
    fn default() -> Self {
        Self {
            min_active_week_fraction: 0.2,
            max_nsfw_fraction: 0.1,
        }
    }
}

const FRACTION_EPS: f64 = 1e-12;

pub fn filter_eligible(
    records: &[ContributionRecord],
    window: &StudyWindow,
    thresholds: &EligibilityThresholds,
) -> BTreeSet<String> {
    #[derive(Default)]
    struct Acc {
        weeks: HashSet<usize>,
        submissions: u64,
        nsfw: u64,
    }
    let mut by_community: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in records {
        let Some(w) = window.week_index_of(r.timestamp) else {
            continue;
        };
        let acc = by_community.entry(r.community.as_str()).or_default();
        acc.weeks.insert(w);
        if r.kind == ContributionKind::Submission {
            acc.submissions += 1;
            acc.nsfw += u64::from(r.nsfw);
        }
    }
    let total_weeks = window.weeks() as f64;
    by_community
        .into_iter()
        .filter(|(_, acc)| {
            let active = acc.weeks.len() as f64 / total_weeks;
            let nsfw = if acc.submissions == 0 {
                0.0
            } else {
                acc.nsfw as f64 / acc.submissions as f64
            };
            active + FRACTION_EPS >= thresholds.min_active_week_fraction
                && nsfw <= thresholds.max_nsfw_fraction + FRACTION_EPS
        })
        .map(|(c, _)| c.to_string())
        .collect()
}

/// Distinct-contributor and message counts per community and week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyActivityPanel {
    pub communities: Vec<String>,
    pub weeks: usize,
    pub group_size: Vec<Vec<u64>>,
    pub messages: Vec<Vec<u64>>,
}

impl WeeklyActivityPanel {
    pub fn index_of(&self, community: &str) -> Option<usize> {
        self.communities.binary_search_by(|c| c.as_str().cmp(community)).ok()
    }

    pub fn group_size_of(&self, community: &str) -> Option<&[u64]> {
        self.index_of(community).map(|i| self.group_size[i].as_slice())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["community", "week", "group_size", "messages"])?;
        for (c, name) in self.communities.iter().enumerate() {
            for week in 0..self.weeks {
                wtr.write_record([
                    name.clone(),
                    week.to_string(),
                    self.group_size[c][week].to_string(),
                    self.messages[c][week].to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            community: String,
            week: usize,
            group_size: u64,
            messages: u64,
        }
        let mut rows: BTreeMap<String, BTreeMap<usize, (u64, u64)>> = BTreeMap::new();
        let mut weeks = 0;
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            weeks = weeks.max(row.week + 1);
            rows.entry(row.community)
                .or_default()
                .insert(row.week, (row.group_size, row.messages));
        }
        let mut panel = WeeklyActivityPanel {
            communities: rows.keys().cloned().collect(),
            weeks,
            group_size: Vec::new(),
            messages: Vec::new(),
        };
        for cells in rows.values() {
            let mut g = vec![0; weeks];
            let mut m = vec![0; weeks];
            for (&w, &(gs, ms)) in cells {
                g[w] = gs;
                m[w] = ms;
            }
            panel.group_size.push(g);
            panel.messages.push(m);
        }
        Ok(panel)
    }
}

/// Builds the panel for `communities` (returned in sorted order).
pub fn build_panel(
    records: &[ContributionRecord],
    communities: &BTreeSet<String>,
    window: &StudyWindow,
) -> Result<WeeklyActivityPanel> {
    let present: HashSet<&str> = records.iter().map(|r| r.community.as_str()).collect();
    if let Some(missing) = communities.iter().find(|c| !present.contains(c.as_str())) {
        return Err(Error::UnknownCommunity(missing.clone()));
    }
    let names: Vec<String> = communities.iter().cloned().collect();
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let weeks = window.weeks();
    let mut messages = vec![vec![0u64; weeks]; names.len()];
    let mut authors: Vec<Vec<HashSet<&str>>> = vec![vec![HashSet::new(); weeks]; names.len()];
    for r in records {
        let (Some(&c), Some(w)) = (
            index.get(r.community.as_str()),
            window.week_index_of(r.timestamp),
        ) else {
            continue;
        };
        messages[c][w] += 1;
        authors[c][w].insert(r.author.as_str());
    }
    let group_size = authors
        .iter()
        .map(|row| row.iter().map(|s| s.len() as u64).collect())
        .collect();
    Ok(WeeklyActivityPanel {
        communities: names,
        weeks,
        group_size,
        messages,
    })
}

/// Manifest written next to the panel CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestManifest {
    pub window: StudyWindow,
    pub weeks: usize,
    pub thresholds: EligibilityThresholds,
    pub dropped: DropTally,
    pub records_kept: u64,
    pub communities_seen: usize,
    pub communities_eligible: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> StudyWindow {
        StudyWindow::new(
            NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2020, 3, 11).unwrap(),
        )
        .unwrap()
    }

    fn rec(c: &str, a: &str, week: usize, kind: ContributionKind, nsfw: bool) -> ContributionRecord {
        ContributionRecord {
            community: c.into(),
            author: a.into(),
            timestamp: window().week_start_ts(week) + 60,
            kind,
            text: String::new(),
            nsfw,
        }
    }

    #[test]
    fn window_week_count_and_indexing() {
        let w = window();
        assert_eq!(w.weeks(), 10);
        assert_eq!(w.week_index_of(w.start_ts()), Some(0));
        assert_eq!(w.week_index_of(w.start_ts() - 1), None);
        assert_eq!(w.week_index_of(w.start_ts() + SECONDS_PER_WEEK), Some(1));
        assert_eq!(w.week_index_of(w.end_ts()), None);
        assert_eq!(w.week_index_of(w.end_ts() - 1), Some(9));
    }

    #[test]
    fn partial_last_week_counts() {
        let w = StudyWindow::new(
            NaiveDate::from_ymd_opt(2015, 12, 5).unwrap(),
            NaiveDate::from_ymd_opt(2020, 4, 13).unwrap(),
        )
        .unwrap();
        // 1591 days -> 227.3 weeks.
        assert_eq!(w.weeks(), 228);
    }

    #[test]
    fn empty_stream() {
        let out = ingest_ndjson("".as_bytes(), &window()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.dropped.malformed, 0);
    }

    #[test]
    fn malformed_line_is_tallied() {
        let t = window().start_ts() + 10;
        let input = format!(
            "{{\"subreddit\":\"a\",\"author\":\"u1\",\"created_utc\":{t},\"body\":\"hi\"}}\n\
             {{\"subreddit\":\"a\",\"author\":\"u2\",\"created_utc\":{t},\"title\":\"x\",\"over_18\":true}}\n\
             not json at all\n\
             {{\"subreddit\":\"b\",\"author\":\"u1\",\"created_utc\":\"{t}\",\"extra\":[1,2]}}\n"
        );
        let out = ingest_ndjson(input.as_bytes(), &window()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.dropped.malformed, 1);
        assert_eq!(out.records[0].kind, ContributionKind::Comment);
        assert_eq!(out.records[1].kind, ContributionKind::Submission);
        assert!(out.records[1].nsfw);
    }

    #[test]
    fn before_window_and_deleted_author_dropped() {
        let w = window();
        let input = format!(
            "{{\"subreddit\":\"a\",\"author\":\"u1\",\"created_utc\":{}}}\n\
             {{\"subreddit\":\"a\",\"author\":\"[deleted]\",\"created_utc\":{}}}\n\
             {{\"subreddit\":\"a\",\"author\":\"\",\"created_utc\":{}}}\n\
             {{\"subreddit\":\"a\",\"created_utc\":{}}}\n",
            w.start_ts() - 1,
            w.start_ts(),
            w.start_ts(),
            w.start_ts()
        );
        let out = ingest_ndjson(input.as_bytes(), &w).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.dropped.outside_window, 1);
        assert_eq!(out.dropped.deleted_author, 3);
    }

    #[test]
    fn zstd_input_is_detected() {
        let w = window();
        let line = format!(
            "{{\"subreddit\":\"a\",\"author\":\"u1\",\"created_utc\":{}}}\n",
            w.start_ts() + 5
        );
        let packed = zstd::encode_all(line.repeat(3).as_bytes(), 3).unwrap();
        let out = ingest_ndjson(packed.as_slice(), &w).unwrap();
        assert_eq!(out.records.len(), 3);
    }

    #[test]
    fn unreadable_stream_is_fatal() {
        struct Broken;
        impl Read for Broken {
            fn read(&mut self, _: &mut [u8]) -> std::io::Result<usize> {
                Err(std::io::Error::other("boom"))
            }
        }
        assert!(ingest_ndjson(Broken, &window()).is_err());
    }

    #[test]
    fn eligibility_activity_threshold() {
        use ContributionKind::*;
        let mut records = vec![rec("one_week", "u", 3, Comment, false)];
        records.push(rec("two_weeks", "u", 1, Comment, false));
        records.push(rec("two_weeks", "u", 7, Submission, false));
        let ok = filter_eligible(&records, &window(), &EligibilityThresholds::default());
        assert!(!ok.contains("one_week"));
        assert!(ok.contains("two_weeks"));
    }

    #[test]
    fn eligibility_nsfw_threshold() {
        use ContributionKind::*;
        let mut records = Vec::new();
        for i in 0..20 {
            records.push(rec("lewd", "u", i % 10, Submission, i < 3));
            records.push(rec("tame", "u", i % 10, Submission, i < 2));
        }
        // comments never count toward the ratio
        for i in 0..10 {
            records.push(rec("tame", "v", i, Comment, true));
        }
        let ok = filter_eligible(&records, &window(), &EligibilityThresholds::default());
        assert!(!ok.contains("lewd"));
        assert!(ok.contains("tame"));
    }

    #[test]
    fn panel_counts_distinct_authors() {
        use ContributionKind::*;
        let records: Vec<_> = (0..5).map(|_| rec("a", "u1", 0, Comment, false)).collect();
        let set: BTreeSet<String> = ["a".to_string()].into();
        let p = build_panel(&records, &set, &window()).unwrap();
        assert_eq!(p.group_size[0][0], 1);
        assert_eq!(p.messages[0][0], 5);
    }

    #[test]
    fn panel_hand_tally() {
        use ContributionKind::*;
        let records = vec![
            rec("a", "x", 0, Submission, false),
            rec("a", "y", 0, Comment, false),
            rec("a", "x", 0, Comment, false),
            rec("a", "z", 1, Comment, false),
            rec("b", "x", 1, Comment, false),
            rec("b", "x", 1, Comment, false),
            rec("b", "y", 1, Comment, false),
        ];
        let set: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let p = build_panel(&records, &set, &window()).unwrap();
        assert_eq!(p.group_size[0][..2], [2, 1]);
        assert_eq!(p.messages[0][..2], [3, 1]);
        assert_eq!(p.group_size[1][..2], [0, 2]);
        assert_eq!(p.messages[1][..2], [0, 3]);
    }

    #[test]
    fn panel_unknown_community() {
        let set: BTreeSet<String> = ["ghost".to_string()].into();
        match build_panel(&[], &set, &window()) {
            Err(Error::UnknownCommunity(c)) => assert_eq!(c, "ghost"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn panel_csv_roundtrip() {
        use ContributionKind::*;
        let records = vec![rec("a", "x", 2, Comment, false), rec("b", "y", 9, Comment, false)];
        let set: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let p = build_panel(&records, &set, &window()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("community,week,group_size,messages\n"));
        assert_eq!(WeeklyActivityPanel::read_csv(buf.as_slice()).unwrap(), p);
    }
}
