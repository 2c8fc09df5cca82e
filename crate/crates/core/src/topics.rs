//! Term interestingness, term ranking and topic matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{bin_count, bin_seconds, TweetRecord};
use crate::par::{self, Execution};
use crate::text;
use crate::time::Period;
use crate::{Error, Result};

/// `[from, to)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub from: i64,
    pub to: i64,
}

impl Window {
    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.from && ts < self.to
    }

    pub fn period(&self) -> Period {
        Period {
            start: self.from,
            end: self.to,
        }
    }
}

/// A minimal set of co-occurring keywords over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    /// Lowercased keywords, in the order given; the first one is the topic's
    /// lead keyword.
    pub keywords: Vec<String>,
    pub window: Window,
}

impl Topic {
    pub fn new<S: AsRef<str>>(
        id: impl Into<String>,
        keywords: &[S],
        window: Window,
    ) -> Result<Self> {
        let t = Topic {
            id: id.into(),
            keywords: keywords.iter().map(|k| k.as_ref().to_lowercase()).collect(),
            window,
        };
        t.validate()?;
        Ok(t)
    }

    /// Checks that the topic has keywords and a non-empty window.
    pub fn validate(&self) -> Result<()> {
        if self.keywords.is_empty() || self.keywords.iter().any(|k| k.trim().is_empty()) {
            return Err(Error::Config(format!(
                "topic {:?} has no keywords",
                self.id
            )));
        }
        if self.window.to <= self.window.from {
            return Err(Error::Config(format!(
                "topic {:?} has an empty window",
                self.id
            )));
        }
        Ok(())
    }

    /// True if every keyword occurs in `terms`.
    pub fn covered_by<S: std::borrow::Borrow<str> + Ord>(&self, terms: &BTreeSet<S>) -> bool {
        self.keywords.iter().all(|k| terms.contains(k.as_str()))
    }
}

/// Reads a JSON array of topics. Keywords are lowercased and deduplicated.
pub fn load_topics(path: impl AsRef<Path>) -> Result<Vec<Topic>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut topics: Vec<Topic> = serde_json::from_reader(BufReader::new(f))?;
    for t in topics.iter_mut() {
        let mut seen = BTreeSet::new();
        t.keywords = t
            .keywords
            .iter()
            .map(|k| k.trim().to_lowercase())
            .filter(|k| seen.insert(k.clone()))
            .collect();
        t.validate()?;
    }
    Ok(topics)
}

/// True iff the tweet is inside the topic window and contains every keyword.
pub fn match_tweet(topic: &Topic, tweet: &TweetRecord) -> bool {
    topic.window.contains(tweet.timestamp) && topic.covered_by(&tweet.tokens())
}

/// Interestingness `(avg² + min·max) / (min·avg)` of an occurrence vector.
///
/// High when the peak is far above the mean and the trough is low but
/// non-zero. Terms that vanish in some bin are rejected with
/// [`Error::NotRecurrent`].
pub fn score_term(occurrences: &[f64]) -> Result<f64> {
    let stats = OccurrenceStats::of(occurrences)?;
    if stats.min <= 0.0 {
        return Err(Error::NotRecurrent);
    }
    Ok((stats.avg * stats.avg + stats.min * stats.max) / (stats.min * stats.avg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceStats {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
}

impl OccurrenceStats {
    pub fn of(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::EmptyVector);
        }
        let (min, max, sum) = v.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, 0.0),
            |(lo, hi, s), &x| (lo.min(x), hi.max(x), s + x),
        );
        Ok(OccurrenceStats {
            min,
            max,
            avg: sum / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub score: f64,
    pub total: u64,
    #[serde(flatten)]
    pub stats: OccurrenceStats,
}

/// Occurrence vectors of every term seen in `period`.
pub fn occurrence_table(
    tweets: &[TweetRecord],
    period: Period,
    bin_hours: u32,
) -> Result<BTreeMap<String, Vec<u64>>> {
    let bin_secs = bin_seconds(bin_hours)?;
    let n = bin_count(period, bin_secs)?;
    let mut table: HashMap<String, Vec<u64>> = HashMap::new();
    for t in tweets.iter().filter(|t| period.contains(t.timestamp)) {
        let bin = ((t.timestamp - period.start) / bin_secs) as usize;
        for term in t.tokens() {
            table.entry(term).or_insert_with(|| vec![0; n])[bin] += 1;
        }
    }
    Ok(table.into_iter().collect())
}

/// Ranks recurrent terms by [`score_term`], best first. Terms with fewer than
/// `min_total_count` occurrences or with an empty bin are left out; equal
/// scores are ordered by term.
pub fn rank_terms(
    tweets: &[TweetRecord],
    period: Period,
    top_k: usize,
    min_total_count: u64,
    bin_hours: u32,
    exec: Execution,
) -> Result<Vec<TermScore>> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    if tweets.is_empty() {
        return Ok(Vec::new());
    }
    let table: Vec<(String, Vec<u64>)> = occurrence_table(tweets, period, bin_hours)?
        .into_iter()
        .collect();
    let mut scored: Vec<TermScore> = par::map_slice(exec, &table, |(term, counts)| {
        let total: u64 = counts.iter().sum();
        if total < min_total_count {
            return None;
        }
        let v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let score = score_term(&v).ok()?;
        Some(TermScore {
            term: term.clone(),
            score,
            total,
            stats: OccurrenceStats::of(&v).ok()?,
        })
    })
    .into_iter()
    .flatten()
    .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.term.cmp(&b.term))
    });
    scored.truncate(top_k);
    Ok(scored)
}

/// Terms that most often share a tweet with `term`, by count then term.
pub fn cooccurring_terms(
    tweets: &[TweetRecord],
    term: &str,
    period: Period,
    top: usize,
) -> Vec<(String, u64)> {
    let term = term.to_lowercase();
    let mut counts: HashMap<String, u64> = HashMap::new();
    for t in tweets.iter().filter(|t| period.contains(t.timestamp)) {
        let toks = text::token_set(&t.text);
        if toks.contains(&term) {
            for other in toks.into_iter().filter(|o| *o != term) {
                *counts.entry(other).or_default() += 1;
            }
        }
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(top);
    out
}
