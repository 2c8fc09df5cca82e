//! Tweet and follow-edge ingestion, the social multi-graph and per-user
//! behavioural profiles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::text;
use crate::time::{hour_of_day, Period, SECONDS_PER_HOUR};
use crate::{Error, Result};

/// Number of 4-hour receptivity bins in a day.
pub const RECEPTIVITY_BINS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub author_id: String,
    pub timestamp: i64,
    pub text: String,
    pub mentions: Vec<String>,
    pub is_directed: bool,
}

impl TweetRecord {
    /// Builds a record, lowercasing the author and parsing mentions from the
    /// text. Retweets (`RT @user`) carry a mention and so count as directed.
    pub fn new(author_id: &str, timestamp: i64, text: impl Into<String>) -> Self {
        let text = text.into();
        let mentions = text::extract_mentions(&text);
        TweetRecord {
            author_id: author_id.trim().to_lowercase(),
            timestamp,
            is_directed: !mentions.is_empty(),
            mentions,
            text,
        }
    }

    pub fn tokens(&self) -> BTreeSet<String> {
        text::token_set(&self.text)
    }

    /// The record in the `author|epoch|text` line format, with `|` in the
    /// text escaped as `\|`.
    pub fn to_line(&self) -> String {
        format!(
            "{}|{}|{}",
            self.author_id,
            self.timestamp,
            self.text.replace('|', "\\|")
        )
    }
}

/// Parses one line of the tweet file.
pub fn parse_tweet_line(line: &str) -> std::result::Result<TweetRecord, String> {
    let mut parts = line.splitn(3, '|');
    let author = parts.next().unwrap_or_default().trim();
    let ts = parts.next().ok_or("missing timestamp field")?;
    let body = parts.next().ok_or("missing text field")?;
    if author.is_empty() {
        return Err("empty author id".into());
    }
    let ts: i64 = ts
        .trim()
        .parse()
        .map_err(|e| format!("bad timestamp {ts:?}: {e}"))?;
    if ts < 0 {
        return Err(format!("negative timestamp {ts}"));
    }
    Ok(TweetRecord::new(author, ts, body.replace("\\|", "|")))
}

/// Reads tweets whose timestamp falls in `period`, in file order.
pub fn load_tweets(path: impl AsRef<Path>, period: Period) -> Result<Vec<TweetRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_tweet_line(&line).map_err(|reason| Error::Malformed {
            path: path.to_owned(),
            line: i + 1,
            reason,
        })?;
        if period.contains(rec.timestamp) {
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn write_tweets(path: impl AsRef<Path>, tweets: &[TweetRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for t in tweets {
        writeln!(w, "{}", t.to_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionEdge {
    pub src: u32,
    pub dst: u32,
    pub timestamp: i64,
}

/// Directed multi-graph over users: deduplicated follow edges (the passive
/// part) and timestamped mention edges (the active part).
///
/// Users are stored sorted by id; a user's node index is its rank.
#[derive(Debug, Clone, Default)]
pub struct SocialGraph {
    users: Vec<String>,
    index: HashMap<String, u32>,
    /// `(follower, followee)`, sorted.
    follow_edges: Vec<(u32, u32)>,
    followers: Vec<Vec<u32>>,
    followees: Vec<Vec<u32>>,
    mention_edges: Vec<MentionEdge>,
}

impl SocialGraph {
    /// Builds the follow graph from `(follower, followee)` pairs.
    /// Returns the graph and the number of self-loops that were dropped.
    pub fn from_follow_pairs<I, S>(pairs: I) -> (Self, usize)
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        Self::build(pairs, std::iter::empty::<String>())
    }

    /// Like [`from_follow_pairs`](Self::from_follow_pairs), but also adds
    /// isolated users.
    pub fn build<I, S, U, T>(pairs: I, extra_users: U) -> (Self, usize)
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
        U: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut self_loops = 0;
        let mut names: BTreeSet<String> = extra_users
            .into_iter()
            .map(|u| u.as_ref().trim().to_lowercase())
            .filter(|u| !u.is_empty())
            .collect();
        let mut raw = BTreeSet::new();
        for (a, b) in pairs {
            let a = a.as_ref().trim().to_lowercase();
            let b = b.as_ref().trim().to_lowercase();
            if a == b {
                self_loops += 1;
                continue;
            }
            names.insert(a.clone());
            names.insert(b.clone());
            raw.insert((a, b));
        }
        let users: Vec<String> = names.into_iter().collect();
        let index: HashMap<String, u32> = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect();
        let mut follow_edges: Vec<(u32, u32)> =
            raw.iter().map(|(a, b)| (index[a], index[b])).collect();
        follow_edges.sort_unstable();
        let n = users.len();
        let mut followers = vec![Vec::new(); n];
        let mut followees = vec![Vec::new(); n];
        for &(f, g) in &follow_edges {
            followees[f as usize].push(g);
            followers[g as usize].push(f);
        }
        for list in followers.iter_mut() {
            list.sort_unstable();
        }
        let g = SocialGraph {
            users,
            index,
            follow_edges,
            followers,
            followees,
            mention_edges: Vec::new(),
        };
        (g, self_loops)
    }

    /// Records mention edges from `tweets`. Mentions of users outside the graph
    /// are ignored; returns how many were dropped.
    pub fn add_mentions(&mut self, tweets: &[TweetRecord]) -> usize {
        let mut dropped = 0;
        for t in tweets {
            let Some(src) = self.node(&t.author_id) else {
                dropped += t.mentions.len();
                continue;
            };
            for m in &t.mentions {
                match self.node(m) {
                    Some(dst) if dst != src => self.mention_edges.push(MentionEdge {
                        src,
                        dst,
                        timestamp: t.timestamp,
                    }),
                    _ => dropped += 1,
                }
            }
        }
        dropped
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn user(&self, node: u32) -> &str {
        &self.users[node as usize]
    }

    pub fn node(&self, user: &str) -> Option<u32> {
        self.index.get(user).copied()
    }

    pub fn contains(&self, user: &str) -> bool {
        self.index.contains_key(user)
    }

    /// Sorted `(follower, followee)` pairs.
    pub fn follow_edges(&self) -> &[(u32, u32)] {
        &self.follow_edges
    }

    pub fn mention_edges(&self) -> &[MentionEdge] {
        &self.mention_edges
    }

    /// Users following `node`, i.e. the receivers of its posts.
    pub fn followers(&self, node: u32) -> &[u32] {
        &self.followers[node as usize]
    }

    /// Users that `node` follows.
    pub fn followees(&self, node: u32) -> &[u32] {
        &self.followees[node as usize]
    }

    pub fn follows(&self, follower: u32, followee: u32) -> bool {
        self.followees[follower as usize]
            .binary_search(&followee)
            .is_ok()
    }

    /// Passive density `|E| / (|V| (|V| - 1))`.
    pub fn follow_density(&self) -> f64 {
        let n = self.users.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        self.follow_edges.len() as f64 / (n * (n - 1.0))
    }
}

#[derive(Debug)]
pub struct EdgeLoad {
    pub graph: SocialGraph,
    pub self_loops_skipped: usize,
}

/// Reads a `follower<TAB>followee` edge file.
pub fn load_follow_edges(path: impl AsRef<Path>) -> Result<EdgeLoad> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => {
                pairs.push((a.to_owned(), b.to_owned()))
            }
            _ => {
                return Err(Error::Malformed {
                    path: path.to_owned(),
                    line: i + 1,
                    reason: "expected `follower<TAB>followee`".into(),
                })
            }
        }
    }
    let (graph, self_loops_skipped) = SocialGraph::from_follow_pairs(pairs);
    if self_loops_skipped > 0 {
        log::warn!(
            "{}: skipped {self_loops_skipped} self-follow line(s)",
            path.display()
        );
    }
    Ok(EdgeLoad {
        graph,
        self_loops_skipped,
    })
}

pub fn write_follow_edges(path: impl AsRef<Path>, graph: &SocialGraph) -> Result<()> {
    let path = path.as_ref();
    let mut w = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for &(f, g) in graph.follow_edges() {
        writeln!(w, "{}\t{}", graph.user(f), graph.user(g)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Behavioural aggregates of one user over a learning period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub message_count: u64,
    pub directed_count: u64,
    /// Users this user mentioned.
    pub mentioned_users: BTreeSet<String>,
    /// Number of tweets that mention this user.
    pub mention_received_count: u64,
    /// Every term this user wrote.
    pub keyword_set: BTreeSet<String>,
    /// Normalized 6-bin histogram of tweet times of day.
    pub receptivity: [f64; RECEPTIVITY_BINS],
    /// Distinct per-message term sets, so that co-occurrence of several
    /// keywords inside one message can be tested.
    #[serde(default)]
    pub message_terms: BTreeSet<Vec<String>>,
}

impl UserProfile {
    /// Profile of a user with no activity in the period.
    pub fn empty(user_id: impl Into<String>) -> Self {
        UserProfile {
            user_id: user_id.into(),
            message_count: 0,
            directed_count: 0,
            mentioned_users: BTreeSet::new(),
            mention_received_count: 0,
            keyword_set: BTreeSet::new(),
            receptivity: [1.0 / RECEPTIVITY_BINS as f64; RECEPTIVITY_BINS],
            message_terms: BTreeSet::new(),
        }
    }
}

/// Profiles keyed by user id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<UserProfile>", into = "Vec<UserProfile>")]
pub struct ProfileSet {
    by_user: BTreeMap<String, UserProfile>,
}

impl From<Vec<UserProfile>> for ProfileSet {
    fn from(v: Vec<UserProfile>) -> Self {
        ProfileSet {
            by_user: v.into_iter().map(|p| (p.user_id.clone(), p)).collect(),
        }
    }
}

impl From<ProfileSet> for Vec<UserProfile> {
    fn from(p: ProfileSet) -> Self {
        p.by_user.into_values().collect()
    }
}

impl ProfileSet {
    pub fn get(&self, user: &str) -> Option<&UserProfile> {
        self.by_user.get(user)
    }

    /// The user's profile, or an empty one if the user was never seen.
    pub fn get_or_empty(&self, user: &str) -> std::borrow::Cow<'_, UserProfile> {
        match self.by_user.get(user) {
            Some(p) => std::borrow::Cow::Borrowed(p),
            None => std::borrow::Cow::Owned(UserProfile::empty(user)),
        }
    }

    pub fn insert(&mut self, p: UserProfile) {
        self.by_user.insert(p.user_id.clone(), p);
    }

    pub fn len(&self) -> usize {
        self.by_user.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_user.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserProfile> {
        self.by_user.values()
    }

    /// Profiles aligned with the graph's node indices.
    pub fn for_graph(&self, graph: &SocialGraph) -> Vec<UserProfile> {
        graph
            .users()
            .iter()
            .map(|u| self.get_or_empty(u).into_owned())
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn receptivity_bin(ts: i64) -> usize {
    ((hour_of_day(ts) / 4.0) as usize).min(RECEPTIVITY_BINS - 1)
}

/// Aggregates tweets in `period` into profiles. Every graph user, every
/// author and every mentioned user gets a profile.
pub fn build_profiles(
    tweets: &[TweetRecord],
    graph: &SocialGraph,
    period: Period,
    exec: Execution,
) -> ProfileSet {
    let in_period: Vec<&TweetRecord> = tweets
        .iter()
        .filter(|t| period.contains(t.timestamp))
        .collect();

    let mut users: BTreeSet<&str> = graph.users().iter().map(String::as_str).collect();
    let mut by_author: BTreeMap<&str, Vec<&TweetRecord>> = BTreeMap::new();
    let mut received: HashMap<&str, u64> = HashMap::new();
    for t in &in_period {
        users.insert(&t.author_id);
        by_author.entry(&t.author_id).or_default().push(t);
        for m in &t.mentions {
            users.insert(m);
            *received.entry(m.as_str()).or_default() += 1;
        }
    }

    let users: Vec<&str> = users.into_iter().collect();
    let profiles = par::map_slice(exec, &users, |&user| {
        let mut p = UserProfile::empty(user);
        p.mention_received_count = received.get(user).copied().unwrap_or(0);
        let Some(msgs) = by_author.get(user) else {
            return p;
        };
        let mut hist = [0u64; RECEPTIVITY_BINS];
        for t in msgs {
            p.message_count += 1;
            if t.is_directed {
                p.directed_count += 1;
            }
            p.mentioned_users.extend(t.mentions.iter().cloned());
            let terms: Vec<String> = t.tokens().into_iter().collect();
            p.keyword_set.extend(terms.iter().cloned());
            p.message_terms.insert(terms);
            hist[receptivity_bin(t.timestamp)] += 1;
        }
        let total = p.message_count as f64;
        for (r, h) in p.receptivity.iter_mut().zip(hist) {
            *r = h as f64 / total;
        }
        p
    });
    ProfileSet {
        by_user: profiles
            .into_iter()
            .map(|p| (p.user_id.clone(), p))
            .collect(),
    }
}

/// Counts, per `bin_hours`-wide bin aligned to `period.start`, the tweets
/// whose term set contains `term`.
pub fn term_occurrence_vector(
    tweets: &[TweetRecord],
    term: &str,
    period: Period,
    bin_hours: u32,
) -> Result<Vec<u64>> {
    let bin_secs = bin_seconds(bin_hours)?;
    let n = bin_count(period, bin_secs)?;
    let term = term.to_lowercase();
    let mut out = vec![0u64; n];
    for t in tweets.iter().filter(|t| period.contains(t.timestamp)) {
        if text::tokenize(&t.text).any(|tok| tok == term) {
            out[((t.timestamp - period.start) / bin_secs) as usize] += 1;
        }
    }
    Ok(out)
}

pub(crate) fn bin_seconds(bin_hours: u32) -> Result<i64> {
    if bin_hours == 0 || 24 % bin_hours != 0 {
        return Err(Error::BinWidth(bin_hours));
    }
    Ok(bin_hours as i64 * SECONDS_PER_HOUR)
}

pub(crate) fn bin_count(period: Period, bin_secs: i64) -> Result<usize> {
    if period.end <= period.start {
        return Err(Error::EmptyPeriod {
            start: period.start,
            end: period.end,
        });
    }
    Ok(((period.span_seconds() + bin_secs - 1) / bin_secs) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEC1: i64 = 1_259_625_600;

    #[test]
    fn parses_directed_and_plain_lines() {
        let r = parse_tweet_line("7|1259625600|hey @Bob check this").unwrap();
        assert_eq!(r.mentions, ["bob"]);
        assert!(r.is_directed);
        let r = parse_tweet_line("7|1259625600|plain text").unwrap();
        assert!(r.mentions.is_empty());
        assert!(!r.is_directed);
    }

    #[test]
    fn escaped_pipes_round_trip() {
        let r = TweetRecord::new("a", 5, "x | y \\ z");
        let back = parse_tweet_line(&r.to_line()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_tweet_line("nobar").is_err());
        assert!(parse_tweet_line("a|xx|t").is_err());
        assert!(parse_tweet_line("a|-3|t").is_err());
        assert!(parse_tweet_line("|3|t").is_err());
    }

    #[test]
    fn load_filters_period_and_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        std::fs::write(&p, "a|10|in\nb|20|out\n\nc|15|in too\n").unwrap();
        let got = load_tweets(&p, Period::new(10, 20).unwrap()).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].author_id, "c");

        std::fs::write(&p, "a|10|ok\nbroken\n").unwrap();
        match load_tweets(&p, Period::unbounded()) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_tweets(dir.path().join("missing"), Period::unbounded()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn edges_dedup_and_self_loops() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.tsv");
        std::fs::write(&p, "a\tb\na\tb\n").unwrap();
        assert_eq!(load_follow_edges(&p).unwrap().graph.follow_edges().len(), 1);

        std::fs::write(&p, "a\ta\n").unwrap();
        let l = load_follow_edges(&p).unwrap();
        assert_eq!(l.self_loops_skipped, 1);
        assert_eq!(l.graph.follow_edges().len(), 0);

        std::fs::write(&p, "a\tb\nc\tb\n").unwrap();
        let g = load_follow_edges(&p).unwrap().graph;
        assert_eq!(g.users(), ["a", "b", "c"]);
        assert_eq!(g.follow_edges().len(), 2);
        let b = g.node("b").unwrap();
        assert_eq!(g.followers(b).len(), 2);
        assert!(g.follows(g.node("a").unwrap(), b));

        std::fs::write(&p, "a b\n").unwrap();
        assert!(matches!(
            load_follow_edges(&p),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn profile_counts() {
        let mut tweets = Vec::new();
        for i in 0..10 {
            let text = if i < 4 { "hi @bob" } else { "hello world" };
            tweets.push(TweetRecord::new("alice", DEC1 + i * 60, text));
        }
        tweets.push(TweetRecord::new("carol", DEC1, "@alice yo"));
        tweets.push(TweetRecord::new("dave", DEC1, "@alice yo"));
        tweets.push(TweetRecord::new("erin", DEC1, "RT @alice yo"));
        let (g, _) = SocialGraph::build([("alice", "bob")], ["zed"]);
        let period = Period::new(DEC1, DEC1 + 86_400).unwrap();
        let ps = build_profiles(&tweets, &g, period, Execution::Sequential);

        let a = ps.get("alice").unwrap();
        assert_eq!(a.message_count, 10);
        assert_eq!(a.directed_count, 4);
        assert_eq!(a.mention_received_count, 3);
        assert!(a.mentioned_users.contains("bob"));
        assert_eq!(ps.get("bob").unwrap().mention_received_count, 4);

        let z = ps.get("zed").unwrap();
        assert_eq!(z.message_count, 0);
        assert!(z.keyword_set.is_empty());
        assert_eq!(z.receptivity, [1.0 / 6.0; 6]);
    }

    #[test]
    fn receptivity_worked_example() {
        // 50 tweets between 16:00 and 20:00, 10 between 08:00 and 12:00.
        let mut tweets = Vec::new();
        for i in 0..50 {
            tweets.push(TweetRecord::new("u", DEC1 + 17 * 3600 + i, "x"));
        }
        for i in 0..10 {
            tweets.push(TweetRecord::new("u", DEC1 + 9 * 3600 + i, "x"));
        }
        let ps = build_profiles(
            &tweets,
            &SocialGraph::default(),
            Period::unbounded(),
            Execution::Sequential,
        );
        assert_eq!(
            ps.get("u").unwrap().receptivity,
            [0.0, 0.0, 1.0 / 6.0, 0.0, 5.0 / 6.0, 0.0]
        );
    }

    #[test]
    fn occurrence_vector() {
        let dec = Period::new(DEC1, DEC1 + 31 * 86_400).unwrap();
        assert_eq!(term_occurrence_vector(&[], "x", dec, 4).unwrap().len(), 186);

        let tweets: Vec<_> = (0..3)
            .map(|i| TweetRecord::new("a", DEC1 + i, "iPhone release"))
            .collect();
        let v = term_occurrence_vector(&tweets, "iphone", dec, 4).unwrap();
        assert_eq!(&v[..3], &[3, 0, 0]);
        assert_eq!(v.iter().sum::<u64>(), 3);
        assert!(term_occurrence_vector(&tweets, "absent", dec, 4)
            .unwrap()
            .iter()
            .all(|&c| c == 0));
        assert!(matches!(
            term_occurrence_vector(&tweets, "x", dec, 5),
            Err(Error::BinWidth(5))
        ));
        let empty = Period { start: 5, end: 5 };
        assert!(term_occurrence_vector(&tweets, "x", empty, 4).is_err());
    }
}
