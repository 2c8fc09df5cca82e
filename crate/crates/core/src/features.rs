//! The 13-value description of a (sender, receiver, topic, time-of-day)
//! tuple.
//!
//! Social features come from the active (mention) side of the network, the
//! topical feature from past vocabulary and the temporal feature from the
//! user's diurnal tweeting histogram. Every value lies in `[0, 1]`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{csv_err, Label, LabeledInstance};
use crate::corpus::{ProfileSet, UserProfile, RECEPTIVITY_BINS};
use crate::par::{self, Execution};
use crate::time::hour_of_day;
use crate::topics::Topic;
use crate::{Error, Result};

pub const N_FEATURES: usize = 13;

/// Hours in a 30.4-day month; activity saturates at one tweet per hour.
pub const ACTIVITY_SCALE: f64 = 30.4 * 24.0;
/// Received mentions at which the mention rate saturates.
pub const MENTION_SCALE: f64 = 200.0;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "I_src",
    "I_dst",
    "hK_src",
    "hK_dst",
    "hM_src_dst",
    "hM_dst_src",
    "mR_src",
    "mR_dst",
    "dTR_src",
    "dTR_dst",
    "A_src",
    "A_dst",
    "H_src_dst",
];

/// Positions in [`FeatureVector`].
pub mod idx {
    pub const I_SRC: usize = 0;
    pub const I_DST: usize = 1;
    pub const HK_SRC: usize = 2;
    pub const HK_DST: usize = 3;
    pub const HM_SRC_DST: usize = 4;
    pub const HM_DST_SRC: usize = 5;
    pub const MR_SRC: usize = 6;
    pub const MR_DST: usize = 7;
    pub const DTR_SRC: usize = 8;
    pub const DTR_DST: usize = 9;
    pub const A_SRC: usize = 10;
    pub const A_DST: usize = 11;
    pub const H: usize = 12;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// How the topical feature reads a multi-keyword topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeywordMode {
    /// Some past message contains every keyword of the topic.
    #[default]
    AllKeywords,
    /// The topic's first keyword is in the user's vocabulary.
    FirstKeyword,
}

/// Tweets per hour over a month, capped at 1.
pub fn activity(p: &UserProfile) -> f64 {
    (p.message_count as f64 / ACTIVITY_SCALE).min(1.0)
}

/// Jaccard index of the two users' mentioned-user sets (0 when both empty).
pub fn homogeneity(x: &UserProfile, y: &UserProfile) -> f64 {
    let inter = x.mentioned_users.intersection(&y.mentioned_users).count();
    let union = x.mentioned_users.len() + y.mentioned_users.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn directed_ratio(p: &UserProfile) -> f64 {
    if p.message_count == 0 {
        0.0
    } else {
        p.directed_count as f64 / p.message_count as f64
    }
}

pub fn has_mentioned(x: &UserProfile, y: &str) -> f64 {
    if x.mentioned_users.contains(y) {
        1.0
    } else {
        0.0
    }
}

pub fn mention_rate(p: &UserProfile) -> f64 {
    (p.mention_received_count as f64 / MENTION_SCALE).min(1.0)
}

pub fn has_keyword(p: &UserProfile, topic: &Topic, mode: KeywordMode) -> f64 {
    let hit = match mode {
        KeywordMode::AllKeywords => p.message_terms.iter().any(|terms| {
            topic
                .keywords
                .iter()
                .all(|k| terms.binary_search(k).is_ok())
        }),
        KeywordMode::FirstKeyword => topic
            .keywords
            .first()
            .is_some_and(|k| p.keyword_set.contains(k)),
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Index of the 4-hour bin containing time of day `t`.
pub fn time_bin(t: f64) -> Result<usize> {
    if !(0.0..24.0).contains(&t) {
        return Err(Error::TimeOfDay(t));
    }
    Ok(((t / 4.0) as usize).min(RECEPTIVITY_BINS - 1))
}

/// Share of the user's tweets posted in the 4-hour bin containing `t`.
pub fn receptivity(p: &UserProfile, t: f64) -> Result<f64> {
    Ok(p.receptivity[time_bin(t)?])
}

/// Feature vector of `(src, dst, topic, t)`, `t` in hours of the day.
pub fn assemble(
    src: &UserProfile,
    dst: &UserProfile,
    topic: &Topic,
    t: f64,
    mode: KeywordMode,
) -> Result<FeatureVector> {
    let bin = time_bin(t)?;
    let mut f = assemble_static(src, dst, topic, mode);
    f.0[idx::A_SRC] = src.receptivity[bin];
    f.0[idx::A_DST] = dst.receptivity[bin];
    Ok(f)
}

/// All features except the two receptivity entries, which are left at 0.
pub fn assemble_static(
    src: &UserProfile,
    dst: &UserProfile,
    topic: &Topic,
    mode: KeywordMode,
) -> FeatureVector {
    FeatureVector([
        activity(src),
        activity(dst),
        has_keyword(src, topic, mode),
        has_keyword(dst, topic, mode),
        has_mentioned(src, &dst.user_id),
        has_mentioned(dst, &src.user_id),
        mention_rate(src),
        mention_rate(dst),
        directed_ratio(src),
        directed_ratio(dst),
        0.0,
        0.0,
        homogeneity(src, dst),
    ])
}

/// A labelled feature row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub features: FeatureVector,
    pub label: Label,
}

/// Features of every instance, evaluated at the instance's UTC time of day.
pub fn extract(
    instances: &[LabeledInstance],
    profiles: &ProfileSet,
    topics: &[Topic],
    mode: KeywordMode,
    exec: Execution,
) -> Result<Vec<Example>> {
    let by_id: HashMap<&str, &Topic> = topics.iter().map(|t| (t.id.as_str(), t)).collect();
    par::map_slice(exec, instances, |inst| {
        let topic = by_id
            .get(inst.topic_id.as_str())
            .ok_or_else(|| Error::Config(format!("unknown topic {:?}", inst.topic_id)))?;
        let src = profiles.get_or_empty(&inst.sender);
        let dst = profiles.get_or_empty(&inst.receiver);
        Ok(Example {
            features: assemble(&src, &dst, topic, hour_of_day(inst.time), mode)?,
            label: inst.label,
        })
    })
    .into_iter()
    .collect()
}

/// Writes the 13 named feature columns plus `label`.
pub fn write_feature_matrix(path: impl AsRef<Path>, rows: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("label");
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut rec: Vec<String> = row.features.0.iter().map(|x| x.to_string()).collect();
        rec.push(row.label.as_str().to_owned());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["label"]).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Malformed {
            path: path.to_owned(),
            line: 1,
            reason: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| Error::Malformed {
            path: path.to_owned(),
            line,
            reason,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut f = [0.0; N_FEATURES];
        for (k, slot) in f.iter_mut().enumerate() {
            *slot = rec[k]
                .parse()
                .map_err(|e| bad(format!("column {}: {e}", FEATURE_NAMES[k])))?;
        }
        let label = match &rec[N_FEATURES] {
            "diffusion" => Label::Diffusion,
            "non-diffusion" => Label::NonDiffusion,
            other => return Err(bad(format!("unknown label {other:?}"))),
        };
        out.push(Example {
            features: FeatureVector(f),
            label,
        });
    }
    Ok(out)
}
