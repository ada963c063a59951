//! Per-image opinion-score aggregation and distortion-category voting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::StudyConfig;
use crate::domain::{ImageId, Role, Session, SessionId};
use crate::stats::{self, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("no scores for image {0}")]
    EmptyScores(ImageId),
    #[error("no category votes for image {0}")]
    EmptyVotes(ImageId),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub image_id: ImageId,
    pub mos: f64,
    pub std: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

impl MosRecord {
    pub fn ci_overlaps(&self, other: &MosRecord) -> bool {
        self.ci95.0 <= other.ci95.1 && other.ci95.0 <= self.ci95.1
    }
}

/// Half-width of the two-sided 95% t interval for the mean, before
/// clipping to the score range. Zero for a single score.
pub fn ci95_half_width(std: f64, n: usize) -> Result<f64, StatsError> {
    if n < 2 {
        return Ok(0.0);
    }
    let t = stats::t_quantile(0.975, (n - 1) as f64)?;
    Ok(t * std / (n as f64).sqrt())
}

/// Mean opinion score with sample std and a 95% t interval clipped to
/// `[score_min, score_max]`.
pub fn compute_mos(
    image_id: &ImageId,
    scores: &[f64],
    config: &StudyConfig,
) -> Result<MosRecord, AggregationError> {
    if scores.is_empty() {
        return Err(AggregationError::EmptyScores(image_id.clone()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite.into());
    }
    let n = scores.len();
    let mos = stats::mean(scores);
    let std = stats::sample_std(scores);
    let half = ci95_half_width(std, n)?;
    let (lo_bound, hi_bound) = (config.score_min as f64, config.score_max as f64);
    Ok(MosRecord {
        image_id: image_id.clone(),
        mos,
        std,
        n,
        ci95: ((mos - half).max(lo_bound), (mos + half).min(hi_bound)),
    })
}

/// Running mean after each score.
pub fn mos_convergence(scores: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            sum += s;
            sum / (i + 1) as f64
        })
        .collect()
}

/// Collects scores per image from the given sessions, keeping only roles
/// accepted by `roles` and sessions listed in `accepted`.
pub fn collect_scores(
    sessions: &[Session],
    accepted: &HashSet<SessionId>,
    roles: &[Role],
) -> BTreeMap<ImageId, Vec<f64>> {
    let mut out: BTreeMap<ImageId, Vec<f64>> = BTreeMap::new();
    for s in sessions.iter().filter(|s| accepted.contains(&s.session_id)) {
        for r in s.ratings.iter().filter(|r| roles.contains(&r.role)) {
            out.entry(r.image_id.clone())
                .or_default()
                .push(f64::from(r.score));
        }
    }
    out
}

/// Database-image scores that enter the MOS: fresh and first-of-repeat
/// ratings from accepted sessions.
pub fn database_scores(
    sessions: &[Session],
    accepted: &HashSet<SessionId>,
) -> BTreeMap<ImageId, Vec<f64>> {
    collect_scores(sessions, accepted, &[Role::Fresh, Role::RepeatFirst])
}

pub fn gold_scores(
    sessions: &[Session],
    accepted: &HashSet<SessionId>,
) -> BTreeMap<ImageId, Vec<f64>> {
    collect_scores(sessions, accepted, &[Role::Gold])
}

pub fn mos_table(
    scores: &BTreeMap<ImageId, Vec<f64>>,
    config: &StudyConfig,
) -> Result<Vec<MosRecord>, AggregationError> {
    scores
        .iter()
        .map(|(id, s)| compute_mos(id, s, config))
        .collect()
}

/// `image_id,mos,std,n,ci_lo,ci_hi`
pub fn write_mos_csv<W: std::io::Write>(out: W, records: &[MosRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image_id", "mos", "std", "n", "ci_lo", "ci_hi"])?;
    for r in records {
        w.write_record([
            r.image_id.as_str(),
            &format!("{:.4}", r.mos),
            &format!("{:.4}", r.std),
            &r.n.to_string(),
            &format!("{:.4}", r.ci95.0),
            &format!("{:.4}", r.ci95.1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Blurry,
    Grainy,
    Overexposed,
    Underexposed,
    NoDistortion,
    DontUnderstand,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Blurry,
        Category::Grainy,
        Category::Overexposed,
        Category::Underexposed,
        Category::NoDistortion,
        Category::DontUnderstand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Blurry => "Blurry",
            Category::Grainy => "Grainy",
            Category::Overexposed => "Overexposed",
            Category::Underexposed => "Underexposed",
            Category::NoDistortion => "NoDistortion",
            Category::DontUnderstand => "DontUnderstand",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase() == norm)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusTier {
    FullConsensus,
    SplitConsensus,
    NoConsensus,
}

impl ConsensusTier {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsensusTier::FullConsensus => "full_consensus",
            ConsensusTier::SplitConsensus => "split_consensus",
            ConsensusTier::NoConsensus => "no_consensus",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub image_id: ImageId,
    pub tally: BTreeMap<Category, usize>,
    pub tier: ConsensusTier,
    pub winner: Option<Category>,
}

/// Majority vote with consensus tiers: full when the top share reaches
/// `consensus_full_share`, split when each of the top two shares reaches
/// `consensus_split_share`, none otherwise.
pub fn aggregate_categories(
    image_id: &ImageId,
    votes: &[Category],
    config: &StudyConfig,
) -> Result<CategoryResult, AggregationError> {
    if votes.is_empty() {
        return Err(AggregationError::EmptyVotes(image_id.clone()));
    }
    let mut tally: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for v in votes {
        *tally.get_mut(v).expect("all categories present") += 1;
    }
    let total = votes.len() as f64;
    let mut ranked: Vec<(Category, usize)> = tally.iter().map(|(c, n)| (*c, *n)).collect();
    // Highest count first; declaration order breaks ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let top = ranked[0].1 as f64 / total;
    let second = ranked[1].1 as f64 / total;
    let (tier, winner) = if top >= config.consensus_full_share {
        (ConsensusTier::FullConsensus, Some(ranked[0].0))
    } else if top >= config.consensus_split_share && second >= config.consensus_split_share {
        (ConsensusTier::SplitConsensus, None)
    } else {
        (ConsensusTier::NoConsensus, None)
    };
    Ok(CategoryResult {
        image_id: image_id.clone(),
        tally,
        tier,
        winner,
    })
}

/// Per-category counts, tier and winner, one row per image.
pub fn write_categories_csv<W: std::io::Write>(
    out: W,
    results: &[CategoryResult],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["image_id"];
    header.extend(Category::ALL.iter().map(|c| c.as_str()));
    header.extend(["tier", "winner"]);
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![r.image_id.to_string()];
        row.extend(Category::ALL.iter().map(|c| r.tally[c].to_string()));
        row.push(r.tier.as_str().to_owned());
        row.push(r.winner.map(|c| c.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileSummary {
    pub images: usize,
    pub mos_min: f64,
    pub mos_max: f64,
    pub mean_std: f64,
}

/// Reads a per-image score file (`image_id,mos,std` columns, header
/// required, extra columns ignored) and summarizes its range and spread.
pub fn summarize_score_file<R: std::io::Read>(input: R) -> Result<ScoreFileSummary, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| format!("score file has no `{name}` column"))
    };
    let (mos_col, std_col) = (col("mos")?, col("std")?);
    let (mut min, mut max, mut std_sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parse = |i: usize| -> Result<f64, String> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("row {}: {e}", n + 2))
        };
        let mos = parse(mos_col)?;
        min = min.min(mos);
        max = max.max(mos);
        std_sum += parse(std_col)?;
        n += 1;
    }
    if n == 0 {
        return Err("score file has no rows".into());
    }
    Ok(ScoreFileSummary {
        images: n,
        mos_min: min,
        mos_max: max,
        mean_std: std_sum / n as f64,
    })
}
