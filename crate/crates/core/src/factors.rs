//! Stratified analysis of survey factors: vary one factor, hold the
//! others at fixed values, and compare per-level MOS intervals image by
//! image.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{compute_mos, AggregationError, MosRecord};
use crate::config::StudyConfig;
use crate::domain::*;

pub const DEFAULT_MIN_GROUP: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("`{value}` is not a level of {factor}")]
    UnknownLevel { factor: Factor, value: String },
    #[error("{0} cannot be both varied and fixed")]
    VariedAndFixed(Factor),
    #[error("malformed condition `{0}`, expected factor=value")]
    MalformedCondition(String),
    #[error("no strata to summarize")]
    NoStrata,
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Gender,
    Age,
    Distance,
    Device,
    Lenses,
    Annoyance,
    CaptureDevice,
}

impl Factor {
    pub const ALL: [Factor; 7] = [
        Factor::Gender,
        Factor::Age,
        Factor::Distance,
        Factor::Device,
        Factor::Lenses,
        Factor::Annoyance,
        Factor::CaptureDevice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Gender => "gender",
            Factor::Age => "age",
            Factor::Distance => "distance",
            Factor::Device => "device",
            Factor::Lenses => "lenses",
            Factor::Annoyance => "annoyance",
            Factor::CaptureDevice => "capture_device",
        }
    }

    pub fn levels(self) -> Vec<&'static str> {
        fn names<T: Copy>(all: &[T], f: fn(T) -> &'static str) -> Vec<&'static str> {
            all.iter().map(|v| f(*v)).collect()
        }
        match self {
            Factor::Gender => names(Gender::ALL, Gender::as_str),
            Factor::Age => names(AgeBand::ALL, AgeBand::as_str),
            Factor::Distance => names(DistanceBand::ALL, DistanceBand::as_str),
            Factor::Device => names(DeviceClass::ALL, DeviceClass::as_str),
            Factor::Lenses => vec!["yes", "no"],
            Factor::Annoyance => names(Annoyance::ALL, Annoyance::as_str),
            Factor::CaptureDevice => names(CaptureDevice::ALL, CaptureDevice::as_str),
        }
    }

    pub fn level_of(self, s: &Survey) -> &'static str {
        match self {
            Factor::Gender => s.gender.as_str(),
            Factor::Age => s.age_band.as_str(),
            Factor::Distance => s.distance_band.as_str(),
            Factor::Device => s.device_class.as_str(),
            Factor::Lenses => {
                if s.wears_lenses {
                    "yes"
                } else {
                    "no"
                }
            }
            Factor::Annoyance => s.annoyance.as_str(),
            Factor::CaptureDevice => s.preferred_capture_device.as_str(),
        }
    }

    fn canonical_level(self, value: &str) -> Result<&'static str, FactorError> {
        let v = value.trim();
        self.levels()
            .into_iter()
            .find(|l| l.eq_ignore_ascii_case(v))
            .ok_or_else(|| FactorError::UnknownLevel {
                factor: self,
                value: v.to_owned(),
            })
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Factor {
    type Err = FactorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gender" => Ok(Factor::Gender),
            "age" | "age_band" => Ok(Factor::Age),
            "distance" | "distance_band" => Ok(Factor::Distance),
            "device" | "device_class" | "display" => Ok(Factor::Device),
            "lenses" | "wears_lenses" => Ok(Factor::Lenses),
            "annoyance" => Ok(Factor::Annoyance),
            "capture_device" | "preferred_capture_device" => Ok(Factor::CaptureDevice),
            other => Err(FactorError::UnknownFactor(other.to_owned())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub vary: Factor,
    /// Accepted levels per held factor.
    pub fixed: BTreeMap<Factor, Vec<String>>,
    /// Images to report on; empty means every image present.
    pub image_ids: Vec<ImageId>,
}

impl StratumSpec {
    pub fn new(
        vary: Factor,
        fixed: BTreeMap<Factor, Vec<String>>,
        image_ids: Vec<ImageId>,
    ) -> Result<Self, FactorError> {
        if fixed.contains_key(&vary) {
            return Err(FactorError::VariedAndFixed(vary));
        }
        let fixed = fixed
            .into_iter()
            .map(|(f, vals)| {
                let vals = vals
                    .iter()
                    .map(|v| f.canonical_level(v).map(str::to_owned))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((f, vals))
            })
            .collect::<Result<_, FactorError>>()?;
        Ok(StratumSpec {
            vary,
            fixed,
            image_ids,
        })
    }

    /// Parses `age=20-30,device=desktop`; alternatives are separated by `|`.
    pub fn parse_conditions(text: &str) -> Result<BTreeMap<Factor, Vec<String>>, FactorError> {
        let mut out = BTreeMap::new();
        for cond in text.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let (k, v) = cond
                .split_once('=')
                .ok_or_else(|| FactorError::MalformedCondition(cond.to_owned()))?;
            let factor: Factor = k.parse()?;
            let values: Vec<String> = v.split('|').map(|s| s.trim().to_owned()).collect();
            out.insert(factor, values);
        }
        Ok(out)
    }

    pub fn describe_fixed(&self) -> String {
        self.fixed
            .iter()
            .map(|(f, v)| format!("{f}={}", v.join("|")))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn admits(&self, survey: &Survey) -> bool {
        self.fixed
            .iter()
            .all(|(f, vals)| vals.iter().any(|v| v == f.level_of(survey)))
    }
}

/// One accepted opinion joined with its subject's survey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinedRating {
    pub image_id: ImageId,
    pub score: i32,
    pub survey: Survey,
}

/// One opinion per subject per test image (training and second repeats
/// are left out) from the accepted sessions.
pub fn join_ratings(sessions: &[Session], accepted: &HashSet<SessionId>) -> Vec<JoinedRating> {
    sessions
        .iter()
        .filter(|s| accepted.contains(&s.session_id))
        .filter_map(|s| s.survey.as_ref().map(|sv| (s, sv)))
        .flat_map(|(s, sv)| {
            s.ratings
                .iter()
                .filter(|r| matches!(r.role, Role::Fresh | Role::RepeatFirst | Role::Gold))
                .map(move |r| JoinedRating {
                    image_id: r.image_id.clone(),
                    score: r.score,
                    survey: sv.clone(),
                })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroupCell {
    Reported(MosRecord),
    Insufficient { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub spec: StratumSpec,
    /// image → level → cell, covering every level of the varied factor.
    pub cells: BTreeMap<ImageId, BTreeMap<String, GroupCell>>,
}

pub fn stratify(
    records: &[JoinedRating],
    spec: &StratumSpec,
    config: &StudyConfig,
    min_group: usize,
) -> Result<StratumResult, FactorError> {
    let wanted: Option<HashSet<&ImageId>> = if spec.image_ids.is_empty() {
        None
    } else {
        Some(spec.image_ids.iter().collect())
    };
    let mut groups: BTreeMap<ImageId, BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    for id in &spec.image_ids {
        groups.entry(id.clone()).or_default();
    }
    for r in records {
        if wanted.as_ref().is_some_and(|w| !w.contains(&r.image_id)) {
            continue;
        }
        if !spec.admits(&r.survey) {
            continue;
        }
        groups
            .entry(r.image_id.clone())
            .or_default()
            .entry(spec.vary.level_of(&r.survey))
            .or_default()
            .push(f64::from(r.score));
    }
    let mut cells = BTreeMap::new();
    for (id, by_level) in groups {
        let mut row = BTreeMap::new();
        for level in spec.vary.levels() {
            let scores = by_level.get(level).map(Vec::as_slice).unwrap_or(&[]);
            let cell = if scores.len() < min_group.max(1) {
                GroupCell::Insufficient { n: scores.len() }
            } else {
                GroupCell::Reported(compute_mos(&id, scores, config)?)
            };
            row.insert(level.to_owned(), cell);
        }
        cells.insert(id, row);
    }
    Ok(StratumResult {
        spec: spec.clone(),
        cells,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorVerdict {
    LittleEffect,
    EffectDetected,
    InsufficientData,
}

impl FactorVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FactorVerdict::LittleEffect => "little effect",
            FactorVerdict::EffectDetected => "effect detected",
            FactorVerdict::InsufficientData => "insufficient data",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub factor: Factor,
    pub fixed: String,
    pub verdict: FactorVerdict,
    /// Images with at least two reported levels.
    pub images_compared: usize,
    /// Compared images on which every pair of level intervals overlaps.
    pub images_overlapping: usize,
}

/// One row per analysed stratum. An image counts as overlapping when every
/// pair of its reported level intervals intersects; a factor has "little
/// effect" when at least `min_overlapping` compared images overlap
/// (default: all of them).
pub fn summary_table(
    results: &[StratumResult],
    min_overlapping: Option<usize>,
) -> Result<Vec<SummaryRow>, FactorError> {
    if results.is_empty() {
        return Err(FactorError::NoStrata);
    }
    Ok(results
        .iter()
        .map(|res| {
            let mut compared = 0;
            let mut overlapping = 0;
            for row in res.cells.values() {
                let reported: Vec<&MosRecord> = row
                    .values()
                    .filter_map(|c| match c {
                        GroupCell::Reported(m) => Some(m),
                        GroupCell::Insufficient { .. } => None,
                    })
                    .collect();
                if reported.len() < 2 {
                    continue;
                }
                compared += 1;
                let all_overlap = reported
                    .iter()
                    .enumerate()
                    .all(|(i, a)| reported[i + 1..].iter().all(|b| a.ci_overlaps(b)));
                if all_overlap {
                    overlapping += 1;
                }
            }
            let needed = min_overlapping.unwrap_or(compared);
            let verdict = if compared == 0 {
                FactorVerdict::InsufficientData
            } else if overlapping >= needed {
                FactorVerdict::LittleEffect
            } else {
                FactorVerdict::EffectDetected
            };
            SummaryRow {
                factor: res.spec.vary,
                fixed: res.spec.describe_fixed(),
                verdict,
                images_compared: compared,
                images_overlapping: overlapping,
            }
        })
        .collect())
}

/// `image_id,level,status,n,mos,ci_lo,ci_hi`
pub fn write_stratum_csv<W: std::io::Write>(
    out: W,
    result: &StratumResult,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image_id", "level", "status", "n", "mos", "ci_lo", "ci_hi"])?;
    for (id, row) in &result.cells {
        for (level, cell) in row {
            match cell {
                GroupCell::Reported(m) => w.write_record([
                    id.as_str(),
                    level,
                    "reported",
                    &m.n.to_string(),
                    &format!("{:.4}", m.mos),
                    &format!("{:.4}", m.ci95.0),
                    &format!("{:.4}", m.ci95.1),
                ])?,
                GroupCell::Insufficient { n } => w.write_record([
                    id.as_str(),
                    level,
                    "insufficient",
                    &n.to_string(),
                    "",
                    "",
                    "",
                ])?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn survey(gender: Gender, distance: DistanceBand) -> Survey {
        Survey {
            gender,
            age_band: AgeBand::From20To30,
            distance_band: distance,
            device_class: DeviceClass::Desktop,
            wears_lenses: false,
            wore_lenses_now: false,
            annoyance: Annoyance::Yes,
            preferred_capture_device: CaptureDevice::MobileDevice,
        }
    }

    fn rating(image: &str, score: i32, s: &Survey) -> JoinedRating {
        JoinedRating {
            image_id: ImageId::new(image),
            score,
            survey: s.clone(),
        }
    }

    fn fixed(text: &str) -> BTreeMap<Factor, Vec<String>> {
        StratumSpec::parse_conditions(text).unwrap()
    }

    #[test]
    fn gender_table_shape() {
        let cfg = StudyConfig::default();
        let male = survey(Gender::Male, DistanceBand::From15To30In);
        let female = survey(Gender::Female, DistanceBand::From15To30In);
        let far_male = survey(Gender::Male, DistanceBand::Over30In);
        let mut recs = Vec::new();
        for img in ["f1", "f2", "f3", "f4", "f5"] {
            for k in 0..8 {
                recs.push(rating(img, 40 + k, &male));
                recs.push(rating(img, 42 + k, &female));
                recs.push(rating(img, 1, &far_male));
            }
        }
        let images: Vec<ImageId> = ["f1", "f2", "f3", "f4", "f5"].map(ImageId::new).to_vec();
        let spec = StratumSpec::new(
            Factor::Gender,
            fixed("age=20-30,device=desktop,distance=15-30in"),
            images,
        )
        .unwrap();
        let res = stratify(&recs, &spec, &cfg, DEFAULT_MIN_GROUP).unwrap();
        assert_eq!(res.cells.len(), 5);
        for row in res.cells.values() {
            let GroupCell::Reported(m) = &row["male"] else {
                panic!("male group missing");
            };
            // far-away raters are filtered by the distance condition
            assert_eq!(m.n, 8);
            assert!(matches!(row["other"], GroupCell::Insufficient { n: 0 }));
        }
        let summary = summary_table(&[res], None).unwrap();
        assert_eq!(summary[0].verdict, FactorVerdict::LittleEffect);
        assert_eq!(summary[0].images_compared, 5);
    }

    #[test]
    fn empty_distance_level_is_insufficient() {
        let cfg = StudyConfig::default();
        let near = survey(Gender::Male, DistanceBand::Under15In);
        let mid = survey(Gender::Male, DistanceBand::From15To30In);
        let recs: Vec<_> = (0..10)
            .flat_map(|k| [rating("a", 50 + k, &near), rating("a", 52 + k, &mid)])
            .collect();
        let spec = StratumSpec::new(Factor::Distance, BTreeMap::new(), vec![]).unwrap();
        let res = stratify(&recs, &spec, &cfg, DEFAULT_MIN_GROUP).unwrap();
        assert_eq!(
            res.cells[&ImageId::new("a")]["gt30in"],
            GroupCell::Insufficient { n: 0 }
        );
    }

    #[test]
    fn disjoint_intervals_detect_an_effect() {
        let cfg = StudyConfig::default();
        let male = survey(Gender::Male, DistanceBand::From15To30In);
        let female = survey(Gender::Female, DistanceBand::From15To30In);
        let recs: Vec<_> = (0..10)
            .flat_map(|k| {
                [
                    rating("a", 20 + k % 2, &male),
                    rating("a", 80 + k % 2, &female),
                ]
            })
            .collect();
        let spec = StratumSpec::new(Factor::Gender, BTreeMap::new(), vec![]).unwrap();
        let res = stratify(&recs, &spec, &cfg, DEFAULT_MIN_GROUP).unwrap();
        let summary = summary_table(&[res], None).unwrap();
        assert_eq!(summary[0].verdict, FactorVerdict::EffectDetected);
        assert_eq!(summary_table(&[], None), Err(FactorError::NoStrata));
    }

    #[test]
    fn spec_errors() {
        assert_eq!(
            "shoe_size".parse::<Factor>(),
            Err(FactorError::UnknownFactor("shoe_size".into()))
        );
        assert_eq!(
            StratumSpec::new(Factor::Gender, fixed("gender=male"), vec![]),
            Err(FactorError::VariedAndFixed(Factor::Gender))
        );
        assert!(matches!(
            StratumSpec::new(Factor::Gender, fixed("age=ancient"), vec![]),
            Err(FactorError::UnknownLevel { .. })
        ));
        assert!(StratumSpec::parse_conditions("age").is_err());
    }
}
