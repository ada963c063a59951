//! Study configuration: a flat `key = value` file with environment
//! overrides (`STUDYBENCH_<KEY>`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "STUDYBENCH_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub training_count: u32,
    pub test_distinct_count: u32,
    pub gold_per_hit: u32,
    pub repeat_per_hit: u32,
    /// Largest tolerated score difference between the two ratings of a
    /// repeated image.
    pub repeat_threshold: i32,
    pub repeat_violations_to_reject: u32,
    /// Workers must have a marketplace confidence strictly above this.
    pub min_confidence: f64,
    pub score_min: i32,
    pub score_max: i32,
    pub target_ratings_per_image: u32,
    /// Minimum slot distance between the two presentations of a repeat.
    pub min_repeat_gap: u32,
    pub consensus_full_share: f64,
    pub consensus_split_share: f64,
    pub remuneration_label: String,
    /// Unfinished sessions older than this are rejected.
    pub session_expiry_minutes: u32,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            training_count: 7,
            test_distinct_count: 43,
            gold_per_hit: 5,
            repeat_per_hit: 5,
            repeat_threshold: 20,
            repeat_violations_to_reject: 3,
            min_confidence: 0.75,
            score_min: 1,
            score_max: 100,
            target_ratings_per_image: 175,
            min_repeat_gap: 5,
            consensus_full_share: 0.80,
            consensus_split_share: 0.35,
            remuneration_label: "30 cents".to_owned(),
            session_expiry_minutes: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigViolation {
    NonPositiveCount(&'static str),
    GoldExceedsTestPool,
    RepeatsExceedFreshImages,
    ScoreBoundsInverted,
    ConfidenceOutOfRange,
    NegativeThreshold,
    ViolationCountExceedsRepeats,
    RepeatGapTooLarge,
    ConsensusShareOutOfRange(&'static str),
    ConsensusSharesInverted,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::NonPositiveCount(key) => write!(f, "{key} must be positive"),
            ConfigViolation::GoldExceedsTestPool => f.write_str("gold exceeds test pool"),
            ConfigViolation::RepeatsExceedFreshImages => {
                f.write_str("gold plus repeats exceed test pool")
            }
            ConfigViolation::ScoreBoundsInverted => f.write_str("score bounds inverted"),
            ConfigViolation::ConfidenceOutOfRange => f.write_str("min_confidence outside [0, 1]"),
            ConfigViolation::NegativeThreshold => f.write_str("repeat_threshold is negative"),
            ConfigViolation::ViolationCountExceedsRepeats => {
                f.write_str("repeat_violations_to_reject exceeds repeat_per_hit")
            }
            ConfigViolation::RepeatGapTooLarge => {
                f.write_str("min_repeat_gap cannot be met within the test phase")
            }
            ConfigViolation::ConsensusShareOutOfRange(key) => write!(f, "{key} outside (0, 1]"),
            ConfigViolation::ConsensusSharesInverted => {
                f.write_str("consensus_split_share exceeds consensus_full_share")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

impl StudyConfig {
    pub const KEYS: &'static [&'static str] = &[
        "training_count",
        "test_distinct_count",
        "gold_per_hit",
        "repeat_per_hit",
        "repeat_threshold",
        "repeat_violations_to_reject",
        "min_confidence",
        "score_min",
        "score_max",
        "target_ratings_per_image",
        "min_repeat_gap",
        "consensus_full_share",
        "consensus_split_share",
        "remuneration_label",
        "session_expiry_minutes",
    ];

    /// Slider judgments made per HIT, counting repeats twice.
    pub fn presentations_per_hit(&self) -> u32 {
        self.training_count + self.test_distinct_count + self.repeat_per_hit
    }

    /// Non-gold test images shown to each worker.
    pub fn fresh_per_hit(&self) -> u32 {
        self.test_distinct_count.saturating_sub(self.gold_per_hit)
    }

    /// Every violated invariant, in a stable order.
    pub fn validate(&self) -> Result<(), Vec<ConfigViolation>> {
        let mut v = Vec::new();
        for (key, value) in [
            ("training_count", self.training_count),
            ("test_distinct_count", self.test_distinct_count),
            ("gold_per_hit", self.gold_per_hit),
            ("repeat_per_hit", self.repeat_per_hit),
            (
                "repeat_violations_to_reject",
                self.repeat_violations_to_reject,
            ),
            ("target_ratings_per_image", self.target_ratings_per_image),
            ("min_repeat_gap", self.min_repeat_gap),
            ("session_expiry_minutes", self.session_expiry_minutes),
        ] {
            if value == 0 {
                v.push(ConfigViolation::NonPositiveCount(key));
            }
        }
        if self.gold_per_hit > self.test_distinct_count {
            v.push(ConfigViolation::GoldExceedsTestPool);
        } else if self.gold_per_hit + self.repeat_per_hit > self.test_distinct_count {
            v.push(ConfigViolation::RepeatsExceedFreshImages);
        }
        if self.score_min >= self.score_max {
            v.push(ConfigViolation::ScoreBoundsInverted);
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            v.push(ConfigViolation::ConfidenceOutOfRange);
        }
        if self.repeat_threshold < 0 {
            v.push(ConfigViolation::NegativeThreshold);
        }
        if self.repeat_violations_to_reject > self.repeat_per_hit {
            v.push(ConfigViolation::ViolationCountExceedsRepeats);
        }
        let test_slots = self.test_distinct_count + self.repeat_per_hit;
        if self.min_repeat_gap >= test_slots {
            v.push(ConfigViolation::RepeatGapTooLarge);
        }
        for (key, share) in [
            ("consensus_full_share", self.consensus_full_share),
            ("consensus_split_share", self.consensus_split_share),
        ] {
            if !(share > 0.0 && share <= 1.0) {
                v.push(ConfigViolation::ConsensusShareOutOfRange(key));
            }
        }
        if self.consensus_split_share > self.consensus_full_share {
            v.push(ConfigViolation::ConsensusSharesInverted);
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value
                .trim()
                .parse()
                .map_err(|e: T::Err| ConfigError::BadValue {
                    key: key.to_owned(),
                    message: e.to_string(),
                })
        }
        match key {
            "training_count" => self.training_count = parse(key, value)?,
            "test_distinct_count" => self.test_distinct_count = parse(key, value)?,
            "gold_per_hit" => self.gold_per_hit = parse(key, value)?,
            "repeat_per_hit" => self.repeat_per_hit = parse(key, value)?,
            "repeat_threshold" => self.repeat_threshold = parse(key, value)?,
            "repeat_violations_to_reject" => self.repeat_violations_to_reject = parse(key, value)?,
            "min_confidence" => self.min_confidence = parse(key, value)?,
            "score_min" => self.score_min = parse(key, value)?,
            "score_max" => self.score_max = parse(key, value)?,
            "target_ratings_per_image" => self.target_ratings_per_image = parse(key, value)?,
            "min_repeat_gap" => self.min_repeat_gap = parse(key, value)?,
            "consensus_full_share" => self.consensus_full_share = parse(key, value)?,
            "consensus_split_share" => self.consensus_split_share = parse(key, value)?,
            "remuneration_label" => self.remuneration_label = unquote(value.trim()).to_owned(),
            "session_expiry_minutes" => self.session_expiry_minutes = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_owned())),
        }
        Ok(())
    }

    /// Parses a `key = value` document on top of the defaults. Blank lines
    /// and `#` comments are ignored.
    pub fn parse_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = StudyConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse_kv(&std::fs::read_to_string(path)?)
    }

    /// Applies `STUDYBENCH_<KEY>` overrides from the given variables.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if Self::KEYS.contains(&key.as_str()) {
                self.set(&key, v.as_ref())?;
            }
        }
        Ok(())
    }

    /// Loads `path` (defaults when `None`) and applies process environment
    /// overrides.
    pub fn load_with_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let map = self.as_map();
        let mut out = String::new();
        for key in Self::KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&map[key]);
            out.push('\n');
        }
        out
    }

    fn as_map(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("training_count", self.training_count.to_string()),
            ("test_distinct_count", self.test_distinct_count.to_string()),
            ("gold_per_hit", self.gold_per_hit.to_string()),
            ("repeat_per_hit", self.repeat_per_hit.to_string()),
            ("repeat_threshold", self.repeat_threshold.to_string()),
            (
                "repeat_violations_to_reject",
                self.repeat_violations_to_reject.to_string(),
            ),
            ("min_confidence", fmt_real(self.min_confidence)),
            ("score_min", self.score_min.to_string()),
            ("score_max", self.score_max.to_string()),
            (
                "target_ratings_per_image",
                self.target_ratings_per_image.to_string(),
            ),
            ("min_repeat_gap", self.min_repeat_gap.to_string()),
            ("consensus_full_share", fmt_real(self.consensus_full_share)),
            (
                "consensus_split_share",
                fmt_real(self.consensus_split_share),
            ),
            ("remuneration_label", self.remuneration_label.clone()),
            (
                "session_expiry_minutes",
                self.session_expiry_minutes.to_string(),
            ),
        ])
    }
}

fn fmt_real(x: f64) -> String {
    // `{:?}` is the shortest representation that parses back exactly.
    format!("{x:?}")
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_make_a_fifty_image_hit() {
        let cfg = StudyConfig::default();
        assert_eq!(cfg.validate(), Ok(()));
        assert_eq!(cfg.training_count + cfg.test_distinct_count, 50);
        assert_eq!(cfg.presentations_per_hit(), 55);
        assert_eq!(cfg.fresh_per_hit(), 38);
    }

    #[test]
    fn oversized_gold_is_reported() {
        let cfg = StudyConfig {
            gold_per_hit: 50,
            ..StudyConfig::default()
        };
        let v = cfg.validate().unwrap_err();
        assert!(v.contains(&ConfigViolation::GoldExceedsTestPool));
        assert_eq!(v[0].to_string(), "gold exceeds test pool");
    }

    #[test]
    fn inverted_bounds_are_reported() {
        let cfg = StudyConfig {
            score_min: 100,
            score_max: 1,
            ..StudyConfig::default()
        };
        let v = cfg.validate().unwrap_err();
        assert_eq!(v, vec![ConfigViolation::ScoreBoundsInverted]);
        assert_eq!(v[0].to_string(), "score bounds inverted");
    }

    #[test]
    fn every_violation_is_returned() {
        let cfg = StudyConfig {
            gold_per_hit: 50,
            score_min: 100,
            score_max: 1,
            min_confidence: 1.5,
            ..StudyConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().len(), 3);
    }

    #[test]
    fn single_out_of_bound_mutations_are_caught() {
        let base = StudyConfig::default();
        type Mutation = Box<dyn Fn(&mut StudyConfig)>;
        let mutations: Vec<Mutation> = vec![
            Box::new(|c| c.training_count = 0),
            Box::new(|c| c.test_distinct_count = 0),
            Box::new(|c| c.gold_per_hit = 0),
            Box::new(|c| c.repeat_per_hit = 0),
            Box::new(|c| c.repeat_per_hit = 39),
            Box::new(|c| c.repeat_threshold = -1),
            Box::new(|c| c.repeat_violations_to_reject = 0),
            Box::new(|c| c.repeat_violations_to_reject = 6),
            Box::new(|c| c.min_confidence = -0.1),
            Box::new(|c| c.min_confidence = 1.01),
            Box::new(|c| c.score_max = 1),
            Box::new(|c| c.target_ratings_per_image = 0),
            Box::new(|c| c.min_repeat_gap = 0),
            Box::new(|c| c.min_repeat_gap = 48),
            Box::new(|c| c.consensus_full_share = 0.0),
            Box::new(|c| c.consensus_split_share = 0.9),
            Box::new(|c| c.session_expiry_minutes = 0),
        ];
        for (i, m) in mutations.iter().enumerate() {
            let mut cfg = base.clone();
            m(&mut cfg);
            assert!(cfg.validate().is_err(), "mutation {i} went unnoticed");
        }
    }

    #[test]
    fn kv_file_round_trips() {
        let cfg = StudyConfig {
            min_confidence: 0.8,
            remuneration_label: "45 cents".into(),
            ..StudyConfig::default()
        };
        let text = cfg.to_kv_string();
        assert_eq!(StudyConfig::parse_kv(&text).unwrap(), cfg);
    }

    #[test]
    fn comments_blank_lines_and_quotes() {
        let cfg = StudyConfig::parse_kv(
            "# study\n\nrepeat_threshold = 18\nremuneration_label = \"1 dollar\"\n",
        )
        .unwrap();
        assert_eq!(cfg.repeat_threshold, 18);
        assert_eq!(cfg.remuneration_label, "1 dollar");
        assert!(matches!(
            StudyConfig::parse_kv("nonsense"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            StudyConfig::parse_kv("colour = red"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn env_overrides_file_keys() {
        let mut cfg = StudyConfig::default();
        cfg.apply_env([
            ("STUDYBENCH_REPEAT_THRESHOLD", "25"),
            ("STUDYBENCH_UNRELATED_THING", "x"),
            ("HOME", "/root"),
        ])
        .unwrap();
        assert_eq!(cfg.repeat_threshold, 25);
        assert!(cfg
            .apply_env([("STUDYBENCH_MIN_CONFIDENCE", "high")])
            .is_err());
    }
}
