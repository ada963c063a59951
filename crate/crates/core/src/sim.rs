//! Synthetic rater populations.
//!
//! A conscientious rater scores `q + b + e`, where `b ~ N(0, bias_sigma)` is
//! fixed per rater and `e ~ N(0, intra_sigma)` is drawn per rating. Keeping
//! the per-rating noise small relative to the rater bias gives an
//! inter-subject spread near 19 while honest raters still pass the repeat
//! rule.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::*;
use crate::hit::StudyMaterials;
use crate::seed::{self, StudyRng};

pub const SCORE_MIN: i32 = 1;
pub const SCORE_MAX: i32 = 100;
/// Per-rating noise used by inconsistent raters on the second showing of
/// a repeated image.
pub const INCONSISTENT_SIGMA: f64 = 35.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown worker kind `{0}`")]
    UnknownKind(String),
    #[error("malformed mixture entry `{0}`")]
    MalformedMixture(String),
    #[error("mixture fractions sum to {0}, expected 1")]
    FractionsDoNotSumToOne(f64),
    #[error("negative sigma")]
    NegativeSigma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerKind {
    Conscientious,
    /// A systematically harsh or lenient rater: fixed offset of
    /// ±2·bias_sigma.
    Biased,
    /// Uniform random scores.
    Spammer,
    /// Scores clustered around the middle of the scale.
    CenterSpammer,
    /// Conscientious except on the second showing of a repeated image.
    RepeatInconsistent,
    /// Conscientious, but reports not wearing the lenses they normally wear.
    LensViolator,
}

impl WorkerKind {
    pub const ALL: [WorkerKind; 6] = [
        WorkerKind::Conscientious,
        WorkerKind::Biased,
        WorkerKind::Spammer,
        WorkerKind::CenterSpammer,
        WorkerKind::RepeatInconsistent,
        WorkerKind::LensViolator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkerKind::Conscientious => "conscientious",
            WorkerKind::Biased => "biased",
            WorkerKind::Spammer => "spammer",
            WorkerKind::CenterSpammer => "center_spammer",
            WorkerKind::RepeatInconsistent => "repeat_inconsistent",
            WorkerKind::LensViolator => "lens_violator",
        }
    }
}

impl fmt::Display for WorkerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkerKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().replace('-', "_").to_ascii_lowercase();
        WorkerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(SimError::UnknownKind(s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub kind: WorkerKind,
    pub bias_sigma: f64,
    pub intra_sigma: f64,
    pub confidence: f64,
    pub survey_template: Survey,
}

impl WorkerProfile {
    pub fn new(kind: WorkerKind, survey_template: Survey) -> Self {
        let mut survey = survey_template;
        if kind == WorkerKind::LensViolator {
            survey.wears_lenses = true;
            survey.wore_lenses_now = false;
        } else if survey.wears_lenses {
            survey.wore_lenses_now = true;
        }
        WorkerProfile {
            kind,
            bias_sigma: 17.0,
            intra_sigma: 7.0,
            confidence: 0.9,
            survey_template: survey,
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        if self.bias_sigma < 0.0 || self.intra_sigma < 0.0 {
            Err(SimError::NegativeSigma)
        } else {
            Ok(())
        }
    }

    /// Per-rater offset. Spammers ignore it.
    pub fn draw_bias(&self, rng: &mut StudyRng) -> f64 {
        match self.kind {
            WorkerKind::Biased => {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * 2.0 * self.bias_sigma
            }
            WorkerKind::Spammer | WorkerKind::CenterSpammer => 0.0,
            _ => gaussian(rng, 0.0, self.bias_sigma),
        }
    }
}

fn gaussian(rng: &mut StudyRng, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    Normal::new(mean, sigma)
        .expect("sigma checked non-negative")
        .sample(rng)
}

fn clamp_score(x: f64) -> i32 {
    (x.round() as i64).clamp(SCORE_MIN as i64, SCORE_MAX as i64) as i32
}

/// One simulated score for an image of latent quality `true_quality`.
pub fn simulate_rating(
    profile: &WorkerProfile,
    true_quality: f64,
    worker_bias: f64,
    repeat_second: bool,
    rng: &mut StudyRng,
) -> i32 {
    match profile.kind {
        WorkerKind::Spammer => rng.random_range(SCORE_MIN..=SCORE_MAX),
        WorkerKind::CenterSpammer => clamp_score(gaussian(rng, 50.0, 5.0)),
        WorkerKind::RepeatInconsistent if repeat_second => {
            clamp_score(true_quality + worker_bias + gaussian(rng, 0.0, INCONSISTENT_SIGMA))
        }
        _ => clamp_score(true_quality + worker_bias + gaussian(rng, 0.0, profile.intra_sigma)),
    }
}

/// A rater with state: its bias, RNG stream and the images it has seen
/// (to recognize second showings).
#[derive(Clone, Debug)]
pub struct SimulatedWorker {
    pub worker_id: WorkerId,
    pub profile: WorkerProfile,
    pub bias: f64,
    rng: StudyRng,
    seen: HashSet<ImageId>,
}

impl SimulatedWorker {
    pub fn new(worker_id: WorkerId, profile: WorkerProfile, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let bias = profile.draw_bias(&mut rng);
        SimulatedWorker {
            worker_id,
            profile,
            bias,
            rng,
            seen: HashSet::new(),
        }
    }

    pub fn rate(&mut self, image_id: &ImageId, true_quality: f64) -> i32 {
        let second = !self.seen.insert(image_id.clone());
        simulate_rating(
            &self.profile,
            true_quality,
            self.bias,
            second,
            &mut self.rng,
        )
    }
}

/// Score → slider position such that the server maps it back to `score`.
pub fn score_to_slider(score: i32, score_min: i32, score_max: i32) -> f64 {
    f64::from(score - score_min) / f64::from(score_max - score_min)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentQualityMap(pub BTreeMap<ImageId, f64>);

impl LatentQualityMap {
    pub fn get(&self, id: &ImageId) -> Option<f64> {
        self.0.get(id).copied()
    }

    /// `image_id,quality`
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image_id", "quality"])?;
        for (id, q) in &self.0 {
            w.write_record([id.as_str(), &format!("{q:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let id = rec.get(0).unwrap_or("").trim();
            let q: f64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| format!("quality for {id}: {e}"))?;
            map.insert(ImageId::new(id), q);
        }
        Ok(LatentQualityMap(map))
    }
}

/// `kind=fraction` pairs, e.g. `conscientious=0.9,spammer=0.1`.
pub fn parse_mixture(text: &str) -> Result<Vec<(WorkerKind, f64)>, SimError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| SimError::MalformedMixture(part.to_owned()))?;
        let frac: f64 = v
            .trim()
            .parse()
            .map_err(|_| SimError::MalformedMixture(part.to_owned()))?;
        if !(0.0..=1.0).contains(&frac) {
            return Err(SimError::MalformedMixture(part.to_owned()));
        }
        out.push((k.parse()?, frac));
    }
    let total: f64 = out.iter().map(|(_, f)| f).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(SimError::FractionsDoNotSumToOne(total));
    }
    Ok(out)
}

/// Exact head-counts by largest remainder, then a seeded shuffle of who
/// gets which kind.
pub fn assign_kinds(n: usize, mixture: &[(WorkerKind, f64)], seed: u64) -> Vec<WorkerKind> {
    let mut counts: Vec<(WorkerKind, usize, f64)> = mixture
        .iter()
        .map(|&(k, f)| {
            let exact = f * n as f64;
            (k, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    let mut kinds: Vec<WorkerKind> = counts
        .iter()
        .flat_map(|&(k, c, _)| std::iter::repeat_n(k, c))
        .collect();
    kinds.shuffle(&mut seed::rng(seed));
    kinds
}

/// A plausible survey drawn from a broad demographic mix.
pub fn random_survey(rng: &mut StudyRng) -> Survey {
    fn pick<T: Copy>(rng: &mut StudyRng, items: &[(T, f64)]) -> T {
        let total: f64 = items.iter().map(|i| i.1).sum();
        let mut x = rng.random_range(0.0..total);
        for &(v, w) in items {
            if x < w {
                return v;
            }
            x -= w;
        }
        items[items.len() - 1].0
    }
    let wears_lenses = rng.random_bool(0.4);
    Survey {
        gender: pick(
            rng,
            &[
                (Gender::Male, 0.55),
                (Gender::Female, 0.43),
                (Gender::Other, 0.02),
            ],
        ),
        age_band: pick(
            rng,
            &[
                (AgeBand::Under20, 0.05),
                (AgeBand::From20To30, 0.45),
                (AgeBand::From30To40, 0.28),
                (AgeBand::From40To50, 0.12),
                (AgeBand::From50To60, 0.07),
                (AgeBand::Over60, 0.03),
            ],
        ),
        distance_band: pick(
            rng,
            &[
                (DistanceBand::Under15In, 0.25),
                (DistanceBand::From15To30In, 0.68),
                (DistanceBand::Over30In, 0.07),
            ],
        ),
        device_class: pick(
            rng,
            &[
                (DeviceClass::Desktop, 0.5),
                (DeviceClass::Laptop, 0.4),
                (DeviceClass::Tablet, 0.04),
                (DeviceClass::Phone, 0.05),
                (DeviceClass::Other, 0.01),
            ],
        ),
        wears_lenses,
        wore_lenses_now: wears_lenses,
        annoyance: pick(
            rng,
            &[
                (Annoyance::Yes, 0.7),
                (Annoyance::No, 0.1),
                (Annoyance::DontCare, 0.15),
                (Annoyance::DontKnow, 0.05),
            ],
        ),
        preferred_capture_device: pick(
            rng,
            &[
                (CaptureDevice::MobileDevice, 0.7),
                (CaptureDevice::PointAndShoot, 0.12),
                (CaptureDevice::Dslr, 0.15),
                (CaptureDevice::Other, 0.03),
            ],
        ),
    }
}

/// A synthetic study: `n_pool` database images with latent quality
/// uniform on `[5, 95]` (`night` of them tagged night), `n_gold` gold
/// images with laboratory MOS stratified across the same range, and a
/// 7-image training list spanning the range. Gold truths equal their lab
/// MOS in the returned latent map.
pub fn synthetic_study(
    n_pool: usize,
    n_gold: usize,
    n_training: usize,
    night: usize,
    seed: u64,
) -> (StudyMaterials, LatentQualityMap) {
    let mut rng = seed::rng(seed);
    let mut latent = BTreeMap::new();
    let mut night_idx: Vec<usize> = (0..n_pool).collect();
    night_idx.shuffle(&mut rng);
    let night_set: HashSet<usize> = night_idx.into_iter().take(night).collect();
    let pool = (0..n_pool)
        .map(|i| {
            let id = ImageId::new(format!("img{i:04}"));
            latent.insert(id.clone(), rng.random_range(5.0..95.0));
            ImageRecord {
                uri: format!("images/{id}.jpg"),
                image_id: id,
                capture_tag: if night_set.contains(&i) {
                    CaptureTag::Night
                } else {
                    CaptureTag::Day
                },
                device_make: None,
            }
        })
        .collect();
    let gold = (0..n_gold)
        .map(|i| {
            let id = ImageId::new(format!("gold{i:02}"));
            let width = 90.0 / n_gold.max(1) as f64;
            let lab_mos = 5.0 + width * (i as f64 + rng.random_range(0.0..1.0));
            latent.insert(id.clone(), lab_mos);
            GoldImageRecord {
                uri: format!("gold/{id}.bmp"),
                image_id: id,
                lab_mos,
                source_label: "synthetic-lab".into(),
            }
        })
        .collect();
    let training = (0..n_training)
        .map(|i| {
            let id = ImageId::new(format!("train{i}"));
            let q = 10.0 + 80.0 * i as f64 / (n_training.max(2) - 1) as f64;
            latent.insert(id.clone(), q);
            ImageRecord {
                uri: format!("training/{id}.jpg"),
                image_id: id,
                capture_tag: CaptureTag::Day,
                device_make: None,
            }
        })
        .collect();
    (
        StudyMaterials {
            pool,
            gold,
            training,
        },
        LatentQualityMap(latent),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(kind: WorkerKind) -> WorkerProfile {
        WorkerProfile::new(kind, random_survey(&mut seed::rng(0)))
    }

    #[test]
    fn noiseless_rater_is_exact() {
        let mut p = profile(WorkerKind::Conscientious);
        p.intra_sigma = 0.0;
        let mut rng = seed::rng(1);
        assert_eq!(simulate_rating(&p, 70.0, 0.0, false, &mut rng), 70);
    }

    #[test]
    fn scores_clamp_at_the_top() {
        let p = profile(WorkerKind::Conscientious);
        let mut rng = seed::rng(2);
        for _ in 0..1000 {
            let s = simulate_rating(&p, 100.0, 0.0, false, &mut rng);
            assert!((1..=100).contains(&s));
        }
        assert_eq!(simulate_rating(&p, 100.0, 40.0, false, &mut rng), 100);
    }

    #[test]
    fn spammer_mean_matches_uniform_integer_mean() {
        let p = profile(WorkerKind::Spammer);
        let mut rng = seed::rng(3);
        let n = 100_000;
        let total: i64 = (0..n)
            .map(|_| simulate_rating(&p, 10.0, 0.0, false, &mut rng) as i64)
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 50.5).abs() < 0.3, "{mean}");
    }

    #[test]
    fn mixture_parsing_and_assignment() {
        let m = parse_mixture("conscientious=0.9, spammer=0.1").unwrap();
        let kinds = assign_kinds(300, &m, 4);
        assert_eq!(kinds.len(), 300);
        assert_eq!(
            kinds.iter().filter(|k| **k == WorkerKind::Spammer).count(),
            30
        );
        let odd = assign_kinds(7, &parse_mixture("spammer=0.5,biased=0.5").unwrap(), 1);
        assert_eq!(odd.len(), 7);
        assert!(matches!(
            parse_mixture("spammer=0.5"),
            Err(SimError::FractionsDoNotSumToOne(_))
        ));
        assert!(parse_mixture("gremlin=1").is_err());
    }

    #[test]
    fn slider_inverse_recovers_scores() {
        for s in 1..=100 {
            let p = score_to_slider(s, 1, 100);
            assert_eq!((1.0 + 99.0 * p).round() as i32, s);
        }
    }

    #[test]
    fn repeat_inconsistent_only_differs_on_second_showing() {
        let mut p = profile(WorkerKind::RepeatInconsistent);
        p.intra_sigma = 0.0;
        let mut w = SimulatedWorker::new("w".into(), p, 5);
        let id = ImageId::new("x");
        let first = w.rate(&id, 50.0);
        assert_eq!(first, (50.0 + w.bias).round().clamp(1.0, 100.0) as i32);
        let seconds: Vec<i32> = (0..20).map(|_| w.rate(&id, 50.0)).collect();
        assert!(seconds.iter().any(|&s| s != first));
    }

    #[test]
    fn lens_violator_survey() {
        let p = profile(WorkerKind::LensViolator);
        assert!(p.survey_template.wears_lenses && !p.survey_template.wore_lenses_now);
        let c = profile(WorkerKind::Conscientious);
        assert!(!c.survey_template.wears_lenses || c.survey_template.wore_lenses_now);
    }

    #[test]
    fn synthetic_study_shape() {
        let (m, latent) = synthetic_study(120, 5, 7, 10, 1);
        assert_eq!((m.pool.len(), m.gold.len(), m.training.len()), (120, 5, 7));
        assert_eq!(latent.0.len(), 132);
        assert_eq!(
            m.pool
                .iter()
                .filter(|r| r.capture_tag == CaptureTag::Night)
                .count(),
            10
        );
        for g in &m.gold {
            assert_eq!(latent.get(&g.image_id), Some(g.lab_mos));
        }
    }
}
