//! Per-worker task assembly: the fixed training list, a test set mixing
//! least-covered database images with gold controls, and repeated images
//! spread apart in a seeded random order.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::StudyConfig;
use crate::domain::{GoldImageRecord, ImageId, ImageRecord, PresentationId, Role, WorkerId};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub presentation_id: PresentationId,
    pub image_id: ImageId,
    pub role: Role,
    /// 1-based slot in the HIT.
    pub position: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitPlan {
    pub hit_id: String,
    pub worker_id: WorkerId,
    pub presentations: Vec<Presentation>,
    pub seed: u64,
}

/// The image material a study draws HITs from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyMaterials {
    pub pool: Vec<ImageRecord>,
    pub gold: Vec<GoldImageRecord>,
    pub training: Vec<ImageRecord>,
}

impl StudyMaterials {
    pub fn gold_lab_mos(&self) -> HashMap<ImageId, f64> {
        self.gold
            .iter()
            .map(|g| (g.image_id.clone(), g.lab_mos))
            .collect()
    }

    pub fn uri_of(&self, id: &ImageId) -> Option<&str> {
        self.pool
            .iter()
            .chain(self.training.iter())
            .find(|r| &r.image_id == id)
            .map(|r| r.uri.as_str())
            .or_else(|| {
                self.gold
                    .iter()
                    .find(|g| &g.image_id == id)
                    .map(|g| g.uri.as_str())
            })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HitError {
    #[error("image pool exhausted: need {needed} fresh images, {available} available")]
    PoolExhausted { needed: usize, available: usize },
    #[error("gold pool too small: need {needed}, have {available}")]
    GoldPoolTooSmall { needed: usize, available: usize },
    #[error("training list has {got} images, expected {expected}")]
    TrainingCountMismatch { expected: usize, got: usize },
    #[error("no slot keeps repeated image {0} at least the minimum gap apart")]
    RepeatGapInfeasible(ImageId),
    #[error("presentation {0} is not part of this plan")]
    UnknownPresentation(PresentationId),
}

/// Builds one worker's HIT.
///
/// Fresh images are the least-rated pool images according to `coverage`,
/// with ties broken by a seeded shuffle. Repeats are drawn from the fresh
/// picks only, never from gold.
pub fn assemble_hit(
    config: &StudyConfig,
    materials: &StudyMaterials,
    coverage: &HashMap<ImageId, u64>,
    worker_id: &WorkerId,
    seed: u64,
) -> Result<HitPlan, HitError> {
    let training_count = config.training_count as usize;
    let gold_count = config.gold_per_hit as usize;
    let fresh_count = config.fresh_per_hit() as usize;
    let repeat_count = config.repeat_per_hit as usize;

    if materials.training.len() != training_count {
        return Err(HitError::TrainingCountMismatch {
            expected: training_count,
            got: materials.training.len(),
        });
    }
    if materials.gold.len() < gold_count {
        return Err(HitError::GoldPoolTooSmall {
            needed: gold_count,
            available: materials.gold.len(),
        });
    }

    let mut rng = seed::rng(seed);

    let reserved: HashSet<&ImageId> = materials
        .training
        .iter()
        .map(|r| &r.image_id)
        .chain(materials.gold.iter().map(|g| &g.image_id))
        .collect();
    let mut candidates: Vec<&ImageId> = materials
        .pool
        .iter()
        .map(|r| &r.image_id)
        .filter(|id| !reserved.contains(id))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.len() < fresh_count {
        return Err(HitError::PoolExhausted {
            needed: fresh_count,
            available: candidates.len(),
        });
    }
    candidates.shuffle(&mut rng);
    // Stable sort keeps the shuffled order inside each coverage level.
    candidates.sort_by_key(|id| coverage.get(*id).copied().unwrap_or(0));
    let fresh: Vec<ImageId> = candidates[..fresh_count]
        .iter()
        .map(|&id| id.clone())
        .collect();

    let mut gold: Vec<ImageId> = materials.gold.iter().map(|g| g.image_id.clone()).collect();
    gold.sort_unstable();
    gold.shuffle(&mut rng);
    gold.truncate(gold_count);

    let repeated: Vec<ImageId> = fresh
        .choose_multiple(&mut rng, repeat_count.min(fresh.len()))
        .cloned()
        .collect();

    let mut order: Vec<(ImageId, bool)> = fresh
        .into_iter()
        .map(|id| (id, false))
        .chain(gold.into_iter().map(|id| (id, true)))
        .collect();
    order.shuffle(&mut rng);

    // Inserting a copy never shrinks the distance of an already placed
    // pair, so placing pairs one at a time keeps every gap satisfied.
    let gap = config.min_repeat_gap as usize;
    for id in &repeated {
        let first = order
            .iter()
            .position(|(x, _)| x == id)
            .expect("repeat drawn from fresh picks");
        let len = order.len();
        let mut slots: Vec<usize> = Vec::new();
        if first + 1 >= gap {
            slots.extend(0..=first + 1 - gap);
        }
        if first + gap <= len {
            slots.extend(first + gap..=len);
        }
        if slots.is_empty() {
            return Err(HitError::RepeatGapInfeasible(id.clone()));
        }
        let at = slots[rng.random_range(0..slots.len())];
        order.insert(at, (id.clone(), false));
    }

    let repeated: HashSet<&ImageId> = repeated.iter().collect();
    let mut seen: HashSet<ImageId> = HashSet::new();
    let mut presentations = Vec::with_capacity(training_count + order.len());
    for (i, rec) in materials.training.iter().enumerate() {
        presentations.push(slot(i, rec.image_id.clone(), Role::Training));
    }
    for (i, (id, is_gold)) in order.iter().enumerate() {
        let role = if *is_gold {
            Role::Gold
        } else if repeated.contains(id) {
            if seen.insert(id.clone()) {
                Role::RepeatFirst
            } else {
                Role::RepeatSecond
            }
        } else {
            Role::Fresh
        };
        presentations.push(slot(training_count + i, id.clone(), role));
    }

    Ok(HitPlan {
        hit_id: format!("hit-{seed:016x}"),
        worker_id: worker_id.clone(),
        presentations,
        seed,
    })
}

fn slot(index: usize, image_id: ImageId, role: Role) -> Presentation {
    let position = index as u32 + 1;
    Presentation {
        presentation_id: PresentationId(position),
        image_id,
        role,
        position,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextStep {
    /// `training_done` is set on the first test presentation, marking the
    /// end of the training phase.
    Present {
        presentation: Presentation,
        training_done: bool,
    },
    SurveyDue,
}

impl HitPlan {
    pub fn len(&self) -> usize {
        self.presentations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presentations.is_empty()
    }

    pub fn get(&self, id: PresentationId) -> Option<&Presentation> {
        self.presentations.iter().find(|p| p.presentation_id == id)
    }

    pub fn training_len(&self) -> usize {
        self.presentations
            .iter()
            .filter(|p| p.role == Role::Training)
            .count()
    }

    /// Lowest-position presentation not yet completed.
    pub fn next_presentation(
        &self,
        completed: &BTreeSet<PresentationId>,
    ) -> Result<NextStep, HitError> {
        if let Some(unknown) = completed.iter().find(|id| self.get(**id).is_none()) {
            return Err(HitError::UnknownPresentation(*unknown));
        }
        let training = self.training_len();
        Ok(self
            .presentations
            .iter()
            .find(|p| !completed.contains(&p.presentation_id))
            .map(|p| NextStep::Present {
                presentation: p.clone(),
                training_done: training > 0 && p.position as usize == training + 1,
            })
            .unwrap_or(NextStep::SurveyDue))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CaptureTag;
    use std::collections::BTreeMap;

    fn image(id: &str) -> ImageRecord {
        ImageRecord {
            image_id: ImageId::new(id),
            uri: format!("img/{id}.jpg"),
            capture_tag: CaptureTag::Day,
            device_make: None,
        }
    }

    fn materials(pool: usize, gold: usize) -> StudyMaterials {
        StudyMaterials {
            pool: (0..pool).map(|i| image(&format!("db{i:03}"))).collect(),
            gold: (0..gold)
                .map(|i| GoldImageRecord {
                    image_id: ImageId::new(format!("gold{i}")),
                    uri: format!("gold/{i}.bmp"),
                    lab_mos: 20.0 + 12.0 * i as f64,
                    source_label: "lab".into(),
                })
                .collect(),
            training: (0..7).map(|i| image(&format!("train{i}"))).collect(),
        }
    }

    #[test]
    fn default_hit_composition() {
        let cfg = StudyConfig::default();
        let plan =
            assemble_hit(&cfg, &materials(120, 5), &HashMap::new(), &"w".into(), 42).unwrap();
        assert_eq!(plan.len(), 55);
        assert!(plan.presentations[..7]
            .iter()
            .all(|p| p.role == Role::Training));
        let test = &plan.presentations[7..];
        assert_eq!(test.len(), 48);
        let distinct: BTreeSet<_> = test.iter().map(|p| &p.image_id).collect();
        assert_eq!(distinct.len(), 43);
        assert_eq!(test.iter().filter(|p| p.role == Role::Gold).count(), 5);
        assert_eq!(
            test.iter().filter(|p| p.role == Role::RepeatFirst).count(),
            5
        );
        assert_eq!(
            test.iter().filter(|p| p.role == Role::RepeatSecond).count(),
            5
        );
        let database: BTreeSet<_> = test
            .iter()
            .filter(|p| p.role != Role::Gold)
            .map(|p| &p.image_id)
            .collect();
        assert_eq!(database.len(), 38);
        for (i, p) in plan.presentations.iter().enumerate() {
            assert_eq!(p.position as usize, i + 1);
            assert_eq!(p.presentation_id.0, p.position);
        }
    }

    #[test]
    fn same_seed_same_plan_bytes() {
        let cfg = StudyConfig::default();
        let m = materials(90, 8);
        let a = assemble_hit(&cfg, &m, &HashMap::new(), &"w".into(), 42).unwrap();
        let b = assemble_hit(&cfg, &m, &HashMap::new(), &"w".into(), 42).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        let c = assemble_hit(&cfg, &m, &HashMap::new(), &"w".into(), 43).unwrap();
        assert_ne!(a.presentations, c.presentations);
    }

    #[test]
    fn zero_coverage_images_are_always_picked() {
        let cfg = StudyConfig::default();
        let m = materials(120, 5);
        let mut coverage: HashMap<ImageId, u64> =
            m.pool.iter().map(|r| (r.image_id.clone(), 200)).collect();
        coverage.insert("db017".into(), 0);
        coverage.insert("db093".into(), 0);
        for seed in 0..50 {
            let plan = assemble_hit(&cfg, &m, &coverage, &"w".into(), seed).unwrap();
            let ids: BTreeSet<_> = plan
                .presentations
                .iter()
                .map(|p| p.image_id.as_str())
                .collect();
            assert!(
                ids.contains("db017") && ids.contains("db093"),
                "seed {seed}"
            );
        }
    }

    /// Brute force: every image whose coverage is strictly below the
    /// 38th-smallest count must be chosen.
    #[test]
    fn fresh_picks_match_min_coverage_oracle() {
        let cfg = StudyConfig::default();
        let m = materials(100, 5);
        for seed in 0..30u64 {
            let coverage: HashMap<ImageId, u64> = m
                .pool
                .iter()
                .enumerate()
                .map(|(i, r)| (r.image_id.clone(), seed::derive(seed, i as u64) % 7))
                .collect();
            let mut counts: Vec<u64> = coverage.values().copied().collect();
            counts.sort_unstable();
            let cutoff = counts[37];
            let plan = assemble_hit(&cfg, &m, &coverage, &"w".into(), seed).unwrap();
            let picked: BTreeSet<&ImageId> = plan
                .presentations
                .iter()
                .filter(|p| matches!(p.role, Role::Fresh | Role::RepeatFirst))
                .map(|p| &p.image_id)
                .collect();
            for (id, c) in &coverage {
                if *c < cutoff {
                    assert!(picked.contains(id));
                }
                if *c > cutoff {
                    assert!(!picked.contains(id));
                }
            }
        }
    }

    #[test]
    fn repeat_gap_is_respected() {
        let cfg = StudyConfig {
            min_repeat_gap: 20,
            ..StudyConfig::default()
        };
        let m = materials(60, 5);
        for seed in 0..200 {
            let plan = assemble_hit(&cfg, &m, &HashMap::new(), &"w".into(), seed).unwrap();
            let mut first: BTreeMap<&ImageId, u32> = BTreeMap::new();
            for p in &plan.presentations {
                match p.role {
                    Role::RepeatFirst => {
                        first.insert(&p.image_id, p.position);
                    }
                    Role::RepeatSecond => {
                        assert!(p.position - first[&p.image_id] >= 20);
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn errors_for_small_pools() {
        let cfg = StudyConfig::default();
        assert_eq!(
            assemble_hit(&cfg, &materials(30, 5), &HashMap::new(), &"w".into(), 1),
            Err(HitError::PoolExhausted {
                needed: 38,
                available: 30
            })
        );
        assert_eq!(
            assemble_hit(&cfg, &materials(60, 4), &HashMap::new(), &"w".into(), 1),
            Err(HitError::GoldPoolTooSmall {
                needed: 5,
                available: 4
            })
        );
        let mut m = materials(60, 5);
        m.training.pop();
        assert!(matches!(
            assemble_hit(&cfg, &m, &HashMap::new(), &"w".into(), 1),
            Err(HitError::TrainingCountMismatch { .. })
        ));
    }

    #[test]
    fn next_presentation_walks_the_plan() {
        let cfg = StudyConfig::default();
        let plan = assemble_hit(&cfg, &materials(60, 5), &HashMap::new(), &"w".into(), 3).unwrap();
        let mut done = BTreeSet::new();
        match plan.next_presentation(&done).unwrap() {
            NextStep::Present {
                presentation,
                training_done,
            } => {
                assert_eq!(presentation.position, 1);
                assert_eq!(presentation.role, Role::Training);
                assert!(!training_done);
            }
            other => panic!("{other:?}"),
        }
        done.extend((1..=7).map(PresentationId));
        match plan.next_presentation(&done).unwrap() {
            NextStep::Present {
                presentation,
                training_done,
            } => {
                assert_eq!(presentation.position, 8);
                assert!(training_done);
            }
            other => panic!("{other:?}"),
        }
        done.extend((8..=55).map(PresentationId));
        assert_eq!(plan.next_presentation(&done).unwrap(), NextStep::SurveyDue);
        done.insert(PresentationId(56));
        assert_eq!(
            plan.next_presentation(&done),
            Err(HitError::UnknownPresentation(PresentationId(56)))
        );
    }
}
