//! On-disk study layout and the session export snapshot.
//!
//! A study directory holds `study.conf`, `pool.csv`, `gold.csv` and
//! `training.csv` (plus `latent.csv` for synthetic studies).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, StudyConfig};
use crate::domain::*;
use crate::hit::StudyMaterials;
use crate::sim::LatentQualityMap;
use crate::validation::{self, ValidationError, ValidationVerdict};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("duplicate image id {0}")]
    DuplicateImage(ImageId),
    #[error("gold image {0} has a non-finite lab MOS")]
    BadGoldMos(ImageId),
    #[error("{0}")]
    Other(String),
}

pub const CONFIG_FILE: &str = "study.conf";
pub const POOL_FILE: &str = "pool.csv";
pub const GOLD_FILE: &str = "gold.csv";
pub const TRAINING_FILE: &str = "training.csv";
pub const LATENT_FILE: &str = "latent.csv";

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StudyError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|source| StudyError::Csv {
        path: path.to_owned(),
        source,
    })?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| StudyError::Csv {
            path: path.to_owned(),
            source,
        })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), StudyError> {
    let wrap = |source| StudyError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(|source| StudyError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_images(path: &Path) -> Result<Vec<ImageRecord>, StudyError> {
    read_csv(path)
}

pub fn read_gold(path: &Path) -> Result<Vec<GoldImageRecord>, StudyError> {
    read_csv(path)
}

impl StudyMaterials {
    /// Image ids unique across pool, gold and training; gold MOS finite.
    pub fn check(&self) -> Result<(), StudyError> {
        let mut seen = HashSet::new();
        for id in self
            .pool
            .iter()
            .map(|r| &r.image_id)
            .chain(self.gold.iter().map(|g| &g.image_id))
            .chain(self.training.iter().map(|r| &r.image_id))
        {
            if !seen.insert(id) {
                return Err(StudyError::DuplicateImage(id.clone()));
            }
        }
        if let Some(g) = self.gold.iter().find(|g| !g.lab_mos.is_finite()) {
            return Err(StudyError::BadGoldMos(g.image_id.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    pub materials: StudyMaterials,
}

impl Study {
    /// Loads a study directory. A missing `study.conf` means defaults;
    /// `STUDYBENCH_*` variables override either.
    pub fn load(dir: &Path) -> Result<Self, StudyError> {
        let conf = dir.join(CONFIG_FILE);
        let config = StudyConfig::load_with_env(conf.exists().then_some(conf.as_path()))?;
        let materials = StudyMaterials {
            pool: read_images(&dir.join(POOL_FILE))?,
            gold: read_gold(&dir.join(GOLD_FILE))?,
            training: read_images(&dir.join(TRAINING_FILE))?,
        };
        materials.check()?;
        Ok(Study { config, materials })
    }

    pub fn save(&self, dir: &Path) -> Result<(), StudyError> {
        std::fs::create_dir_all(dir).map_err(|source| StudyError::Io {
            path: dir.to_owned(),
            source,
        })?;
        let conf = dir.join(CONFIG_FILE);
        std::fs::write(&conf, self.config.to_kv_string())
            .map_err(|source| StudyError::Io { path: conf, source })?;
        write_csv(&dir.join(POOL_FILE), &self.materials.pool)?;
        write_csv(&dir.join(GOLD_FILE), &self.materials.gold)?;
        write_csv(&dir.join(TRAINING_FILE), &self.materials.training)?;
        Ok(())
    }
}

pub fn save_latent(dir: &Path, latent: &LatentQualityMap) -> Result<(), StudyError> {
    let path = dir.join(LATENT_FILE);
    let file = File::create(&path).map_err(|source| StudyError::Io {
        path: path.clone(),
        source,
    })?;
    latent
        .write_csv(file)
        .map_err(|source| StudyError::Csv { path, source })
}

pub fn load_latent(path: &Path) -> Result<LatentQualityMap, StudyError> {
    let file = File::open(path).map_err(|source| StudyError::Io {
        path: path.to_owned(),
        source,
    })?;
    LatentQualityMap::read_csv(file).map_err(StudyError::Other)
}

/// Everything analysis needs from a running study: configuration, gold
/// truths, per-image coverage and every finished session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub config: StudyConfig,
    pub gold: Vec<GoldImageRecord>,
    pub coverage: std::collections::BTreeMap<ImageId, u64>,
    pub sessions: Vec<Session>,
}

impl StoreSnapshot {
    pub fn gold_lab_mos(&self) -> HashMap<ImageId, f64> {
        self.gold
            .iter()
            .map(|g| (g.image_id.clone(), g.lab_mos))
            .collect()
    }

    pub fn complete_sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions
            .iter()
            .filter(|s| s.state == SessionState::Complete)
    }

    pub fn validate(&self) -> Result<Vec<ValidationVerdict>, ValidationError> {
        validation::validate_all(&self.sessions, &self.config, &self.gold_lab_mos())
    }

    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let file = File::open(path).map_err(|source| StudyError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| StudyError::Other(format!("{}: {e}", path.display())))
    }
}

pub fn accepted_ids(verdicts: &[ValidationVerdict]) -> HashSet<SessionId> {
    verdicts
        .iter()
        .filter(|v| v.accepted())
        .map(|v| v.session_id.clone())
        .collect()
}
