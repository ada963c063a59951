//! Shared record types for a rating study: images, ratings, surveys and
//! the per-worker session record that validation and aggregation consume.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::hit::HitPlan;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque image token, unique within a study.
    ImageId
);
string_id!(WorkerId);
string_id!(SessionId);

/// Identifies one slot of a [`HitPlan`]. Equal to the slot's 1-based position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PresentationId(pub u32);

impl fmt::Display for PresentationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps a slider position in `[0, 1]` to an integer score,
/// `round(score_min + (score_max - score_min) * position)` with halves
/// rounded away from zero. `None` for positions outside the slider.
pub fn slider_to_score(position: f64, score_min: i32, score_max: i32) -> Option<i32> {
    if !(0.0..=1.0).contains(&position) {
        return None;
    }
    let span = f64::from(score_max - score_min);
    Some((f64::from(score_min) + span * position).round() as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureTag {
    Day,
    Night,
}

impl FromStr for CaptureTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" => Ok(CaptureTag::Day),
            "night" => Ok(CaptureTag::Night),
            other => Err(format!("unknown capture tag `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub uri: String,
    pub capture_tag: CaptureTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_make: Option<String>,
}

/// A control image with a trusted laboratory MOS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldImageRecord {
    pub image_id: ImageId,
    pub uri: String,
    pub lab_mos: f64,
    pub source_label: String,
}

/// What a presentation slot is for. Workers never see this.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Training,
    Fresh,
    Gold,
    RepeatFirst,
    RepeatSecond,
}

impl Role {
    pub fn is_test(self) -> bool {
        !matches!(self, Role::Training)
    }

    /// Roles whose scores count towards an image's MOS: one opinion per
    /// subject per database image.
    pub fn counts_for_mos(self) -> bool {
        matches!(self, Role::Fresh | Role::RepeatFirst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub session_id: SessionId,
    pub presentation_id: PresentationId,
    pub image_id: ImageId,
    pub score: i32,
    pub role: Role,
    pub elapsed_ms: u64,
    /// Raw slider position that produced `score`; kept so that a replayed
    /// submission can be told apart from a conflicting one.
    pub slider_position: f64,
    pub rated_at: DateTime<Utc>,
}

macro_rules! survey_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.trim();
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| format!("`{s}` is not a valid {}", stringify!($name)))
            }
        }
    };
}

survey_enum!(Gender {
    Male => "male",
    Female => "female",
    Other => "other",
    Undisclosed => "undisclosed",
});

survey_enum!(AgeBand {
    Under20 => "lt20",
    From20To30 => "20-30",
    From30To40 => "30-40",
    From40To50 => "40-50",
    From50To60 => "50-60",
    Over60 => "gt60",
});

survey_enum!(
    /// Self-reported viewing distance.
    DistanceBand {
        Under15In => "lt15in",
        From15To30In => "15-30in",
        Over30In => "gt30in",
    }
);

survey_enum!(DeviceClass {
    Desktop => "desktop",
    Laptop => "laptop",
    Tablet => "tablet",
    Phone => "phone",
    Other => "other",
});

survey_enum!(
    /// Answer to "does poor picture quality on the Internet bother you?".
    Annoyance {
        Yes => "yes",
        No => "no",
        DontCare => "dont_care",
        DontKnow => "dont_know",
    }
);

survey_enum!(CaptureDevice {
    MobileDevice => "mobile",
    PointAndShoot => "point_and_shoot",
    Dslr => "dslr",
    Other => "other",
});

/// A completed end-of-task questionnaire. Every field is required.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Survey {
    pub gender: Gender,
    pub age_band: AgeBand,
    pub distance_band: DistanceBand,
    pub device_class: DeviceClass,
    pub wears_lenses: bool,
    pub wore_lenses_now: bool,
    pub annoyance: Annoyance,
    pub preferred_capture_device: CaptureDevice,
}

/// Survey as submitted over the wire, where any answer may be missing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyForm {
    pub gender: Option<Gender>,
    pub age_band: Option<AgeBand>,
    pub distance_band: Option<DistanceBand>,
    pub device_class: Option<DeviceClass>,
    pub wears_lenses: Option<bool>,
    pub wore_lenses_now: Option<bool>,
    pub annoyance: Option<Annoyance>,
    pub preferred_capture_device: Option<CaptureDevice>,
}

impl SurveyForm {
    /// Names of the unanswered fields, in declaration order.
    pub fn missing_fields(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if self.gender.is_none() {
            missing.push("gender");
        }
        if self.age_band.is_none() {
            missing.push("age_band");
        }
        if self.distance_band.is_none() {
            missing.push("distance_band");
        }
        if self.device_class.is_none() {
            missing.push("device_class");
        }
        if self.wears_lenses.is_none() {
            missing.push("wears_lenses");
        }
        if self.wore_lenses_now.is_none() {
            missing.push("wore_lenses_now");
        }
        if self.annoyance.is_none() {
            missing.push("annoyance");
        }
        if self.preferred_capture_device.is_none() {
            missing.push("preferred_capture_device");
        }
        missing
    }

    pub fn complete(&self) -> Result<Survey, Vec<&'static str>> {
        match (
            self.gender,
            self.age_band,
            self.distance_band,
            self.device_class,
            self.wears_lenses,
            self.wore_lenses_now,
            self.annoyance,
            self.preferred_capture_device,
        ) {
            (
                Some(gender),
                Some(age_band),
                Some(distance_band),
                Some(device_class),
                Some(wears_lenses),
                Some(wore_lenses_now),
                Some(annoyance),
                Some(preferred_capture_device),
            ) => Ok(Survey {
                gender,
                age_band,
                distance_band,
                device_class,
                wears_lenses,
                wore_lenses_now,
                annoyance,
                preferred_capture_device,
            }),
            _ => Err(self.missing_fields()),
        }
    }
}

impl From<&Survey> for SurveyForm {
    fn from(s: &Survey) -> Self {
        SurveyForm {
            gender: Some(s.gender),
            age_band: Some(s.age_band),
            distance_band: Some(s.distance_band),
            device_class: Some(s.device_class),
            wears_lenses: Some(s.wears_lenses),
            wore_lenses_now: Some(s.wore_lenses_now),
            annoyance: Some(s.annoyance),
            preferred_capture_device: Some(s.preferred_capture_device),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Instructions,
    Training,
    Testing,
    Survey,
    Complete,
    Blocked,
    Rejected,
}

impl SessionState {
    pub const ALL: [SessionState; 7] = [
        SessionState::Instructions,
        SessionState::Training,
        SessionState::Testing,
        SessionState::Survey,
        SessionState::Complete,
        SessionState::Blocked,
        SessionState::Rejected,
    ];

    /// Legal single-step transitions. Any unfinished session may be
    /// rejected on expiry.
    pub fn can_transition(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (Instructions, Training)
                | (Instructions, Blocked)
                | (Training, Testing)
                | (Testing, Survey)
                | (Survey, Complete)
                | (Training | Testing | Survey, Rejected)
        )
    }

    pub fn accepts_ratings(self) -> bool {
        matches!(self, SessionState::Training | SessionState::Testing)
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            SessionState::Complete | SessionState::Blocked | SessionState::Rejected
        )
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SessionState::Instructions => "instructions",
            SessionState::Training => "training",
            SessionState::Testing => "testing",
            SessionState::Survey => "survey",
            SessionState::Complete => "complete",
            SessionState::Blocked => "blocked",
            SessionState::Rejected => "rejected",
        };
        f.write_str(s)
    }
}

/// One worker's run through a HIT.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub worker_id: WorkerId,
    pub confidence: f64,
    pub state: SessionState,
    pub plan: HitPlan,
    pub ratings: Vec<Rating>,
    pub survey: Option<Survey>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl Session {
    /// Scores keyed by role, in presentation order.
    pub fn ratings_with_role(&self, role: Role) -> impl Iterator<Item = &Rating> {
        self.ratings.iter().filter(move |r| r.role == role)
    }

    /// `(first, second)` score pairs for every repeated image, in the order
    /// the first presentations were shown.
    pub fn repeat_pairs(&self) -> Vec<(i32, i32)> {
        let mut seconds: BTreeMap<&ImageId, i32> = BTreeMap::new();
        for r in self.ratings_with_role(Role::RepeatSecond) {
            seconds.insert(&r.image_id, r.score);
        }
        self.ratings_with_role(Role::RepeatFirst)
            .filter_map(|r| seconds.get(&r.image_id).map(|&s| (r.score, s)))
            .collect()
    }

    pub fn gold_scores(&self) -> BTreeMap<ImageId, i32> {
        self.ratings_with_role(Role::Gold)
            .map(|r| (r.image_id.clone(), r.score))
            .collect()
    }
}
