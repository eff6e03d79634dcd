use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four viewing instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TaskLabel {
    Decade = 1,
    Memorize = 2,
    People = 3,
    Wealth = 4,
}

impl TaskLabel {
    pub const ALL: [TaskLabel; 4] = [
        TaskLabel::Decade,
        TaskLabel::Memorize,
        TaskLabel::People,
        TaskLabel::Wealth,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based class index used by the decoders.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<TaskLabel> {
        match code {
            1 => Some(TaskLabel::Decade),
            2 => Some(TaskLabel::Memorize),
            3 => Some(TaskLabel::People),
            4 => Some(TaskLabel::Wealth),
            _ => None,
        }
    }

    pub fn from_index(index: usize) -> Option<TaskLabel> {
        u8::try_from(index + 1).ok().and_then(TaskLabel::from_code)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskLabel::Decade => "decade",
            TaskLabel::Memorize => "memorize",
            TaskLabel::People => "people",
            TaskLabel::Wealth => "wealth",
        }
    }
}

impl From<TaskLabel> for u8 {
    fn from(t: TaskLabel) -> u8 {
        t.code()
    }
}

impl TryFrom<u8> for TaskLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        TaskLabel::from_code(v).ok_or_else(|| format!("unknown task {v}"))
    }
}

impl std::fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationRecord {
    pub x: f64,
    pub y: f64,
    /// Milliseconds.
    pub duration: f64,
    pub pupil: f64,
}

impl FixationRecord {
    pub fn channels(&self) -> [f64; 4] {
        [self.x, self.y, self.duration, self.pupil]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.channels().iter().all(|v| v.is_finite()) {
            return Err(Error::Domain {
                value: f64::NAN,
                domain: "finite fixation fields",
            });
        }
        if !(self.duration > 0.0 && self.pupil > 0.0) {
            return Err(Error::SchemaMismatch(
                "fixation duration and pupil must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Identity of a sample: one participant viewing one image under one task.
pub type SampleKey = (String, String, TaskLabel);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanpathSample {
    pub participant_id: String,
    pub image_id: String,
    pub task: TaskLabel,
    /// Temporal order.
    pub fixations: Vec<FixationRecord>,
}

impl ScanpathSample {
    pub fn key(&self) -> SampleKey {
        (self.participant_id.clone(), self.image_id.clone(), self.task)
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    /// Values of one channel (0 = x, 1 = y, 2 = duration, 3 = pupil).
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.fixations.iter().map(|f| f.channels()[c]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Surrogate,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<ScanpathSample>,
    pub provenance: Provenance,
    pub recording_rate_hz: f64,
}

impl Dataset {
    pub fn new(samples: Vec<ScanpathSample>, provenance: Provenance) -> Self {
        Dataset {
            samples,
            provenance,
            recording_rate_hz: 1000.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples per task, indexed by [`TaskLabel::index`].
    pub fn task_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for s in &self.samples {
            c[s.task.index()] += 1;
        }
        c
    }

    pub fn total_fixations(&self) -> usize {
        self.samples.iter().map(ScanpathSample::len).sum()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.task.index()).collect()
    }

    /// Concatenation; provenance of `self` is kept.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Dataset {
            samples,
            provenance: self.provenance,
            recording_rate_hz: self.recording_rate_hz,
        }
    }
}
