use serde::{Deserialize, Serialize};

use super::{Dataset, FixationRecord, Provenance, ScanpathSample, TaskLabel};
use crate::error::{Error, Result};
use crate::numeric::RngState;

/// One bivariate (axis-aligned) Gaussian blob of fixation positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialComponent {
    pub weight: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub std_x: f64,
    pub std_y: f64,
}

/// Per-task fixation distribution. Durations are log-normal (parameters of
/// the underlying normal, in log-milliseconds), pupil sizes are normal
/// truncated at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub spatial: Vec<SpatialComponent>,
    pub duration_log_mean: f64,
    pub duration_log_std: f64,
    pub pupil_mean: f64,
    pub pupil_std: f64,
}

/// Surrogate study with a counterbalanced design: every participant views
/// every image once, under task `(participant + image) mod 4`, giving
/// `participants × images` scanpaths. Fixation counts are uniform in
/// `fixations_min..=fixations_max`.
///
/// JSON layout:
///
/// ```json
/// {
///   "participants": 16, "images": 20,
///   "fixations_min": 8, "fixations_max": 24,
///   "recording_rate_hz": 1000.0,
///   "tasks": [
///     { "spatial": [{"weight": 1.0, "mean_x": 400, "mean_y": 300, "std_x": 150, "std_y": 100}],
///       "duration_log_mean": 5.3, "duration_log_std": 0.4,
///       "pupil_mean": 1000, "pupil_std": 90 },
///     ... three more, in task order 1..4
///   ]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub participants: usize,
    pub images: usize,
    pub fixations_min: usize,
    pub fixations_max: usize,
    #[serde(default = "default_rate")]
    pub recording_rate_hz: f64,
    pub tasks: Vec<TaskDistribution>,
}

fn default_rate() -> f64 {
    1000.0
}

fn blob(weight: f64, mean_x: f64, mean_y: f64, std_x: f64, std_y: f64) -> SpatialComponent {
    SpatialComponent {
        weight,
        mean_x,
        mean_y,
        std_x,
        std_y,
    }
}

impl Default for SurrogateConfig {
    /// 16 participants × 20 images on an 800×600 stimulus, with tasks that
    /// differ in where, how long and how dilated the eye fixates.
    fn default() -> Self {
        SurrogateConfig {
            participants: 16,
            images: 20,
            fixations_min: 8,
            fixations_max: 24,
            recording_rate_hz: 1000.0,
            tasks: vec![
                // decade: broad scanning of the scene, short fixations
                TaskDistribution {
                    spatial: vec![blob(0.6, 400.0, 300.0, 190.0, 140.0), blob(0.4, 620.0, 160.0, 70.0, 60.0)],
                    duration_log_mean: 200f64.ln(),
                    duration_log_std: 0.45,
                    pupil_mean: 950.0,
                    pupil_std: 90.0,
                },
                // memorize: two lateral clusters, medium fixations
                TaskDistribution {
                    spatial: vec![blob(0.5, 240.0, 320.0, 80.0, 90.0), blob(0.5, 560.0, 320.0, 80.0, 90.0)],
                    duration_log_mean: 235f64.ln(),
                    duration_log_std: 0.4,
                    pupil_mean: 1050.0,
                    pupil_std: 90.0,
                },
                // people: faces in the upper centre, long fixations
                TaskDistribution {
                    spatial: vec![blob(0.8, 400.0, 170.0, 70.0, 45.0), blob(0.2, 400.0, 360.0, 120.0, 80.0)],
                    duration_log_mean: 300f64.ln(),
                    duration_log_std: 0.4,
                    pupil_mean: 1150.0,
                    pupil_std: 90.0,
                },
                // wealth: clothing and objects in the lower half
                TaskDistribution {
                    spatial: vec![blob(0.7, 400.0, 430.0, 120.0, 60.0), blob(0.3, 170.0, 470.0, 60.0, 50.0)],
                    duration_log_mean: 265f64.ln(),
                    duration_log_std: 0.4,
                    pupil_mean: 1250.0,
                    pupil_std: 90.0,
                },
            ],
        }
    }
}

impl SurrogateConfig {
    /// Pulls every task's location, spread, duration and pupil parameters
    /// towards the across-task average. `separation = 1` is unchanged, `0`
    /// makes all tasks identical.
    pub fn with_separation(&self, separation: f64) -> SurrogateConfig {
        let nt = self.tasks.len() as f64;
        let centroid = |t: &TaskDistribution| {
            let w: f64 = t.spatial.iter().map(|c| c.weight).sum();
            (
                t.spatial.iter().map(|c| c.weight * c.mean_x).sum::<f64>() / w,
                t.spatial.iter().map(|c| c.weight * c.mean_y).sum::<f64>() / w,
            )
        };
        let avg = |f: &dyn Fn(&TaskDistribution) -> f64| self.tasks.iter().map(f).sum::<f64>() / nt;
        let comp_avg = |f: &dyn Fn(&SpatialComponent) -> f64| {
            let all: Vec<f64> = self.tasks.iter().flat_map(|t| t.spatial.iter().map(f)).collect();
            all.iter().sum::<f64>() / all.len() as f64
        };
        let cx = avg(&|t| centroid(t).0);
        let cy = avg(&|t| centroid(t).1);
        let (sx, sy) = (comp_avg(&|c| c.std_x), comp_avg(&|c| c.std_y));
        let dur = avg(&|t| t.duration_log_mean);
        let dur_sd = avg(&|t| t.duration_log_std);
        let pupil = avg(&|t| t.pupil_mean);
        let pupil_sd = avg(&|t| t.pupil_std);
        let lerp = |avg: f64, v: f64| avg + separation * (v - avg);
        let mut out = self.clone();
        for t in &mut out.tasks {
            for c in &mut t.spatial {
                c.mean_x = lerp(cx, c.mean_x);
                c.mean_y = lerp(cy, c.mean_y);
                c.std_x = lerp(sx, c.std_x);
                c.std_y = lerp(sy, c.std_y);
            }
            t.duration_log_mean = lerp(dur, t.duration_log_mean);
            t.duration_log_std = lerp(dur_sd, t.duration_log_std);
            t.pupil_mean = lerp(pupil, t.pupil_mean);
            t.pupil_std = lerp(pupil_sd, t.pupil_std);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.participants == 0 || self.images == 0 {
            return bad("participants and images must be positive");
        }
        if self.fixations_min == 0 || self.fixations_max < self.fixations_min {
            return bad("fixation count range must satisfy 1 <= min <= max");
        }
        if self.tasks.len() != 4 {
            return bad("exactly four task distributions are required");
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.spatial.is_empty() {
                return bad(&format!("task {} has no spatial components", i + 1));
            }
            let scales_ok = t
                .spatial
                .iter()
                .all(|c| c.weight > 0.0 && c.std_x > 0.0 && c.std_y > 0.0 && c.mean_x.is_finite() && c.mean_y.is_finite());
            if !scales_ok
                || !(t.duration_log_std > 0.0)
                || !(t.pupil_std > 0.0)
                || !(t.pupil_mean > 0.0)
                || !t.duration_log_mean.is_finite()
            {
                return bad(&format!("task {} has a non-positive scale or weight", i + 1));
            }
        }
        if !(self.recording_rate_hz > 0.0) {
            return bad("recording rate must be positive");
        }
        Ok(())
    }
}

fn draw_fixation(dist: &TaskDistribution, rng: &mut RngState) -> FixationRecord {
    let weights: Vec<f64> = dist.spatial.iter().map(|c| c.weight).collect();
    let c = &dist.spatial[rng.categorical(&weights)];
    let x = c.mean_x + c.std_x * rng.normal();
    let y = c.mean_y + c.std_y * rng.normal();
    let duration = (dist.duration_log_mean + dist.duration_log_std * rng.normal()).exp();
    let pupil = loop {
        let p = dist.pupil_mean + dist.pupil_std * rng.normal();
        if p > 0.0 {
            break p;
        }
    };
    FixationRecord {
        x,
        y,
        duration,
        pupil,
    }
}

/// Generates the surrogate dataset. Sample `i` (in participant, image
/// order) draws from child stream `i` of `rng`.
pub fn simulate_surrogate(config: &SurrogateConfig, rng: &mut RngState) -> Result<Dataset> {
    config.validate()?;
    let base = rng.split(0);
    let mut samples = Vec::with_capacity(config.participants * config.images);
    let span = config.fixations_max - config.fixations_min + 1;
    for p in 0..config.participants {
        for i in 0..config.images {
            let task = TaskLabel::ALL[(p + i) % 4];
            let mut r = base.split(samples.len() as u64);
            let n = config.fixations_min + r.below(span);
            let dist = &config.tasks[task.index()];
            let fixations = (0..n).map(|_| draw_fixation(dist, &mut r)).collect();
            samples.push(ScanpathSample {
                participant_id: format!("P{:02}", p + 1),
                image_id: format!("img{:02}", i + 1),
                task,
                fixations,
            });
        }
    }
    let mut ds = Dataset::new(samples, Provenance::Surrogate);
    ds.recording_rate_hz = config.recording_rate_hz;
    Ok(ds)
}
