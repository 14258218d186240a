//! Retrieval controller: follow the nearest stored situation, copy its actions,
//! and search again when the live embedding drifts away from the reference or
//! the reference has been followed for too long.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::demo::{ActionRecord, SituationRef};
use crate::error::{Result, SbcError};
use crate::index::{l1_distance, LatentIndex, SearchResult};
use crate::scalar::Scalar;

/// Default per-reference follow budget, about five seconds of 20 Hz frames.
pub const DEFAULT_MAX_STEPS: usize = 100;

/// Distinct recent queries whose search results are kept. A stuck or cycling
/// agent re-issues identical queries; the search is a pure function of the
/// query, so replaying a stored result is exact.
const MEMO_CAPACITY: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Leading steps with no action and no search.
    pub warmup: usize,
    /// Most actions copied from one reference before a time-triggered search.
    pub max_steps: usize,
    /// L1 distance above which the reference is abandoned.
    pub div_threshold: f64,
}

impl ControllerConfig {
    pub fn new(warmup: usize, max_steps: usize, div_threshold: f64) -> Self {
        Self {
            warmup,
            max_steps,
            div_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(SbcError::Config("max_steps must be at least 1".into()));
        }
        if !(self.div_threshold >= 0.0) {
            return Err(SbcError::Config(format!(
                "div_threshold must be non-negative, got {}",
                self.div_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warming,
    Searching,
    Following,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Initial,
    Divergence,
    Time,
    EndOfTrajectory,
}

impl Trigger {
    pub const ALL: [Trigger; 4] = [
        Trigger::Initial,
        Trigger::Divergence,
        Trigger::Time,
        Trigger::EndOfTrajectory,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Initial => "initial",
            Trigger::Divergence => "divergence",
            Trigger::Time => "time",
            Trigger::EndOfTrajectory => "end_of_trajectory",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchEvent {
    /// Zero-based step index, warmup steps included.
    pub step: usize,
    pub trigger: Trigger,
    pub chosen: SituationRef,
    /// Distance to the abandoned reference, when one was compared.
    pub distance_at_trigger: Option<f64>,
    pub distance_of_chosen: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub action: Option<ActionRecord>,
    pub event: Option<SearchEvent>,
    pub distance: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerState {
    pub step_count: usize,
    pub phase: Phase,
    /// Next frame to copy. After the last frame of a trajectory has been
    /// copied its offset equals the trajectory length.
    pub current_ref: Option<SituationRef>,
    pub steps_followed: usize,
    pub last_distance: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Cursor {
    position: usize,
    end: usize,
}

pub struct Controller<'a, T> {
    index: &'a LatentIndex<T>,
    config: ControllerConfig,
    step_count: usize,
    phase: Phase,
    cursor: Option<Cursor>,
    steps_followed: usize,
    last_distance: Option<f64>,
    events: Vec<SearchEvent>,
    memo: HashMap<Vec<u64>, SearchResult>,
}

impl<'a, T: Scalar> Controller<'a, T> {
    pub fn new(index: &'a LatentIndex<T>, config: ControllerConfig) -> Result<Self> {
        if index.is_empty() {
            return Err(SbcError::EmptyIndex);
        }
        config.validate()?;
        Ok(Self {
            index,
            config,
            step_count: 0,
            phase: Self::initial_phase(&config),
            cursor: None,
            steps_followed: 0,
            last_distance: None,
            events: Vec::new(),
            memo: HashMap::new(),
        })
    }

    fn initial_phase(config: &ControllerConfig) -> Phase {
        if config.warmup > 0 {
            Phase::Warming
        } else {
            Phase::Searching
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn index(&self) -> &'a LatentIndex<T> {
        self.index
    }

    pub fn state(&self) -> ControllerState {
        let current_ref = self.cursor.map(|c| {
            if c.position < c.end {
                self.index.situation(c.position)
            } else {
                let last = self.index.situation(c.end - 1);
                SituationRef::new(last.traj_id, last.offset + 1)
            }
        });
        ControllerState {
            step_count: self.step_count,
            phase: self.phase,
            current_ref,
            steps_followed: self.steps_followed,
            last_distance: self.last_distance,
        }
    }

    /// Search events since construction or the last [`reset`](Self::reset).
    pub fn event_log(&self) -> &[SearchEvent] {
        &self.events
    }

    pub fn reset(&mut self) {
        self.step_count = 0;
        self.phase = Self::initial_phase(&self.config);
        self.cursor = None;
        self.steps_followed = 0;
        self.last_distance = None;
        self.events.clear();
        self.memo.clear();
    }

    fn search(&mut self, embed: &[T], hint: Option<usize>) -> Result<SearchResult> {
        let key: Vec<u64> = embed.iter().map(|x| x.widen().to_bits()).collect();
        if let Some(found) = self.memo.get(&key) {
            return Ok(*found);
        }
        let found = self.index.nearest_from(embed, hint)?;
        if self.memo.len() >= MEMO_CAPACITY {
            self.memo.clear();
        }
        self.memo.insert(key, found);
        Ok(found)
    }

    pub fn step(&mut self, embed: &[T]) -> Result<StepOutput> {
        if embed.len() != self.index.dim() {
            return Err(SbcError::DimensionMismatch {
                expected: self.index.dim(),
                found: embed.len(),
            });
        }
        let step = self.step_count;
        self.step_count += 1;

        if step < self.config.warmup {
            if self.step_count == self.config.warmup {
                self.phase = Phase::Searching;
            }
            return Ok(StepOutput {
                action: None,
                event: None,
                distance: None,
            });
        }

        let (trigger, at_trigger) = match self.cursor {
            None => (Some(Trigger::Initial), None),
            Some(c) if c.position >= c.end => (Some(Trigger::EndOfTrajectory), None),
            Some(c) => {
                let d = l1_distance(embed, self.index.embedding(c.position))?;
                if d > self.config.div_threshold {
                    (Some(Trigger::Divergence), Some(d))
                } else if self.steps_followed >= self.config.max_steps {
                    (Some(Trigger::Time), Some(d))
                } else {
                    (None, Some(d))
                }
            }
        };

        let mut event = None;
        let distance = match trigger {
            None => at_trigger.expect("follow branch computed a distance"),
            Some(trigger) => {
                let hint = self.cursor.filter(|c| c.position < c.end).map(|c| c.position);
                let found = self.search(embed, hint)?;
                self.cursor = Some(Cursor {
                    position: found.position,
                    end: self.index.trajectory_end(found.position),
                });
                self.steps_followed = 0;
                let e = SearchEvent {
                    step,
                    trigger,
                    chosen: found.situation,
                    distance_at_trigger: at_trigger,
                    distance_of_chosen: found.distance,
                };
                self.events.push(e);
                event = Some(e);
                match trigger {
                    Trigger::Divergence => at_trigger.expect("divergence compares"),
                    _ => found.distance,
                }
            }
        };

        let cursor = self.cursor.as_mut().expect("reference chosen");
        let action = self.index.action(cursor.position).clone();
        cursor.position += 1;
        self.steps_followed += 1;
        self.phase = Phase::Following;
        self.last_distance = Some(distance);
        Ok(StepOutput {
            action: Some(action),
            event,
            distance: Some(distance),
        })
    }
}
