use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{Controller, SearchEvent};
use crate::demo::{ActionRecord, ActionSchema, ControlKind, ControlValue, DemoSet};
use crate::error::{Result, SbcError};
use crate::gridnav::{Expert, GridState};
use crate::rng::SeedRng;
use crate::scalar::Scalar;

/// What a policy sees at one step.
pub struct PolicyInput<'a, T> {
    pub embedding: &'a [T],
    pub state: &'a GridState,
}

/// A per-episode decision maker. `None` means "do nothing" this step.
pub trait Policy<T> {
    fn act(&mut self, input: &PolicyInput<'_, T>) -> Result<Option<ActionRecord>>;

    fn search_events(&self) -> &[SearchEvent] {
        &[]
    }
}

impl<T: Scalar> Policy<T> for Controller<'_, T> {
    fn act(&mut self, input: &PolicyInput<'_, T>) -> Result<Option<ActionRecord>> {
        Ok(self.step(input.embedding)?.action)
    }

    fn search_events(&self) -> &[SearchEvent] {
        self.event_log()
    }
}

/// Scripted expert reading the true world state.
pub struct ExpertPolicy(pub Expert);

impl<T> Policy<T> for ExpertPolicy {
    fn act(&mut self, input: &PolicyInput<'_, T>) -> Result<Option<ActionRecord>> {
        Ok(Some(self.0.act(input.state)?.to_record()))
    }
}

/// Uniformly random valid actions.
///
/// An all-boolean schema is treated as a discrete action set: each draw picks
/// one control (`index(len)`) and sets only it. Otherwise every control is
/// drawn independently: booleans by `chance(0.5)`, reals uniform in `[min, max]`.
pub struct RandomPolicy {
    schema: ActionSchema,
    rng: SeedRng,
}

impl RandomPolicy {
    pub fn new(schema: ActionSchema, seed: u64) -> Self {
        Self {
            schema,
            rng: SeedRng::new(seed),
        }
    }

    pub fn draw(&mut self) -> ActionRecord {
        let discrete = self
            .schema
            .entries
            .iter()
            .all(|e| e.kind == ControlKind::Boolean);
        if discrete {
            let pick = self.rng.index(self.schema.len());
            return ActionRecord::new(
                (0..self.schema.len())
                    .map(|i| ControlValue::Bool(i == pick))
                    .collect(),
            );
        }
        let values = self
            .schema
            .entries
            .iter()
            .map(|e| match e.kind {
                ControlKind::Boolean => ControlValue::Bool(self.rng.chance(0.5)),
                ControlKind::Real { min, max } => {
                    let v = (min + (max - min) * self.rng.next_f64()) as f32;
                    ControlValue::Real(v.clamp(min as f32, max as f32))
                }
            })
            .collect();
        ActionRecord::new(values)
    }
}

impl<T> Policy<T> for RandomPolicy {
    fn act(&mut self, _: &PolicyInput<'_, T>) -> Result<Option<ActionRecord>> {
        Ok(Some(self.draw()))
    }
}

/// Always the most frequent demonstrated action.
pub struct MajorityPolicy {
    action: ActionRecord,
}

impl MajorityPolicy {
    /// Ties go to the first action in canonical order.
    pub fn from_demos<T: Scalar>(demos: &DemoSet<T>) -> Result<Self> {
        let mut counts: HashMap<&ActionRecord, usize> = HashMap::new();
        for frame in demos.trajectories.iter().flat_map(|t| &t.frames) {
            *counts.entry(&frame.action).or_default() += 1;
        }
        let action = counts
            .into_iter()
            .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| b.canonical_cmp(a)))
            .map(|(a, _)| a.clone())
            .ok_or(SbcError::EmptyDemoSet)?;
        Ok(Self { action })
    }

    pub fn action(&self) -> &ActionRecord {
        &self.action
    }
}

impl<T> Policy<T> for MajorityPolicy {
    fn act(&mut self, _: &PolicyInput<'_, T>) -> Result<Option<ActionRecord>> {
        Ok(Some(self.action.clone()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Majority,
    Expert,
}

impl BaselineKind {
    pub const NAMES: [&'static str; 3] = ["random", "majority", "expert"];
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Self::Random),
            "majority" => Ok(Self::Majority),
            "expert" => Ok(Self::Expert),
            other => Err(format!(
                "unknown baseline kind {other:?}; valid kinds: {}",
                Self::NAMES.join(", ")
            )),
        }
    }
}

/// Comparison policy of the given kind. `majority` needs demonstrations;
/// `expert` runs noise-free.
pub fn baseline_policy<T: Scalar>(
    kind: BaselineKind,
    schema: &ActionSchema,
    demos: Option<&DemoSet<T>>,
    seed: u64,
) -> Result<Box<dyn Policy<T>>> {
    Ok(match kind {
        BaselineKind::Random => Box::new(RandomPolicy::new(schema.clone(), seed)),
        BaselineKind::Majority => {
            let demos = demos.filter(|d| d.frame_count() > 0).ok_or(SbcError::EmptyDemoSet)?;
            Box::new(MajorityPolicy::from_demos(demos)?)
        }
        BaselineKind::Expert => Box::new(ExpertPolicy(Expert::new(0.0, seed)?)),
    })
}
