//! Embedded demonstrations: trajectories of (embedding, action) frames.

mod format;
mod jsonl;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbcError};
use crate::rng::SeedRng;
use crate::scalar::Scalar;

pub use format::{MAGIC, VERSION};

/// Latent representation of one situation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Embedding<T>(Vec<T>);

impl<T: Scalar> Embedding<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| T::narrow(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }
}

impl<T> AsRef<[T]> for Embedding<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlKind {
    Boolean,
    Real { min: f64, max: f64 },
}

/// One named control of an [`ActionSchema`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawControl", try_from = "RawControl")]
pub struct ControlSpec {
    pub name: String,
    pub kind: ControlKind,
}

impl ControlSpec {
    pub fn boolean(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ControlKind::Boolean,
        }
    }

    pub fn real(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            kind: ControlKind::Real { min, max },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawControl {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
}

impl From<ControlSpec> for RawControl {
    fn from(spec: ControlSpec) -> Self {
        match spec.kind {
            ControlKind::Boolean => RawControl {
                name: spec.name,
                kind: "boolean".into(),
                min: None,
                max: None,
            },
            ControlKind::Real { min, max } => RawControl {
                name: spec.name,
                kind: "real".into(),
                min: Some(min),
                max: Some(max),
            },
        }
    }
}

impl TryFrom<RawControl> for ControlSpec {
    type Error = String;

    fn try_from(raw: RawControl) -> Result<Self, String> {
        let kind = match (raw.kind.as_str(), raw.min, raw.max) {
            ("boolean", None, None) => ControlKind::Boolean,
            ("boolean", _, _) => return Err(format!("boolean control {:?} has bounds", raw.name)),
            ("real", Some(min), Some(max)) => ControlKind::Real { min, max },
            ("real", _, _) => return Err(format!("real control {:?} needs min and max", raw.name)),
            (other, _, _) => return Err(format!("unknown control kind {other:?}")),
        };
        Ok(ControlSpec {
            name: raw.name,
            kind,
        })
    }
}

/// Ordered list of the controls every [`ActionRecord`] carries.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionSchema {
    pub entries: Vec<ControlSpec>,
}

impl ActionSchema {
    pub fn new(entries: Vec<ControlSpec>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Schema-level problems: empty or duplicate names, inverted bounds.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if entry.name.is_empty() {
                out.push("empty control name".to_string());
            } else if !seen.insert(entry.name.as_str()) {
                out.push(format!("duplicate control name {:?}", entry.name));
            }
            if let ControlKind::Real { min, max } = entry.kind {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    out.push(format!("control {:?} needs finite min < max", entry.name));
                }
            }
        }
        out
    }

    /// Bytes of one action payload in the binary format.
    pub(crate) fn payload_len(&self) -> usize {
        self.entries
            .iter()
            .map(|e| match e.kind {
                ControlKind::Boolean => 1,
                ControlKind::Real { .. } => 4,
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlValue {
    Bool(bool),
    Real(f32),
}

impl ControlValue {
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            // true sorts first
            (Self::Bool(a), Self::Bool(b)) => b.cmp(a),
            (Self::Real(a), Self::Real(b)) => a.total_cmp(b),
            (Self::Bool(_), Self::Real(_)) => Ordering::Less,
            (Self::Real(_), Self::Bool(_)) => Ordering::Greater,
        }
    }
}

/// Control values in schema order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ActionRecord {
    pub values: Vec<ControlValue>,
}

impl ActionRecord {
    pub fn new(values: Vec<ControlValue>) -> Self {
        Self { values }
    }

    pub fn get(&self, schema: &ActionSchema, name: &str) -> Option<ControlValue> {
        schema.position(name).and_then(|i| self.values.get(i).copied())
    }

    /// Canonical action order: lexicographic over controls in schema order,
    /// with `true` before `false` and reals ascending.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.values.iter().zip(&other.values) {
            match a.canonical_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.values.len().cmp(&other.values.len())
    }
}

impl Eq for ActionRecord {}

impl Hash for ActionRecord {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.values {
            match v {
                ControlValue::Bool(b) => (0u8, u32::from(*b)).hash(state),
                ControlValue::Real(r) => (1u8, r.to_bits()).hash(state),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    pub embedding: Embedding<T>,
    pub action: ActionRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub id: u64,
    pub frames: Vec<Frame<T>>,
}

impl<T> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Pointer to frame `offset` of trajectory `traj_id`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SituationRef {
    pub traj_id: u64,
    pub offset: usize,
}

impl SituationRef {
    pub fn new(traj_id: u64, offset: usize) -> Self {
        Self { traj_id, offset }
    }
}

/// The searchable demonstration set.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet<T> {
    pub dimension: usize,
    pub schema: ActionSchema,
    pub trajectories: Vec<Trajectory<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    EmptySet,
    ZeroDimension,
    Schema(String),
    DuplicateId(u64),
    EmptyTrajectory,
    Dimension { expected: usize, found: usize },
    NonFinite { index: usize },
    ActionArity { expected: usize, found: usize },
    ActionKind { control: String },
    ActionRange { control: String, value: f32 },
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::EmptySet => write!(f, "empty demo set"),
            Rule::ZeroDimension => write!(f, "dimension must be positive"),
            Rule::Schema(msg) => write!(f, "schema: {msg}"),
            Rule::DuplicateId(id) => write!(f, "duplicate id {id}"),
            Rule::EmptyTrajectory => write!(f, "empty trajectory"),
            Rule::Dimension { expected, found } => {
                write!(f, "embedding length {found}, expected {expected}")
            }
            Rule::NonFinite { index } => write!(f, "non-finite embedding entry at index {index}"),
            Rule::ActionArity { expected, found } => {
                write!(f, "action has {found} control(s), schema has {expected}")
            }
            Rule::ActionKind { control } => write!(f, "control {control:?} has the wrong kind"),
            Rule::ActionRange { control, value } => {
                write!(f, "control {control:?} value {value} outside schema bounds")
            }
        }
    }
}

/// One broken invariant, located by trajectory id and frame index where applicable.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub traj_id: Option<u64>,
    pub frame: Option<usize>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.traj_id, self.frame) {
            (Some(t), Some(i)) => write!(f, "traj {t}, frame {i}: {}", self.rule),
            (Some(t), None) => write!(f, "traj {t}: {}", self.rule),
            _ => write!(f, "{}", self.rule),
        }
    }
}

fn check_action(schema: &ActionSchema, action: &ActionRecord) -> Option<Rule> {
    if action.values.len() != schema.len() {
        return Some(Rule::ActionArity {
            expected: schema.len(),
            found: action.values.len(),
        });
    }
    for (spec, value) in schema.entries.iter().zip(&action.values) {
        match (spec.kind, *value) {
            (ControlKind::Boolean, ControlValue::Bool(_)) => {}
            (ControlKind::Real { min, max }, ControlValue::Real(v)) => {
                let w = f64::from(v);
                if !(w >= min && w <= max) {
                    return Some(Rule::ActionRange {
                        control: spec.name.clone(),
                        value: v,
                    });
                }
            }
            _ => {
                return Some(Rule::ActionKind {
                    control: spec.name.clone(),
                })
            }
        }
    }
    None
}

impl<T: Scalar> DemoSet<T> {
    pub fn new(dimension: usize, schema: ActionSchema, trajectories: Vec<Trajectory<T>>) -> Self {
        Self {
            dimension,
            schema,
            trajectories,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn trajectory(&self, id: u64) -> Option<&Trajectory<T>> {
        self.trajectories.iter().find(|t| t.id == id)
    }

    /// Every broken invariant; empty iff the set is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let set_level = |rule| Violation {
            traj_id: None,
            frame: None,
            rule,
        };
        if self.trajectories.is_empty() {
            out.push(set_level(Rule::EmptySet));
        }
        if self.dimension == 0 {
            out.push(set_level(Rule::ZeroDimension));
        }
        out.extend(self.schema.problems().into_iter().map(|p| set_level(Rule::Schema(p))));

        let mut ids = HashSet::new();
        for traj in &self.trajectories {
            let at = |frame, rule| Violation {
                traj_id: Some(traj.id),
                frame,
                rule,
            };
            if !ids.insert(traj.id) {
                out.push(at(None, Rule::DuplicateId(traj.id)));
            }
            if traj.frames.is_empty() {
                out.push(at(None, Rule::EmptyTrajectory));
            }
            for (i, frame) in traj.frames.iter().enumerate() {
                if frame.embedding.dim() != self.dimension {
                    out.push(at(
                        Some(i),
                        Rule::Dimension {
                            expected: self.dimension,
                            found: frame.embedding.dim(),
                        },
                    ));
                }
                if let Some(index) = frame.embedding.first_non_finite() {
                    out.push(at(Some(i), Rule::NonFinite { index }));
                }
                if let Some(rule) = check_action(&self.schema, &frame.action) {
                    out.push(at(Some(i), rule));
                }
            }
        }
        out
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(SbcError::EmptyDemoSet);
        }
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(SbcError::Invalid(violations))
        }
    }

    /// `n` trajectories in stored order: the leading prefix when `seed == 0`,
    /// otherwise a uniform `n`-subset chosen by selection sampling.
    ///
    /// Selection sampling walks the trajectories in order and keeps entry `i`
    /// iff `below(total - i) < n - kept`, drawing from `SeedRng::new(seed)`.
    pub fn subset(&self, n: usize, seed: u64) -> Result<DemoSet<T>> {
        let total = self.trajectories.len();
        if n == 0 || n > total {
            return Err(SbcError::SubsetRange { n, available: total });
        }
        let trajectories = if seed == 0 {
            self.trajectories[..n].to_vec()
        } else {
            let mut rng = SeedRng::new(seed);
            let mut kept = Vec::with_capacity(n);
            for (i, traj) in self.trajectories.iter().enumerate() {
                let remaining = u32::try_from(total - i).expect("too many trajectories");
                if (rng.below(remaining) as usize) < n - kept.len() {
                    kept.push(traj.clone());
                }
            }
            kept
        };
        Ok(DemoSet {
            dimension: self.dimension,
            schema: self.schema.clone(),
            trajectories,
        })
    }

    /// Converts storage width, rounding to nearest.
    pub fn cast<U: Scalar>(&self) -> DemoSet<U> {
        DemoSet {
            dimension: self.dimension,
            schema: self.schema.clone(),
            trajectories: self
                .trajectories
                .iter()
                .map(|t| Trajectory {
                    id: t.id,
                    frames: t
                        .frames
                        .iter()
                        .map(|f| Frame {
                            embedding: Embedding(
                                f.embedding.0.iter().map(|v| U::narrow(v.widen())).collect(),
                            ),
                            action: f.action.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
