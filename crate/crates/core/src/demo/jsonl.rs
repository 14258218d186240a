//! Line-oriented text form for debugging.
//!
//! Line 1 is a header `{"dimension": d, "schema": [...]}`; every following line
//! is one trajectory `{"id": .., "frames": [{"embedding": [..], "action": {name: value}}]}`.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use super::{ActionRecord, ControlKind, ControlValue, DemoSet, Embedding, Frame, Trajectory};
use crate::error::{Result, SbcError};

impl DemoSet<f32> {
    pub fn to_jsonl(&self) -> Result<String> {
        self.ensure_valid()?;
        let mut out = String::new();
        let header = json!({ "dimension": self.dimension, "schema": self.schema });
        writeln!(out, "{header}").expect("write to String");
        for traj in &self.trajectories {
            let frames: Vec<Value> = traj
                .frames
                .iter()
                .map(|f| {
                    let action: Map<String, Value> = self
                        .schema
                        .entries
                        .iter()
                        .zip(&f.action.values)
                        .map(|(spec, v)| {
                            let v = match *v {
                                ControlValue::Bool(b) => Value::Bool(b),
                                ControlValue::Real(r) => json!(r),
                            };
                            (spec.name.clone(), v)
                        })
                        .collect();
                    json!({ "embedding": f.embedding.as_slice(), "action": action })
                })
                .collect();
            writeln!(out, "{}", json!({ "id": traj.id, "frames": frames })).expect("write to String");
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, reason: String| SbcError::Malformed {
            offset: line + 1,
            reason,
        };
        let (_, header) = lines.next().ok_or(SbcError::EmptyDemoSet)?;
        let header: Value = serde_json::from_str(header)?;
        let dimension = header["dimension"]
            .as_u64()
            .ok_or_else(|| bad(0, "header lacks dimension".into()))? as usize;
        let schema: super::ActionSchema = serde_json::from_value(header["schema"].clone())
            .map_err(|e| SbcError::Schema(e.to_string()))?;

        let mut trajectories = Vec::new();
        for (lineno, line) in lines {
            let v: Value = serde_json::from_str(line)?;
            let id = v["id"]
                .as_u64()
                .ok_or_else(|| bad(lineno, "trajectory lacks id".into()))?;
            let raw_frames = v["frames"]
                .as_array()
                .ok_or_else(|| bad(lineno, "trajectory lacks frames".into()))?;
            let mut frames = Vec::with_capacity(raw_frames.len());
            for f in raw_frames {
                let embedding = f["embedding"]
                    .as_array()
                    .ok_or_else(|| bad(lineno, "frame lacks embedding".into()))?
                    .iter()
                    .map(|x| x.as_f64().map(|x| x as f32))
                    .collect::<Option<Vec<f32>>>()
                    .ok_or_else(|| bad(lineno, "non-numeric embedding entry".into()))?;
                let mut values = Vec::with_capacity(schema.len());
                for spec in &schema.entries {
                    let raw = &f["action"][spec.name.as_str()];
                    let value = match spec.kind {
                        ControlKind::Boolean => raw.as_bool().map(ControlValue::Bool),
                        ControlKind::Real { .. } => raw.as_f64().map(|r| ControlValue::Real(r as f32)),
                    };
                    values.push(value.ok_or_else(|| {
                        bad(lineno, format!("control {:?} missing or mistyped", spec.name))
                    })?);
                }
                frames.push(Frame {
                    embedding: Embedding::new(embedding),
                    action: ActionRecord::new(values),
                });
            }
            trajectories.push(Trajectory { id, frames });
        }
        let demos = DemoSet::new(dimension, schema, trajectories);
        demos.ensure_valid()?;
        Ok(demos)
    }
}
