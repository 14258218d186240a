//! Canonical little-endian `.sbc` container.
//!
//! ```text
//! "SBCD" | u32 version (=1) | u32 dimension | u32 schema_len | schema JSON
//! u32 trajectory count
//! per trajectory: u64 id | u32 frame count
//!   per frame: dimension x f32 | action payload
//! ```
//!
//! The action payload holds booleans as one `u8` (0 or 1) and reals as `f32`,
//! in schema order.

use std::fs;
use std::path::Path;

use super::{ActionRecord, ActionSchema, ControlKind, ControlValue, DemoSet, Embedding, Frame, Trajectory};
use crate::error::{Result, SbcError};

pub const MAGIC: [u8; 4] = *b"SBCD";
pub const VERSION: u32 = 1;

impl DemoSet<f32> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.ensure_valid()?;
        let schema = serde_json::to_vec(&self.schema)?;
        let per_frame = 4 * self.dimension + self.schema.payload_len();
        let mut out = Vec::with_capacity(24 + schema.len() + self.frame_count() * per_frame);

        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&to_u32(self.dimension)?.to_le_bytes());
        out.extend_from_slice(&to_u32(schema.len())?.to_le_bytes());
        out.extend_from_slice(&schema);
        out.extend_from_slice(&to_u32(self.trajectories.len())?.to_le_bytes());
        for traj in &self.trajectories {
            out.extend_from_slice(&traj.id.to_le_bytes());
            out.extend_from_slice(&to_u32(traj.frames.len())?.to_le_bytes());
            for frame in &traj.frames {
                for v in frame.embedding.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for value in &frame.action.values {
                    match *value {
                        ControlValue::Bool(b) => out.push(u8::from(b)),
                        ControlValue::Real(r) => out.extend_from_slice(&r.to_le_bytes()),
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(SbcError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(SbcError::UnsupportedVersion(version));
        }
        let dimension = r.u32()? as usize;
        let schema_len = r.u32()? as usize;
        let schema_at = r.pos;
        let schema: ActionSchema =
            serde_json::from_slice(r.take(schema_len)?).map_err(|e| SbcError::Malformed {
                offset: schema_at,
                reason: format!("schema JSON: {e}"),
            })?;
        let count = r.u32()? as usize;

        let mut trajectories = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = r.u64()?;
            let n_frames = r.u32()? as usize;
            let mut frames = Vec::with_capacity(n_frames.min(1 << 20));
            for _ in 0..n_frames {
                let raw = r.take(4 * dimension)?;
                let embedding = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                let mut values = Vec::with_capacity(schema.len());
                for spec in &schema.entries {
                    values.push(match spec.kind {
                        ControlKind::Boolean => {
                            let at = r.pos;
                            match r.take(1)?[0] {
                                0 => ControlValue::Bool(false),
                                1 => ControlValue::Bool(true),
                                b => {
                                    return Err(SbcError::Malformed {
                                        offset: at,
                                        reason: format!(
                                            "boolean control {:?} has byte {b:#04x}",
                                            spec.name
                                        ),
                                    })
                                }
                            }
                        }
                        ControlKind::Real { .. } => ControlValue::Real(r.f32()?),
                    });
                }
                frames.push(Frame {
                    embedding: Embedding::new(embedding),
                    action: ActionRecord::new(values),
                });
            }
            trajectories.push(Trajectory { id, frames });
        }
        if r.pos != bytes.len() {
            return Err(SbcError::Malformed {
                offset: r.pos,
                reason: format!("{} trailing byte(s)", bytes.len() - r.pos),
            });
        }

        let demos = DemoSet::new(dimension, schema, trajectories);
        demos.ensure_valid()?;
        Ok(demos)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| SbcError::Config(format!("{n} does not fit the u32 field")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(SbcError::Truncated {
                offset: self.pos,
                needed: n - (self.bytes.len() - self.pos),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{toy_schema, toy_set};
    use super::*;

    #[test]
    fn round_trip_and_determinism() {
        let set = toy_set(&[4, 2, 9], 5, 3);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.sbc");
        let b = dir.path().join("b.sbc");
        set.save(&a).unwrap();
        set.save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(DemoSet::load(&a).unwrap(), set);
    }

    #[test]
    fn header_layout() {
        let bytes = toy_set(&[1], 1, 2).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SBCD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        let schema_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let schema = serde_json::to_vec(&toy_schema()).unwrap();
        assert_eq!(&bytes[16..16 + schema_len], schema.as_slice());
        // count + id + frame count + 2 f32 + bool + f32
        assert_eq!(bytes.len(), 16 + schema_len + 4 + 8 + 4 + 8 + 1 + 4);
    }

    #[test]
    fn empty_set_refused() {
        let err = toy_set(&[], 1, 1).to_bytes().unwrap_err();
        assert_eq!(err.to_string(), "empty demo set");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = toy_set(&[1], 2, 2).to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let err = DemoSet::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, SbcError::BadMagic(_)));
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = toy_set(&[1], 2, 2).to_bytes().unwrap();
        bytes[4] = 2;
        assert!(matches!(
            DemoSet::from_bytes(&bytes),
            Err(SbcError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncated_payload_names_offset() {
        let bytes = toy_set(&[1], 3, 2).to_bytes().unwrap();
        let cut = bytes.len() - 3;
        match DemoSet::from_bytes(&bytes[..cut]) {
            Err(SbcError::Truncated { offset, needed }) => {
                // last real control starts 4 bytes before the end
                assert_eq!(offset, bytes.len() - 4);
                assert_eq!(needed, 3);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn bad_boolean_byte() {
        let mut bytes = toy_set(&[1], 1, 1).to_bytes().unwrap();
        let at = bytes.len() - 5;
        bytes[at] = 7;
        match DemoSet::from_bytes(&bytes) {
            Err(SbcError::Malformed { offset, .. }) => assert_eq!(offset, at),
            other => panic!("expected malformed, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = toy_set(&[1], 1, 1).to_bytes().unwrap();
        bytes.push(0);
        assert!(matches!(DemoSet::from_bytes(&bytes), Err(SbcError::Malformed { .. })));
    }

    #[test]
    fn invalid_payload_fails_validation() {
        let mut bytes = toy_set(&[1], 1, 1).to_bytes().unwrap();
        let at = bytes.len() - 9;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(DemoSet::from_bytes(&bytes), Err(SbcError::Invalid(_))));
    }
}
