//! Observation encoders that map raw environment features to embeddings.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::demo::{ActionRecord, Embedding, Frame, Trajectory};
use crate::error::{Result, SbcError};
use crate::rng::SeedRng;
use crate::scalar::Scalar;

/// Environment feature vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for Observation {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Identity,
    RandomProjection,
    StackedWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Output dimension for `random_projection`; derived for the other kinds.
    pub dim: Option<usize>,
    pub seed: u64,
    /// History length for `stacked_window`.
    pub window: usize,
    /// Extra multiplier on the `1/sqrt(m)` projection scale.
    pub scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::StackedWindow,
            dim: None,
            seed: 0,
            window: 8,
            scale: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn identity() -> Self {
        Self {
            kind: EncoderKind::Identity,
            ..Self::default()
        }
    }

    pub fn stacked_window(window: usize) -> Self {
        Self {
            kind: EncoderKind::StackedWindow,
            window,
            ..Self::default()
        }
    }

    pub fn random_projection(dim: usize, seed: u64) -> Self {
        Self {
            kind: EncoderKind::RandomProjection,
            dim: Some(dim),
            seed,
            ..Self::default()
        }
    }

    /// Output length for observations of length `input_dim`.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match self.kind {
            EncoderKind::Identity => Ok(input_dim),
            EncoderKind::RandomProjection => self
                .dim
                .filter(|&d| d >= 1)
                .ok_or_else(|| SbcError::Config("random_projection needs dim >= 1".into())),
            EncoderKind::StackedWindow => {
                if self.window == 0 {
                    Err(SbcError::Config("stacked_window needs window >= 1".into()))
                } else {
                    Ok(self.window * input_dim)
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Inner {
    Identity,
    /// Row-major `dim x input` matrix.
    Projection { dim: usize, weights: Vec<f64> },
    /// Most recent observation last; always exactly `window` entries.
    Window { history: VecDeque<Vec<f64>> },
}

/// A configured encoder. `stacked_window` carries history across calls until
/// [`reset_history`](Self::reset_history).
#[derive(Clone, Debug)]
pub struct Encoder {
    input_dim: usize,
    output_dim: usize,
    inner: Inner,
}

impl Encoder {
    pub fn new(config: &EncoderConfig, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(SbcError::Config("encoder input length must be positive".into()));
        }
        let output_dim = config.output_dim(input_dim)?;
        let inner = match config.kind {
            EncoderKind::Identity => Inner::Identity,
            EncoderKind::RandomProjection => Inner::Projection {
                dim: output_dim,
                weights: projection_matrix(output_dim, input_dim, config.seed, config.scale),
            },
            EncoderKind::StackedWindow => Inner::Window {
                history: std::iter::repeat_n(vec![0.0; input_dim], config.window).collect(),
            },
        };
        Ok(Self {
            input_dim,
            output_dim,
            inner,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn encode<T: Scalar>(&mut self, obs: &Observation) -> Result<Embedding<T>> {
        if obs.len() != self.input_dim {
            return Err(SbcError::DimensionMismatch {
                expected: self.input_dim,
                found: obs.len(),
            });
        }
        let x = &obs.0;
        let values = match &mut self.inner {
            Inner::Identity => x.iter().map(|&v| T::narrow(v)).collect(),
            Inner::Projection { dim, weights } => weights
                .chunks_exact(self.input_dim)
                .take(*dim)
                .map(|row| T::narrow(row.iter().zip(x).map(|(w, v)| w * v).sum()))
                .collect(),
            Inner::Window { history } => {
                let mut oldest = history.pop_front().expect("window >= 1");
                oldest.copy_from_slice(x);
                history.push_back(oldest);
                history.iter().flatten().map(|&v| T::narrow(v)).collect()
            }
        };
        Ok(Embedding::new(values))
    }

    pub fn reset_history(&mut self) {
        if let Inner::Window { history } = &mut self.inner {
            for slot in history.iter_mut() {
                slot.fill(0.0);
            }
        }
    }

    /// Resets history, then pairs `encode(obs_t)` with `action_t`.
    pub fn encode_trajectory<T: Scalar>(
        &mut self,
        id: u64,
        observations: &[Observation],
        actions: &[ActionRecord],
    ) -> Result<Trajectory<T>> {
        if observations.len() != actions.len() {
            return Err(SbcError::LengthMismatch {
                observations: observations.len(),
                actions: actions.len(),
            });
        }
        if observations.is_empty() {
            return Err(SbcError::EmptyInput);
        }
        self.reset_history();
        let frames = observations
            .iter()
            .zip(actions)
            .map(|(obs, action)| {
                Ok(Frame {
                    embedding: self.encode(obs)?,
                    action: action.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory { id, frames })
    }
}

/// `dim x input` weights, row-major, entry `standard_normal() * scale / sqrt(input)`
/// drawn in row-major order from `SeedRng::new(seed)`.
pub fn projection_matrix(dim: usize, input: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = SeedRng::new(seed);
    let factor = scale / (input as f64).sqrt();
    (0..dim * input).map(|_| rng.standard_normal() * factor).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::ControlValue;

    fn obs(v: &[f64]) -> Observation {
        Observation(v.to_vec())
    }

    #[test]
    fn identity_passes_through() {
        let mut enc = Encoder::new(&EncoderConfig::identity(), 2).unwrap();
        let e: Embedding<f64> = enc.encode(&obs(&[0.5, -1.0])).unwrap();
        assert_eq!(e.as_slice(), &[0.5, -1.0]);
        enc.reset_history();
        let again: Embedding<f64> = enc.encode(&obs(&[0.5, -1.0])).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn window_zero_pads_and_shifts() {
        let mut enc = Encoder::new(&EncoderConfig::stacked_window(3), 1).unwrap();
        let _: Embedding<f64> = enc.encode(&obs(&[1.0])).unwrap();
        let e: Embedding<f64> = enc.encode(&obs(&[2.0])).unwrap();
        assert_eq!(e.as_slice(), &[0.0, 1.0, 2.0]);
        let e: Embedding<f64> = enc.encode(&obs(&[3.0])).unwrap();
        assert_eq!(e.as_slice(), &[1.0, 2.0, 3.0]);
        let e: Embedding<f64> = enc.encode(&obs(&[4.0])).unwrap();
        assert_eq!(e.as_slice(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn reset_clears_history_idempotently() {
        let mut enc = Encoder::new(&EncoderConfig::stacked_window(3), 2).unwrap();
        for v in [1.0, 2.0, 3.0] {
            let _: Embedding<f32> = enc.encode(&obs(&[v, -v])).unwrap();
        }
        enc.reset_history();
        enc.reset_history();
        let e: Embedding<f32> = enc.encode(&obs(&[7.0, 8.0])).unwrap();
        assert_eq!(e.as_slice(), &[0.0, 0.0, 0.0, 0.0, 7.0, 8.0]);
    }

    #[test]
    fn length_mismatch() {
        let mut enc = Encoder::new(&EncoderConfig::identity(), 3).unwrap();
        assert!(matches!(
            enc.encode::<f32>(&obs(&[1.0])),
            Err(SbcError::DimensionMismatch { expected: 3, found: 1 })
        ));
        assert!(Encoder::new(&EncoderConfig::stacked_window(0), 3).is_err());
        assert!(Encoder::new(&EncoderConfig::random_projection(0, 1), 3).is_err());
    }

    #[test]
    fn projection_is_fixed_per_encoder() {
        let mut enc = Encoder::new(&EncoderConfig::random_projection(4, 9), 3).unwrap();
        let a: Embedding<f64> = enc.encode(&obs(&[1.0, 2.0, 3.0])).unwrap();
        let b: Embedding<f64> = enc.encode(&obs(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 4);
    }

    #[test]
    fn trajectory_pairs_history_with_actions() {
        let mut enc = Encoder::new(&EncoderConfig::stacked_window(2), 1).unwrap();
        let acts = vec![
            ActionRecord::new(vec![ControlValue::Bool(true)]),
            ActionRecord::new(vec![ControlValue::Bool(false)]),
        ];
        let _: Embedding<f32> = enc.encode(&obs(&[9.0])).unwrap();
        let traj: Trajectory<f32> = enc
            .encode_trajectory(4, &[obs(&[1.0]), obs(&[2.0])], &acts)
            .unwrap();
        assert_eq!(traj.id, 4);
        assert_eq!(traj.frames[0].embedding.as_slice(), &[0.0, 1.0]);
        assert_eq!(traj.frames[1].embedding.as_slice(), &[1.0, 2.0]);
        assert_eq!(traj.frames[1].action, acts[1]);

        assert!(matches!(
            enc.encode_trajectory::<f32>(0, &[obs(&[1.0])], &acts),
            Err(SbcError::LengthMismatch { .. })
        ));
        assert!(matches!(
            enc.encode_trajectory::<f32>(0, &[], &[]),
            Err(SbcError::EmptyInput)
        ));
    }
}
