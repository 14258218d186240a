//! Exact L1 nearest-neighbour search over every frame of a [`DemoSet`].
//!
//! Frames live in one contiguous table in `(traj_id, offset)` order, so the
//! flat position doubles as the tie-breaking key. Distances accumulate in
//! `f64`, one dimension at a time in index order; the pruned search visits the
//! same terms in the same order as the exhaustive scan, so both report
//! bit-identical distances.

use crate::demo::{ActionRecord, ActionSchema, DemoSet, SituationRef};
use crate::error::{Result, SbcError};
use crate::scalar::Scalar;

/// Dimensions accumulated between two early-abandon checks.
const ABANDON_STRIDE: usize = 8;

#[inline]
fn l1_unchecked<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut sum = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        sum += (x.widen() - y.widen()).abs();
    }
    sum
}

/// `sum_i |a_i - b_i|` accumulated in `f64`.
pub fn l1_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SbcError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(l1_unchecked(a, b))
}

/// Same sum as [`l1_unchecked`], abandoned once the running total can no longer
/// beat `bound`. With `inclusive` a total equal to `bound` also loses.
#[inline]
fn l1_bounded<T: Scalar>(a: &[T], b: &[T], bound: f64, inclusive: bool) -> Option<f64> {
    let mut sum = 0.0f64;
    let loses = |s: f64| if inclusive { s >= bound } else { s > bound };
    let mut ca = a.chunks_exact(ABANDON_STRIDE);
    let mut cb = b.chunks_exact(ABANDON_STRIDE);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for k in 0..ABANDON_STRIDE {
            sum += (xa[k].widen() - xb[k].widen()).abs();
        }
        if loses(sum) {
            return None;
        }
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        sum += (x.widen() - y.widen()).abs();
    }
    (!loses(sum)).then_some(sum)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchResult {
    pub situation: SituationRef,
    /// Flat position of the frame in its index.
    pub position: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug)]
struct Span {
    id: u64,
    start: usize,
    len: usize,
}

#[derive(Clone, Debug)]
pub struct LatentIndex<T> {
    dim: usize,
    data: Vec<T>,
    refs: Vec<SituationRef>,
    actions: Vec<ActionRecord>,
    spans: Vec<Span>,
    schema: ActionSchema,
}

impl<T: Scalar> LatentIndex<T> {
    /// One linear pass over the (validated) demonstrations, id order.
    pub fn build(demos: &DemoSet<T>) -> Result<Self> {
        demos.ensure_valid()?;
        let total = demos.frame_count();
        if total == 0 {
            return Err(SbcError::EmptyIndex);
        }
        let mut order: Vec<_> = demos.trajectories.iter().collect();
        order.sort_by_key(|t| t.id);

        let dim = demos.dimension;
        let mut data = Vec::with_capacity(total * dim);
        let mut refs = Vec::with_capacity(total);
        let mut actions = Vec::with_capacity(total);
        let mut spans = Vec::with_capacity(order.len());
        for traj in order {
            spans.push(Span {
                id: traj.id,
                start: refs.len(),
                len: traj.frames.len(),
            });
            for (offset, frame) in traj.frames.iter().enumerate() {
                data.extend_from_slice(frame.embedding.as_slice());
                refs.push(SituationRef::new(traj.id, offset));
                actions.push(frame.action.clone());
            }
        }
        Ok(Self {
            dim,
            data,
            refs,
            actions,
            spans,
            schema: demos.schema.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frame count N.
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn schema(&self) -> &ActionSchema {
        &self.schema
    }

    pub fn trajectory_count(&self) -> usize {
        self.spans.len()
    }

    pub fn embedding(&self, position: usize) -> &[T] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn action(&self, position: usize) -> &ActionRecord {
        &self.actions[position]
    }

    pub fn situation(&self, position: usize) -> SituationRef {
        self.refs[position]
    }

    pub fn situations(&self) -> &[SituationRef] {
        &self.refs
    }

    /// Flat position of `situation`, if it names a stored frame.
    pub fn position(&self, situation: SituationRef) -> Option<usize> {
        let i = self
            .spans
            .binary_search_by_key(&situation.traj_id, |s| s.id)
            .ok()?;
        let span = self.spans[i];
        (situation.offset < span.len).then_some(span.start + situation.offset)
    }

    /// One past the last flat position of the trajectory containing `position`.
    pub fn trajectory_end(&self, position: usize) -> usize {
        let i = self.spans.partition_point(|s| s.start <= position) - 1;
        self.spans[i].start + self.spans[i].len
    }

    fn check_query(&self, query: &[T]) -> Result<()> {
        if query.len() != self.dim {
            return Err(SbcError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        Ok(())
    }

    fn result(&self, position: usize, distance: f64) -> SearchResult {
        SearchResult {
            situation: self.refs[position],
            position,
            distance,
        }
    }

    /// Exhaustive scan; the reference oracle for [`nearest`](Self::nearest).
    pub fn nearest_bruteforce(&self, query: &[T]) -> Result<SearchResult> {
        self.check_query(query)?;
        let mut best = (f64::INFINITY, 0usize);
        for (position, row) in self.data.chunks_exact(self.dim).enumerate() {
            let d = l1_unchecked(query, row);
            if d < best.0 {
                best = (d, position);
            }
        }
        Ok(self.result(best.1, best.0))
    }

    /// Exact nearest frame with partial-distance early abandon.
    pub fn nearest(&self, query: &[T]) -> Result<SearchResult> {
        self.nearest_from(query, None)
    }

    /// As [`nearest`](Self::nearest), seeding the bound with the distance to
    /// `hint` (typically the frame currently being followed). The answer does
    /// not depend on the hint.
    pub fn nearest_from(&self, query: &[T], hint: Option<usize>) -> Result<SearchResult> {
        self.check_query(query)?;
        let hint = hint.filter(|&h| h < self.len());
        let (mut best_d, mut best_pos) = match hint {
            Some(h) => (l1_unchecked(query, self.embedding(h)), h),
            None => (f64::INFINITY, usize::MAX),
        };
        for (position, row) in self.data.chunks_exact(self.dim).enumerate() {
            if Some(position) == hint {
                continue;
            }
            // an equal distance only wins from an earlier flat position
            let inclusive = position > best_pos;
            if let Some(d) = l1_bounded(query, row, best_d, inclusive) {
                best_d = d;
                best_pos = position;
            }
        }
        Ok(self.result(best_pos, best_d))
    }
}

/// Nearest-rank `q`-quantile of the L1 step between consecutive frames of
/// every trajectory: the value at rank `ceil(q * M)` of the `M` sorted steps.
pub fn calibrate_threshold<T: Scalar>(demos: &DemoSet<T>, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(SbcError::Quantile(q));
    }
    if demos.trajectories.is_empty() {
        return Err(SbcError::EmptyDemoSet);
    }
    let mut steps = Vec::with_capacity(demos.frame_count());
    for traj in &demos.trajectories {
        if traj.frames.len() < 2 {
            return Err(SbcError::TrajectoryTooShort {
                traj_id: traj.id,
                len: traj.frames.len(),
            });
        }
        for pair in traj.frames.windows(2) {
            steps.push(l1_distance(pair[0].embedding.as_slice(), pair[1].embedding.as_slice())?);
        }
    }
    steps.sort_by(f64::total_cmp);
    let m = steps.len();
    // q * m carries representation error (0.95 * 100 = 95.00000000000001 in
    // some orders); a relative slack keeps exact ranks exact.
    let product = q * m as f64;
    let rank = (product - product * 1e-12).ceil().clamp(1.0, m as f64) as usize;
    Ok(steps[rank - 1])
}
