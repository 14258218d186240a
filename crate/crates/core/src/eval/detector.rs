use crate::error::{Result, SbcError};

/// Consecutive in-goal steps required for success (five seconds at 20 Hz).
pub const DEFAULT_SUCCESS_K: usize = 100;

/// Window length for [`sliding_score`].
pub const DEFAULT_SCORE_WINDOW: usize = 16;

/// Seconds represented by one environment step.
pub const STEP_SECONDS: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Detection {
    pub success: bool,
    /// Index of the `k`-th label of the earliest qualifying run.
    pub first_success_step: Option<usize>,
}

/// Succeeds iff some run of at least `k` consecutive `true` labels exists.
pub fn consecutive_detector(labels: &[bool], k: usize) -> Detection {
    assert!(k >= 1, "run length must be positive");
    let mut run = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        run = if label { run + 1 } else { 0 };
        if run == k {
            return Detection {
                success: true,
                first_success_step: Some(i),
            };
        }
    }
    Detection {
        success: false,
        first_success_step: None,
    }
}

fn check_window(len: usize, window: usize) -> Result<()> {
    if window == 0 || len < window {
        return Err(SbcError::WindowTooLong { len, window });
    }
    Ok(())
}

/// Mean over every contiguous window of the window mean.
///
/// Computed in one pass: score `i` appears in `min(i + 1, w, n - i, n - w + 1)`
/// windows, so the result is that weighted sum over `w * (n - w + 1)`. The sum
/// runs over deviations from the first score, which keeps constant input exact.
pub fn sliding_score(scores: &[f64], window: usize) -> Result<f64> {
    check_window(scores.len(), window)?;
    let n = scores.len();
    let windows = n - window + 1;
    let base = scores[0];
    let weighted: f64 = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let cover = (i + 1).min(window).min(n - i).min(windows);
            cover as f64 * (s - base)
        })
        .sum();
    Ok(base + weighted / (window as f64 * windows as f64))
}

/// Mean of `score_window` over every contiguous window.
pub fn sliding_score_with<F>(scores: &[f64], window: usize, mut score_window: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    check_window(scores.len(), window)?;
    let windows = scores.windows(window);
    let count = windows.len();
    Ok(windows.map(&mut score_window).sum::<f64>() / count as f64)
}
