//! Evaluation protocol: episode suites, success detection, baselines,
//! ablations, latent projections and report serialisation.

mod detector;
mod policy;
mod projection;
mod report;
mod suite;

pub use detector::{
    consecutive_detector, sliding_score, sliding_score_with, Detection, DEFAULT_SCORE_WINDOW,
    DEFAULT_SUCCESS_K, STEP_SECONDS,
};
pub use policy::{
    baseline_policy, BaselineKind, ExpertPolicy, MajorityPolicy, Policy, PolicyInput, RandomPolicy,
};
pub use projection::{covariance, project_2d, PcaOptions, ProjectedPoint, Projection};
pub use report::{round_sig6, to_report_json};
pub use suite::{
    check_compatible, run_ablation, run_episode, run_sbc_suite, run_suite, timed_build,
    AblationEntry, AblationResult, ControllerPlan, EpisodeKey, EpisodeResult, EpisodeSummary,
    PolicyFactory, SearchStats, SeedSummary, SuiteParams, SuiteResult, ThresholdRule, Timing,
    DEFAULT_ABLATION_COUNTS, DEFAULT_EPISODES_PER_SEED, DEFAULT_SEEDS,
};
