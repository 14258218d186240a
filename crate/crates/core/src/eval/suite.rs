//! Seeded episode suites, ablations over demonstration counts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::{
    consecutive_detector, sliding_score, DEFAULT_SCORE_WINDOW, DEFAULT_SUCCESS_K, STEP_SECONDS,
};
use super::policy::{Policy, PolicyInput};
use crate::controller::{Controller, ControllerConfig, SearchEvent, Trigger, DEFAULT_MAX_STEPS};
use crate::demo::DemoSet;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Result, SbcError};
use crate::gridnav::{GridAction, GridConfig, GridState};
use crate::index::{calibrate_threshold, LatentIndex};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

const EVAL_SALT: u64 = 0x4556_414c; // "EVAL"
const POLICY_SALT: u64 = 0x504f_4c59; // "POLY"

/// Protocol defaults: twenty seeds of ten episodes each.
pub const DEFAULT_SEEDS: usize = 20;
pub const DEFAULT_EPISODES_PER_SEED: usize = 10;
pub const DEFAULT_ABLATION_COUNTS: [usize; 4] = [10, 25, 50, 100];

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub episode: usize,
    pub success: bool,
    /// Environment steps taken up to and including the `k`-th in-goal step.
    pub steps_to_success: Option<usize>,
    pub total_steps: usize,
    pub search_events: Vec<SearchEvent>,
    pub per_step_in_goal: Vec<bool>,
    pub mean_window_score: Option<f64>,
}

/// Identifies one episode of a suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeKey {
    pub seed: u64,
    pub episode: usize,
}

impl EpisodeKey {
    /// World seed: `derive_seed(seed, [EVAL, episode])`.
    pub fn world_seed(&self) -> u64 {
        derive_seed(self.seed, &[EVAL_SALT, self.episode as u64])
    }

    /// Seed for any randomness inside the policy.
    pub fn policy_seed(&self) -> u64 {
        derive_seed(self.seed, &[POLICY_SALT, self.episode as u64])
    }
}

/// Per-step progress score `1 / (1 + shortest-path distance to a goal)`.
fn progress_score(distances: &[Option<u32>], state: &GridState) -> f64 {
    let (x, y) = state.agent();
    match distances[y * state.config().size + x] {
        Some(d) => 1.0 / (1.0 + f64::from(d)),
        None => 0.0,
    }
}

/// observe, encode, act, step; until `success_k` consecutive in-goal steps or
/// the world's step cap. A policy that returns no action stays in place.
pub fn run_episode<T: Scalar>(
    grid: &GridConfig,
    policy: &mut dyn Policy<T>,
    encoder: &mut Encoder,
    success_k: usize,
) -> Result<EpisodeResult> {
    if success_k == 0 {
        return Err(SbcError::Config("success_k must be positive".into()));
    }
    let mut state = GridState::generate(grid)?;
    let distances = state.goal_distances();
    encoder.reset_history();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    let mut run = 0usize;
    while !state.is_over() && run < success_k {
        let embedding: crate::demo::Embedding<T> = encoder.encode(&state.observe())?;
        let input = PolicyInput {
            embedding: embedding.as_slice(),
            state: &state,
        };
        let action = match policy.act(&input)? {
            Some(record) => GridAction::from_record(&record)?,
            None => GridAction::Stay,
        };
        let step = state.step(action)?;
        labels.push(step.in_goal);
        scores.push(progress_score(&distances, &state));
        run = if step.in_goal { run + 1 } else { 0 };
    }
    let detection = consecutive_detector(&labels, success_k);
    Ok(EpisodeResult {
        seed: grid.seed,
        episode: 0,
        success: detection.success,
        steps_to_success: detection.first_success_step.map(|i| i + 1),
        total_steps: labels.len(),
        search_events: policy.search_events().to_vec(),
        per_step_in_goal: labels,
        mean_window_score: sliding_score(&scores, DEFAULT_SCORE_WINDOW).ok(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteParams {
    /// World template; the seed is replaced per episode.
    pub grid: GridConfig,
    pub encoder: EncoderConfig,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: usize,
    pub success_k: usize,
    /// Worker threads; results do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            encoder: EncoderConfig::default(),
            seeds: (0..DEFAULT_SEEDS as u64).collect(),
            episodes_per_seed: DEFAULT_EPISODES_PER_SEED,
            success_k: DEFAULT_SUCCESS_K,
            jobs: 1,
        }
    }
}

impl SuiteParams {
    pub fn episode_count(&self) -> usize {
        self.seeds.len() * self.episodes_per_seed
    }

    pub fn keys(&self) -> Vec<EpisodeKey> {
        self.seeds
            .iter()
            .flat_map(|&seed| (0..self.episodes_per_seed).map(move |episode| EpisodeKey { seed, episode }))
            .collect()
    }

    pub fn embedding_dim(&self) -> Result<usize> {
        self.encoder.output_dim(self.grid.observation_len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub episode: usize,
    pub success: bool,
    pub steps_to_success: Option<usize>,
    pub total_steps: usize,
    pub searches: usize,
    pub mean_window_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_completion_steps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub total: usize,
    pub mean_per_episode: f64,
    pub triggers: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub index_build_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub max_episode_steps: usize,
    pub success_k: usize,
    pub mean_completion_steps: Option<f64>,
    /// Population standard deviation over successful episodes.
    pub std_completion_steps: Option<f64>,
    pub mean_completion_seconds: Option<f64>,
    pub mean_window_score: Option<f64>,
    pub search: SearchStats,
    pub per_seed: Vec<SeedSummary>,
    pub episode_results: Vec<EpisodeSummary>,
    /// Wall-clock measurements; the only nondeterministic fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

impl SuiteResult {
    /// Aggregates episodes in key order.
    pub fn aggregate(params: &SuiteParams, results: &[EpisodeResult]) -> Self {
        let episodes = results.len();
        let successes = results.iter().filter(|r| r.success).count();
        let completions: Vec<f64> = results
            .iter()
            .filter_map(|r| r.steps_to_success.map(|s| s as f64))
            .collect();
        let (mean, std) = mean_std(&completions);

        let mut triggers: BTreeMap<String, usize> =
            Trigger::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
        for event in results.iter().flat_map(|r| &r.search_events) {
            *triggers.get_mut(event.trigger.as_str()).expect("all triggers listed") += 1;
        }
        let total: usize = triggers.values().sum();

        let per_seed = params
            .seeds
            .iter()
            .map(|&seed| {
                let mine: Vec<&EpisodeResult> = results.iter().filter(|r| r.seed == seed).collect();
                let ok: Vec<f64> = mine
                    .iter()
                    .filter_map(|r| r.steps_to_success.map(|s| s as f64))
                    .collect();
                SeedSummary {
                    seed,
                    episodes: mine.len(),
                    successes: ok.len(),
                    success_rate: if mine.is_empty() { 0.0 } else { ok.len() as f64 / mine.len() as f64 },
                    mean_completion_steps: mean_std(&ok).0,
                }
            })
            .collect();

        let window_scores: Vec<f64> = results.iter().filter_map(|r| r.mean_window_score).collect();

        SuiteResult {
            episodes,
            successes,
            success_rate: if episodes == 0 { 0.0 } else { successes as f64 / episodes as f64 },
            max_episode_steps: params.grid.max_episode_steps,
            success_k: params.success_k,
            mean_completion_steps: mean,
            std_completion_steps: std,
            mean_completion_seconds: mean.map(|m| m * STEP_SECONDS),
            mean_window_score: mean_std(&window_scores).0,
            search: SearchStats {
                total,
                mean_per_episode: if episodes == 0 { 0.0 } else { total as f64 / episodes as f64 },
                triggers,
            },
            per_seed,
            episode_results: results
                .iter()
                .map(|r| EpisodeSummary {
                    seed: r.seed,
                    episode: r.episode,
                    success: r.success,
                    steps_to_success: r.steps_to_success,
                    total_steps: r.total_steps,
                    searches: r.search_events.len(),
                    mean_window_score: r.mean_window_score,
                })
                .collect(),
            timing: None,
        }
    }
}

/// Builds one fresh policy per episode.
pub type PolicyFactory<'p, T> = dyn Fn(EpisodeKey) -> Result<Box<dyn Policy<T> + 'p>> + Sync + 'p;

/// Runs `seeds x episodes_per_seed` independent episodes, each with a fresh
/// policy and encoder. Output does not depend on `params.jobs`.
pub fn run_suite<'p, T: Scalar>(params: &SuiteParams, factory: &PolicyFactory<'p, T>) -> Result<SuiteResult> {
    if params.seeds.is_empty() {
        return Err(SbcError::Config("a suite needs at least one seed".into()));
    }
    params.grid.validate()?;
    let input_dim = params.grid.observation_len();
    let run_one = |key: EpisodeKey| -> Result<EpisodeResult> {
        let mut policy = factory(key)?;
        let mut encoder = Encoder::new(&params.encoder, input_dim)?;
        let grid = params.grid.with_seed(key.world_seed());
        let mut result = run_episode(&grid, policy.as_mut(), &mut encoder, params.success_k)?;
        result.seed = key.seed;
        result.episode = key.episode;
        Ok(result)
    };
    let keys = params.keys();
    let results: Vec<EpisodeResult> = if params.jobs <= 1 {
        keys.into_iter().map(run_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.jobs)
            .build()
            .map_err(|e| SbcError::Config(format!("thread pool: {e}")))?;
        pool.install(|| keys.into_par_iter().map(run_one).collect::<Result<_>>())?
    };
    Ok(SuiteResult::aggregate(params, &results))
}

/// A fixed divergence threshold or a calibration quantile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdRule {
    Fixed(f64),
    Auto(f64),
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Auto(0.95)
    }
}

impl ThresholdRule {
    pub fn resolve<T: Scalar>(&self, demos: &DemoSet<T>) -> Result<f64> {
        match *self {
            ThresholdRule::Fixed(x) => Ok(x),
            ThresholdRule::Auto(q) => calibrate_threshold(demos, q),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = String;

    /// `X` (non-negative number) or `auto:q` with `q` in `(0, 1]`.
    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(q) = s.strip_prefix("auto:") {
            let q: f64 = q.parse().map_err(|_| format!("bad quantile in {s:?}"))?;
            if !(q > 0.0 && q <= 1.0) {
                return Err(format!("quantile {q} outside (0, 1]"));
            }
            return Ok(ThresholdRule::Auto(q));
        }
        let x: f64 = s
            .parse()
            .map_err(|_| format!("expected a number or auto:q, got {s:?}"))?;
        if !(x >= 0.0 && x.is_finite()) {
            return Err(format!("threshold must be non-negative, got {x}"));
        }
        Ok(ThresholdRule::Fixed(x))
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Fixed(x) => write!(f, "{x}"),
            ThresholdRule::Auto(q) => write!(f, "auto:{q}"),
        }
    }
}

impl Serialize for ThresholdRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThresholdRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => x.to_string().parse(),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Controller settings with the threshold still to be resolved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerPlan {
    pub warmup: usize,
    pub max_steps: usize,
    pub div_threshold: ThresholdRule,
}

impl Default for ControllerPlan {
    fn default() -> Self {
        Self {
            warmup: 0,
            max_steps: DEFAULT_MAX_STEPS,
            div_threshold: ThresholdRule::default(),
        }
    }
}

impl ControllerPlan {
    pub fn resolve<T: Scalar>(&self, demos: &DemoSet<T>) -> Result<ControllerConfig> {
        let config = ControllerConfig::new(self.warmup, self.max_steps, self.div_threshold.resolve(demos)?);
        config.validate()?;
        Ok(config)
    }
}

/// Checks that demonstrations and suite agree on embedding width and actions.
pub fn check_compatible<T: Scalar>(demos: &DemoSet<T>, params: &SuiteParams) -> Result<()> {
    let expected = params.embedding_dim()?;
    if demos.dimension != expected {
        return Err(SbcError::DimensionMismatch {
            expected,
            found: demos.dimension,
        });
    }
    if demos.schema != GridAction::schema() {
        return Err(SbcError::Schema("demo actions do not match the gridworld controls".into()));
    }
    Ok(())
}

/// Retrieval-controller suite over a prebuilt index.
pub fn run_sbc_suite<T: Scalar>(
    index: &LatentIndex<T>,
    config: ControllerConfig,
    params: &SuiteParams,
) -> Result<SuiteResult> {
    let factory = move |_key: EpisodeKey| -> Result<Box<dyn Policy<T> + '_>> {
        Ok(Box::new(Controller::new(index, config)?))
    };
    run_suite(params, &factory)
}

/// Index over `demos`, the wall-clock milliseconds it took.
pub fn timed_build<T: Scalar>(demos: &DemoSet<T>) -> Result<(LatentIndex<T>, f64)> {
    let start = Instant::now();
    let index = LatentIndex::build(demos)?;
    Ok((index, start.elapsed().as_secs_f64() * 1e3))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub demos: usize,
    pub frames: usize,
    pub div_threshold: f64,
    pub suite: SuiteResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    /// Strictly increasing demonstration counts.
    pub entries: Vec<AblationEntry>,
}

impl AblationResult {
    pub fn success_rates(&self) -> Vec<(usize, f64)> {
        self.entries.iter().map(|e| (e.demos, e.suite.success_rate)).collect()
    }
}

/// For each count: leading-prefix subset, rebuild, recalibrate, evaluate.
pub fn run_ablation<T: Scalar>(
    full: &DemoSet<T>,
    counts: &[usize],
    plan: &ControllerPlan,
    params: &SuiteParams,
) -> Result<AblationResult> {
    let mut counts = counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    if counts.is_empty() {
        return Err(SbcError::Config("no ablation counts".into()));
    }
    if let Some(&count) = counts.iter().find(|&&c| c == 0 || c > full.len()) {
        return Err(SbcError::CountExceedsDemos {
            count,
            available: full.len(),
        });
    }
    check_compatible(full, params)?;
    let mut entries = Vec::with_capacity(counts.len());
    for count in counts {
        let demos = full.subset(count, 0)?;
        let (index, build_ms) = timed_build(&demos)?;
        let config = plan.resolve(&demos)?;
        let mut suite = run_sbc_suite(&index, config, params)?;
        suite.timing = Some(Timing {
            index_build_ms: build_ms,
        });
        log::info!(
            "ablation: {count} demo(s), {} frame(s), success rate {:.3}",
            index.len(),
            suite.success_rate
        );
        entries.push(AblationEntry {
            demos: count,
            frames: index.len(),
            div_threshold: config.div_threshold,
            suite,
        });
    }
    Ok(AblationResult { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::policy::{baseline_policy, BaselineKind};
    use crate::gridnav::generate_demos;

    fn small_params() -> SuiteParams {
        SuiteParams {
            grid: GridConfig {
                size: 10,
                goal_count: 2,
                max_episode_steps: 300,
                ..GridConfig::default()
            },
            encoder: EncoderConfig::stacked_window(2),
            seeds: vec![0, 1],
            episodes_per_seed: 3,
            success_k: 20,
            jobs: 1,
        }
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("auto:0.95".parse::<ThresholdRule>().unwrap(), ThresholdRule::Auto(0.95));
        assert_eq!("2.5".parse::<ThresholdRule>().unwrap(), ThresholdRule::Fixed(2.5));
        assert!("-1".parse::<ThresholdRule>().is_err());
        assert!("auto:0".parse::<ThresholdRule>().is_err());
        assert!("auto:x".parse::<ThresholdRule>().is_err());
    }

    #[test]
    fn defaults_follow_protocol() {
        let p = SuiteParams::default();
        assert_eq!(p.episode_count(), 200);
        assert_eq!(p.grid.max_episode_steps, 3600);
        assert_eq!(p.success_k, 100);
    }

    #[test]
    fn expert_always_succeeds() {
        let params = small_params();
        let factory = |key: EpisodeKey| {
            baseline_policy::<f32>(BaselineKind::Expert, &GridAction::schema(), None, key.policy_seed())
        };
        let r = run_suite(&params, &factory).unwrap();
        assert_eq!(r.episodes, 6);
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.search.total, 0);
        assert!(r.episode_results.iter().all(|e| e.total_steps == e.steps_to_success.unwrap()));
    }

    #[test]
    fn failing_policy_has_empty_stats() {
        let params = small_params();
        struct Idle;
        impl Policy<f32> for Idle {
            fn act(&mut self, _: &PolicyInput<'_, f32>) -> Result<Option<crate::demo::ActionRecord>> {
                Ok(None)
            }
        }
        let factory = |_key: EpisodeKey| -> Result<Box<dyn Policy<f32>>> { Ok(Box::new(Idle)) };
        let r = run_suite(&params, &factory).unwrap();
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.mean_completion_steps, None);
        assert_eq!(r.std_completion_steps, None);
        assert!(r.episode_results.iter().all(|e| e.total_steps == 300));
    }

    #[test]
    fn suite_is_deterministic_across_jobs() {
        let mut params = small_params();
        let mut enc = Encoder::new(&params.encoder, params.grid.observation_len()).unwrap();
        let demos: DemoSet<f32> = generate_demos(&params.grid, 10, 0.1, &mut enc, 25, 5).unwrap();
        let index = LatentIndex::build(&demos).unwrap();
        let config = ControllerPlan::default().resolve(&demos).unwrap();
        let a = run_sbc_suite(&index, config, &params).unwrap();
        params.jobs = 3;
        let b = run_sbc_suite(&index, config, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.search.total, a.episode_results.iter().map(|e| e.searches).sum::<usize>());
    }

    #[test]
    fn ablation_checks_counts() {
        let params = small_params();
        let mut enc = Encoder::new(&params.encoder, params.grid.observation_len()).unwrap();
        let demos: DemoSet<f32> = generate_demos(&params.grid, 4, 0.1, &mut enc, 25, 5).unwrap();
        let err = run_ablation(&demos, &[2, 200], &ControllerPlan::default(), &params).unwrap_err();
        assert!(err.to_string().contains("count exceeds demos"));
        let r = run_ablation(&demos, &[4, 2], &ControllerPlan::default(), &params).unwrap();
        assert_eq!(r.entries.iter().map(|e| e.demos).collect::<Vec<_>>(), vec![2, 4]);
        assert!(r.entries.iter().all(|e| e.suite.timing.is_some()));
    }

    #[test]
    fn incompatible_demos_rejected() {
        let params = small_params();
        let mut enc = Encoder::new(&EncoderConfig::identity(), params.grid.observation_len()).unwrap();
        let demos: DemoSet<f32> = generate_demos(&params.grid, 2, 0.1, &mut enc, 5, 5).unwrap();
        assert!(matches!(
            check_compatible(&demos, &params),
            Err(SbcError::DimensionMismatch { .. })
        ));
    }
}
