//! Synthetic two-action user environment.
//!
//! Each simulated user owns a personalized generative model: a Gaussian
//! initial state, plus per-(step, action) Gaussian base vectors for state
//! transitions and Normal rewards. A transition blends the sampled base
//! vector with the previous state, so trajectories stay Markovian while
//! past states keep a tunable influence.
//!
//! All sampling is a pure function of `(seed, config)`; equal seeds give
//! bit-identical outputs.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{PolicyError, PolicySpec};
use crate::seeding;

/// Number of actions available at every step.
pub const NUM_ACTIONS: usize = 2;

/// A d-dimensional real feature vector describing a user state.
pub type StateVector = Vec<f64>;

/// The two UI actions the decision mechanism chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    A,
    B,
}

impl Action {
    /// All actions, in index order.
    pub const ALL: [Action; NUM_ACTIONS] = [Action::A, Action::B];

    /// Index of this action in Q-value vectors and network outputs.
    pub fn index(self) -> usize {
        match self {
            Action::A => 0,
            Action::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        match i {
            0 => Some(Action::A),
            1 => Some(Action::B),
            _ => None,
        }
    }

    /// The other action.
    pub fn other(self) -> Action {
        match self {
            Action::A => Action::B,
            Action::B => Action::A,
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::A => write!(f, "A"),
            Action::B => write!(f, "B"),
        }
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("step index {t} out of range (horizon {horizon})")]
    OutOfRange { t: usize, horizon: usize },
    #[error("state dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Free constants of the simulated environment.
///
/// `init_*` scales govern state-space Gaussians (initial state and the
/// per-(step, action) transition base vectors); `reward_*` scales govern
/// the per-(step, action) reward distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Feature dimension d (at least 2).
    pub state_dim: usize,
    /// Maximum failed-login steps per episode.
    pub horizon: usize,
    /// Aggregation weight: next = blend_alpha * base + (1 - blend_alpha) * prev.
    pub blend_alpha: f64,
    /// Scale of the zero-centered Normal that draws per-user state means.
    pub init_mean_scale: f64,
    /// Covariance diagonals are drawn uniformly from (0.1 * scale, scale].
    pub init_cov_scale: f64,
    /// Scale of the zero-centered Normal that draws per-(step, action) reward means.
    pub reward_mean_scale: f64,
    /// Reward standard deviations are drawn uniformly from (0.1 * scale, scale].
    pub reward_var_scale: f64,
    /// Base seed for all derived per-user streams.
    pub seed: u64,
    /// Probability of ending the episode early after each step (0 disables).
    #[serde(default)]
    pub early_stop_prob: f64,
    /// Optional additive shift [A, B] applied to every sampled reward mean.
    /// Makes one action better in aggregate while per-user variation remains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_mean_shift: Option<[f64; 2]>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            state_dim: 8,
            horizon: 5,
            blend_alpha: 0.5,
            init_mean_scale: 1.0,
            init_cov_scale: 1.0,
            reward_mean_scale: 1.0,
            reward_var_scale: 1.0,
            seed: 42,
            early_stop_prob: 0.0,
            reward_mean_shift: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.state_dim < 2 {
            return Err(EnvError::InvalidConfig(format!(
                "state_dim must be >= 2, got {}",
                self.state_dim
            )));
        }
        if self.horizon == 0 {
            return Err(EnvError::InvalidConfig("horizon must be positive".into()));
        }
        if !(self.blend_alpha > 0.0 && self.blend_alpha <= 1.0) {
            return Err(EnvError::InvalidConfig(format!(
                "blend_alpha must be in (0, 1], got {}",
                self.blend_alpha
            )));
        }
        for (name, v) in [
            ("init_mean_scale", self.init_mean_scale),
            ("init_cov_scale", self.init_cov_scale),
            ("reward_mean_scale", self.reward_mean_scale),
            ("reward_var_scale", self.reward_var_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::InvalidConfig(format!(
                    "{name} must be a positive real, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.early_stop_prob) {
            return Err(EnvError::InvalidConfig(format!(
                "early_stop_prob must be in [0, 1), got {}",
                self.early_stop_prob
            )));
        }
        Ok(())
    }
}

/// Per-user generative model. All per-(step, action) tables are fully
/// populated for t in [0, horizon) and both actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    pub user_id: String,
    pub init_mean: Vec<f64>,
    pub init_cov_diag: Vec<f64>,
    /// trans_mean[t][action.index()]: mean of the base vector Gaussian.
    pub trans_mean: Vec<[Vec<f64>; 2]>,
    /// trans_cov_diag[t][action.index()]: diagonal covariance, entries > 0.
    pub trans_cov_diag: Vec<[Vec<f64>; 2]>,
    /// reward_mean[t][action.index()].
    pub reward_mean: Vec<[f64; 2]>,
    /// reward_std[t][action.index()], entries >= 0.
    pub reward_std: Vec<[f64; 2]>,
}

impl UserParams {
    pub fn state_dim(&self) -> usize {
        self.init_mean.len()
    }

    pub fn horizon(&self) -> usize {
        self.trans_mean.len()
    }
}

/// One logged step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: StateVector,
    pub action: Action,
    /// Probability the policy assigned to the sampled action; in (0, 1].
    pub action_prob: f64,
    pub reward: f64,
}

/// A single episode for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub steps: Vec<TrajectoryStep>,
    pub terminal: bool,
}

/// Full outcome of one environment step, exposing the sampled base vector
/// so the blend contract can be checked externally.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: StateVector,
    pub reward: f64,
    pub base: StateVector,
}

/// The simulated environment. Holds the free constants; per-user models
/// are created on demand from derived seeds.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: EnvConfig,
}

impl Simulator {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Draws a fresh per-user generative model. Deterministic in
    /// `(seed, config)`.
    ///
    /// Means come from zero-centered Normals scaled by the respective
    /// `*_mean_scale`; covariance diagonals and reward standard deviations
    /// are uniform in `(0.1 * scale, scale]`.
    pub fn init_user(&self, seed: u64) -> UserParams {
        let cfg = &self.config;
        let d = cfg.state_dim;
        let mut rng = seeding::stream_rng(seed, seeding::streams::USER_PARAMS, 0);
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

        let init_mean: Vec<f64> = (0..d)
            .map(|_| cfg.init_mean_scale * std_normal.sample(&mut rng))
            .collect();
        let init_cov_diag: Vec<f64> = (0..d)
            .map(|_| upper_open_uniform(&mut rng, cfg.init_cov_scale))
            .collect();

        let mut trans_mean = Vec::with_capacity(cfg.horizon);
        let mut trans_cov_diag = Vec::with_capacity(cfg.horizon);
        for _ in 0..cfg.horizon {
            let mut means: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            let mut covs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for a in 0..NUM_ACTIONS {
                means[a] = (0..d)
                    .map(|_| cfg.init_mean_scale * std_normal.sample(&mut rng))
                    .collect();
                covs[a] = (0..d)
                    .map(|_| upper_open_uniform(&mut rng, cfg.init_cov_scale))
                    .collect();
            }
            trans_mean.push(means);
            trans_cov_diag.push(covs);
        }

        let mut reward_mean = Vec::with_capacity(cfg.horizon);
        let mut reward_std = Vec::with_capacity(cfg.horizon);
        for _ in 0..cfg.horizon {
            let mut means = [0.0f64; 2];
            let mut stds = [0.0f64; 2];
            for a in 0..NUM_ACTIONS {
                means[a] = cfg.reward_mean_scale * std_normal.sample(&mut rng);
                if let Some(shift) = cfg.reward_mean_shift {
                    means[a] += shift[a];
                }
                stds[a] = upper_open_uniform(&mut rng, cfg.reward_var_scale);
            }
            reward_mean.push(means);
            reward_std.push(stds);
        }

        UserParams {
            user_id: format!("user-{seed:016x}"),
            init_mean,
            init_cov_diag,
            trans_mean,
            trans_cov_diag,
            reward_mean,
            reward_std,
        }
    }

    /// Samples an initial state from the user's Gaussian.
    pub fn reset<R: Rng>(&self, user: &UserParams, rng: &mut R) -> StateVector {
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        user.init_mean
            .iter()
            .zip(&user.init_cov_diag)
            .map(|(&m, &v)| m + v.sqrt() * std_normal.sample(rng))
            .collect()
    }

    /// Advances one step: draws the base vector and reward for `(t, action)`
    /// and blends the base with the previous state.
    pub fn step<R: Rng>(
        &self,
        user: &UserParams,
        state: &[f64],
        t: usize,
        action: Action,
        rng: &mut R,
    ) -> Result<(StateVector, f64), EnvError> {
        let out = self.step_detailed(user, state, t, action, rng)?;
        Ok((out.next_state, out.reward))
    }

    /// Like [`Simulator::step`], but also returns the sampled base vector.
    pub fn step_detailed<R: Rng>(
        &self,
        user: &UserParams,
        state: &[f64],
        t: usize,
        action: Action,
        rng: &mut R,
    ) -> Result<StepOutcome, EnvError> {
        let horizon = user.horizon();
        if t >= horizon {
            return Err(EnvError::OutOfRange { t, horizon });
        }
        if state.len() != user.state_dim() {
            return Err(EnvError::DimensionMismatch {
                got: state.len(),
                expected: user.state_dim(),
            });
        }
        let a = action.index();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mean = &user.trans_mean[t][a];
        let cov = &user.trans_cov_diag[t][a];
        let base: StateVector = mean
            .iter()
            .zip(cov)
            .map(|(&m, &v)| m + v.sqrt() * std_normal.sample(rng))
            .collect();
        let alpha = self.config.blend_alpha;
        let next_state: StateVector = base
            .iter()
            .zip(state)
            .map(|(&b, &s)| alpha * b + (1.0 - alpha) * s)
            .collect();
        let reward = user.reward_mean[t][a] + user.reward_std[t][a] * std_normal.sample(rng);
        Ok(StepOutcome {
            next_state,
            reward,
            base,
        })
    }

    /// Runs one episode under `policy`. Episodes run for exactly `horizon`
    /// steps unless `early_stop_prob` ends them sooner.
    ///
    /// Draw order per step: action sample, base vector (d normals), reward,
    /// then the early-stop coin when enabled.
    pub fn rollout<R: Rng>(
        &self,
        user: &UserParams,
        policy: &PolicySpec,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Trajectory, EnvError> {
        if horizon > user.horizon() {
            return Err(EnvError::OutOfRange {
                t: horizon,
                horizon: user.horizon(),
            });
        }
        let mut steps = Vec::with_capacity(horizon);
        let mut state = self.reset(user, rng);
        for t in 0..horizon {
            let (action, action_prob) = policy.sample_action(&state, rng)?;
            let (next_state, reward) = self.step(user, &state, t, action, rng)?;
            steps.push(TrajectoryStep {
                state,
                action,
                action_prob,
                reward,
            });
            state = next_state;
            if self.config.early_stop_prob > 0.0
                && t + 1 < horizon
                && rng.random::<f64>() < self.config.early_stop_prob
            {
                break;
            }
        }
        Ok(Trajectory {
            user_id: user.user_id.clone(),
            steps,
            terminal: true,
        })
    }
}

/// Uniform draw from the half-open interval `(0.1 * scale, scale]`.
fn upper_open_uniform<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random(); // [0, 1)
    scale * (1.0 - 0.9 * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sim() -> Simulator {
        Simulator::new(EnvConfig::default()).unwrap()
    }

    #[test]
    fn init_user_is_deterministic() {
        let s = sim();
        assert_eq!(s.init_user(7), s.init_user(7));
        assert_ne!(s.init_user(7), s.init_user(8));
    }

    #[test]
    fn init_cov_diag_within_sampling_range() {
        let s = sim();
        for seed in 0..50 {
            let u = s.init_user(seed);
            for &v in &u.init_cov_diag {
                assert!(v > 0.1 && v <= 1.0, "cov diag {v} outside (0.1, 1.0]");
            }
            for t in 0..u.horizon() {
                for a in 0..NUM_ACTIONS {
                    for &v in &u.trans_cov_diag[t][a] {
                        assert!(v > 0.1 && v <= 1.0);
                    }
                    assert!(u.reward_std[t][a] > 0.1 && u.reward_std[t][a] <= 1.0);
                }
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = EnvConfig::default();
        cfg.state_dim = 1;
        assert!(Simulator::new(cfg).is_err());

        let mut cfg = EnvConfig::default();
        cfg.blend_alpha = 0.0;
        assert!(Simulator::new(cfg).is_err());

        let mut cfg = EnvConfig::default();
        cfg.init_cov_scale = -1.0;
        assert!(Simulator::new(cfg).is_err());
    }

    #[test]
    fn reset_degenerate_covariance_pins_state_to_mean() {
        let s = sim();
        let mut u = s.init_user(3);
        let eps = 1e-12;
        u.init_cov_diag = vec![eps; u.state_dim()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = s.reset(&u, &mut rng);
        for (x, m) in s0.iter().zip(&u.init_mean) {
            assert!((x - m).abs() <= 5.0 * eps.sqrt());
        }
    }

    #[test]
    fn reset_equal_seeds_identical() {
        let s = sim();
        let u = s.init_user(1);
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(s.reset(&u, &mut r1), s.reset(&u, &mut r2));
    }

    #[test]
    fn step_deterministic_limit_matches_blend_formula() {
        let s = sim();
        let mut u = s.init_user(5);
        let d = u.state_dim();
        for t in 0..u.horizon() {
            for a in 0..NUM_ACTIONS {
                u.trans_cov_diag[t][a] = vec![1e-18; d];
                u.reward_std[t][a] = 0.0;
            }
        }
        let state = vec![1.0; d];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, reward) = s.step(&u, &state, 2, Action::B, &mut rng).unwrap();
        let alpha = s.config().blend_alpha;
        for (i, &x) in next.iter().enumerate() {
            let expect = alpha * u.trans_mean[2][1][i] + (1.0 - alpha) * state[i];
            assert!((x - expect).abs() < 1e-8);
        }
        assert!((reward - u.reward_mean[2][1]).abs() < 1e-12);
    }

    #[test]
    fn step_out_of_range_errors() {
        let s = sim();
        let u = s.init_user(0);
        let state = vec![0.0; u.state_dim()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = s.step(&u, &state, u.horizon(), Action::A, &mut rng);
        assert!(matches!(err, Err(EnvError::OutOfRange { .. })));
    }

    #[test]
    fn blend_alpha_one_ignores_previous_state() {
        let mut cfg = EnvConfig::default();
        cfg.blend_alpha = 1.0;
        let s = Simulator::new(cfg).unwrap();
        let u = s.init_user(11);
        let d = u.state_dim();
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let (n1, _) = s.step(&u, &vec![100.0; d], 0, Action::A, &mut r1).unwrap();
        let (n2, _) = s.step(&u, &vec![-100.0; d], 0, Action::A, &mut r2).unwrap();
        assert_eq!(n1, n2);
    }

    #[test]
    fn rollout_has_exactly_horizon_steps() {
        let s = sim();
        let u = s.init_user(2);
        let policy = PolicySpec::fixed_prob(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = s.rollout(&u, &policy, 1, &mut rng).unwrap();
        assert_eq!(traj.steps.len(), 1);
        assert!(traj.terminal);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = s.rollout(&u, &policy, 5, &mut rng).unwrap();
        assert_eq!(traj.steps.len(), 5);
        for st in &traj.steps {
            assert!(st.action_prob > 0.0 && st.action_prob <= 1.0);
        }
    }

    #[test]
    fn deterministic_env_and_policy_identical_rollouts_any_seed() {
        let mut cfg = EnvConfig::default();
        cfg.init_cov_scale = 1e-18;
        // covariances are sampled from (0.1*scale, scale], so this drives
        // both init and transition noise to ~0
        let s = Simulator::new(cfg).unwrap();
        let mut u = s.init_user(6);
        for t in 0..u.horizon() {
            for a in 0..NUM_ACTIONS {
                u.reward_std[t][a] = 0.0;
            }
        }
        let policy = PolicySpec::fixed_prob(1.0).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(123);
        let mut r2 = ChaCha8Rng::seed_from_u64(456);
        let t1 = s.rollout(&u, &policy, 5, &mut r1).unwrap();
        let t2 = s.rollout(&u, &policy, 5, &mut r2).unwrap();
        for (a, b) in t1.steps.iter().zip(&t2.steps) {
            assert_eq!(a.action, b.action);
            assert!((a.reward - b.reward).abs() < 1e-6);
            for (x, y) in a.state.iter().zip(&b.state) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn early_stop_shortens_episodes() {
        let mut cfg = EnvConfig::default();
        cfg.early_stop_prob = 0.8;
        let s = Simulator::new(cfg).unwrap();
        let u = s.init_user(9);
        let policy = PolicySpec::fixed_prob(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut saw_short = false;
        for _ in 0..20 {
            let t = s.rollout(&u, &policy, 5, &mut rng).unwrap();
            assert!(!t.steps.is_empty() && t.steps.len() <= 5);
            if t.steps.len() < 5 {
                saw_short = true;
            }
        }
        assert!(saw_short);
    }
}
