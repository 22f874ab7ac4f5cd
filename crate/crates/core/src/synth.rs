//! Gridworld MDP `(S, A, P, ρ0, R, γ, T)` with dynamic-programming oracles and
//! an ε-greedy rollout generator that writes ordinary XRL datasets.
//!
//! Cells are indexed row-major with row 0 at the top. Rewards are granted on
//! entering a cell: every move pays `step_penalty`, entering a goal or cliff
//! cell additionally pays that cell's reward and ends the episode. Terminal
//! cells therefore have value 0.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::XrlDataset;
use crate::error::{Error, Result};
use crate::xrld::Meta;

pub const NUM_ACTIONS: usize = 4;
pub const LATENT_DIM: usize = 8;
pub const MAX_SWEEPS: usize = 100_000;
pub const GENERATOR: &str = "xrl-synth";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Right = 1,
    Down = 2,
    Left = 3,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Up, Action::Right, Action::Down, Action::Left];

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Right => (1, 0),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
        }
    }

    fn perpendicular(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Start,
    Goal,
    Cliff,
}

/// Text description of a layout, loadable from TOML.
///
/// `rows` uses `S` for start, `G` for goal, `C` for cliff and `.` for empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub rows: Vec<String>,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_cliff_penalty")]
    pub cliff_penalty: f64,
    #[serde(default)]
    pub step_penalty: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_max_len")]
    pub max_episode_length: usize,
    #[serde(default)]
    pub slip_prob: f64,
}

fn default_name() -> String {
    "custom".into()
}
fn default_goal_reward() -> f64 {
    1.0
}
fn default_cliff_penalty() -> f64 {
    -1.0
}
fn default_discount() -> f64 {
    1.0
}
fn default_max_len() -> usize {
    100
}

impl GridSpec {
    pub fn preset(name: &str) -> Result<GridSpec> {
        let rows = |r: &[&str]| r.iter().map(|s| s.to_string()).collect();
        let spec = match name {
            "corridor" => GridSpec {
                name: name.into(),
                rows: rows(&["S....G"]),
                goal_reward: 1.0,
                cliff_penalty: 0.0,
                step_penalty: -0.1,
                discount: 1.0,
                max_episode_length: 50,
                slip_prob: 0.0,
            },
            "cliffwalk-4x4" => GridSpec {
                name: name.into(),
                rows: rows(&["....", "....", "....", "SCCG"]),
                goal_reward: 10.0,
                cliff_penalty: -100.0,
                step_penalty: -1.0,
                discount: 1.0,
                max_episode_length: 100,
                slip_prob: 0.0,
            },
            "openfield-8x8" => GridSpec {
                name: name.into(),
                rows: rows(&[
                    "S......S", "........", "..C.....", "........", ".....C..", "........", ".C......", "...G...C",
                ]),
                goal_reward: 10.0,
                cliff_penalty: -10.0,
                step_penalty: -0.1,
                discount: 0.99,
                max_episode_length: 60,
                slip_prob: 0.1,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown layout preset {other:?} (expected corridor, cliffwalk-4x4, openfield-8x8)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<GridSpec> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad layout config: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldMdp {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    /// `(cell, ρ0)` pairs; probabilities sum to 1.
    pub start_cells: Vec<(usize, f64)>,
    pub goal_cells: Vec<(usize, f64)>,
    pub cliff_cells: Vec<(usize, f64)>,
    pub step_penalty: f64,
    pub discount: f64,
    pub max_episode_length: usize,
    pub slip_prob: f64,
}

impl GridworldMdp {
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        let height = spec.rows.len();
        let width = spec.rows.first().map_or(0, |r| r.chars().count());
        if width == 0 || height == 0 {
            return Err(Error::Input("layout has no cells".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        for (y, row) in spec.rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Input(format!("layout row {y} has a different width")));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    'S' => Cell::Start,
                    'G' => Cell::Goal,
                    'C' => Cell::Cliff,
                    '.' => Cell::Empty,
                    other => return Err(Error::Input(format!("unknown layout cell {other:?}"))),
                });
            }
        }
        let of = |kind: Cell| -> Vec<usize> {
            cells
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == kind)
                .map(|(i, _)| i)
                .collect()
        };
        let starts = of(Cell::Start);
        if starts.is_empty() {
            return Err(Error::Input("layout has no start cell".into()));
        }
        let goals = of(Cell::Goal);
        let cliffs = of(Cell::Cliff);
        if goals.is_empty() && cliffs.is_empty() {
            return Err(Error::Input("layout has no terminal cell".into()));
        }
        if !(spec.discount > 0.0 && spec.discount <= 1.0) {
            return Err(Error::Input(format!("discount {} outside (0, 1]", spec.discount)));
        }
        if !(0.0..1.0).contains(&spec.slip_prob) {
            return Err(Error::Input(format!("slip_prob {} outside [0, 1)", spec.slip_prob)));
        }
        if spec.max_episode_length == 0 {
            return Err(Error::Input("max_episode_length must be >= 1".into()));
        }
        let rho0 = 1.0 / starts.len() as f64;
        Ok(GridworldMdp {
            name: spec.name.clone(),
            width,
            height,
            cells,
            start_cells: starts.into_iter().map(|s| (s, rho0)).collect(),
            goal_cells: goals.into_iter().map(|s| (s, spec.goal_reward)).collect(),
            cliff_cells: cliffs.into_iter().map(|s| (s, spec.cliff_penalty)).collect(),
            step_penalty: spec.step_penalty,
            discount: spec.discount,
            max_episode_length: spec.max_episode_length,
            slip_prob: spec.slip_prob,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_spec(&GridSpec::preset(name)?)
    }

    pub fn num_states(&self) -> usize {
        self.cells.len()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        matches!(self.cells[s], Cell::Goal | Cell::Cliff)
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    /// Cell coordinates scaled to `[0, 1]`.
    pub fn observation(&self, s: usize) -> [f32; 2] {
        let (x, y) = self.coords(s);
        let scale = |v: usize, extent: usize| {
            if extent > 1 {
                v as f32 / (extent - 1) as f32
            } else {
                0.0
            }
        };
        [scale(x, self.width), scale(y, self.height)]
    }

    fn shift(&self, s: usize, a: Action) -> usize {
        let (x, y) = self.coords(s);
        let (dx, dy) = a.delta();
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
            s
        } else {
            ny as usize * self.width + nx as usize
        }
    }

    /// Reward for entering `next`.
    pub fn reward(&self, next: usize) -> f64 {
        let bonus = match self.cells[next] {
            Cell::Goal => self.goal_cells.iter().find(|(c, _)| *c == next).map(|g| g.1),
            Cell::Cliff => self.cliff_cells.iter().find(|(c, _)| *c == next).map(|c| c.1),
            _ => None,
        };
        self.step_penalty + bonus.unwrap_or(0.0)
    }

    /// Outcome distribution of taking `a` in `s`: the intended move with
    /// probability `1 - slip_prob`, each perpendicular move with `slip_prob / 2`.
    /// Moves into the boundary leave the agent in place.
    pub fn transitions(&self, s: usize, a: Action) -> Vec<(usize, f64)> {
        let mut out = vec![(self.shift(s, a), 1.0 - self.slip_prob)];
        if self.slip_prob > 0.0 {
            for p in a.perpendicular() {
                out.push((self.shift(s, p), self.slip_prob / 2.0));
            }
        }
        out
    }

    fn sample_next(&self, s: usize, a: Action, u: f64) -> usize {
        let outcomes = self.transitions(s, a);
        let mut acc = 0.0;
        for &(next, p) in &outcomes {
            acc += p;
            if u < acc {
                return next;
            }
        }
        outcomes.last().unwrap().0
    }

    fn q_backup(&self, s: usize, a: Action, values: &[f64]) -> f64 {
        self.transitions(s, a)
            .into_iter()
            .map(|(next, p)| p * (self.reward(next) + self.discount * values[next]))
            .sum()
    }
}

/// ε-greedy policy over a Q table.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPolicy {
    /// `[S × |A|]`.
    pub q_values: Array2<f64>,
    pub epsilon: f64,
}

impl SyntheticPolicy {
    pub fn new(q_values: Array2<f64>, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Input(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Self { q_values, epsilon })
    }

    /// Lowest-index argmax of the Q row.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.q_values.row(s);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn action_probs(&self, s: usize) -> [f64; NUM_ACTIONS] {
        let other = self.epsilon / NUM_ACTIONS as f64;
        let mut probs = [other; NUM_ACTIONS];
        probs[self.greedy_action(s)] = 1.0 - other * (NUM_ACTIONS - 1) as f64;
        probs
    }

    /// Inverse-CDF draw from `action_probs(s)` given a uniform `u ∈ [0, 1)`.
    pub fn sample_action(&self, s: usize, u: f64) -> usize {
        let probs = self.action_probs(s);
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        NUM_ACTIONS - 1
    }
}

/// Synchronous value iteration to sup-norm tolerance `tol`.
pub fn value_iteration(mdp: &GridworldMdp, tol: f64) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = mdp.num_states();
    let mut values = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![0.0; n];
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if mdp.is_terminal(s) {
                continue;
            }
            next[s] = Action::ALL
                .iter()
                .map(|&a| mdp.q_backup(s, a, &values))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((next[s] - values[s]).abs());
        }
        values = next;
        if delta < tol {
            let q = Array2::from_shape_fn((n, NUM_ACTIONS), |(s, a)| {
                if mdp.is_terminal(s) {
                    0.0
                } else {
                    mdp.q_backup(s, Action::ALL[a], &values)
                }
            });
            return Ok((values, q));
        }
    }
    Err(Error::Numerical(format!(
        "value iteration did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Iterates the Bellman expectation operator of `policy` to sup-norm tolerance `tol`.
pub fn policy_evaluation(mdp: &GridworldMdp, policy: &SyntheticPolicy, tol: f64) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let mut values = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![0.0; n];
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if mdp.is_terminal(s) {
                continue;
            }
            let probs = policy.action_probs(s);
            next[s] = Action::ALL
                .iter()
                .zip(probs)
                .filter(|(_, p)| *p > 0.0)
                .map(|(&a, p)| p * mdp.q_backup(s, a, &values))
                .sum();
            delta = delta.max((next[s] - values[s]).abs());
        }
        values = next;
        if delta < tol {
            return Ok(values);
        }
    }
    Err(Error::Numerical(format!(
        "policy evaluation did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Fixed random features `tanh(3 W x + b)` of a cell's observation.
#[derive(Debug, Clone)]
struct LatentProjection {
    weights: [[f64; 2]; LATENT_DIM],
    bias: [f64; LATENT_DIM],
}

impl LatentProjection {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let mut weights = [[0.0; 2]; LATENT_DIM];
        for row in weights.iter_mut() {
            for w in row.iter_mut() {
                *w = rng.sample(StandardNormal);
            }
        }
        let mut bias = [0.0; LATENT_DIM];
        for b in bias.iter_mut() {
            *b = rng.sample(StandardNormal);
        }
        Self { weights, bias }
    }

    fn apply(&self, obs: [f32; 2]) -> [f32; LATENT_DIM] {
        let mut out = [0.0f32; LATENT_DIM];
        for (k, o) in out.iter_mut().enumerate() {
            let z = self.weights[k][0] * obs[0] as f64 + self.weights[k][1] * obs[1] as f64;
            *o = (3.0 * z + self.bias[k]).tanh() as f32;
        }
        out
    }
}

/// Rolls out `episodes` episodes of `policy`.
///
/// Randomness comes from one ChaCha8 stream seeded with `seed`, drawn in this
/// order: 16 normals for the latent weights, 8 for the latent biases, then per
/// episode one uniform for the start cell followed by two uniforms per step
/// (action, then transition outcome).
///
/// Episodes hitting `max_episode_length` end with `done = true` and are listed
/// in `meta.timeout_episodes`.
pub fn generate_dataset(
    mdp: &GridworldMdp,
    policy: &SyntheticPolicy,
    episodes: usize,
    seed: u64,
) -> Result<XrlDataset> {
    if episodes == 0 {
        return Err(Error::Input("episodes must be >= 1".into()));
    }
    let values = policy_evaluation(mdp, policy, 1e-9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = LatentProjection::draw(&mut rng);

    let mut observations = Vec::new();
    let mut latents = Vec::new();
    let mut dist_probs = Vec::new();
    let mut critic_values = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut dones = Vec::new();
    let mut steps = Vec::new();
    let mut timeouts = Vec::new();

    for episode in 0..episodes {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut state = mdp.start_cells.last().unwrap().0;
        for &(cell, p) in &mdp.start_cells {
            acc += p;
            if u < acc {
                state = cell;
                break;
            }
        }

        for t in 0..mdp.max_episode_length {
            let action = policy.sample_action(state, rng.gen());
            let next = mdp.sample_next(state, Action::ALL[action], rng.gen());
            let terminal = mdp.is_terminal(next);
            let timeout = !terminal && t + 1 == mdp.max_episode_length;

            let obs = mdp.observation(state);
            observations.extend_from_slice(&obs);
            latents.extend_from_slice(&projection.apply(obs));
            let probs = policy.action_probs(state);
            // Greedy entry is 1 - Σ others so the f32 row sums to 1 to rounding.
            let others = (policy.epsilon / NUM_ACTIONS as f64) as f32;
            let greedy = policy.greedy_action(state);
            for (a, _) in probs.iter().enumerate() {
                dist_probs.push(if a == greedy {
                    (1.0 - (NUM_ACTIONS - 1) as f64 * others as f64) as f32
                } else {
                    others
                });
            }
            critic_values.push(values[state] as f32);
            actions.push(action as i32);
            rewards.push(mdp.reward(next) as f32);
            dones.push(terminal || timeout);
            steps.push(t as i32);

            if timeout {
                timeouts.push(episode as u32);
            }
            if terminal || timeout {
                break;
            }
            state = next;
        }
    }

    let n = actions.len();
    Ok(XrlDataset {
        meta: Meta {
            env_id: format!("gridworld/{}", mdp.name),
            num_actions: NUM_ACTIONS as u32,
            obs_shape: vec![2],
            discount: mdp.discount,
            seed,
            generator: GENERATOR.into(),
            contains_truncations: !timeouts.is_empty(),
            timeout_episodes: Some(timeouts),
        },
        observations: Array2::from_shape_vec((n, 2), observations).expect("2 per step"),
        actions,
        rewards,
        dones,
        steps,
        latents: Some(Array2::from_shape_vec((n, LATENT_DIM), latents).expect("8 per step")),
        dist_probs: Some(Array2::from_shape_vec((n, NUM_ACTIONS), dist_probs).expect("|A| per step")),
        critic_values: Some(critic_values),
    })
}

/// Recovers the cell index of a gridworld observation.
pub fn cell_of_observation(mdp: &GridworldMdp, obs: &[f32]) -> usize {
    let unscale = |v: f32, extent: usize| {
        if extent > 1 {
            (v as f64 * (extent - 1) as f64).round() as usize
        } else {
            0
        }
    };
    unscale(obs[1], mdp.height) * mdp.width + unscale(obs[0], mdp.width)
}
