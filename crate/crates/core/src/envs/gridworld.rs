use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Transition;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Grid moves in tie-break order: a later entry wins a tie.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
        }
    }

    /// Continuous action representing this move.
    pub fn as_action(self) -> [f64; 2] {
        let (dr, dc) = self.delta();
        [dr as f64, dc as f64]
    }

    /// Discretize a 2-d continuous action (argmax over axis directions) or a 4-d
    /// one-hot/score vector (argmax in `ALL` order). Ties go to the later move.
    pub fn from_action(action: &[f64]) -> Result<Move> {
        let scores = match action.len() {
            2 => [-action[0], action[0], -action[1], action[1]],
            4 => [action[0], action[1], action[2], action[3]],
            n => {
                return Err(Error::Shape(format!(
                    "gridworld action must have 2 (continuous) or 4 (one-hot) entries, got {n}"
                )))
            }
        };
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Numeric("NaN gridworld action".into()));
        }
        let mut best = 0;
        for i in 1..4 {
            if scores[i] >= scores[best] {
                best = i;
            }
        }
        Ok(Move::ALL[best])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridworldConfig {
    pub size: usize,
    pub goal: [usize; 2],
    pub horizon: usize,
    /// Fixed start cell; `None` draws a uniformly random non-goal cell on reset.
    pub start: Option<[usize; 2]>,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        GridworldConfig {
            size: 5,
            goal: [4, 4],
            horizon: 50,
            start: None,
        }
    }
}

impl GridworldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config("gridworld size must be at least 2".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("gridworld horizon must be positive".into()));
        }
        let in_grid = |c: [usize; 2]| c[0] < self.size && c[1] < self.size;
        if !in_grid(self.goal) {
            return Err(Error::Config(format!("goal {:?} lies outside the grid", self.goal)));
        }
        if let Some(s) = self.start {
            if !in_grid(s) || s == self.goal {
                return Err(Error::Config(format!("invalid start cell {s:?}")));
            }
        }
        Ok(())
    }

    /// Observation for a cell: row and column scaled to [-1, 1].
    pub fn encode(&self, cell: [usize; 2]) -> Vec<f64> {
        let s = (self.size - 1) as f64;
        vec![2.0 * cell[0] as f64 / s - 1.0, 2.0 * cell[1] as f64 / s - 1.0]
    }

    pub fn decode(&self, obs: &[f64]) -> Result<[usize; 2]> {
        if obs.len() != 2 {
            return Err(Error::Shape(format!("gridworld observation has length {}", obs.len())));
        }
        let s = (self.size - 1) as f64;
        let coord = |x: f64| -> Result<usize> {
            let v = ((x + 1.0) * s / 2.0).round();
            if !(0.0..=s).contains(&v) {
                return Err(Error::Env(format!("observation {x} is off the grid")));
            }
            Ok(v as usize)
        };
        Ok([coord(obs[0])?, coord(obs[1])?])
    }

    pub fn next_cell(&self, cell: [usize; 2], mv: Move) -> [usize; 2] {
        let (dr, dc) = mv.delta();
        let max = (self.size - 1) as i64;
        [
            (cell[0] as i64 + dr).clamp(0, max) as usize,
            (cell[1] as i64 + dc).clamp(0, max) as usize,
        ]
    }

    /// Optimal state values under reward 1 on entering the goal, by value iteration.
    /// `V[goal] = 0` because the episode ends there.
    pub fn value_iteration(&self, gamma: f64) -> Vec<Vec<f64>> {
        let n = self.size;
        let mut v = vec![vec![0.0; n]; n];
        loop {
            let mut change: f64 = 0.0;
            for r in 0..n {
                for c in 0..n {
                    if [r, c] == self.goal {
                        continue;
                    }
                    let best = Move::ALL
                        .iter()
                        .map(|&m| self.q_value(&v, [r, c], m, gamma))
                        .fold(f64::NEG_INFINITY, f64::max);
                    change = change.max((best - v[r][c]).abs());
                    v[r][c] = best;
                }
            }
            if change < 1e-14 {
                return v;
            }
        }
    }

    fn q_value(&self, v: &[Vec<f64>], cell: [usize; 2], mv: Move, gamma: f64) -> f64 {
        let next = self.next_cell(cell, mv);
        if next == self.goal {
            1.0
        } else {
            gamma * v[next[0]][next[1]]
        }
    }

    /// Optimal move from `cell`. Ties go to the later move in `Move::ALL` order.
    pub fn expert_move(&self, values: &[Vec<f64>], cell: [usize; 2], gamma: f64) -> Move {
        let mut best = Move::Up;
        let mut best_q = f64::NEG_INFINITY;
        for m in Move::ALL {
            let q = self.q_value(values, cell, m, gamma);
            // Tolerance so floating noise in VI cannot break an exact tie.
            if q >= best_q - 1e-12 {
                best_q = best_q.max(q);
                best = m;
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct Gridworld {
    cfg: GridworldConfig,
    cell: [usize; 2],
    steps: usize,
    terminal: bool,
}

impl Gridworld {
    pub fn new(cfg: GridworldConfig) -> Result<Self> {
        cfg.validate()?;
        let cell = cfg.start.unwrap_or([0, 0]);
        Ok(Gridworld {
            cfg,
            cell,
            steps: 0,
            terminal: false,
        })
    }

    pub fn config(&self) -> &GridworldConfig {
        &self.cfg
    }

    pub fn cell(&self) -> [usize; 2] {
        self.cell
    }

    pub fn step_count(&self) -> usize {
        self.steps
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        self.reset_with(&mut rng)
    }

    pub(crate) fn reset_with(&mut self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.cell = match self.cfg.start {
            Some(s) => s,
            None => {
                let n = self.cfg.size;
                loop {
                    let c = [rng.random_range(0..n), rng.random_range(0..n)];
                    if c != self.cfg.goal {
                        break c;
                    }
                }
            }
        };
        self.steps = 0;
        self.terminal = false;
        self.obs()
    }

    /// Place the agent on a cell (used by tests and by oracle evaluations).
    pub fn set_cell(&mut self, cell: [usize; 2]) -> Result<()> {
        if cell[0] >= self.cfg.size || cell[1] >= self.cfg.size {
            return Err(Error::Env(format!("cell {cell:?} outside the grid")));
        }
        self.cell = cell;
        self.steps = 0;
        self.terminal = cell == self.cfg.goal;
        Ok(())
    }

    pub fn obs(&self) -> Vec<f64> {
        self.cfg.encode(self.cell)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let mv = Move::from_action(action)?;
        self.step_move(mv, action)
    }

    pub fn step_move(&mut self, mv: Move, action: &[f64]) -> Result<Transition> {
        if self.terminal {
            return Err(Error::Usage("step called on a terminal gridworld".into()));
        }
        let obs = self.obs();
        self.cell = self.cfg.next_cell(self.cell, mv);
        self.steps += 1;
        let goal_reached = self.cell == self.cfg.goal;
        self.terminal = goal_reached || self.steps >= self.cfg.horizon;
        Ok(Transition {
            obs,
            action: action.to_vec(),
            reward: if goal_reached { 1.0 } else { 0.0 },
            next_obs: self.obs(),
            done: self.terminal,
            goal_reached,
            logp_behavior: 0.0,
        })
    }
}
