//! Simple team sports simulator.
//!
//! An N-vs-N game on a continuous rectangular field. The home team attacks the
//! goal at `+x`, the away team attacks the goal at `-x`. Every quantity an agent
//! sees or does is expressed in its team's frame, which for the away team is
//! the world frame rotated by 180 degrees, so the game looks the same from both
//! sides.

mod encode;
mod geom;
mod scripted;

pub use encode::{
    decoder_entry_indices, encode_observation, encode_state, num_actions, obs_dim, state_dim,
};
pub use geom::Vec2;
pub use scripted::scripted_action;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, HsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Team {
    Home,
    Away,
}

impl Team {
    pub fn opponent(self) -> Team {
        match self {
            Team::Home => Team::Away,
            Team::Away => Team::Home,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Team::Home => 0,
            Team::Away => 1,
        }
    }

    /// Maps a world vector into this team's frame (and back; the map is an involution).
    pub fn frame(self, v: Vec2) -> Vec2 {
        match self {
            Team::Home => v,
            Team::Away => -v,
        }
    }
}

/// Simulator parameters. Every constant of the physics and of the scripted
/// opponent lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub agents_per_team: usize,
    pub max_steps: usize,
    pub field_half_length: f64,
    pub field_half_width: f64,
    pub max_speed: f64,
    pub velocity_decay: f64,
    pub pickup_radius: f64,
    pub steal_radius: f64,
    pub steal_prob: f64,
    pub shot_base: f64,
    pub shot_falloff: f64,
    pub shot_floor: f64,
    pub rebound_radius: f64,
    pub intercept_radius: f64,
    pub intercept_prob: f64,
    pub shooting_range: f64,
    pub pressure_radius: f64,
    pub rng_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            agents_per_team: 3,
            max_steps: 500,
            field_half_length: 20.0,
            field_half_width: 10.0,
            max_speed: 0.5,
            velocity_decay: 0.8,
            pickup_radius: 1.0,
            steal_radius: 0.6,
            steal_prob: 0.05,
            shot_base: 0.9,
            shot_falloff: 0.12,
            shot_floor: 0.02,
            rebound_radius: 2.0,
            intercept_radius: 0.5,
            intercept_prob: 0.3,
            shooting_range: 6.0,
            pressure_radius: 1.5,
            rng_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn with_agents(mut self, n: usize) -> Self {
        self.agents_per_team = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HsdError::Config(m.to_string()));
        if self.agents_per_team == 0 {
            return bad("agents_per_team must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !(self.field_half_width > 0.0 && self.field_half_length > 0.0) {
            return bad("field dimensions must be positive");
        }
        if (self.field_half_length - 2.0 * self.field_half_width).abs() > 1e-12 {
            return bad("field_half_length must be twice field_half_width");
        }
        for (name, p) in [
            ("steal_prob", self.steal_prob),
            ("intercept_prob", self.intercept_prob),
            ("shot_base", self.shot_base),
            ("shot_floor", self.shot_floor),
            ("velocity_decay", self.velocity_decay),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("max_speed", self.max_speed),
            ("pickup_radius", self.pickup_radius),
            ("steal_radius", self.steal_radius),
            ("rebound_radius", self.rebound_radius),
            ("intercept_radius", self.intercept_radius),
            ("shot_falloff", self.shot_falloff),
            ("shooting_range", self.shooting_range),
            ("pressure_radius", self.pressure_radius),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Center of the goal that `team` attacks, in world coordinates.
    pub fn attacking_goal(&self, team: Team) -> Vec2 {
        team.frame(Vec2::new(self.field_half_length, 0.0))
    }

    pub fn shot_success_prob(&self, dist: f64) -> f64 {
        (self.shot_base - self.shot_falloff * dist).max(self.shot_floor)
    }

    fn clamp_to_field(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(-self.field_half_length, self.field_half_length),
            p.y.clamp(-self.field_half_width, self.field_half_width),
        )
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        p.x.abs() <= self.field_half_length && p.y.abs() <= self.field_half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Player {
    pub pos: Vec2,
    pub vel: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Possession {
    Free,
    Held(Team, usize),
}

impl Possession {
    pub fn team(self) -> Option<Team> {
        match self {
            Possession::Free => None,
            Possession::Held(t, _) => Some(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Live,
    Finished { winner: Option<Team> },
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub home: Vec<Player>,
    pub away: Vec<Player>,
    pub possession: Possession,
    /// Ball position; coincides with the carrier's position while held.
    pub ball: Vec2,
    pub step_count: usize,
    pub phase: Phase,
    /// Most recent ball holder, kept while the ball is free.
    pub last_holder: Option<(Team, usize)>,
    /// Team whose missed shot left the ball free, until somebody picks it up.
    pub rebound_team: Option<Team>,
}

impl GameState {
    pub fn players(&self, team: Team) -> &[Player] {
        match team {
            Team::Home => &self.home,
            Team::Away => &self.away,
        }
    }

    pub fn players_mut(&mut self, team: Team) -> &mut Vec<Player> {
        match team {
            Team::Home => &mut self.home,
            Team::Away => &mut self.away,
        }
    }

    pub fn player(&self, team: Team, i: usize) -> &Player {
        &self.players(team)[i]
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Finished { .. })
    }

    /// Kinematics of the ball: carrier position/velocity when held, resting ball otherwise.
    pub fn ball_kinematics(&self) -> (Vec2, Vec2) {
        match self.possession {
            Possession::Held(t, i) => {
                let p = self.player(t, i);
                (p.pos, p.vel)
            }
            Possession::Free => (self.ball, Vec2::ZERO),
        }
    }

    /// The same situation seen after rotating the field by 180 degrees and
    /// exchanging the team labels.
    pub fn rotated_swapped(&self) -> GameState {
        let rot = |ps: &[Player]| -> Vec<Player> {
            ps.iter()
                .map(|p| Player {
                    pos: -p.pos,
                    vel: -p.vel,
                })
                .collect()
        };
        let swap = |t: Team| t.opponent();
        GameState {
            home: rot(&self.away),
            away: rot(&self.home),
            possession: match self.possession {
                Possession::Free => Possession::Free,
                Possession::Held(t, i) => Possession::Held(swap(t), i),
            },
            ball: -self.ball,
            step_count: self.step_count,
            phase: match self.phase {
                Phase::Live => Phase::Live,
                Phase::Finished { winner } => Phase::Finished {
                    winner: winner.map(swap),
                },
            },
            last_holder: self.last_holder.map(|(t, i)| (swap(t), i)),
            rebound_team: self.rebound_team.map(swap),
        }
    }
}

/// Primitive actions. Indices: 0 do-nothing, 1 shoot, 2..2+N pass to teammate
/// k, then down, up, right, left. Directions are in the acting team's frame
/// where "right" points at the attacked goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    DoNothing,
    Shoot,
    Pass(usize),
    Down,
    Up,
    Right,
    Left,
}

impl Action {
    pub fn from_index(index: usize, n: usize) -> Option<Action> {
        match index {
            0 => Some(Action::DoNothing),
            1 => Some(Action::Shoot),
            i if i < 2 + n => Some(Action::Pass(i - 2)),
            i if i == n + 2 => Some(Action::Down),
            i if i == n + 3 => Some(Action::Up),
            i if i == n + 4 => Some(Action::Right),
            i if i == n + 5 => Some(Action::Left),
            _ => None,
        }
    }

    pub fn index(self, n: usize) -> usize {
        match self {
            Action::DoNothing => 0,
            Action::Shoot => 1,
            Action::Pass(k) => 2 + k,
            Action::Down => n + 2,
            Action::Up => n + 3,
            Action::Right => n + 4,
            Action::Left => n + 5,
        }
    }

    /// Unit direction in the team frame, for movement actions.
    pub fn direction(self) -> Option<Vec2> {
        match self {
            Action::Down => Some(Vec2::new(0.0, -1.0)),
            Action::Up => Some(Vec2::new(0.0, 1.0)),
            Action::Right => Some(Vec2::new(1.0, 0.0)),
            Action::Left => Some(Vec2::new(-1.0, 0.0)),
            _ => None,
        }
    }

    pub fn is_movement(self) -> bool {
        self.direction().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameEvent {
    Goal,
    OffensiveRebound,
    ShotAttempt,
    MadePass,
    ReceivedPass,
    Steal,
    PossessionGain,
    PossessionLoss,
}

impl GameEvent {
    /// The event kinds tallied per skill by the analysis tools, in column order.
    pub const TRACKED: [GameEvent; 6] = [
        GameEvent::Goal,
        GameEvent::OffensiveRebound,
        GameEvent::ShotAttempt,
        GameEvent::MadePass,
        GameEvent::ReceivedPass,
        GameEvent::Steal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GameEvent::Goal => "goal",
            GameEvent::OffensiveRebound => "offensive_rebound",
            GameEvent::ShotAttempt => "shot_attempt",
            GameEvent::MadePass => "made_pass",
            GameEvent::ReceivedPass => "received_pass",
            GameEvent::Steal => "steal",
            GameEvent::PossessionGain => "possession_gain",
            GameEvent::PossessionLoss => "possession_loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: GameEvent,
    pub team: Team,
    pub player: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: GameState,
    /// Team rewards indexed by [`Team::index`].
    pub rewards: [f64; 2],
    pub done: bool,
    pub winner: Option<Team>,
    pub events: Vec<EventRecord>,
}

impl StepOutcome {
    pub fn reward(&self, team: Team) -> f64 {
        self.rewards[team.index()]
    }
}

/// One simulator instance with its own random stream.
#[derive(Debug, Clone)]
pub struct Sts2Env {
    config: EnvConfig,
    state: GameState,
    rng: ChaCha8Rng,
}

impl Sts2Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.rng_seed;
        let state = kickoff_state(&config);
        Ok(Self {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Resumes from an arbitrary state, used to set up specific situations.
    pub fn from_state(config: EnvConfig, state: GameState, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.agents_per_team;
        if state.home.len() != n || state.away.len() != n {
            return usage("state team sizes do not match the configuration");
        }
        Ok(Self {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn num_agents(&self) -> usize {
        self.config.agents_per_team
    }

    /// Restarts at the kickoff formation and reseeds the random stream.
    pub fn reset(&mut self, seed: u64) -> &GameState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = kickoff_state(&self.config);
        &self.state
    }

    pub fn observations(&self, team: Team) -> Vec<Vec<f64>> {
        (0..self.num_agents())
            .map(|i| encode_observation(&self.config, &self.state, team, i))
            .collect()
    }

    pub fn state_vector(&self, team: Team) -> Vec<f64> {
        encode_state(&self.config, &self.state, team)
    }

    /// Action a player would actually perform; shooting or passing without the
    /// ball and passing to oneself become do-nothing.
    pub fn effective_action(&self, team: Team, player: usize, action: Action) -> Action {
        effective_action(&self.state, team, player, action)
    }

    pub fn step(&mut self, home_actions: &[usize], away_actions: &[usize]) -> Result<StepOutcome> {
        if self.state.is_done() {
            return usage("step called on a finished episode");
        }
        let n = self.config.agents_per_team;
        let mut actions = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for (team, raw) in [(Team::Home, home_actions), (Team::Away, away_actions)] {
            if raw.len() != n {
                return usage(format!(
                    "expected {n} actions for {team:?}, got {}",
                    raw.len()
                ));
            }
            for (i, &a) in raw.iter().enumerate() {
                let action = Action::from_index(a, n)
                    .ok_or_else(|| HsdError::Usage(format!("action index {a} out of range")))?;
                actions[team.index()].push(effective_action(&self.state, team, i, action));
            }
        }

        let cfg = &self.config;
        let st = &mut self.state;
        let rng = &mut self.rng;
        let mut events = Vec::new();
        let mut rewards = [0.0; 2];
        let mut emit = |event, team, player| {
            events.push(EventRecord {
                event,
                team,
                player,
            })
        };

        // Ball action of the carrier, resolved at the observed positions.
        if let Possession::Held(team, i) = st.possession {
            match actions[team.index()][i] {
                Action::Shoot => {
                    emit(GameEvent::ShotAttempt, team, i);
                    let shooter = st.player(team, i).pos;
                    let goal = cfg.attacking_goal(team);
                    let p = cfg.shot_success_prob(shooter.dist(goal));
                    if rng.gen::<f64>() < p {
                        emit(GameEvent::Goal, team, i);
                        rewards[team.index()] += 1.0;
                        rewards[team.opponent().index()] -= 1.0;
                        st.phase = Phase::Finished { winner: Some(team) };
                    } else {
                        let r = cfg.rebound_radius * rng.gen::<f64>().sqrt();
                        let theta = std::f64::consts::TAU * rng.gen::<f64>();
                        st.ball =
                            cfg.clamp_to_field(goal + Vec2::new(r * theta.cos(), r * theta.sin()));
                        st.possession = Possession::Free;
                        st.rebound_team = Some(team);
                    }
                }
                Action::Pass(k) => {
                    let from = st.player(team, i).pos;
                    let to = st.player(team, k).pos;
                    let opp = team.opponent();
                    let interceptor = st
                        .players(opp)
                        .iter()
                        .enumerate()
                        .map(|(j, p)| (j, p.pos.dist_to_segment(from, to)))
                        .filter(|&(_, d)| d <= cfg.intercept_radius)
                        .fold(None, |best: Option<(usize, f64)>, c| match best {
                            Some(b) if b.1 <= c.1 => Some(b),
                            _ => Some(c),
                        });
                    let intercepted = match interceptor {
                        Some(_) => rng.gen::<f64>() < cfg.intercept_prob,
                        None => false,
                    };
                    if let (true, Some((j, _))) = (intercepted, interceptor) {
                        st.ball = st.player(opp, j).pos;
                        st.possession = Possession::Free;
                        st.rebound_team = None;
                    } else {
                        emit(GameEvent::MadePass, team, i);
                        emit(GameEvent::ReceivedPass, team, k);
                        st.possession = Possession::Held(team, k);
                        st.ball = to;
                    }
                }
                _ => {}
            }
        }

        if !st.is_done() {
            // Kinematics.
            for team in [Team::Home, Team::Away] {
                let decay = cfg.velocity_decay;
                let vmax = cfg.max_speed;
                for (p, a) in st
                    .players_mut(team)
                    .iter_mut()
                    .zip(actions[team.index()].iter())
                {
                    p.vel = match a.direction() {
                        Some(dir) => p.vel * decay + team.frame(dir) * ((1.0 - decay) * vmax),
                        None => p.vel * decay,
                    };
                    p.pos += p.vel;
                    if p.pos.x.abs() > cfg.field_half_length {
                        p.pos.x = p.pos.x.clamp(-cfg.field_half_length, cfg.field_half_length);
                        p.vel.x = 0.0;
                    }
                    if p.pos.y.abs() > cfg.field_half_width {
                        p.pos.y = p.pos.y.clamp(-cfg.field_half_width, cfg.field_half_width);
                        p.vel.y = 0.0;
                    }
                }
            }
            if let Possession::Held(t, i) = st.possession {
                st.ball = st.player(t, i).pos;
            }

            // Steal attempt by the nearest defender in contact.
            if let Possession::Held(team, i) = st.possession {
                let carrier = st.player(team, i).pos;
                let opp = team.opponent();
                let nearest = nearest_within(st.players(opp), carrier, cfg.steal_radius);
                if let Some(j) = nearest {
                    if rng.gen::<f64>() < cfg.steal_prob {
                        emit(GameEvent::Steal, opp, j);
                        emit(GameEvent::PossessionGain, opp, j);
                        emit(GameEvent::PossessionLoss, team, i);
                        rewards[opp.index()] += 0.1;
                        rewards[team.index()] -= 0.1;
                        st.possession = Possession::Held(opp, j);
                        st.ball = st.player(opp, j).pos;
                        st.rebound_team = None;
                    }
                }
            }

            // Free ball pickup; nearest wins, ties go to the lower (team, index).
            if st.possession == Possession::Free {
                let mut best: Option<(Team, usize, f64)> = None;
                for team in [Team::Home, Team::Away] {
                    for (j, p) in st.players(team).iter().enumerate() {
                        let d = p.pos.dist(st.ball);
                        if d <= cfg.pickup_radius && best.is_none_or(|b| d < b.2) {
                            best = Some((team, j, d));
                        }
                    }
                }
                if let Some((team, j, _)) = best {
                    if st.rebound_team == Some(team) {
                        emit(GameEvent::OffensiveRebound, team, j);
                    }
                    st.rebound_team = None;
                    if let Some((lt, li)) = st.last_holder {
                        if lt != team {
                            emit(GameEvent::PossessionGain, team, j);
                            emit(GameEvent::PossessionLoss, lt, li);
                            rewards[team.index()] += 0.1;
                            rewards[lt.index()] -= 0.1;
                        }
                    }
                    st.possession = Possession::Held(team, j);
                    st.ball = st.player(team, j).pos;
                }
            }
        }

        if let Possession::Held(t, i) = st.possession {
            st.last_holder = Some((t, i));
        }

        let hold = 1.0 / (2.0 * cfg.max_steps as f64);
        for team in [Team::Home, Team::Away] {
            rewards[team.index()] += if st.possession.team() == Some(team) {
                hold
            } else {
                -hold
            };
        }

        st.step_count += 1;
        if !st.is_done() && st.step_count >= cfg.max_steps {
            st.phase = Phase::Finished { winner: None };
        }
        let winner = match st.phase {
            Phase::Finished { winner } => winner,
            Phase::Live => None,
        };
        Ok(StepOutcome {
            state: st.clone(),
            rewards,
            done: st.is_done(),
            winner,
            events,
        })
    }
}

fn nearest_within(players: &[Player], target: Vec2, radius: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in players.iter().enumerate() {
        let d = p.pos.dist(target);
        if d <= radius && best.is_none_or(|b| d < b.1) {
            best = Some((j, d));
        }
    }
    best.map(|b| b.0)
}

pub(crate) fn effective_action(
    state: &GameState,
    team: Team,
    player: usize,
    action: Action,
) -> Action {
    let has_ball = state.possession == Possession::Held(team, player);
    match action {
        Action::Shoot if !has_ball => Action::DoNothing,
        Action::Pass(_) if !has_ball => Action::DoNothing,
        Action::Pass(k) if k == player => Action::DoNothing,
        a => a,
    }
}

/// Home formation in the home frame; the away team mirrors it through the center.
fn kickoff_state(cfg: &EnvConfig) -> GameState {
    let n = cfg.agents_per_team;
    let w = cfg.field_half_width;
    let home: Vec<Player> = (0..n)
        .map(|i| {
            let lane = if n == 1 {
                0.0
            } else {
                0.6 * w * (2.0 * i as f64 / (n - 1) as f64 - 1.0)
            };
            Player {
                pos: Vec2::new(-0.25 * cfg.field_half_length - 3.0 * (i % 2) as f64, lane),
                vel: Vec2::ZERO,
            }
        })
        .collect();
    let away = home
        .iter()
        .map(|p| Player {
            pos: Team::Away.frame(p.pos),
            vel: Vec2::ZERO,
        })
        .collect();
    GameState {
        home,
        away,
        possession: Possession::Free,
        ball: Vec2::ZERO,
        step_count: 0,
        phase: Phase::Live,
        last_holder: None,
        rebound_team: None,
    }
}
