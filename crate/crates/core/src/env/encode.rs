use super::{EnvConfig, GameState, Possession, Team, Vec2};

/// Length of the centralized state vector for `n` players per team (34 for 3v3).
pub fn state_dim(n: usize) -> usize {
    4 + 10 * n
}

/// Length of an agent's egocentric observation (31 for 3v3).
pub fn obs_dim(n: usize) -> usize {
    8 * n + 7
}

/// Number of primitive actions: do-nothing, shoot, N passes, four moves.
pub fn num_actions(n: usize) -> usize {
    n + 6
}

/// Observation entries kept for the skill decoder: carrier-relative
/// kinematics, self/team possession flags, own kinematics and the opponent
/// possession flag.
pub fn decoder_entry_indices(n: usize) -> [usize; 11] {
    let opp_flag = 10 + 4 * (n - 1);
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, opp_flag]
}

struct Frame<'a> {
    cfg: &'a EnvConfig,
    team: Team,
}

impl Frame<'_> {
    fn pos(&self, p: Vec2) -> [f64; 2] {
        let q = self.team.frame(p);
        [
            q.x / self.cfg.field_half_length,
            q.y / self.cfg.field_half_width,
        ]
    }

    fn vel(&self, v: Vec2) -> [f64; 2] {
        let q = self.team.frame(v);
        [q.x / self.cfg.max_speed, q.y / self.cfg.max_speed]
    }
}

/// Centralized state from `team`'s perspective, in that team's frame:
/// ball-holder position relative to the attacked goal and velocity (the
/// resting ball when free), possession one-hot over own then opponent players,
/// then position and velocity of every own and opponent player.
pub fn encode_state(cfg: &EnvConfig, state: &GameState, team: Team) -> Vec<f64> {
    let n = cfg.agents_per_team;
    let f = Frame { cfg, team };
    let mut out = Vec::with_capacity(state_dim(n));

    let (ball_pos, ball_vel) = state.ball_kinematics();
    let rel = team.frame(ball_pos) - Vec2::new(cfg.field_half_length, 0.0);
    out.push(rel.x / (2.0 * cfg.field_half_length));
    out.push(rel.y / cfg.field_half_width);
    out.extend(f.vel(ball_vel));

    let mut onehot = vec![0.0; 2 * n];
    if let Possession::Held(t, i) = state.possession {
        let offset = if t == team { 0 } else { n };
        onehot[offset + i] = 1.0;
    }
    out.extend(onehot);

    for t in [team, team.opponent()] {
        for p in state.players(t) {
            out.extend(f.pos(p.pos));
            out.extend(f.vel(p.vel));
        }
    }
    debug_assert_eq!(out.len(), state_dim(n));
    out
}

/// Egocentric observation of one player.
pub fn encode_observation(
    cfg: &EnvConfig,
    state: &GameState,
    team: Team,
    player: usize,
) -> Vec<f64> {
    let n = cfg.agents_per_team;
    let f = Frame { cfg, team };
    let me = state.player(team, player);
    let mut out = Vec::with_capacity(obs_dim(n));

    let (ball_pos, ball_vel) = state.ball_kinematics();
    out.extend(f.pos(ball_pos - me.pos));
    out.extend(f.vel(ball_vel - me.vel));

    let holder = state.possession.team();
    let self_has = state.possession == Possession::Held(team, player);
    out.push(if self_has { 1.0 } else { 0.0 });
    out.push(if holder == Some(team) { 1.0 } else { 0.0 });

    out.extend(f.pos(me.pos));
    out.extend(f.vel(me.vel));

    for (k, mate) in state.players(team).iter().enumerate() {
        if k == player {
            continue;
        }
        out.extend(f.pos(mate.pos - me.pos));
        out.extend(f.vel(mate.vel - me.vel));
    }

    out.push(if holder == Some(team.opponent()) {
        1.0
    } else {
        0.0
    });
    for opp in state.players(team.opponent()) {
        out.extend(f.pos(opp.pos - me.pos));
        out.extend(f.vel(opp.vel - me.vel));
    }
    debug_assert_eq!(out.len(), obs_dim(n));
    out
}
