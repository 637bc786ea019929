//! Rule-based player used for the opponent team and for ad-hoc teammates.
//!
//! Priorities, evaluated in the acting team's frame:
//! 1. carrier: shoot inside `shooting_range` of the attacked goal; when an
//!    opponent is within `pressure_radius`, pass to a teammate with no
//!    opponent inside that radius; otherwise advance on the goal.
//! 2. off-ball while the team holds the ball: run ahead of the carrier into
//!    a lane spread across the field.
//! 3. opponent holds the ball: the nearest player chases the carrier, the
//!    others cover the net between the carrier and the own goal.
//! 4. free ball: the nearest player chases the ball, the others cover.

use rand::Rng;

use super::{Action, EnvConfig, GameState, Possession, Team, Vec2};

const ARRIVE_RADIUS: f64 = 0.3;
const SUPPORT_AHEAD: f64 = 6.0;
const COVER_FRACTION: f64 = 0.35;

/// Returns the scripted action index for `player` of `team`.
pub fn scripted_action<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    state: &GameState,
    team: Team,
    player: usize,
    rng: &mut R,
) -> usize {
    let n = cfg.agents_per_team;
    scripted(cfg, state, team, player, rng).index(n)
}

fn scripted<R: Rng + ?Sized>(
    cfg: &EnvConfig,
    state: &GameState,
    team: Team,
    player: usize,
    rng: &mut R,
) -> Action {
    let local = |p: Vec2| team.frame(p);
    let mates = state.players(team);
    let opps = state.players(team.opponent());
    let me = local(mates[player].pos);
    let goal = Vec2::new(cfg.field_half_length, 0.0);
    let own_goal = Vec2::new(-cfg.field_half_length, 0.0);

    match state.possession {
        Possession::Held(t, i) if t == team && i == player => {
            if me.dist(goal) < cfg.shooting_range {
                return Action::Shoot;
            }
            let pressured = opps
                .iter()
                .any(|o| local(o.pos).dist(me) <= cfg.pressure_radius);
            if pressured {
                let open: Vec<usize> = (0..mates.len())
                    .filter(|&k| k != player)
                    .filter(|&k| {
                        let m = local(mates[k].pos);
                        opps.iter()
                            .all(|o| local(o.pos).dist(m) > cfg.pressure_radius)
                    })
                    .collect();
                match open.len() {
                    0 => {}
                    1 => return Action::Pass(open[0]),
                    len => return Action::Pass(open[rng.gen_range(0..len)]),
                }
            }
            move_toward(me, goal)
        }
        Possession::Held(t, i) if t == team => {
            let carrier = local(mates[i].pos);
            let target = Vec2::new(
                (carrier.x + SUPPORT_AHEAD).min(cfg.field_half_length - 4.0),
                lane(cfg, player),
            );
            if me.x < target.x - 1.0 {
                Action::Right
            } else {
                move_toward(me, target)
            }
        }
        Possession::Held(t, i) => {
            let carrier = local(state.player(t, i).pos);
            defend(
                me,
                player,
                carrier,
                own_goal,
                mates.iter().map(|m| local(m.pos)),
            )
        }
        Possession::Free => {
            let ball = local(state.ball);
            defend(
                me,
                player,
                ball,
                own_goal,
                mates.iter().map(|m| local(m.pos)),
            )
        }
    }
}

fn defend(
    me: Vec2,
    player: usize,
    target: Vec2,
    own_goal: Vec2,
    mates: impl Iterator<Item = Vec2>,
) -> Action {
    let chaser = mates
        .enumerate()
        .map(|(k, p)| (k, p.dist(target)))
        .fold(None, |best: Option<(usize, f64)>, c| match best {
            Some(b) if b.1 <= c.1 => Some(b),
            _ => Some(c),
        })
        .map(|b| b.0);
    if chaser == Some(player) {
        move_toward(me, target)
    } else {
        move_toward(me, own_goal + (target - own_goal) * COVER_FRACTION)
    }
}

fn lane(cfg: &EnvConfig, player: usize) -> f64 {
    let n = cfg.agents_per_team;
    if n == 1 {
        return 0.0;
    }
    0.6 * cfg.field_half_width * (2.0 * player as f64 / (n - 1) as f64 - 1.0)
}

/// Axis-aligned move that best reduces the distance to `to`; horizontal wins ties.
fn move_toward(from: Vec2, to: Vec2) -> Action {
    let d = to - from;
    if d.norm() < ARRIVE_RADIUS {
        return Action::DoNothing;
    }
    if d.x.abs() >= d.y.abs() {
        if d.x >= 0.0 {
            Action::Right
        } else {
            Action::Left
        }
    } else if d.y >= 0.0 {
        Action::Up
    } else {
        Action::Down
    }
}
