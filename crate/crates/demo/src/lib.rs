//! Browser bindings over `hsd-core`: play back a simulated episode, project a
//! matrix with PCA and trace the alpha curriculum for a list of win rates.

use hsd_core::analysis::pca2;
use hsd_core::curriculum::{AlphaConfig, AlphaSchedule};
use hsd_core::env::{scripted_action, EnvConfig, Possession, Sts2Env, Team};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Frame {
    home: Vec<[f64; 2]>,
    away: Vec<[f64; 2]>,
    ball: [f64; 2],
    /// "home", "away" or "free".
    holder: &'static str,
    events: Vec<String>,
}

#[derive(Serialize)]
struct Episode {
    half_length: f64,
    half_width: f64,
    frames: Vec<Frame>,
    winner: Option<&'static str>,
}

fn team_name(t: Team) -> &'static str {
    match t {
        Team::Home => "home",
        Team::Away => "away",
    }
}

/// Plays one episode against the scripted away team. `home` is `"scripted"`
/// or `"random"`.
pub fn episode_json(seed: u64, agents: usize, home: &str) -> Result<String, String> {
    if home != "scripted" && home != "random" {
        return Err(format!("unknown home policy {home:?}"));
    }
    let cfg = EnvConfig::default().with_agents(agents);
    let mut env = Sts2Env::new(cfg.clone()).map_err(|e| e.to_string())?;
    env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let snap = |env: &Sts2Env, events: Vec<String>| {
        let s = env.state();
        let pts = |t: Team| s.players(t).iter().map(|p| [p.pos.x, p.pos.y]).collect();
        let (ball, _) = s.ball_kinematics();
        Frame {
            home: pts(Team::Home),
            away: pts(Team::Away),
            ball: [ball.x, ball.y],
            holder: match s.possession {
                Possession::Held(t, _) => team_name(t),
                Possession::Free => "free",
            },
            events,
        }
    };
    let mut frames = vec![snap(&env, Vec::new())];
    let n = cfg.agents_per_team;
    let winner = loop {
        let s = env.state().clone();
        let home_actions: Vec<usize> = (0..n)
            .map(|i| match home {
                "random" => rng.gen_range(0..n + 6),
                _ => scripted_action(&cfg, &s, Team::Home, i, &mut rng),
            })
            .collect();
        let away_actions: Vec<usize> = (0..n)
            .map(|j| scripted_action(&cfg, &s, Team::Away, j, &mut rng))
            .collect();
        let out = env
            .step(&home_actions, &away_actions)
            .map_err(|e| e.to_string())?;
        let events = out
            .events
            .iter()
            .map(|e| format!("{} {} {}", team_name(e.team), e.player, e.event.name()))
            .collect();
        frames.push(snap(&env, events));
        if out.done {
            break out.winner.map(team_name);
        }
    };
    let ep = Episode {
        half_length: cfg.field_half_length,
        half_width: cfg.field_half_width,
        frames,
        winner,
    };
    serde_json::to_string(&ep).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Projection {
    points: Vec<[f64; 2]>,
    explained: [f64; 2],
    degenerate: bool,
}

/// Two-component PCA of a row-major `rows x cols` matrix.
pub fn pca_json(values: &[f64], rows: usize, cols: usize) -> Result<String, String> {
    if values.len() != rows * cols {
        return Err(format!(
            "{} values for a {rows} x {cols} matrix",
            values.len()
        ));
    }
    let data = Array2::from_shape_vec((rows, cols), values.to_vec()).map_err(|e| e.to_string())?;
    let p = pca2(&data).map_err(|e| e.to_string())?;
    let points = p
        .projection
        .rows()
        .into_iter()
        .map(|r| [r[0], r[1]])
        .collect();
    serde_json::to_string(&Projection {
        points,
        explained: p.explained_variance_ratio,
        degenerate: p.degenerate,
    })
    .map_err(|e| e.to_string())
}

/// Alpha after each evaluation when fed `win_rates` in order.
pub fn alpha_values(win_rates: &[f64], threshold: f64) -> Result<Vec<f64>, String> {
    let config = AlphaConfig {
        alpha_threshold: threshold,
        ..AlphaConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let mut schedule = AlphaSchedule::new(config);
    win_rates
        .iter()
        .enumerate()
        .map(|(i, &w)| schedule.update_alpha(i, w).map_err(|e| e.to_string()))
        .collect()
}

#[wasm_bindgen]
pub fn simulate_episode(seed: u32, agents: usize, home: &str) -> Result<String, JsValue> {
    episode_json(seed as u64, agents, home).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn pca_projection(values: Vec<f64>, rows: usize, cols: usize) -> Result<String, JsValue> {
    pca_json(&values, rows, cols).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn alpha_trace(win_rates: Vec<f64>, threshold: f64) -> Result<Vec<f64>, JsValue> {
    alpha_values(&win_rates, threshold).map_err(|e| JsValue::from_str(&e))
}
