//! Per-skill behavior statistics from evaluation replay logs: event and
//! action distributions, their 2-D PCA projections, skill usage by
//! possession, skill time series and occupancy heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::Serialize;

use crate::env::{num_actions, EnvConfig, GameEvent, Possession, Team, Vec2};
use crate::error::{usage, Result};
use crate::trainer::StepRecord;

pub const GRID_LENGTH: usize = 36;
pub const GRID_WIDTH: usize = 18;

/// Skill in effect for every home agent at every step: `[episode][step][agent]`.
pub type SkillTraces = Vec<Vec<Vec<usize>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SkillEventMatrix {
    /// Totals over all episodes, `K x E` with columns in [`GameEvent::TRACKED`] order.
    pub totals: Array2<f64>,
    /// Per-episode means and their standard errors.
    pub mean: Array2<f64>,
    pub stderr: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillActionMatrix {
    pub counts: Array2<f64>,
    /// Rows normalized to sum to one; all-zero for unused skills.
    pub freq: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsageReport {
    pub with_possession: Vec<u64>,
    pub without_possession: Vec<u64>,
    /// `[episode][agent][high-level step]`.
    pub timeseries: Vec<Vec<Vec<usize>>>,
    /// One `GRID_WIDTH x GRID_LENGTH` occupancy grid per skill.
    pub heatmaps: Vec<Array2<u64>>,
}

pub fn action_names(n: usize) -> Vec<String> {
    let mut names = vec!["do_nothing".to_string(), "shoot".to_string()];
    names.extend((1..=n).map(|k| format!("pass_{k}")));
    names.extend(["down", "up", "right", "left"].map(String::from));
    names
}

/// Skills recorded in hierarchical replay logs.
pub fn skill_traces(logs: &[Vec<StepRecord>]) -> Result<SkillTraces> {
    logs.iter()
        .map(|log| {
            log.iter()
                .map(|r| match &r.skills {
                    Some(z) => Ok(z.clone()),
                    None => usage(format!(
                        "episode {} step {} has no skills recorded",
                        r.episode, r.step
                    )),
                })
                .collect()
        })
        .collect()
}

/// Grid cell of a world position: columns run along the field length, rows
/// along its width.
pub fn grid_cell(cfg: &EnvConfig, p: Vec2) -> (usize, usize) {
    let bin = |v: f64, half: f64, bins: usize| {
        let f = ((v + half) / (2.0 * half) * bins as f64).floor();
        (f.max(0.0) as usize).min(bins - 1)
    };
    (
        bin(p.y, cfg.field_half_width, GRID_WIDTH),
        bin(p.x, cfg.field_half_length, GRID_LENGTH),
    )
}

/// Attributes home-team events and actions to the acting agent's skill.
pub fn tally_by_skill(
    logs: &[Vec<StepRecord>],
    traces: &SkillTraces,
    skills: usize,
    t_seg: usize,
    cfg: &EnvConfig,
) -> Result<(SkillEventMatrix, SkillActionMatrix, UsageReport)> {
    if logs.len() != traces.len() {
        return usage(format!(
            "{} replay episodes but {} skill traces",
            logs.len(),
            traces.len()
        ));
    }
    let n = cfg.agents_per_team;
    let n_events = GameEvent::TRACKED.len();
    let n_actions = num_actions(n);
    let mut per_episode = Vec::with_capacity(logs.len());
    let mut action_counts = Array2::zeros((skills, n_actions));
    let mut possession = Vec::with_capacity(logs.len());
    let mut positions = Vec::with_capacity(logs.len());
    for (log, trace) in logs.iter().zip(traces) {
        if log.len() != trace.len() {
            return usage("replay and skill trace lengths differ");
        }
        let mut counts = Array2::<f64>::zeros((skills, n_events));
        let mut ep_possession = Vec::with_capacity(log.len());
        let mut ep_positions = Vec::with_capacity(log.len());
        for (rec, z) in log.iter().zip(trace) {
            if z.len() != n || rec.home_actions.len() != n || z.iter().any(|&k| k >= skills) {
                return usage(format!(
                    "malformed step {} of episode {}",
                    rec.step, rec.episode
                ));
            }
            for e in &rec.events {
                if e.team != Team::Home {
                    continue;
                }
                if let Some(col) = GameEvent::TRACKED.iter().position(|&k| k == e.event) {
                    counts[[z[e.player], col]] += 1.0;
                }
            }
            for (i, &a) in rec.home_actions.iter().enumerate() {
                if a >= n_actions {
                    return usage(format!("action {a} out of range"));
                }
                action_counts[[z[i], a]] += 1.0;
            }
            ep_possession.push(matches!(
                rec.state.possession,
                Possession::Held(Team::Home, _)
            ));
            ep_positions.push(rec.state.home.iter().map(|p| p.pos).collect());
        }
        per_episode.push(counts);
        possession.push(ep_possession);
        positions.push(ep_positions);
    }

    let episodes = per_episode.len();
    let mut totals = Array2::zeros((skills, n_events));
    for c in &per_episode {
        totals += c;
    }
    let mean = if episodes > 0 {
        &totals / episodes as f64
    } else {
        totals.clone()
    };
    let mut stderr = Array2::zeros((skills, n_events));
    if episodes > 1 {
        for c in &per_episode {
            stderr += &(c - &mean).mapv(|d| d * d);
        }
        let denom = (episodes - 1) as f64 * episodes as f64;
        stderr.mapv_inplace(|s: f64| (s / denom).sqrt());
    }
    let mut freq = action_counts.clone();
    for mut row in freq.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    let usage = usage_report(traces, &possession, &positions, skills, t_seg, cfg)?;
    Ok((
        SkillEventMatrix {
            totals,
            mean,
            stderr,
        },
        SkillActionMatrix {
            counts: action_counts,
            freq,
        },
        usage,
    ))
}

/// Usage split by own-team possession, high-level time series and
/// per-skill occupancy grids. All inputs are indexed `[episode][step]`,
/// then by agent where applicable.
pub fn usage_report(
    traces: &SkillTraces,
    possession: &[Vec<bool>],
    positions: &[Vec<Vec<Vec2>>],
    skills: usize,
    t_seg: usize,
    cfg: &EnvConfig,
) -> Result<UsageReport> {
    if traces.len() != possession.len() || traces.len() != positions.len() {
        return usage("usage inputs cover different episodes");
    }
    let mut with_possession = vec![0u64; skills];
    let mut without_possession = vec![0u64; skills];
    let mut heatmaps = vec![Array2::<u64>::zeros((GRID_WIDTH, GRID_LENGTH)); skills];
    let mut timeseries = Vec::with_capacity(traces.len());
    for ((trace, poss), pos) in traces.iter().zip(possession).zip(positions) {
        if trace.len() != poss.len() || trace.len() != pos.len() {
            return usage("usage inputs have different lengths");
        }
        let n = trace.first().map_or(0, Vec::len);
        let mut series = vec![Vec::new(); n];
        for (t, ((z, &has), p)) in trace.iter().zip(poss).zip(pos).enumerate() {
            if z.len() != n || p.len() != n {
                return usage("inconsistent agent counts");
            }
            for (i, (&k, &xy)) in z.iter().zip(p).enumerate() {
                if k >= skills {
                    return usage(format!("skill {k} out of range"));
                }
                if has {
                    with_possession[k] += 1;
                } else {
                    without_possession[k] += 1;
                }
                heatmaps[k][grid_cell(cfg, xy)] += 1;
                if t % t_seg.max(1) == 0 {
                    series[i].push(k);
                }
            }
        }
        timeseries.push(series);
    }
    Ok(UsageReport {
        with_possession,
        without_possession,
        timeseries,
        heatmaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pca2 {
    /// Row projections onto the two leading components.
    #[serde(skip)]
    pub projection: Array2<f64>,
    /// `2 x columns`, one unit-norm component per row.
    #[serde(skip)]
    pub components: Array2<f64>,
    pub explained_variance_ratio: [f64; 2],
    /// All rows identical; projection and ratios are zero.
    pub degenerate: bool,
}

/// Two-component PCA of mean-centered rows. Each component's largest
/// magnitude loading is made positive, the first such index winning ties.
pub fn pca2(data: &Array2<f64>) -> Result<Pca2> {
    let (rows, cols) = data.dim();
    if rows < 2 || cols < 2 {
        return usage(format!(
            "pca2 needs at least 2 x 2 data, got {rows} x {cols}"
        ));
    }
    let mean = data.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centered = data - &mean;
    let cov = centered.t().dot(&centered) / (rows - 1) as f64;
    let total: f64 = cov.diag().sum();
    let scale = data.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if total <= 1e-24 * scale.max(1.0).powi(2) {
        return Ok(Pca2 {
            projection: Array2::zeros((rows, 2)),
            components: Array2::zeros((2, cols)),
            explained_variance_ratio: [0.0, 0.0],
            degenerate: true,
        });
    }
    let m = DMatrix::from_fn(cols, cols, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Array2::zeros((2, cols));
    let mut ratios = [0.0; 2];
    for (c, &idx) in order.iter().take(2).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for j in 1..cols {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            components[[c, j]] = sign * v[j];
        }
        ratios[c] = (eig.eigenvalues[idx] / total).clamp(0.0, 1.0);
    }
    Ok(Pca2 {
        projection: centered.dot(&components.t()),
        components,
        explained_variance_ratio: ratios,
        degenerate: false,
    })
}

/// Largest total-variation distance between two rows of a row-stochastic matrix.
pub fn max_pairwise_tv(freq: &Array2<f64>) -> f64 {
    let mut best = 0.0f64;
    for a in 0..freq.nrows() {
        for b in a + 1..freq.nrows() {
            let tv = 0.5
                * freq
                    .row(a)
                    .iter()
                    .zip(freq.row(b))
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>();
            best = best.max(tv);
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub episodes: usize,
    pub agent_steps: u64,
    pub skills: usize,
    pub event_names: Vec<String>,
    pub action_names: Vec<String>,
    pub event_totals: Vec<f64>,
    pub pca_events: Pca2,
    pub pca_actions: Pca2,
    pub max_action_tv: f64,
}

/// Everything `analyze` writes.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub events: SkillEventMatrix,
    pub actions: SkillActionMatrix,
    pub usage: UsageReport,
    pub summary: AnalysisSummary,
}

pub fn analyze_logs(
    logs: &[Vec<StepRecord>],
    skills: usize,
    t_seg: usize,
    cfg: &EnvConfig,
) -> Result<Analysis> {
    let traces = skill_traces(logs)?;
    let (events, actions, usage) = tally_by_skill(logs, &traces, skills, t_seg, cfg)?;
    let pca_or_empty = |m: &Array2<f64>| -> Result<Pca2> {
        if m.nrows() < 2 {
            return Ok(Pca2 {
                projection: Array2::zeros((m.nrows(), 2)),
                components: Array2::zeros((2, m.ncols())),
                explained_variance_ratio: [0.0, 0.0],
                degenerate: true,
            });
        }
        pca2(m)
    };
    let summary = AnalysisSummary {
        episodes: logs.len(),
        agent_steps: usage.with_possession.iter().sum::<u64>()
            + usage.without_possession.iter().sum::<u64>(),
        skills,
        event_names: GameEvent::TRACKED
            .iter()
            .map(|e| e.name().to_string())
            .collect(),
        action_names: action_names(cfg.agents_per_team),
        event_totals: events.totals.sum_axis(ndarray::Axis(0)).to_vec(),
        pca_events: pca_or_empty(&events.mean)?,
        pca_actions: pca_or_empty(&actions.freq)?,
        max_action_tv: max_pairwise_tv(&actions.freq),
    };
    Ok(Analysis {
        events,
        actions,
        usage,
        summary,
    })
}

fn csv_matrix(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Writes the CSV tables and `summary.json` into `dir`.
pub fn write_analysis(dir: &Path, a: &Analysis) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let k = a.summary.skills;
    let ev = &a.summary.event_names;

    let mut header = vec!["skill".to_string()];
    for e in ev {
        header.push(e.clone());
        header.push(format!("{e}_se"));
        header.push(format!("{e}_total"));
    }
    let rows = (0..k).map(|z| {
        let mut r = vec![z.to_string()];
        for c in 0..ev.len() {
            r.push(a.events.mean[[z, c]].to_string());
            r.push(a.events.stderr[[z, c]].to_string());
            r.push(a.events.totals[[z, c]].to_string());
        }
        r
    });
    std::fs::write(dir.join("events.csv"), csv_matrix(&header, rows))?;

    let mut header = vec!["skill".to_string(), "steps".to_string()];
    header.extend(a.summary.action_names.iter().cloned());
    let rows = (0..k).map(|z| {
        let mut r = vec![z.to_string(), a.actions.counts.row(z).sum().to_string()];
        r.extend(a.actions.freq.row(z).iter().map(|v| v.to_string()));
        r
    });
    std::fs::write(dir.join("actions.csv"), csv_matrix(&header, rows))?;

    for (name, pca) in [
        ("pca_events.csv", &a.summary.pca_events),
        ("pca_actions.csv", &a.summary.pca_actions),
    ] {
        let header = ["skill", "pc1", "pc2"].map(String::from);
        let rows = (0..pca.projection.nrows()).map(|z| {
            vec![
                z.to_string(),
                pca.projection[[z, 0]].to_string(),
                pca.projection[[z, 1]].to_string(),
            ]
        });
        std::fs::write(dir.join(name), csv_matrix(&header, rows))?;
    }

    let header = ["skill", "with_possession", "without_possession", "total"].map(String::from);
    let rows = (0..k).map(|z| {
        let (w, wo) = (a.usage.with_possession[z], a.usage.without_possession[z]);
        vec![
            z.to_string(),
            w.to_string(),
            wo.to_string(),
            (w + wo).to_string(),
        ]
    });
    std::fs::write(dir.join("usage.csv"), csv_matrix(&header, rows))?;

    for (z, grid) in a.usage.heatmaps.iter().enumerate() {
        let mut text = String::new();
        for row in grid.rows() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(text, "{}", cells.join(",")).expect("string write");
        }
        std::fs::write(dir.join(format!("heatmap_{z}.csv")), text)?;
    }

    for (ep, series) in a.usage.timeseries.iter().enumerate() {
        let steps = series.first().map_or(0, Vec::len);
        let mut header = vec!["agent".to_string()];
        header.extend((0..steps).map(|s| format!("h{s}")));
        let rows = series.iter().enumerate().map(|(i, s)| {
            let mut r = vec![i.to_string()];
            r.extend(s.iter().map(|z| z.to_string()));
            r
        });
        std::fs::write(
            dir.join(format!("timeseries_{ep}.csv")),
            csv_matrix(&header, rows),
        )?;
    }

    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&a.summary)?,
    )?;
    Ok(())
}
