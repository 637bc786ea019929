//! Central finite-difference oracle for analytic gradients.
//!
//! Only evaluates the loss; it never touches a backward pass, so it can check
//! any of the hand-written gradient routines.

use rand::seq::index::sample;
use rand::Rng;

use super::ParamSet;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Central difference `(L(p + h e_k) - L(p - h e_k)) / 2h` for one coordinate.
pub fn numeric_partial(params: &ParamSet, k: usize, loss: &impl Fn(&ParamSet) -> f64) -> f64 {
    let mut p = params.clone();
    let x = params.flat_get(k);
    p.flat_set(k, x + FD_STEP);
    let up = loss(&p);
    p.flat_set(k, x - FD_STEP);
    let down = loss(&p);
    (up - down) / (2.0 * FD_STEP)
}

/// Compares `analytic` against finite differences on every coordinate, or on
/// `sample_size` coordinates drawn without replacement.
pub fn check_gradients<R: Rng + ?Sized>(
    params: &ParamSet,
    loss: impl Fn(&ParamSet) -> f64,
    analytic: ParamSet,
    sample_size: Option<usize>,
    rng: &mut R,
) -> GradCheckReport {
    let total = params.num_params();
    let coords: Vec<usize> = match sample_size {
        Some(m) if m < total => sample(rng, total, m).into_vec(),
        _ => (0..total).collect(),
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: coords.len(),
    };
    for k in coords {
        let num = numeric_partial(params, k, &loss);
        let ana = analytic.flat_get(k);
        let err = relative_error(ana, num);
        if err > report.max_rel_err || !err.is_finite() {
            report.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
            report.worst_index = k;
            report.analytic = ana;
            report.numeric = num;
        }
    }
    report
}

/// Copy of `like` with every entry drawn uniformly from `[-scale, scale]`.
pub fn random_params<R: Rng + ?Sized>(like: &ParamSet, rng: &mut R, scale: f64) -> ParamSet {
    let mut p = like.clone();
    for k in 0..p.num_params() {
        p.flat_set(k, rng.gen_range(-scale..=scale));
    }
    p
}
