//! Trust-region engine operating on linear feature surrogates: forward-FD
//! feature Jacobians, bounded subproblem solves, gain-ratio radius control,
//! and termination.

use crate::features::{FeaturePoint, FeatureSet};
use crate::geometry::{Bounds, DesignVector};
use crate::simulator::Response;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("trust-region center has no features in the extraction window")]
    DegenerateCenter,
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

/// Forward finite-difference perturbation policy. Steps are proportional to
/// the coordinate magnitude with a floor tied to the bound range, and flip
/// sign at the upper bound so perturbed designs stay feasible.
#[derive(Debug, Clone, Copy)]
pub struct FdPolicy {
    pub relative_step: f64,
    pub absolute_floor: f64,
}

impl Default for FdPolicy {
    fn default() -> Self {
        // Kept small relative to a notch width in frequency terms: a 2%
        // step on the scale coordinate moves every resonance by half a
        // width, turning level sensitivities into secants over the
        // Lorentzian's curved flank.
        Self {
            relative_step: 0.005,
            absolute_floor: 0.002,
        }
    }
}

impl FdPolicy {
    /// Signed perturbation for coordinate `d` of `x` within `bounds`.
    pub fn step(&self, x_d: f64, d: usize, bounds: &Bounds) -> f64 {
        let p = (self.relative_step * x_d.abs()).max(self.absolute_floor * bounds.range(d));
        if x_d + p > bounds.upper[d] {
            -p
        } else {
            p
        }
    }
}

/// One simulator evaluation: the response plus the features extracted from it.
pub type Evaluation = (Response, FeatureSet);

/// Evaluation callback used by the surrogate builder and the TR loop.
pub type EvalFn<'a> = dyn FnMut(&DesignVector) -> Result<Evaluation, OptimizerError> + 'a;

/// Feature-space objective. The response is available for true evaluations
/// and absent for surrogate predictions.
pub type ObjectiveFn<'a> = dyn Fn(&FeatureSet, Option<&Response>) -> f64 + 'a;

#[derive(Debug, Clone, Default)]
pub struct ClassJacobian {
    /// Feature-count x D matrices: GHz (resp. dB) per unit parameter.
    pub freq: Vec<Vec<f64>>,
    pub level: Vec<Vec<f64>>,
}

/// First-order Taylor model of the feature coordinates around a design.
#[derive(Debug, Clone)]
pub struct LinearFeatureSurrogate {
    pub center: Vec<f64>,
    pub features0: FeatureSet,
    pub minima: ClassJacobian,
    pub maxima: ClassJacobian,
    pub crossings: ClassJacobian,
}

impl LinearFeatureSurrogate {
    /// Predicted features at `x`: `G(x) = F(center) + J (x - center)`.
    pub fn predict(&self, x: &[f64]) -> FeatureSet {
        let dx: Vec<f64> = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| a - b)
            .collect();
        let apply = |pts: &[FeaturePoint], jac: &ClassJacobian| -> Vec<FeaturePoint> {
            pts.iter()
                .enumerate()
                .map(|(i, p)| FeaturePoint {
                    freq: p.freq + dot(&jac.freq[i], &dx),
                    level: p.level + dot(&jac.level[i], &dx),
                })
                .collect()
        };
        FeatureSet {
            minima: apply(&self.features0.minima, &self.minima),
            maxima: apply(&self.features0.maxima, &self.maxima),
            crossings: apply(&self.features0.crossings, &self.crossings),
            window: self.features0.window,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Match each center feature to the nearest perturbed feature within
/// `tol` GHz; `None` marks an unmatched feature.
fn match_features(center: &[FeaturePoint], other: &[FeaturePoint], tol: f64) -> Vec<Option<usize>> {
    center
        .iter()
        .map(|c| {
            other
                .iter()
                .enumerate()
                .map(|(j, o)| (j, (o.freq - c.freq).abs()))
                .filter(|&(_, d)| d <= tol)
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .map(|(j, _)| j)
        })
        .collect()
}

fn match_tolerance(window: (f64, f64), count: usize) -> f64 {
    0.5 * (window.1 - window.0) / count.max(1) as f64
}

/// Build the surrogate from a center evaluation plus one forward-FD
/// perturbation per dimension (D additional simulations). Center features
/// unmatched in a perturbed design get zero sensitivity in that column.
pub fn build_surrogate(
    x: &DesignVector,
    center_eval: &Evaluation,
    bounds: &Bounds,
    policy: &FdPolicy,
    eval: &mut EvalFn,
) -> Result<LinearFeatureSurrogate, OptimizerError> {
    let center = x.to_flat();
    let features0 = center_eval.1.clone();
    if features0.is_empty() {
        return Err(OptimizerError::DegenerateCenter);
    }
    let dim = center.len();
    let mut jac = [
        class_jacobian(&features0.minima, dim),
        class_jacobian(&features0.maxima, dim),
        class_jacobian(&features0.crossings, dim),
    ];
    for d in 0..dim {
        let p = policy.step(center[d], d, bounds);
        let mut flat = center.clone();
        flat[d] += p;
        let xd = DesignVector::from_flat(&flat)
            .map_err(|e| OptimizerError::Evaluation(e.to_string()))?;
        let (_, fd_features) = eval(&xd)?;
        for (class, (c_pts, o_pts)) in [
            (&features0.minima, &fd_features.minima),
            (&features0.maxima, &fd_features.maxima),
            (&features0.crossings, &fd_features.crossings),
        ]
        .into_iter()
        .enumerate()
        {
            let tol = match_tolerance(features0.window, c_pts.len());
            for (i, m) in match_features(c_pts, o_pts, tol).into_iter().enumerate() {
                if let Some(j) = m {
                    jac[class].freq[i][d] = (o_pts[j].freq - c_pts[i].freq) / p;
                    jac[class].level[i][d] = (o_pts[j].level - c_pts[i].level) / p;
                }
            }
        }
    }
    let [minima, maxima, crossings] = jac;
    Ok(LinearFeatureSurrogate {
        center,
        features0,
        minima,
        maxima,
        crossings,
    })
}

fn class_jacobian(pts: &[FeaturePoint], dim: usize) -> ClassJacobian {
    ClassJacobian {
        freq: vec![vec![0.0; dim]; pts.len()],
        level: vec![vec![0.0; dim]; pts.len()],
    }
}

/// Infinity norm of `a - b` with each coordinate scaled by its bound range.
pub fn normalized_step_norm(a: &[f64], b: &[f64], bounds: &Bounds) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(d, (x, y))| {
            let range = bounds.range(d);
            if range > 0.0 {
                (x - y).abs() / range
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Minimize the objective over the surrogate inside the intersection of the
/// design bounds and the normalized radius box around the surrogate center.
/// Multi-start projected gradient descent on the cheap linear model; never
/// returns a point predicted worse than the center.
pub fn solve_subproblem(
    surrogate: &LinearFeatureSurrogate,
    objective: impl Fn(&FeatureSet) -> f64,
    delta: f64,
    bounds: &Bounds,
) -> Vec<f64> {
    let dim = surrogate.center.len();
    let lo: Vec<f64> = (0..dim)
        .map(|d| bounds.lower[d].max(surrogate.center[d] - delta * bounds.range(d)))
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|d| bounds.upper[d].min(surrogate.center[d] + delta * bounds.range(d)))
        .collect();
    let raw = |x: &[f64]| objective(&surrogate.predict(x));
    // Tikhonov-style tie-break: directions the objective is blind to must
    // not drift, so distance from the center decides among equal predictions.
    let lambda = 1e-4 * (1.0 + raw(&surrogate.center).abs());
    let g = |x: &[f64]| {
        let drift: f64 = x
            .iter()
            .zip(&surrogate.center)
            .enumerate()
            .map(|(d, (a, b))| {
                let range = bounds.range(d).max(1e-30);
                ((a - b) / range).powi(2)
            })
            .sum();
        raw(x) + lambda * drift
    };

    let mut best = surrogate.center.clone();
    let mut best_val = g(&best);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for start in 0..16 {
        let mut x: Vec<f64> = if start == 0 {
            surrogate.center.clone()
        } else {
            (0..dim)
                .map(|d| {
                    if hi[d] > lo[d] {
                        rng.gen_range(lo[d]..hi[d])
                    } else {
                        lo[d]
                    }
                })
                .collect()
        };
        let mut fx = g(&x);
        let mut step = 0.25;
        for _ in 0..200 {
            // Numerical gradient in range-normalized coordinates.
            let mut grad = vec![0.0; dim];
            let mut gnorm: f64 = 0.0;
            for d in 0..dim {
                let range = bounds.range(d).max(1e-30);
                let h = 1e-6 * range;
                let xp = (x[d] + h).min(hi[d]);
                let xm = (x[d] - h).max(lo[d]);
                if xp <= xm {
                    continue;
                }
                let mut probe = x.clone();
                probe[d] = xp;
                let fp = g(&probe);
                probe[d] = xm;
                let fm = g(&probe);
                grad[d] = (fp - fm) / (xp - xm) * range;
                gnorm = gnorm.max(grad[d].abs());
            }
            if gnorm < 1e-12 {
                break;
            }
            // Backtracking line search along the projected descent direction.
            let mut improved = false;
            let mut t = step;
            for _ in 0..30 {
                let cand: Vec<f64> = (0..dim)
                    .map(|d| {
                        (x[d] - t * grad[d] / gnorm * bounds.range(d)).clamp(lo[d], hi[d])
                    })
                    .collect();
                let fc = g(&cand);
                if fc < fx - 1e-15 {
                    let moved = normalized_step_norm(&cand, &x, bounds);
                    x = cand;
                    fx = fc;
                    improved = true;
                    step = (t * 2.0).min(0.25);
                    if moved < 1e-6 {
                        improved = false;
                    }
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if fx < best_val {
            best_val = fx;
            best = x;
        }
    }
    best
}

/// Gain ratio: true improvement over model-predicted improvement. A zero
/// model denominator maps to +/- infinity depending on the true change.
pub fn gain_ratio(u_true_new: f64, u_true_old: f64, u_model_new: f64, u_model_old: f64) -> f64 {
    let denom = u_model_new - u_model_old;
    if denom == 0.0 {
        return if u_true_new < u_true_old {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    (u_true_new - u_true_old) / denom
}

/// Radius control: shrink by 3 on poor prediction, double on very good
/// prediction, hold otherwise.
pub fn update_radius(delta: f64, rho: f64) -> f64 {
    if rho < 0.25 {
        delta / 3.0
    } else if rho > 0.75 {
        2.0 * delta
    } else {
        delta
    }
}

/// Surrogate refresh policy across accepted steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rebuild {
    /// Rebuild the full Jacobian after every accepted step (low-fidelity mode).
    EveryAccept,
    /// Build once and re-center on accepted steps (high-fidelity mode),
    /// optionally with rank-one secant refreshes.
    Once,
}

#[derive(Debug, Clone)]
pub struct TrConfig {
    pub rebuild: Rebuild,
    pub fd: FdPolicy,
    /// Termination threshold for both the radius and the accepted step norm.
    pub epsilon: f64,
    pub initial_radius: f64,
    pub max_iterations: usize,
    /// Cap on simulator evaluations inside this TR run.
    pub sim_budget: Option<usize>,
    /// Apply rank-one secant updates to a once-built Jacobian.
    pub secant_refresh: bool,
}

impl Default for TrConfig {
    fn default() -> Self {
        Self {
            rebuild: Rebuild::EveryAccept,
            fd: FdPolicy::default(),
            epsilon: 1e-3,
            initial_radius: 1.0,
            max_iterations: 60,
            sim_budget: None,
            secant_refresh: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrStatus {
    Running,
    ConvergedRadius,
    ConvergedStep,
    BudgetExhausted,
    IterationLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub delta: f64,
    pub rho: f64,
    pub u_true: f64,
    pub accepted: bool,
    pub n_minima: usize,
    pub n_maxima: usize,
    /// Evaluations consumed within this TR run up to and including the step.
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct TrustRegionState {
    pub x_best: DesignVector,
    pub u_best: f64,
    pub delta: f64,
    pub rho_gain: f64,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub status: TrStatus,
    /// Simulator evaluations consumed by this run.
    pub evaluations: usize,
}

/// Run the trust-region loop from `x0`.
pub fn tr_optimize(
    x0: &DesignVector,
    bounds: &Bounds,
    eval: &mut EvalFn,
    objective: &ObjectiveFn,
    cfg: &TrConfig,
) -> Result<TrustRegionState, OptimizerError> {
    let dim = x0.dim();
    let mut evaluations = 0usize;
    let budget_left = |evaluations: usize| {
        cfg.sim_budget
            .map_or(usize::MAX, |b| b.saturating_sub(evaluations))
    };

    let mut x_best = x0.clone();
    let mut center_eval = eval(&x_best)?;
    evaluations += 1;
    if center_eval.1.is_empty() {
        return Err(OptimizerError::DegenerateCenter);
    }
    let mut u_best = objective(&center_eval.1, Some(&center_eval.0));
    let mut delta = cfg.initial_radius;
    let mut rho = f64::NAN;
    let mut surrogate: Option<LinearFeatureSurrogate> = None;
    let mut history = Vec::new();
    let mut status = TrStatus::Running;
    let mut iteration = 0usize;

    while iteration < cfg.max_iterations {
        if delta < cfg.epsilon {
            status = TrStatus::ConvergedRadius;
            break;
        }
        if surrogate.is_none() {
            if budget_left(evaluations) < dim {
                status = TrStatus::BudgetExhausted;
                break;
            }
            let mut counted = |x: &DesignVector| {
                evaluations += 1;
                eval(x)
            };
            surrogate = Some(build_surrogate(
                &x_best,
                &center_eval,
                bounds,
                &cfg.fd,
                &mut counted,
            )?);
        }
        let model = surrogate.as_ref().expect("just built");
        let candidate_flat =
            solve_subproblem(model, |fs| objective(fs, None), delta, bounds);
        let step_norm = normalized_step_norm(&candidate_flat, &x_best.to_flat(), bounds);
        if step_norm < cfg.epsilon {
            status = TrStatus::ConvergedStep;
            break;
        }
        if budget_left(evaluations) < 1 {
            status = TrStatus::BudgetExhausted;
            break;
        }
        let candidate = DesignVector::from_flat(&candidate_flat)
            .map_err(|e| OptimizerError::Evaluation(e.to_string()))?;
        let cand_eval = eval(&candidate)?;
        evaluations += 1;
        let u_true_new = objective(&cand_eval.1, Some(&cand_eval.0));
        let u_model_old = objective(&model.predict(&model.center), None);
        let u_model_new = objective(&model.predict(&candidate_flat), None);
        rho = gain_ratio(u_true_new, u_best, u_model_new, u_model_old);
        let accepted = rho > 0.0;
        delta = update_radius(delta, rho);
        iteration += 1;
        history.push(IterationRecord {
            iteration,
            delta,
            rho,
            u_true: if accepted { u_true_new } else { u_best },
            accepted,
            n_minima: cand_eval.1.minima.len(),
            n_maxima: cand_eval.1.maxima.len(),
            evaluations,
        });
        if accepted {
            let step_flat: Vec<f64> = candidate_flat
                .iter()
                .zip(&x_best.to_flat())
                .map(|(a, b)| a - b)
                .collect();
            x_best = candidate;
            u_best = u_true_new;
            match cfg.rebuild {
                Rebuild::EveryAccept => surrogate = None,
                Rebuild::Once => {
                    let s = surrogate.as_mut().expect("built");
                    recenter_surrogate(s, &candidate_flat, &step_flat, &cand_eval.1, cfg.secant_refresh);
                }
            }
            center_eval = cand_eval;
            if step_norm < cfg.epsilon {
                status = TrStatus::ConvergedStep;
                break;
            }
        }
    }
    if status == TrStatus::Running {
        status = if iteration >= cfg.max_iterations {
            TrStatus::IterationLimit
        } else {
            TrStatus::BudgetExhausted
        };
    }
    Ok(TrustRegionState {
        x_best,
        u_best,
        delta,
        rho_gain: rho,
        iteration,
        history,
        status,
        evaluations,
    })
}

/// Move a once-built surrogate to a new accepted center. Matched features
/// take their measured coordinates (with an optional rank-one secant update
/// of the Jacobian row); unmatched features fall back to their predicted
/// coordinates so the model stays usable when counts change.
fn recenter_surrogate(
    s: &mut LinearFeatureSurrogate,
    new_center: &[f64],
    step: &[f64],
    new_features: &FeatureSet,
    secant: bool,
) {
    let predicted = s.predict(new_center);
    let s_norm2 = dot(step, step);
    let window = s.features0.window;
    for (pts, jac, pred_pts, new_pts) in [
        (
            &mut s.features0.minima,
            &mut s.minima,
            &predicted.minima,
            &new_features.minima,
        ),
        (
            &mut s.features0.maxima,
            &mut s.maxima,
            &predicted.maxima,
            &new_features.maxima,
        ),
        (
            &mut s.features0.crossings,
            &mut s.crossings,
            &predicted.crossings,
            &new_features.crossings,
        ),
    ] {
        let tol = match_tolerance(window, pts.len());
        let matches = match_features(pred_pts, new_pts, tol);
        for (i, m) in matches.into_iter().enumerate() {
            match m {
                Some(j) => {
                    if secant && s_norm2 > 0.0 {
                        let freq_err = new_pts[j].freq - pred_pts[i].freq;
                        let level_err = new_pts[j].level - pred_pts[i].level;
                        for d in 0..step.len() {
                            jac.freq[i][d] += freq_err * step[d] / s_norm2;
                            jac.level[i][d] += level_err * step[d] / s_norm2;
                        }
                    }
                    pts[i] = new_pts[j];
                }
                None => pts[i] = pred_pts[i],
            }
        }
    }
    s.center = new_center.to_vec();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract, ExtractConfig};
    use crate::geometry::{generate_candidate, generation_bounds};
    use crate::simulator::{Fidelity, MockSimulator, Simulator, SweepSpec};
    use approx::assert_abs_diff_eq;

    fn mock_eval<'a>(
        sim: &'a MockSimulator,
        sweep: SweepSpec,
        window: (f64, f64),
        threshold: f64,
    ) -> impl FnMut(&DesignVector) -> Result<Evaluation, OptimizerError> + 'a {
        move |x: &DesignVector| {
            let r = sim
                .simulate(x, &sweep, Fidelity::High)
                .map_err(|e| OptimizerError::Evaluation(e.to_string()))?;
            let fs = extract(&r, window, threshold, &ExtractConfig::default())
                .map_err(|e| OptimizerError::Evaluation(e.to_string()))?;
            Ok((r, fs))
        }
    }

    #[test]
    fn radius_rules_exact() {
        assert_abs_diff_eq!(update_radius(1.0, 0.1), 1.0 / 3.0);
        assert_abs_diff_eq!(update_radius(1.0, 0.9), 2.0);
        assert_abs_diff_eq!(update_radius(1.0, 0.5), 1.0);
    }

    #[test]
    fn gain_ratio_cases() {
        assert_abs_diff_eq!(gain_ratio(-1.0, 0.0, -1.0, 0.0), 1.0);
        assert_abs_diff_eq!(gain_ratio(0.5, 0.0, -1.0, 0.0), -0.5);
        assert_abs_diff_eq!(gain_ratio(-0.9, 0.0, -3.0, 0.0), 0.3);
        assert!(gain_ratio(-1.0, 0.0, 0.0, 0.0).is_infinite());
        assert!(gain_ratio(1.0, 0.0, 0.0, 0.0) < 0.0);
    }

    #[test]
    fn fd_step_flips_at_upper_bound() {
        let bounds = Bounds {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let policy = FdPolicy::default();
        assert!(policy.step(0.5, 0, &bounds) > 0.0);
        assert!(policy.step(0.999, 0, &bounds) < 0.0);
        // Floor: 0.002 of range dominates for tiny coordinates.
        assert_abs_diff_eq!(policy.step(0.0, 0, &bounds), 0.002);
    }

    #[test]
    fn surrogate_build_consumes_dim_plus_one_evaluations() {
        let gb = generation_bounds(10, 25.0, 35.0);
        let x = generate_candidate(10, 5, &gb).unwrap();
        let sim = MockSimulator::default();
        let sweep = SweepSpec::new(2.0, 12.0, 801);
        let mut eval = mock_eval(&sim, sweep, (2.0, 12.0), -10.0);
        let center = eval(&x).unwrap();
        build_surrogate(&x, &center, &gb, &FdPolicy::default(), &mut eval).unwrap();
        assert_eq!(sim.ledger().counts().1, (x.dim() + 1) as u64);
    }

    #[test]
    fn jacobian_matches_central_difference_oracle() {
        // Sizing-factor column of the first minimum's frequency, checked
        // against a small central difference.
        let gb = generation_bounds(8, 25.0, 35.0);
        let x = generate_candidate(8, 2, &gb).unwrap();
        let sim = MockSimulator::default();
        let sweep = SweepSpec::new(2.0, 12.0, 2001);
        let window = (2.0, 12.0);
        let mut eval = mock_eval(&sim, sweep, window, -10.0);
        let center = eval(&x).unwrap();
        let s = build_surrogate(&x, &center, &gb, &FdPolicy::default(), &mut eval).unwrap();
        let h = 1e-3 * x.c;
        let mut probe = |c: f64| {
            let mut xp = x.clone();
            xp.c = c;
            let (_, fs) = eval(&xp).unwrap();
            fs.minima[0].freq
        };
        let oracle = (probe(x.c + h) - probe(x.c - h)) / (2.0 * h);
        let fd = s.minima.freq[0][0];
        assert!(
            (fd - oracle).abs() <= 0.05 * oracle.abs(),
            "forward FD {fd} vs oracle {oracle}"
        );
    }

    #[test]
    fn symmetric_patch_feed_angle_column_is_zero() {
        let x = DesignVector {
            c: 30.0,
            rho_f: 0.1,
            phi_f: 0.7,
            rho: vec![0.5; 12],
            phi: vec![0.5; 12],
        };
        let bounds = crate::geometry::build_bounds(&x, 25.0, 35.0).unwrap().0;
        let sim = MockSimulator::default();
        let sweep = SweepSpec::new(2.0, 12.0, 801);
        let mut eval = mock_eval(&sim, sweep, (2.0, 12.0), -10.0);
        let center = eval(&x).unwrap();
        let s = build_surrogate(&x, &center, &bounds, &FdPolicy::default(), &mut eval).unwrap();
        for row in s.minima.freq.iter().chain(&s.minima.level) {
            assert!(row[2].abs() < 1e-6, "feed-angle sensitivity {}", row[2]);
        }
    }

    #[test]
    fn flat_surrogate_returns_center() {
        let center = vec![0.5, 0.5];
        let bounds = Bounds {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        let s = LinearFeatureSurrogate {
            center: center.clone(),
            features0: FeatureSet {
                minima: vec![FeaturePoint {
                    freq: 6.5,
                    level: -12.0,
                }],
                maxima: vec![],
                crossings: vec![],
                window: (6.0, 7.0),
            },
            minima: ClassJacobian {
                freq: vec![vec![0.0, 0.0]],
                level: vec![vec![0.0, 0.0]],
            },
            maxima: ClassJacobian::default(),
            crossings: ClassJacobian::default(),
        };
        let out = solve_subproblem(&s, |fs| fs.minima[0].freq, 1.0, &bounds);
        assert_eq!(out, center);
    }

    #[test]
    fn quadratic_subproblem_recovers_analytic_minimizer() {
        // One feature with frequency 6.0 + 0.8*(x - 0.5); quadratic objective
        // (freq - 6.2)^2 has its minimizer at x = 0.75.
        let bounds = Bounds {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let s = LinearFeatureSurrogate {
            center: vec![0.5],
            features0: FeatureSet {
                minima: vec![FeaturePoint {
                    freq: 6.0,
                    level: -12.0,
                }],
                maxima: vec![],
                crossings: vec![],
                window: (5.0, 7.0),
            },
            minima: ClassJacobian {
                freq: vec![vec![0.8]],
                level: vec![vec![0.0]],
            },
            maxima: ClassJacobian::default(),
            crossings: ClassJacobian::default(),
        };
        let out = solve_subproblem(&s, |fs| (fs.minima[0].freq - 6.2).powi(2), 1.0, &bounds);
        // The centering tie-break term shifts the minimizer by O(lambda).
        assert_abs_diff_eq!(out[0], 0.75, epsilon = 1e-3);
    }

    #[test]
    fn subproblem_respects_both_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let dim = 3;
            let bounds = Bounds {
                lower: vec![0.0; dim],
                upper: vec![1.0; dim],
            };
            let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..0.9)).collect();
            let s = LinearFeatureSurrogate {
                center: center.clone(),
                features0: FeatureSet {
                    minima: vec![FeaturePoint {
                        freq: 6.0,
                        level: -12.0,
                    }],
                    maxima: vec![],
                    crossings: vec![],
                    window: (5.0, 7.0),
                },
                minima: ClassJacobian {
                    freq: vec![(0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()],
                    level: vec![vec![0.0; dim]],
                },
                maxima: ClassJacobian::default(),
                crossings: ClassJacobian::default(),
            };
            let delta = rng.gen_range(0.01..0.5);
            let target: f64 = rng.gen_range(5.0..7.0);
            let out = solve_subproblem(&s, |fs| (fs.minima[0].freq - target).abs(), delta, &bounds);
            for d in 0..dim {
                assert!(out[d] >= 0.0 && out[d] <= 1.0);
                assert!((out[d] - center[d]).abs() <= delta + 1e-9);
            }
        }
    }
}
