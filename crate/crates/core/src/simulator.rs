//! Reflection-response models at two fidelities: a deterministic analytic
//! modal simulator built from the decoded geometry, a subprocess adapter
//! for external solvers, and the shared simulation cost ledger.

use crate::geometry::{self, DesignVector, GeometryError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

pub mod external;

/// Speed of light in mm*GHz.
pub const C0_MM_GHZ: f64 = 299.792458;
/// Substrate relative permittivity.
pub const EPSILON_R: f64 = 2.55;
/// Circular-mode constants (Bessel-derivative roots) for the first six modes.
pub const MODE_CONSTANTS: [f64; 6] = [1.8412, 3.0542, 3.8317, 4.2012, 5.3176, 6.4156];
/// Response baseline, dB.
const BASELINE_DB: f64 = -0.5;
/// Peak notch depth at unit feed coupling, dB.
const DEPTH_SCALE_DB: f64 = -22.0;
/// Relative notch width.
const WIDTH_FRACTION: f64 = 0.04;
/// Relative mode-frequency shift per unit shape descriptor.
const SHAPE_SHIFT: f64 = 0.08;
/// Low-fidelity deterministic ripple amplitude, dB, and period, GHz.
const RIPPLE_DB: f64 = 0.3;
const RIPPLE_PERIOD_GHZ: f64 = 0.35;
/// Low-fidelity distortions: frequency shift, width stretch, depth scale.
const LOW_FREQ_SHIFT: f64 = 1.02;
const LOW_WIDTH_STRETCH: f64 = 1.10;
const LOW_DEPTH_SCALE: f64 = 0.9;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("target frequency {0} GHz outside simulated span [{1}, {2}] GHz")]
    OutOfRange(f64, f64, f64),
    #[error("external solver exceeded {0} s timeout")]
    AdapterTimeout(f64),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("reply frequency grid is not strictly increasing at line {0}")]
    NonMonotoneGrid(usize),
    #[error("adapter I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Simulation fidelity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Low,
    High,
}

/// Uniform frequency sweep in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
}

impl SweepSpec {
    pub fn new(f_start: f64, f_stop: f64, n_points: usize) -> Self {
        assert!(f_start < f_stop && n_points >= 2, "invalid sweep");
        Self {
            f_start,
            f_stop,
            n_points,
        }
    }

    pub fn freqs(&self) -> Vec<f64> {
        let step = (self.f_stop - self.f_start) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.f_start + step * i as f64)
            .collect()
    }
}

/// Sampled reflection characteristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub freqs: Vec<f64>,
    pub levels: Vec<f64>,
    pub fidelity: Fidelity,
    /// Seconds-equivalent cost charged to the ledger for this response.
    pub cost_units: f64,
}

impl Response {
    /// Maximum level over samples with `f_lo <= f <= f_hi`, or `None` when
    /// no sample falls in the interval.
    pub fn max_in_band(&self, f_lo: f64, f_hi: f64) -> Option<f64> {
        self.freqs
            .iter()
            .zip(&self.levels)
            .filter(|(&f, _)| f >= f_lo && f <= f_hi)
            .map(|(_, &s)| s)
            .fold(None, |acc, s| Some(acc.map_or(s, |a: f64| a.max(s))))
    }
}

/// One resonant mode of the analytic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub freq: f64,
    pub width: f64,
    pub depth: f64,
}

/// Analytic stand-in for the electromagnetic models: a sum of Lorentzian
/// notches whose frequencies, widths, and depths derive deterministically
/// from the decoded geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MockModalModel {
    pub modes: Vec<Mode>,
    /// Unperturbed mode frequencies (before the shape-descriptor shift).
    pub base_freqs: Vec<f64>,
    pub baseline: f64,
    ripple_phase: f64,
}

fn hash_phase(x: &DesignVector) -> f64 {
    // Deterministic design-dependent phase. A smooth mixing function (not a
    // bit hash): distinct designs get well-spread phases, while nearby
    // designs get nearby phases, so finite differences across the ripple
    // stay meaningful for gradient-based callers.
    const GOLDEN: f64 = 1.618_033_988_749_895;
    x.to_flat()
        .iter()
        .enumerate()
        .map(|(i, v)| v * 0.4 * ((i + 1) as f64 * GOLDEN).fract())
        .sum::<f64>()
}

impl MockModalModel {
    pub fn from_design(x: &DesignVector) -> Result<Self, SimulatorError> {
        let patch = geometry::decode(x)?;
        let l = x.vertex_count() as f64;
        let mean_sq: f64 = x.rho.iter().map(|r| r * r).sum::<f64>() / l;
        let radius = x.c * mean_sq.sqrt();
        // Shape descriptors: normalized Fourier magnitudes of rho(theta).
        let rho_sum: f64 = x.rho.iter().sum();
        let descriptors: Vec<f64> = (1..=MODE_CONSTANTS.len())
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (&r, &th) in x.rho.iter().zip(&patch.absolute_angles) {
                    re += r * (k as f64 * th).cos();
                    im -= r * (k as f64 * th).sin();
                }
                2.0 * (re * re + im * im).sqrt() / rho_sum - 1.0
            })
            .collect();
        // Relative radial feed position: probe radius over the outline radius
        // along the feed angle. Scale-invariant, so the frequency-scaling
        // duality holds exactly.
        let max_rho = x.rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rel_feed = (outline_relative_feed(x, &patch).unwrap_or(x.rho_f / max_rho)).min(1.0);
        let mut base_freqs = Vec::with_capacity(MODE_CONSTANTS.len());
        let mut modes = Vec::with_capacity(MODE_CONSTANTS.len());
        for (k, &chi) in MODE_CONSTANTS.iter().enumerate() {
            let f_base = chi * C0_MM_GHZ / (2.0 * PI * radius * EPSILON_R.sqrt());
            let f_k = f_base * (1.0 + SHAPE_SHIFT * descriptors[k]);
            let coupling = feed_coupling(rel_feed, k + 1);
            base_freqs.push(f_base);
            modes.push(Mode {
                freq: f_k,
                width: WIDTH_FRACTION * f_k,
                depth: DEPTH_SCALE_DB * coupling,
            });
        }
        Ok(Self {
            modes,
            base_freqs,
            baseline: BASELINE_DB,
            ripple_phase: hash_phase(x),
        })
    }

    /// High-fidelity level at frequency `f` (GHz), dB, clipped to <= 0.
    pub fn level_high(&self, f: f64) -> f64 {
        let mut level = self.baseline;
        for m in &self.modes {
            let u = (f - m.freq) / m.width;
            level += m.depth / (1.0 + u * u);
        }
        level.min(0.0)
    }

    /// Low-fidelity level: shifted/widened/shallowed modes plus a
    /// deterministic ripple, clipped to <= 0.
    pub fn level_low(&self, f: f64) -> f64 {
        let mut level = self.baseline;
        for m in &self.modes {
            let u = (f - m.freq * LOW_FREQ_SHIFT) / (m.width * LOW_WIDTH_STRETCH);
            level += LOW_DEPTH_SCALE * m.depth / (1.0 + u * u);
        }
        level += RIPPLE_DB * (2.0 * PI * f / RIPPLE_PERIOD_GHZ + self.ripple_phase).sin();
        level.min(0.0)
    }
}

/// Probe radius relative to the outline, using angular interpolation of the
/// vertex radii. Smooth in the feed angle, scale-invariant, and exactly
/// constant in angle when every vertex radius is equal — so a rotationally
/// symmetric outline shows zero feed-angle sensitivity.
fn outline_relative_feed(x: &DesignVector, patch: &geometry::DecodedPatch) -> Option<f64> {
    let theta = &patch.absolute_angles;
    let n = theta.len();
    let phi = x.phi_f.rem_euclid(2.0 * PI);
    let mut seg = n - 1;
    for i in 0..n {
        let next = if i + 1 < n { theta[i + 1] } else { 2.0 * PI };
        if phi >= theta[i] && phi < next {
            seg = i;
            break;
        }
    }
    let (a, b) = (seg, (seg + 1) % n);
    let span = if a + 1 < n {
        theta[a + 1] - theta[a]
    } else {
        2.0 * PI - theta[a]
    };
    let t = if span > 0.0 { (phi - theta[a]) / span } else { 0.0 };
    let boundary = (1.0 - t) * x.rho[a] + t * x.rho[b];
    if boundary <= 0.0 {
        return None;
    }
    Some(x.rho_f / boundary)
}

/// Feed-to-mode coupling in (0, 1]. Mimics the radial current pattern of a
/// probe-fed patch: each mode couples most strongly when the probe sits at
/// that mode's radial sweet spot, and the coupling falls off smoothly with
/// the offset. Adjacent sweet spots overlap partially, so a feed position
/// between them excites both modes at moderate strength — the mechanism the
/// bandwidth-enhancement strategy exploits.
fn feed_coupling(rel_feed: f64, mode_index: usize) -> f64 {
    /// Radial sweet spot per mode. The third and fourth sit close together,
    /// so a probe between them can drive both resonances at once.
    const PEAKS: [f64; 6] = [0.12, 0.26, 0.42, 0.49, 0.66, 0.84];
    /// Falloff length; the near-exponential profile has a thin tip, so full
    /// coupling demands a precisely placed probe.
    const TAU: f64 = 0.07;
    const SMOOTH: f64 = 0.005;
    let offset = rel_feed - PEAKS[mode_index - 1];
    let dist = (offset * offset + SMOOTH * SMOOTH).sqrt() - SMOOTH;
    0.05 + 0.95 * (-dist / TAU).exp()
}

/// Simulation accounting shared by every phase of a run. Counters are
/// atomic so concurrent candidate evaluations can record without locks.
#[derive(Debug)]
pub struct CostLedger {
    n_low: AtomicU64,
    n_high: AtomicU64,
    pub t_low: f64,
    pub t_high: f64,
}

impl Default for CostLedger {
    fn default() -> Self {
        Self::new(60.0, 110.0)
    }
}

impl CostLedger {
    pub fn new(t_low: f64, t_high: f64) -> Self {
        Self {
            n_low: AtomicU64::new(0),
            n_high: AtomicU64::new(0),
            t_low,
            t_high,
        }
    }

    pub fn record(&self, fidelity: Fidelity) {
        match fidelity {
            Fidelity::Low => self.n_low.fetch_add(1, Ordering::Relaxed),
            Fidelity::High => self.n_high.fetch_add(1, Ordering::Relaxed),
        };
    }

    pub fn counts(&self) -> (u64, u64) {
        (
            self.n_low.load(Ordering::Relaxed),
            self.n_high.load(Ordering::Relaxed),
        )
    }

    pub fn cost_of(&self, fidelity: Fidelity) -> f64 {
        match fidelity {
            Fidelity::Low => self.t_low,
            Fidelity::High => self.t_high,
        }
    }

    /// Total expense in high-fidelity-equivalent simulations:
    /// `n_low * t_low / t_high + n_high`.
    pub fn total_cost(&self) -> f64 {
        let (n_low, n_high) = self.counts();
        total_cost(n_low, n_high, self.t_low, self.t_high)
    }
}

/// High-fidelity-equivalent count for explicit tallies.
pub fn total_cost(n_low: u64, n_high: u64, t_low: f64, t_high: f64) -> f64 {
    n_low as f64 * (t_low / t_high) + n_high as f64
}

/// A reflection-response source with cost accounting.
pub trait Simulator: Sync {
    fn simulate(
        &self,
        x: &DesignVector,
        sweep: &SweepSpec,
        fidelity: Fidelity,
    ) -> Result<Response, SimulatorError>;

    fn ledger(&self) -> &CostLedger;
}

/// The built-in analytic simulator.
#[derive(Debug, Default)]
pub struct MockSimulator {
    ledger: CostLedger,
}

impl MockSimulator {
    pub fn new(t_low: f64, t_high: f64) -> Self {
        Self {
            ledger: CostLedger::new(t_low, t_high),
        }
    }
}

impl Simulator for MockSimulator {
    fn simulate(
        &self,
        x: &DesignVector,
        sweep: &SweepSpec,
        fidelity: Fidelity,
    ) -> Result<Response, SimulatorError> {
        let model = MockModalModel::from_design(x)?;
        let freqs = sweep.freqs();
        let levels = freqs
            .iter()
            .map(|&f| match fidelity {
                Fidelity::High => model.level_high(f),
                Fidelity::Low => model.level_low(f),
            })
            .collect();
        self.ledger.record(fidelity);
        Ok(Response {
            freqs,
            levels,
            fidelity,
            cost_units: self.ledger.cost_of(fidelity),
        })
    }

    fn ledger(&self) -> &CostLedger {
        &self.ledger
    }
}

/// Piecewise-linear resampling of a response onto a new frequency grid.
/// Free of ledger cost; targets must lie within the simulated span.
pub fn resample(r: &Response, new_freqs: &[f64]) -> Result<Response, SimulatorError> {
    let (lo, hi) = (
        *r.freqs.first().expect("non-empty response"),
        *r.freqs.last().expect("non-empty response"),
    );
    let mut levels = Vec::with_capacity(new_freqs.len());
    for &f in new_freqs {
        if f < lo - 1e-12 || f > hi + 1e-12 {
            return Err(SimulatorError::OutOfRange(f, lo, hi));
        }
        let f = f.clamp(lo, hi);
        let idx = match r.freqs.binary_search_by(|v| v.partial_cmp(&f).unwrap()) {
            Ok(i) => i,
            Err(i) => i.min(r.freqs.len() - 1).max(1),
        };
        if r.freqs[idx] == f {
            levels.push(r.levels[idx]);
        } else {
            let (f0, f1) = (r.freqs[idx - 1], r.freqs[idx]);
            let t = (f - f0) / (f1 - f0);
            levels.push(r.levels[idx - 1] * (1.0 - t) + r.levels[idx] * t);
        }
    }
    Ok(Response {
        freqs: new_freqs.to_vec(),
        levels,
        fidelity: r.fidelity,
        cost_units: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_candidate, generation_bounds, scale_design};
    use approx::assert_abs_diff_eq;

    fn decagon(c: f64) -> DesignVector {
        DesignVector {
            c,
            rho_f: 0.1,
            phi_f: 0.3,
            rho: vec![0.5; 10],
            phi: vec![1.0; 10],
        }
    }

    #[test]
    fn first_mode_frequency_closed_form() {
        let model = MockModalModel::from_design(&decagon(30.0)).unwrap();
        // a = 30 * 0.5 = 15 mm.
        let expect = 1.8412 * C0_MM_GHZ / (2.0 * PI * 15.0 * EPSILON_R.sqrt());
        assert_abs_diff_eq!(model.base_freqs[0], expect, epsilon = 1e-12);
        assert!((expect - 3.67).abs() < 0.01);
    }

    #[test]
    fn simulation_is_deterministic() {
        let x = decagon(30.0);
        let sim = MockSimulator::default();
        let sweep = SweepSpec::new(2.0, 10.0, 401);
        for fid in [Fidelity::Low, Fidelity::High] {
            let a = sim.simulate(&x, &sweep, fid).unwrap();
            let b = sim.simulate(&x, &sweep, fid).unwrap();
            assert_eq!(a.levels, b.levels);
        }
    }

    #[test]
    fn scaling_identity_exact_high_fidelity() {
        let gb = generation_bounds(10, 25.0, 35.0);
        for seed in 0..10 {
            let x = generate_candidate(10, seed, &gb).unwrap();
            let model = MockModalModel::from_design(&x).unwrap();
            for c in [0.5, 0.8, 1.25, 2.0] {
                let scaled = MockModalModel::from_design(&scale_design(&x, c)).unwrap();
                for f in [3.0, 4.5, 6.0, 8.0] {
                    assert!((scaled.level_high(f) - model.level_high(c * f)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ledger_reproduces_reported_cost_figures() {
        assert_abs_diff_eq!(total_cost(421, 61, 60.0, 110.0), 290.6, epsilon = 0.05);
        assert_abs_diff_eq!(total_cost(542, 110, 60.0, 110.0), 405.6, epsilon = 0.05);
        assert_abs_diff_eq!(total_cost(0, 7, 60.0, 110.0), 7.0, epsilon = 1e-12);
        // Reported 284.3 for (93 + 320, 58); the formula gives 283.3.
        assert_abs_diff_eq!(total_cost(413, 58, 60.0, 110.0), 283.3, epsilon = 0.05);
    }

    #[test]
    fn resample_identity_and_midpoint() {
        let r = Response {
            freqs: vec![1.0, 2.0, 3.0],
            levels: vec![-1.0, -5.0, -2.0],
            fidelity: Fidelity::Low,
            cost_units: 60.0,
        };
        let same = resample(&r, &r.freqs).unwrap();
        assert_eq!(same.levels, r.levels);
        let mid = resample(&r, &[1.5, 2.5]).unwrap();
        assert_abs_diff_eq!(mid.levels[0], -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.levels[1], -3.5, epsilon = 1e-12);
        assert!(matches!(
            resample(&r, &[0.5]),
            Err(SimulatorError::OutOfRange(..))
        ));
    }

    #[test]
    fn resample_lorentzian_oracle() {
        // Dense linear resample of an analytic Lorentzian stays within
        // 0.05 dB of the closed form on a 1001-point source grid.
        let lorentz = |f: f64| -15.0 / (1.0 + ((f - 6.5) / 0.2_f64).powi(2));
        let sweep = SweepSpec::new(5.0, 8.0, 1001);
        let freqs = sweep.freqs();
        let levels: Vec<f64> = freqs.iter().map(|&f| lorentz(f)).collect();
        let r = Response {
            freqs,
            levels,
            fidelity: Fidelity::High,
            cost_units: 110.0,
        };
        let dense: Vec<f64> = (0..10001).map(|i| 5.0 + 3.0 * i as f64 / 10000.0).collect();
        let rs = resample(&r, &dense).unwrap();
        let max_err = rs
            .freqs
            .iter()
            .zip(&rs.levels)
            .map(|(&f, &s)| (s - lorentz(f)).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.05, "max interpolation error {max_err}");
    }

    #[test]
    fn ledger_counts_by_fidelity() {
        let sim = MockSimulator::default();
        let sweep = SweepSpec::new(5.0, 8.0, 11);
        let x = decagon(30.0);
        sim.simulate(&x, &sweep, Fidelity::Low).unwrap();
        sim.simulate(&x, &sweep, Fidelity::Low).unwrap();
        sim.simulate(&x, &sweep, Fidelity::High).unwrap();
        assert_eq!(sim.ledger().counts(), (2, 1));
    }
}
