//! Feature-point representation of a sampled reflection response: local
//! minima, local maxima, and threshold crossings within a frequency window.
//! Counts vary between designs; downstream objectives accept any length.

use crate::simulator::Response;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("window [{0}, {1}] GHz holds fewer than 3 grid points")]
    WindowTooNarrow(f64, f64),
    #[error("response holds no samples")]
    EmptyResponse,
}

/// One (frequency, level) coordinate pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub freq: f64,
    pub level: f64,
}

/// Extracted features partitioned by class, each sorted by frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub minima: Vec<FeaturePoint>,
    pub maxima: Vec<FeaturePoint>,
    /// Threshold crossings; empty when the threshold is never crossed
    /// inside the window.
    pub crossings: Vec<FeaturePoint>,
    pub window: (f64, f64),
}

impl FeatureSet {
    pub fn is_empty(&self) -> bool {
        self.minima.is_empty() && self.maxima.is_empty() && self.crossings.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractConfig {
    /// Refine single-sample extrema to sub-grid positions with a 3-point
    /// parabola. Plateau extrema are left at the plateau midpoint.
    pub parabolic_refine: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            parabolic_refine: true,
        }
    }
}

/// Extract minima, maxima, and `threshold` crossings from the samples of
/// `r` falling inside `window`. Window-edge extrema are excluded.
pub fn extract(
    r: &Response,
    window: (f64, f64),
    threshold: f64,
    cfg: &ExtractConfig,
) -> Result<FeatureSet, FeatureError> {
    if r.freqs.is_empty() {
        return Err(FeatureError::EmptyResponse);
    }
    let idx: Vec<usize> = (0..r.freqs.len())
        .filter(|&i| r.freqs[i] >= window.0 && r.freqs[i] <= window.1)
        .collect();
    if idx.len() < 3 {
        return Err(FeatureError::WindowTooNarrow(window.0, window.1));
    }
    let f: Vec<f64> = idx.iter().map(|&i| r.freqs[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| r.levels[i]).collect();

    // Collapse runs of equal samples so plateaus act as single points.
    let mut seg_start = Vec::new();
    let mut seg_end = Vec::new();
    let mut i = 0;
    while i < y.len() {
        let mut j = i;
        while j + 1 < y.len() && y[j + 1] == y[i] {
            j += 1;
        }
        seg_start.push(i);
        seg_end.push(j);
        i = j + 1;
    }

    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    for s in 1..seg_start.len().saturating_sub(1) {
        let (a, b) = (seg_start[s], seg_end[s]);
        let before = y[seg_end[s - 1]];
        let after = y[seg_start[s + 1]];
        let here = y[a];
        let is_min = here < before && here < after;
        let is_max = here > before && here > after;
        if !is_min && !is_max {
            continue;
        }
        let point = if a == b && cfg.parabolic_refine {
            refine_parabolic(&f, &y, a)
        } else {
            FeaturePoint {
                freq: 0.5 * (f[a] + f[b]),
                level: here,
            }
        };
        if is_min {
            minima.push(point);
        } else {
            maxima.push(point);
        }
    }

    let mut crossings = Vec::new();
    for i in 0..y.len() - 1 {
        let (a, b) = (y[i] - threshold, y[i + 1] - threshold);
        if a == 0.0 {
            push_crossing(&mut crossings, f[i], threshold);
        } else if a * b < 0.0 {
            let t = a / (a - b);
            push_crossing(&mut crossings, f[i] + t * (f[i + 1] - f[i]), threshold);
        }
    }
    if *y.last().unwrap() == threshold {
        push_crossing(&mut crossings, *f.last().unwrap(), threshold);
    }
    Ok(FeatureSet {
        minima,
        maxima,
        crossings,
        window,
    })
}

fn push_crossing(crossings: &mut Vec<FeaturePoint>, freq: f64, level: f64) {
    if crossings.last().map_or(true, |p| (p.freq - freq).abs() > 1e-12) {
        crossings.push(FeaturePoint { freq, level });
    }
}

fn refine_parabolic(f: &[f64], y: &[f64], i: usize) -> FeaturePoint {
    let denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
    if denom.abs() < 1e-300 {
        return FeaturePoint {
            freq: f[i],
            level: y[i],
        };
    }
    let offset = (0.5 * (y[i - 1] - y[i + 1]) / denom).clamp(-0.5, 0.5);
    let h = 0.5 * (f[i + 1] - f[i - 1]);
    FeaturePoint {
        freq: f[i] + offset * h,
        level: y[i] - 0.25 * (y[i - 1] - y[i + 1]) * offset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Fidelity;
    use approx::assert_abs_diff_eq;

    fn response(freqs: Vec<f64>, levels: Vec<f64>) -> Response {
        Response {
            freqs,
            levels,
            fidelity: Fidelity::High,
            cost_units: 0.0,
        }
    }

    fn lorentzian_response(center: f64, depth: f64, width: f64) -> Response {
        let freqs: Vec<f64> = (0..1001).map(|i| 5.0 + 3.0 * i as f64 / 1000.0).collect();
        let levels = freqs
            .iter()
            .map(|&f| depth / (1.0 + ((f - center) / width).powi(2)))
            .collect();
        response(freqs, levels)
    }

    #[test]
    fn lorentzian_minimum_and_crossings() {
        let r = lorentzian_response(6.5, -15.0, 0.1);
        let fs = extract(&r, (6.0, 7.0), -10.0, &ExtractConfig::default()).unwrap();
        assert_eq!(fs.minima.len(), 1);
        assert_abs_diff_eq!(fs.minima[0].freq, 6.5, epsilon = 1e-3);
        assert_abs_diff_eq!(fs.minima[0].level, -15.0, epsilon = 0.05);
        // Closed-form crossing points: depth/(1+u^2) = -10 -> u = +-sqrt(0.5).
        let off = 0.1 * 0.5_f64.sqrt();
        assert_eq!(fs.crossings.len(), 2);
        assert_abs_diff_eq!(fs.crossings[0].freq, 6.5 - off, epsilon = 1e-3);
        assert_abs_diff_eq!(fs.crossings[1].freq, 6.5 + off, epsilon = 1e-3);
        assert_eq!(fs.crossings[0].level, -10.0);
    }

    #[test]
    fn monotone_window_has_no_features() {
        let freqs: Vec<f64> = (0..101).map(|i| 6.0 + 0.01 * i as f64).collect();
        let levels: Vec<f64> = freqs.iter().map(|&f| -f).collect();
        let fs = extract(
            &response(freqs, levels),
            (6.2, 6.8),
            -100.0,
            &ExtractConfig::default(),
        )
        .unwrap();
        assert!(fs.minima.is_empty());
        assert!(fs.maxima.is_empty());
        assert!(fs.crossings.is_empty());
    }

    #[test]
    fn dual_notch_shape() {
        let freqs: Vec<f64> = (0..1001).map(|i| 6.0 + 0.001 * i as f64).collect();
        let levels: Vec<f64> = freqs
            .iter()
            .map(|&f| {
                -12.0 / (1.0 + ((f - 6.3) / 0.08_f64).powi(2))
                    - 13.0 / (1.0 + ((f - 6.7) / 0.08_f64).powi(2))
            })
            .collect();
        let fs = extract(
            &response(freqs, levels),
            (6.1, 6.9),
            -10.0,
            &ExtractConfig::default(),
        )
        .unwrap();
        assert_eq!(fs.minima.len(), 2);
        assert_eq!(fs.maxima.len(), 1);
        assert!(fs.maxima[0].freq > fs.minima[0].freq && fs.maxima[0].freq < fs.minima[1].freq);
    }

    #[test]
    fn plateau_collapses_to_midpoint() {
        let freqs: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let levels = vec![-1.0, -2.0, -5.0, -5.0, -5.0, -2.0, -1.0, -0.5, -0.4];
        let fs = extract(
            &response(freqs, levels),
            (0.0, 8.0),
            -100.0,
            &ExtractConfig::default(),
        )
        .unwrap();
        assert_eq!(fs.minima.len(), 1);
        assert_abs_diff_eq!(fs.minima[0].freq, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fs.minima[0].level, -5.0, epsilon = 1e-12);
    }

    #[test]
    fn narrow_window_and_empty_response_errors() {
        let r = response(vec![1.0, 2.0, 3.0], vec![-1.0, -2.0, -1.0]);
        assert!(matches!(
            extract(&r, (1.4, 1.6), -10.0, &ExtractConfig::default()),
            Err(FeatureError::WindowTooNarrow(..))
        ));
        let empty = response(vec![], vec![]);
        assert!(matches!(
            extract(&empty, (1.0, 2.0), -10.0, &ExtractConfig::default()),
            Err(FeatureError::EmptyResponse)
        ));
    }

    #[test]
    fn refinement_stays_within_half_grid_step() {
        let r = lorentzian_response(6.512, -15.0, 0.1);
        let raw = extract(
            &r,
            (6.0, 7.0),
            -10.0,
            &ExtractConfig {
                parabolic_refine: false,
            },
        )
        .unwrap();
        let refined = extract(&r, (6.0, 7.0), -10.0, &ExtractConfig::default()).unwrap();
        let step = 3.0 / 1000.0;
        assert!((refined.minima[0].freq - raw.minima[0].freq).abs() <= 0.5 * step);
        // Refined position is closer to the analytic center.
        assert!((refined.minima[0].freq - 6.512).abs() <= (raw.minima[0].freq - 6.512).abs());
    }
}
