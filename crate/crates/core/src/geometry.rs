//! Cylindrical-coordinate encoding of topology-agnostic planar patch
//! geometries: decode to Cartesian outlines, quasi-random candidate
//! generation, uniform scaling, feed-enclosure checks, and bound
//! construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Clearance between the outline's bounding radius and the substrate edge, mm.
pub const SUBSTRATE_CLEARANCE_MM: f64 = 5.0;
/// Feed probe inner-conductor radius, mm (fixed for 50 Ohm input impedance).
pub const FEED_INNER_RADIUS_MM: f64 = 1.27;
/// Feed probe outer-conductor radius, mm; default feed-enclosure margin.
pub const FEED_OUTER_RADIUS_MM: f64 = 2.84;
/// Tolerance used when clipping a design onto its bounds.
pub const CLIP_TOLERANCE: f64 = 1e-6;
/// Two consecutive outline vertices closer than this are degenerate, mm.
const DEGENERATE_VERTEX_DISTANCE_MM: f64 = 1e-9;
/// Retry budget for feed placement during candidate generation.
const FEED_RETRY_BUDGET: usize = 50;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("angular increment {value} at index {index} is not positive")]
    NonPositiveIncrement { index: usize, value: f64 },
    #[error("consecutive vertices {0} and {1} coincide")]
    DegenerateOutline(usize, usize),
    #[error("feed placement failed after {0} resamples")]
    EnclosureFailure(usize),
    #[error("design violates bounds at coordinate {index} by {violation}")]
    InfeasibleBounds { index: usize, violation: f64 },
    #[error("design vector has {0} entries, expected 2L+3 with L >= 3")]
    BadLength(usize),
}

/// Design vector `x = [C, rho_f, phi_f, rho_1..rho_L, phi_1..phi_L]`.
///
/// `C` is the sizing factor in mm; all remaining coordinates are unit-less.
/// The `phi` entries are relative angular increments: the decoded absolute
/// angles are proportional to their prefix sums, normalized to a full turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub c: f64,
    pub rho_f: f64,
    pub phi_f: f64,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
}

impl DesignVector {
    /// Number of outline vertices L.
    pub fn vertex_count(&self) -> usize {
        self.rho.len()
    }

    /// Problem dimension D = 2L + 3.
    pub fn dim(&self) -> usize {
        2 * self.rho.len() + 3
    }

    /// Flatten to `[C, rho_f, phi_f, rho.., phi..]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(self.c);
        out.push(self.rho_f);
        out.push(self.phi_f);
        out.extend_from_slice(&self.rho);
        out.extend_from_slice(&self.phi);
        out
    }

    /// Rebuild from a flat vector. Length must be 2L+3 with L >= 3.
    pub fn from_flat(flat: &[f64]) -> Result<Self, GeometryError> {
        if flat.len() < 9 || (flat.len() - 3) % 2 != 0 {
            return Err(GeometryError::BadLength(flat.len()));
        }
        let l = (flat.len() - 3) / 2;
        Ok(Self {
            c: flat[0],
            rho_f: flat[1],
            phi_f: flat[2],
            rho: flat[3..3 + l].to_vec(),
            phi: flat[3 + l..].to_vec(),
        })
    }

    /// Coordinate labels matching the flat layout.
    pub fn labels(&self) -> Vec<String> {
        let mut out = vec!["C".to_string(), "rho_f".to_string(), "phi_f".to_string()];
        for i in 1..=self.rho.len() {
            out.push(format!("rho_{i}"));
        }
        for i in 1..=self.phi.len() {
            out.push(format!("phi_{i}"));
        }
        out
    }
}

/// Serialized design record: `{"L": int, "x": [floats], "labels": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignRecord {
    #[serde(rename = "L")]
    pub l: usize,
    pub x: Vec<f64>,
    pub labels: Vec<String>,
}

impl From<&DesignVector> for DesignRecord {
    fn from(x: &DesignVector) -> Self {
        DesignRecord {
            l: x.vertex_count(),
            x: x.to_flat(),
            labels: x.labels(),
        }
    }
}

impl TryFrom<&DesignRecord> for DesignVector {
    type Error = GeometryError;

    fn try_from(rec: &DesignRecord) -> Result<Self, GeometryError> {
        let x = DesignVector::from_flat(&rec.x)?;
        if x.vertex_count() != rec.l {
            return Err(GeometryError::BadLength(rec.x.len()));
        }
        Ok(x)
    }
}

/// Decoded Cartesian outline in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPatch {
    /// Outline vertices, counter-clockwise, mm.
    pub vertices: Vec<[f64; 2]>,
    /// Feed probe center, mm.
    pub feed_point: [f64; 2],
    /// Substrate side A = B = 2(C max(rho) + o), mm.
    pub substrate_side: f64,
    /// Absolute vertex angles, strictly increasing in [0, 2pi).
    pub absolute_angles: Vec<f64>,
}

/// Componentwise box bounds over the flat design layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, flat: &[f64]) -> bool {
        flat.len() == self.dim()
            && flat
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&l, &u))| x >= l && x <= u)
    }

    /// Per-coordinate range `u - l`.
    pub fn range(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn clamp(&self, flat: &mut [f64]) {
        for (x, (&l, &u)) in flat.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(l, u);
        }
    }
}

/// Decode a design vector into its Cartesian outline.
///
/// Absolute angles: theta_1 = 0 and theta_l = 2pi * prefix_sum(phi_1..phi_{l-1})
/// / sum(phi) for l >= 2, so the final increment phi_L closes the loop.
pub fn decode(x: &DesignVector) -> Result<DecodedPatch, GeometryError> {
    let l = x.vertex_count();
    if l < 3 || x.phi.len() != l {
        return Err(GeometryError::BadLength(x.dim()));
    }
    for (i, &p) in x.phi.iter().enumerate() {
        if p <= 0.0 {
            return Err(GeometryError::NonPositiveIncrement { index: i, value: p });
        }
    }
    let total: f64 = x.phi.iter().sum();
    let mut angles = Vec::with_capacity(l);
    let mut prefix = 0.0;
    for i in 0..l {
        angles.push(2.0 * PI * prefix / total);
        prefix += x.phi[i];
    }
    let vertices: Vec<[f64; 2]> = angles
        .iter()
        .zip(&x.rho)
        .map(|(&th, &r)| [x.c * r * th.cos(), x.c * r * th.sin()])
        .collect();
    for i in 0..l {
        let j = (i + 1) % l;
        let dx = vertices[j][0] - vertices[i][0];
        let dy = vertices[j][1] - vertices[i][1];
        if (dx * dx + dy * dy).sqrt() < DEGENERATE_VERTEX_DISTANCE_MM {
            return Err(GeometryError::DegenerateOutline(i, j));
        }
    }
    let max_rho = x.rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(DecodedPatch {
        vertices,
        feed_point: [
            x.c * x.rho_f * x.phi_f.cos(),
            x.c * x.rho_f * x.phi_f.sin(),
        ],
        substrate_side: 2.0 * (x.c * max_rho + SUBSTRATE_CLEARANCE_MM),
        absolute_angles: angles,
    })
}

/// Multiply the sizing factor by `c`, leaving every other coordinate alone.
/// Decoded vertices scale exactly by `c`.
pub fn scale_design(x: &DesignVector, c: f64) -> DesignVector {
    let mut out = x.clone();
    out.c *= c;
    out
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = p[0] - (a[0] + t * ab[0]);
    let dy = p[1] - (a[1] + t * ab[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Even-odd ray-crossing point-in-polygon test.
pub fn point_in_polygon(p: [f64; 2], vertices: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (vertices[i], vertices[j]);
        if (vi[1] > p[1]) != (vj[1] > p[1]) {
            let x_cross = vj[0] + (p[1] - vj[1]) / (vi[1] - vj[1]) * (vi[0] - vj[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// True iff the feed point lies inside the outline with clearance of at
/// least `margin` mm to every edge.
pub fn contains_feed(patch: &DecodedPatch, margin: f64) -> bool {
    if !point_in_polygon(patch.feed_point, &patch.vertices) {
        return false;
    }
    let n = patch.vertices.len();
    (0..n).all(|i| {
        point_segment_distance(patch.feed_point, patch.vertices[i], patch.vertices[(i + 1) % n])
            >= margin
    })
}

/// Default bounds for fresh candidate generation: rho in [0.1, 0.9],
/// phi increments in [0.01, 0.8], feed radius in [0, 0.6], feed angle in
/// [0, 2pi), sizing factor in [c_low, c_high].
pub fn generation_bounds(l: usize, c_low: f64, c_high: f64) -> Bounds {
    let mut lower = vec![c_low, 0.0, 0.0];
    let mut upper = vec![c_high, 0.6, 2.0 * PI];
    lower.extend(std::iter::repeat(0.1).take(l));
    upper.extend(std::iter::repeat(0.9).take(l));
    lower.extend(std::iter::repeat(0.01).take(l));
    upper.extend(std::iter::repeat(0.8).take(l));
    Bounds { lower, upper }
}

/// Draw a uniform random design within `gen_bounds`, resampling the feed
/// coordinates until the probe is enclosed with the default margin.
///
/// Deterministic for a fixed seed. Fails with `EnclosureFailure` once the
/// retry budget is exhausted.
pub fn generate_candidate(
    l: usize,
    seed: u64,
    gen_bounds: &Bounds,
) -> Result<DesignVector, GeometryError> {
    assert!(l >= 3, "need at least 3 outline vertices");
    assert_eq!(gen_bounds.dim(), 2 * l + 3, "bounds dimension mismatch");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng, d: usize| -> f64 {
        let (lo, hi) = (gen_bounds.lower[d], gen_bounds.upper[d]);
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };
    let mut flat: Vec<f64> = (0..gen_bounds.dim()).map(|d| sample(&mut rng, d)).collect();
    let mut x = DesignVector::from_flat(&flat)?;
    let outline = decode(&x)?;
    if contains_feed(&outline, FEED_OUTER_RADIUS_MM) {
        return Ok(x);
    }
    for _ in 0..FEED_RETRY_BUDGET {
        // Resample the angle uniformly, then keep the radius inside the
        // locally feasible span so spiky outlines still admit a placement.
        flat[2] = sample(&mut rng, 2);
        let reach = outline_radius_at(&outline, flat[2])
            .map(|r| ((r - FEED_OUTER_RADIUS_MM) / x.c).clamp(0.0, gen_bounds.upper[1]))
            .unwrap_or(gen_bounds.upper[1]);
        flat[1] = if reach > gen_bounds.lower[1] {
            rng.gen_range(gen_bounds.lower[1]..reach)
        } else {
            gen_bounds.lower[1]
        };
        x.rho_f = flat[1];
        x.phi_f = flat[2];
        let patch = DecodedPatch {
            feed_point: [
                x.c * x.rho_f * x.phi_f.cos(),
                x.c * x.rho_f * x.phi_f.sin(),
            ],
            ..outline.clone()
        };
        if contains_feed(&patch, FEED_OUTER_RADIUS_MM) {
            return Ok(x);
        }
    }
    // Random retries exhausted: fall back to a deterministic polar sweep so
    // shapes with small (but nonempty) feasible regions still succeed.
    let coarse: Vec<f64> = (0..outline.absolute_angles.len())
        .flat_map(|i| {
            let a = outline.absolute_angles[i];
            let b = if i + 1 < outline.absolute_angles.len() {
                outline.absolute_angles[i + 1]
            } else {
                2.0 * PI
            };
            [a, 0.5 * (a + b)]
        })
        .collect();
    let fine: Vec<f64> = (0..720).map(|i| i as f64 * 2.0 * PI / 720.0).collect();
    for angles in [&coarse, &fine] {
        for &phi in angles.iter() {
            let reach = match outline_radius_at(&outline, phi) {
                Some(r) => ((r - FEED_OUTER_RADIUS_MM) / x.c).clamp(0.0, gen_bounds.upper[1]),
                None => continue,
            };
            let steps = if std::ptr::eq(angles, &coarse) { 16 } else { 120 };
            for s in 0..steps {
                let rho = reach * s as f64 / steps as f64;
                if rho < gen_bounds.lower[1] {
                    continue;
                }
                x.rho_f = rho;
                x.phi_f = phi;
                let patch = DecodedPatch {
                    feed_point: [
                        x.c * x.rho_f * x.phi_f.cos(),
                        x.c * x.rho_f * x.phi_f.sin(),
                    ],
                    ..outline.clone()
                };
                if contains_feed(&patch, FEED_OUTER_RADIUS_MM) {
                    return Ok(x);
                }
            }
        }
    }
    Err(GeometryError::EnclosureFailure(FEED_RETRY_BUDGET))
}

/// Optimization bounds anchored at the selected initial design:
/// `l = [c_low, 0, phi_f0 - pi, 0.1.., 0.01..]`,
/// `u = [c_high, max(rho0), phi_f0 + pi, 0.9.., 0.8..]`.
///
/// The initial design is clipped onto the box when it sits on the boundary;
/// violations beyond the clip tolerance are an error.
pub fn build_bounds(
    x0: &DesignVector,
    c_low: f64,
    c_high: f64,
) -> Result<(Bounds, DesignVector), GeometryError> {
    assert!(c_low < c_high, "c_low must be below c_high");
    decode(x0)?;
    let l = x0.vertex_count();
    let max_rho = x0.rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lower = vec![c_low, 0.0, x0.phi_f - PI];
    let mut upper = vec![c_high, max_rho, x0.phi_f + PI];
    lower.extend(std::iter::repeat(0.1).take(l));
    upper.extend(std::iter::repeat(0.9).take(l));
    lower.extend(std::iter::repeat(0.01).take(l));
    upper.extend(std::iter::repeat(0.8).take(l));
    let bounds = Bounds { lower, upper };
    let mut flat = x0.to_flat();
    for (d, x) in flat.iter_mut().enumerate() {
        let (lo, hi) = (bounds.lower[d], bounds.upper[d]);
        if *x < lo - CLIP_TOLERANCE || *x > hi + CLIP_TOLERANCE {
            return Err(GeometryError::InfeasibleBounds {
                index: d,
                violation: (*x - x.clamp(lo, hi)).abs(),
            });
        }
        *x = x.clamp(lo, hi);
    }
    let clipped = DesignVector::from_flat(&flat)?;
    Ok((bounds, clipped))
}

/// Radial distance from the origin to the outline along angle `phi`, or
/// `None` when the origin is not enclosed in that direction.
pub fn outline_radius_at(patch: &DecodedPatch, phi: f64) -> Option<f64> {
    let dir = [phi.cos(), phi.sin()];
    let n = patch.vertices.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let a = patch.vertices[i];
        let b = patch.vertices[(i + 1) % n];
        // Solve origin + t*dir == a + s*(b-a), t >= 0, s in [0,1].
        let e = [b[0] - a[0], b[1] - a[1]];
        let det = dir[0] * (-e[1]) - dir[1] * (-e[0]);
        if det.abs() < 1e-15 {
            continue;
        }
        let t = (a[0] * (-e[1]) - a[1] * (-e[0])) / det;
        let s = (dir[0] * a[1] - dir[1] * a[0]) / det;
        if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            best = Some(best.map_or(t, |cur: f64| cur.min(t)));
        }
    }
    best
}

/// Write the decoded outline as a two-column polygon CSV (`x_mm,y_mm`).
pub fn polygon_csv(patch: &DecodedPatch) -> String {
    let mut out = String::from("x_mm,y_mm\n");
    for v in &patch.vertices {
        out.push_str(&format!("{:.6},{:.6}\n", v[0], v[1]));
    }
    out
}
