//! Vector-base amplitude panning of the beamformed direct sound.

use serde::{Deserialize, Serialize};

use crate::capture::BeamformedSignal;
use crate::error::{Error, Result};
use crate::gammatone::GammatoneFilterbank;
use crate::geometry::{ArrayGeometry, ArrayRole};
use crate::sh::Direction;

const HULL_EPS: f64 = 1e-9;
const ADMISSIBLE: f64 = -1e-9;

/// Loudspeaker triangle, vertex indices counter-clockwise seen from outside.
pub type Triangle = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanNormalization {
    /// Sum of squared gains is one.
    #[default]
    Power,
    /// Sum of gains is one.
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbapGains {
    pub triangle: Triangle,
    pub gains: [f64; 3],
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Convex-hull triangulation of the loudspeaker directions. Coplanar hull
/// faces are fanned from their lowest-index vertex.
pub fn triangulate(layout: &ArrayGeometry) -> Result<Vec<Triangle>> {
    layout.require(ArrayRole::LoudspeakerArray)?;
    let pts: Vec<[f64; 3]> = layout.directions().map(Direction::to_vector).collect();
    let n = pts.len();
    if n < 4 {
        return Err(Error::DegenerateLayout(format!("{n} loudspeakers cannot enclose the listener")));
    }
    let mut faces: Vec<(Vec<usize>, [f64; 3])> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = cross(sub(pts[j], pts[i]), sub(pts[k], pts[i]));
                let len = dot(normal, normal).sqrt();
                if len < HULL_EPS {
                    continue;
                }
                let mut normal = normal.map(|v| v / len);
                let offset = dot(normal, pts[i]);
                let side: Vec<f64> = pts.iter().map(|p| dot(normal, *p) - offset).collect();
                let above = side.iter().any(|&s| s > HULL_EPS);
                let below = side.iter().any(|&s| s < -HULL_EPS);
                if above && below {
                    continue;
                }
                if !above && !below {
                    return Err(Error::DegenerateLayout("all loudspeakers are coplanar".into()));
                }
                if above {
                    normal = normal.map(|v| -v);
                }
                // The origin must lie strictly inside every supporting plane.
                if dot(normal, pts[i]) <= HULL_EPS {
                    return Err(Error::DegenerateLayout(
                        "loudspeakers do not surround the listening position".into(),
                    ));
                }
                let members: Vec<usize> = (0..n).filter(|&q| side[q].abs() <= HULL_EPS).collect();
                if !faces.iter().any(|f| f.0 == members) {
                    faces.push((members, normal));
                }
            }
        }
    }
    let mut triangles = Vec::new();
    for (face, normal) in faces {
        // Order the face polygon counter-clockwise about its outward normal.
        let first = *face.iter().min().expect("faces have at least three vertices");
        let centroid = face.iter().fold([0.0; 3], |acc, &q| [acc[0] + pts[q][0], acc[1] + pts[q][1], acc[2] + pts[q][2]]);
        let centroid = centroid.map(|v| v / face.len() as f64);
        let u = sub(pts[first], centroid);
        let v = cross(normal, u);
        let mut ring: Vec<(f64, usize)> = face
            .iter()
            .map(|&q| {
                let d = sub(pts[q], centroid);
                (if q == first { 0.0 } else { dot(d, v).atan2(dot(d, u)).rem_euclid(std::f64::consts::TAU) }, q)
            })
            .collect();
        ring.sort_by(|a, b| a.0.total_cmp(&b.0));
        for t in 1..ring.len() - 1 {
            triangles.push([first, ring[t].1, ring[t + 1].1]);
        }
    }
    triangles.sort();
    Ok(triangles)
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c0 = cross(m[1], m[2]);
    let det = dot(m[0], c0);
    if det.abs() < 1e-12 {
        return None;
    }
    let c1 = cross(m[2], m[0]);
    let c2 = cross(m[0], m[1]);
    // Columns of the inverse are the cofactor rows divided by det.
    Some([
        [c0[0] / det, c1[0] / det, c2[0] / det],
        [c0[1] / det, c1[1] / det, c2[1] / det],
        [c0[2] / det, c1[2] / det, c2[2] / det],
    ])
}

/// Unnormalized barycentric solve `d = sum g_i l_i` on one triangle.
pub fn triangle_gains(doa: &Direction, layout: &ArrayGeometry, tri: &Triangle) -> Option<[f64; 3]> {
    let e = layout.elements();
    let rows = tri.map(|i| e[i].direction.to_vector());
    let inv = invert3(rows)?;
    let d = doa.to_vector();
    // g^T = d^T L^{-1}, L rows are the loudspeaker vectors.
    Some([0, 1, 2].map(|c| d[0] * inv[0][c] + d[1] * inv[1][c] + d[2] * inv[2][c]))
}

pub fn vbap_gains_on(
    doa: &Direction,
    layout: &ArrayGeometry,
    triangles: &[Triangle],
    norm: PanNormalization,
) -> Result<VbapGains> {
    for tri in triangles {
        let Some(g) = triangle_gains(doa, layout, tri) else { continue };
        if g.iter().all(|&v| v >= ADMISSIBLE) {
            let g = g.map(|v| v.max(0.0));
            let scale = match norm {
                PanNormalization::Power => g.iter().map(|v| v * v).sum::<f64>().sqrt(),
                PanNormalization::Amplitude => g.iter().sum::<f64>(),
            };
            return Ok(VbapGains { triangle: *tri, gains: g.map(|v| v / scale) });
        }
    }
    Err(Error::Internal(format!("no loudspeaker triangle contains direction {doa:?}")))
}

pub fn vbap_gains(doa: &Direction, layout: &ArrayGeometry) -> Result<VbapGains> {
    vbap_gains_on(doa, layout, &triangulate(layout)?, PanNormalization::Power)
}

/// Per-band direct driving signals for the three panned loudspeakers:
/// `G_vbap * synth(g_dir^(i) * analyze_i(s_BF))`.
pub fn direct_driving_signals(
    bf: &BeamformedSignal,
    gains: &VbapGains,
    g_dir: &[f64],
    fb: &GammatoneFilterbank,
) -> Result<[Vec<f64>; 3]> {
    fb.check_bands(g_dir.len())?;
    let shaped = fb.apply_band_gains(&bf.samples, g_dir)?;
    Ok(gains.gains.map(|g| shaped.iter().map(|v| g * v).collect()))
}
