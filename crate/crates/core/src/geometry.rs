//! Capsule and loudspeaker array geometries and their text file format.
//!
//! ```text
//! role = "capsule-array"          # or "loudspeaker-array"
//! radius_m = 0.042
//! exact_degree = 6                # optional: degree the quadrature integrates exactly
//! elements = [[elevation_rad, azimuth_rad, weight], ...]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::Direction;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrayRole {
    CapsuleArray,
    LoudspeakerArray,
}

impl ArrayRole {
    pub fn name(&self) -> &'static str {
        match self {
            ArrayRole::CapsuleArray => "capsule-array",
            ArrayRole::LoudspeakerArray => "loudspeaker-array",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayElement {
    pub direction: Direction,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    role: ArrayRole,
    radius: f64,
    elements: Vec<ArrayElement>,
    exact_degree: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    role: ArrayRole,
    radius_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact_degree: Option<usize>,
    elements: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn new(
        role: ArrayRole,
        radius: f64,
        elements: Vec<ArrayElement>,
        exact_degree: Option<usize>,
    ) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!("array radius {radius} must be positive")));
        }
        if elements.is_empty() {
            return Err(Error::Domain("array has no elements".into()));
        }
        if elements.iter().any(|e| !e.weight.is_finite() || e.weight < 0.0) {
            return Err(Error::Domain("element weights must be finite and non-negative".into()));
        }
        if role == ArrayRole::CapsuleArray {
            let total: f64 = elements.iter().map(|e| e.weight).sum();
            if ((total - FOUR_PI) / FOUR_PI).abs() > 1e-6 {
                return Err(Error::Domain(format!(
                    "capsule weights sum to {total}, expected 4 pi"
                )));
            }
        }
        Ok(Self { role, radius, elements, exact_degree })
    }

    /// Builds a geometry with equal weights `4 pi / count`.
    pub fn uniform(role: ArrayRole, radius: f64, directions: Vec<Direction>) -> Result<Self> {
        let w = FOUR_PI / directions.len().max(1) as f64;
        let elements = directions.into_iter().map(|d| ArrayElement { direction: d, weight: w }).collect();
        Self::new(role, radius, elements, None)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: GeometryFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let elements = file
            .elements
            .iter()
            .map(|&[theta, phi, weight]| {
                Ok(ArrayElement { direction: Direction::new(theta, phi)?, weight })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.role, file.radius_m, elements, file.exact_degree)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let file = GeometryFile {
            role: self.role,
            radius_m: self.radius,
            exact_degree: self.exact_degree,
            elements: self
                .elements
                .iter()
                .map(|e| [e.direction.theta(), e.direction.phi(), e.weight])
                .collect(),
        };
        toml::to_string(&file).expect("geometry serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn role(&self) -> ArrayRole {
        self.role
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn elements(&self) -> &[ArrayElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn exact_degree(&self) -> Option<usize> {
        self.exact_degree
    }

    pub fn directions(&self) -> impl Iterator<Item = &Direction> {
        self.elements.iter().map(|e| &e.direction)
    }

    pub(crate) fn require(&self, role: ArrayRole) -> Result<()> {
        if self.role != role {
            return Err(Error::Role { expected: role.name(), got: self.role.name() });
        }
        Ok(())
    }
}

/// Geometry fixtures shipped with the crate.
pub mod fixtures {
    use super::ArrayGeometry;

    pub const EM32: &str = include_str!("../data/em32.geom");
    pub const TDESIGN_ORDER6: &str = include_str!("../data/tdesign_order6.geom");
    pub const LEBEDEV50: &str = include_str!("../data/lebedev50.geom");

    /// 32-capsule rigid-sphere layout. Weights are a least-squares fit, so
    /// orthonormality is approximate (about 2e-2 at order 4).
    pub fn em32() -> ArrayGeometry {
        ArrayGeometry::parse(EM32).expect("em32 fixture parses")
    }

    pub fn tdesign_order6() -> ArrayGeometry {
        ArrayGeometry::parse(TDESIGN_ORDER6).expect("t-design fixture parses")
    }

    pub fn lebedev50() -> ArrayGeometry {
        ArrayGeometry::parse(LEBEDEV50).expect("lebedev fixture parses")
    }
}
