use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::StlError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Circle {
        center: Vec<f64>,
        radius: f64,
    },
    #[serde(rename = "box")]
    AxisBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

/// A labeled region of the position subspace.
///
/// `projection` lists the raw-state components read as position, in the
/// order matching the shape's coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    label: String,
    shape: Shape,
    projection: Vec<usize>,
}

impl Region {
    pub fn new(
        label: impl Into<String>,
        shape: Shape,
        projection: Vec<usize>,
    ) -> Result<Self, StlError> {
        let label = label.into();
        let bad = |msg: &str| StlError::InvalidRegion {
            label: label.clone(),
            msg: msg.to_string(),
        };
        let dim = match &shape {
            Shape::Circle { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(bad("radius must be strictly positive"));
                }
                center.len()
            }
            Shape::AxisBox { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(bad("box corners differ in dimension"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(bad("box corners must be ordered componentwise"));
                }
                lower.len()
            }
        };
        if dim != projection.len() {
            return Err(bad("shape dimension does not match projection"));
        }
        if dim == 0 {
            return Err(bad("region needs at least one coordinate"));
        }
        Ok(Self {
            label,
            shape,
            projection,
        })
    }

    pub fn circle(
        label: impl Into<String>,
        center: Vec<f64>,
        radius: f64,
    ) -> Result<Self, StlError> {
        let projection = (0..center.len()).collect();
        Self::new(label, Shape::Circle { center, radius }, projection)
    }

    pub fn axis_box(
        label: impl Into<String>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, StlError> {
        let projection = (0..lower.len()).collect();
        Self::new(label, Shape::AxisBox { lower, upper }, projection)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn projection(&self) -> &[usize] {
        &self.projection
    }

    /// Signed margin of `x` with respect to the region: positive inside,
    /// negative outside, zero on the boundary.
    pub fn value(&self, x: &[f64]) -> Result<f64, StlError> {
        if let Some(&bad) = self.projection.iter().find(|&&i| i >= x.len()) {
            return Err(StlError::ProjectionOutOfRange {
                label: self.label.clone(),
                index: bad,
                dim: x.len(),
            });
        }
        let coord = |k: usize| x[self.projection[k]];
        Ok(match &self.shape {
            Shape::Circle { center, radius } => {
                let d2: f64 = center
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (coord(k) - c).powi(2))
                    .sum();
                radius - d2.sqrt()
            }
            Shape::AxisBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .enumerate()
                .map(|(k, (l, u))| (coord(k) - l).min(u - coord(k)))
                .fold(f64::INFINITY, f64::min),
        })
    }
}

/// Evaluates atomic predicates by label.
pub trait Predicates {
    fn value(&self, label: &str, state: &[f64]) -> Result<f64, StlError>;
}

/// Label-indexed region collection.
#[derive(Clone, Debug, Default)]
pub struct RegionSet {
    regions: Vec<Region>,
    index: HashMap<String, usize>,
}

impl RegionSet {
    pub fn new(regions: Vec<Region>) -> Result<Self, StlError> {
        let mut index = HashMap::with_capacity(regions.len());
        for (k, r) in regions.iter().enumerate() {
            if index.insert(r.label.clone(), k).is_some() {
                return Err(StlError::DuplicateRegion(r.label.clone()));
            }
        }
        Ok(Self { regions, index })
    }

    pub fn get(&self, label: &str) -> Option<&Region> {
        self.index.get(label).map(|&k| &self.regions[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

impl Predicates for RegionSet {
    fn value(&self, label: &str, state: &[f64]) -> Result<f64, StlError> {
        self.get(label)
            .ok_or_else(|| StlError::UnknownPredicate(label.to_string()))?
            .value(state)
    }
}
