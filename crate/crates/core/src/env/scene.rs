//! Scene files: environment settings, labeled regions and the task formula.
//!
//! ```toml
//! name = "linear-reach-avoid"
//! stl = "F[10,90](A) & G[0,100](!B1)"
//!
//! [env]
//! dynamics = "linear"      # linear | unicycle | quadrotor
//! dt = 0.2                 # optional; every env key falls back to the preset
//! horizon = 100
//! control_lower = [-1.0, -1.0]
//! control_upper = [1.0, 1.0]
//! init_lower = [-4.5, -4.5]
//! init_upper = [-3.5, -3.5]
//!
//! [[regions]]
//! label = "A"
//! shape = "circle"         # circle {center, radius} | box {lower, upper}
//! center = [3.0, 3.0]
//! radius = 1.0
//! # projection = [0, 1]    # optional; defaults to env position indices
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dynamics, EnvError, EnvSpec, QuadrotorParams};
use crate::stl::{self, Formula, Region, RegionSet, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub dynamics: Dynamics,
    pub dt: Option<f64>,
    pub horizon: Option<usize>,
    pub control_lower: Option<Vec<f64>>,
    pub control_upper: Option<Vec<f64>>,
    pub init_lower: Option<Vec<f64>>,
    pub init_upper: Option<Vec<f64>>,
    pub position: Option<Vec<usize>>,
    pub state_lower: Option<Vec<f64>>,
    pub state_upper: Option<Vec<f64>>,
    pub quadrotor: Option<QuadrotorParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDef {
    pub label: String,
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub stl: String,
    pub env: EnvSection,
    #[serde(default)]
    pub regions: Vec<RegionDef>,
}

impl SceneFile {
    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        toml::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))
    }
}

/// A validated scene: environment, regions, and the parsed formula.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub name: String,
    pub env: EnvSpec,
    pub regions: RegionSet,
    pub formula: Formula,
    pub stl: String,
    hash: String,
}

impl SceneSpec {
    pub fn from_file(file: &SceneFile) -> Result<Self, EnvError> {
        let e = &file.env;
        let preset = EnvSpec::preset(e.dynamics);
        let env = EnvSpec {
            dynamics: e.dynamics,
            dt: e.dt.unwrap_or(preset.dt),
            horizon: e.horizon.unwrap_or(preset.horizon),
            control_lower: e.control_lower.clone().unwrap_or(preset.control_lower),
            control_upper: e.control_upper.clone().unwrap_or(preset.control_upper),
            init_lower: e.init_lower.clone().unwrap_or(preset.init_lower),
            init_upper: e.init_upper.clone().unwrap_or(preset.init_upper),
            position: e.position.clone().unwrap_or(preset.position),
            state_lower: e.state_lower.clone().unwrap_or(preset.state_lower),
            state_upper: e.state_upper.clone().unwrap_or(preset.state_upper),
            quadrotor: e.quadrotor.unwrap_or(preset.quadrotor),
        };
        env.validate()?;

        let regions = file
            .regions
            .iter()
            .map(|r| {
                let projection = r.projection.clone().unwrap_or_else(|| env.position.clone());
                if let Some(&bad) = projection.iter().find(|&&i| i >= env.state_dim()) {
                    return Err(EnvError::Scene(format!(
                        "region `{}` projects state component {bad}",
                        r.label
                    )));
                }
                Region::new(r.label.clone(), r.shape.clone(), projection)
                    .map_err(|e| EnvError::Scene(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let regions = RegionSet::new(regions).map_err(|e| EnvError::Scene(e.to_string()))?;

        let formula = stl::parse(&file.stl).map_err(|e| EnvError::Scene(format!("stl: {e}")))?;
        for label in formula.labels() {
            if regions.get(label).is_none() {
                return Err(EnvError::Scene(format!(
                    "formula references unknown region `{label}`"
                )));
            }
        }
        if formula.horizon() > env.horizon {
            return Err(EnvError::Scene(format!(
                "formula looks {} steps ahead but the horizon is {}",
                formula.horizon(),
                env.horizon
            )));
        }

        let canonical = serde_json::to_vec(file).map_err(|e| EnvError::Scene(e.to_string()))?;
        let hash = hex::encode(Sha256::digest(&canonical));
        Ok(Self {
            name: file.name.clone(),
            env,
            regions,
            formula,
            stl: file.stl.clone(),
            hash,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        Self::from_file(&SceneFile::from_toml(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the scene's canonical serialization.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Copy with a different horizon (formula must still fit).
    pub fn with_horizon(&self, horizon: usize) -> Result<Self, EnvError> {
        if self.formula.horizon() > horizon || horizon == 0 {
            return Err(EnvError::Scene(format!(
                "horizon {horizon} cannot hold the formula"
            )));
        }
        let mut s = self.clone();
        s.env.horizon = horizon;
        s.hash = hex::encode(Sha256::digest(format!("{}:horizon={horizon}", self.hash)));
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = r#"
name = "t"
stl = "F[0,50](A) & G[0,100](!B)"
[env]
dynamics = "linear"
horizon = 100
[[regions]]
label = "A"
shape = "circle"
center = [3.0, 3.0]
radius = 1.0
[[regions]]
label = "B"
shape = "box"
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
"#;

    #[test]
    fn loads_with_preset_fallbacks() {
        let s = SceneSpec::from_toml(SCENE).unwrap();
        assert_eq!(s.env.dt, 0.2);
        assert_eq!(s.regions.len(), 2);
        assert_eq!(s.regions.get("B").unwrap().value(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(s.hash().len(), 64);
        assert_eq!(SceneSpec::from_toml(SCENE).unwrap().hash(), s.hash());
    }

    #[test]
    fn rejects_unresolved_labels_and_overlong_formulas() {
        let missing = SCENE.replace("(!B)", "(!C)");
        assert!(matches!(
            SceneSpec::from_toml(&missing),
            Err(EnvError::Scene(_))
        ));
        let long = SCENE.replace("G[0,100]", "G[0,101]");
        assert!(matches!(
            SceneSpec::from_toml(&long),
            Err(EnvError::Scene(_))
        ));
        let dup = format!("{SCENE}\n[[regions]]\nlabel = \"A\"\nshape = \"circle\"\ncenter = [0.0, 0.0]\nradius = 1.0\n");
        assert!(SceneSpec::from_toml(&dup).is_err());
        assert!(matches!(
            SceneSpec::from_toml("name = 1"),
            Err(EnvError::Parse(_))
        ));
    }
}
