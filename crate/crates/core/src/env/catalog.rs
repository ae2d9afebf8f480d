//! Bundled scenes, one file per environment and task pattern.
//!
//! Region layouts are authored for this catalog; they are not taken from any
//! published benchmark geometry.

use super::{EnvError, SceneSpec};

const SCENES: &[(&str, &str)] = &[
    (
        "linear-stl01",
        include_str!("../../scenes/linear-stl01.toml"),
    ),
    (
        "linear-stl02",
        include_str!("../../scenes/linear-stl02.toml"),
    ),
    (
        "linear-stl06",
        include_str!("../../scenes/linear-stl06.toml"),
    ),
    (
        "linear-stl07",
        include_str!("../../scenes/linear-stl07.toml"),
    ),
    (
        "linear-stl08",
        include_str!("../../scenes/linear-stl08.toml"),
    ),
    (
        "linear-stl10",
        include_str!("../../scenes/linear-stl10.toml"),
    ),
    (
        "unicycle-stl01",
        include_str!("../../scenes/unicycle-stl01.toml"),
    ),
    (
        "unicycle-stl02",
        include_str!("../../scenes/unicycle-stl02.toml"),
    ),
    (
        "unicycle-stl06",
        include_str!("../../scenes/unicycle-stl06.toml"),
    ),
    (
        "unicycle-stl07",
        include_str!("../../scenes/unicycle-stl07.toml"),
    ),
    (
        "unicycle-stl08",
        include_str!("../../scenes/unicycle-stl08.toml"),
    ),
    (
        "unicycle-stl10",
        include_str!("../../scenes/unicycle-stl10.toml"),
    ),
    (
        "quadrotor-stl01",
        include_str!("../../scenes/quadrotor-stl01.toml"),
    ),
    (
        "quadrotor-stl02",
        include_str!("../../scenes/quadrotor-stl02.toml"),
    ),
    (
        "quadrotor-stl06",
        include_str!("../../scenes/quadrotor-stl06.toml"),
    ),
    (
        "quadrotor-stl07",
        include_str!("../../scenes/quadrotor-stl07.toml"),
    ),
    (
        "quadrotor-stl08",
        include_str!("../../scenes/quadrotor-stl08.toml"),
    ),
    (
        "quadrotor-stl10",
        include_str!("../../scenes/quadrotor-stl10.toml"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENES.iter().map(|(n, _)| *n)
}

/// Raw TOML of a bundled scene.
pub fn source(name: &str) -> Result<&'static str, EnvError> {
    SCENES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| EnvError::UnknownScene(name.to_string()))
}

pub fn load(name: &str) -> Result<SceneSpec, EnvError> {
    SceneSpec::from_toml(source(name)?)
}

/// A catalog name or a path to a scene file.
pub fn resolve(name_or_path: &str) -> Result<SceneSpec, EnvError> {
    match source(name_or_path) {
        Ok(text) => SceneSpec::from_toml(text),
        Err(_) => SceneSpec::load(name_or_path),
    }
}
