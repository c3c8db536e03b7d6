//! Built-in scenarios, one per experiment family.

use crate::error::{Error, Result};
use crate::scenario::Scenario;

pub const PRESETS: &[(&str, &str)] = &[
    ("empty_box", include_str!("../presets/empty_box.toml")),
    ("salisbury_eta1", include_str!("../presets/salisbury_eta1.toml")),
    ("salisbury_eta05", include_str!("../presets/salisbury_eta05.toml")),
    ("pec_sphere_curved", include_str!("../presets/pec_sphere_curved.toml")),
    ("pec_sphere_flat", include_str!("../presets/pec_sphere_flat.toml")),
    ("dielectric_sphere", include_str!("../presets/dielectric_sphere.toml")),
    ("plasma_sphere", include_str!("../presets/plasma_sphere.toml")),
    ("resistive_sphere_eta0", include_str!("../presets/resistive_sphere_eta0.toml")),
    ("resistive_sphere_eta05", include_str!("../presets/resistive_sphere_eta05.toml")),
    ("resistive_sphere_eta1", include_str!("../presets/resistive_sphere_eta1.toml")),
    ("ts_null", include_str!("../presets/ts_null.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| Error::UnknownPreset(name.into()))
}

pub fn preset(name: &str) -> Result<Scenario> {
    Scenario::from_toml(preset_text(name)?, ".")
}
