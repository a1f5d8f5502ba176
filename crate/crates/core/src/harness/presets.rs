use super::ExperimentSpec;
use crate::error::{Error, Result};

/// Built-in experiment specs.
pub const PRESETS: [(&str, &str); 9] = [
    ("fig5a", include_str!("../../presets/fig5a.json")),
    ("fig5b", include_str!("../../presets/fig5b.json")),
    ("fig6", include_str!("../../presets/fig6.json")),
    ("fig7", include_str!("../../presets/fig7.json")),
    ("fig8", include_str!("../../presets/fig8.json")),
    ("fig9a", include_str!("../../presets/fig9a.json")),
    ("fig9b", include_str!("../../presets/fig9b.json")),
    ("fig10a", include_str!("../../presets/fig10a.json")),
    ("fig10b", include_str!("../../presets/fig10b.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<ExperimentSpec> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::config(format!("no preset named `{name}`")))?;
    ExperimentSpec::from_json(text)
}
