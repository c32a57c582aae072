//! Experiment files shipped with the crate.

pub const PRESETS: [(&str, &str); 9] = [
    ("table1", include_str!("../../presets/table1.ini")),
    ("fig3", include_str!("../../presets/fig3.ini")),
    ("fig4", include_str!("../../presets/fig4.ini")),
    ("fig5", include_str!("../../presets/fig5.ini")),
    ("fig6-convergence", include_str!("../../presets/fig6-convergence.ini")),
    ("fig-incast", include_str!("../../presets/fig-incast.ini")),
    ("fig7-threshold", include_str!("../../presets/fig7-threshold.ini")),
    ("fig8-reordering", include_str!("../../presets/fig8-reordering.ini")),
    ("smoke", include_str!("../../presets/smoke.ini")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    #[test]
    fn every_preset_parses() {
        for (name, text) in PRESETS {
            let cfg = parse_config(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
            assert!(!cfg.describes.is_empty(), "{name} has no describes");
        }
    }
}
