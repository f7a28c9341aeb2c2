//! The four optimization conditions compared by the ablation harness.

use crate::error::{Error, Result};

/// How surface normals (and their back-propagation) are computed, and
/// whether hash levels activate progressively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GradientMode {
    /// Analytical gradients, all levels active from the start.
    Ag,
    /// Analytical gradients with progressive level activation.
    AgP,
    /// Numerical gradients with the decaying step size, all levels active.
    Ng,
    /// Numerical gradients plus progressive level activation.
    NgP,
}

impl GradientMode {
    pub fn is_numerical(self) -> bool {
        matches!(self, GradientMode::Ng | GradientMode::NgP)
    }

    pub fn is_progressive(self) -> bool {
        matches!(self, GradientMode::AgP | GradientMode::NgP)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AG" => Ok(GradientMode::Ag),
            "AG+P" | "AGP" => Ok(GradientMode::AgP),
            "NG" => Ok(GradientMode::Ng),
            "NG+P" | "NGP" => Ok(GradientMode::NgP),
            other => Err(Error::invalid(format!(
                "unknown gradient mode '{other}' (expected AG, AG+P, NG, NG+P)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GradientMode::Ag => "AG",
            GradientMode::AgP => "AG+P",
            GradientMode::Ng => "NG",
            GradientMode::NgP => "NG+P",
        }
    }
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for mode in [
            GradientMode::Ag,
            GradientMode::AgP,
            GradientMode::Ng,
            GradientMode::NgP,
        ] {
            assert_eq!(GradientMode::parse(mode.name()).unwrap(), mode);
        }
        assert!(GradientMode::parse("XG").is_err());
    }
}
