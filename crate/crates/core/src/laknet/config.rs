use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture hyperparameters of a LaKNet classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaKNetConfig {
    pub stage_depths: Vec<usize>,
    pub stage_channels: Vec<usize>,
    pub large_kernels: Vec<usize>,
    pub small_kernel: usize,
    pub dilations: Vec<usize>,
    pub stem_channels: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub input_side: usize,
}

pub const NUM_STAGES: usize = 4;

impl LaKNetConfig {
    /// The published configuration at 224 x 224.
    pub fn full(num_classes: usize) -> Self {
        LaKNetConfig {
            stage_depths: vec![2, 2, 18, 2],
            stage_channels: vec![128, 256, 512, 1024],
            large_kernels: vec![31, 29, 27, 13],
            small_kernel: 5,
            dilations: vec![2, 4],
            stem_channels: 64,
            in_channels: 1,
            num_classes,
            input_side: 224,
        }
    }

    /// Scaled-down variant for 32 x 32 inputs.
    pub fn toy(num_classes: usize) -> Self {
        LaKNetConfig {
            stage_depths: vec![1, 1, 2, 1],
            stage_channels: vec![16, 32, 64, 128],
            large_kernels: vec![7, 7, 5, 3],
            stem_channels: 16,
            input_side: 32,
            ..Self::full(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid("laknet config", msg));
        for (name, list) in [
            ("stage_depths", &self.stage_depths),
            ("stage_channels", &self.stage_channels),
            ("large_kernels", &self.large_kernels),
        ] {
            if list.len() != NUM_STAGES {
                return bad(format!("{name} needs {NUM_STAGES} entries, got {}", list.len()));
            }
            if list.contains(&0) {
                return bad(format!("{name} entries must be positive"));
            }
        }
        if let Some(k) = self.large_kernels.iter().find(|k| *k % 2 == 0) {
            return bad(format!("large kernel {k} is even"));
        }
        if self.small_kernel % 2 == 0 {
            return bad(format!("small kernel {} is even", self.small_kernel));
        }
        if self.dilations.contains(&0) {
            return bad("dilations must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.stem_channels == 0 || self.in_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.input_side == 0 || self.input_side % 32 != 0 {
            return bad(format!("input_side must be a positive multiple of 32, got {}", self.input_side));
        }
        Ok(())
    }

    /// Spatial side of each stage.
    pub fn stage_sides(&self) -> Vec<usize> {
        (0..NUM_STAGES).map(|i| self.input_side >> (2 + i)).collect()
    }

    /// Assigns one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let list = |v: &str| -> std::result::Result<Vec<usize>, String> {
            v.split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad integer {s:?}: {e}")))
                .collect()
        };
        let int = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad integer {v:?}: {e}"));
        match key {
            "stage_depths" => self.stage_depths = list(value)?,
            "stage_channels" => self.stage_channels = list(value)?,
            "large_kernels" => self.large_kernels = list(value)?,
            "small_kernel" => self.small_kernel = int(value)?,
            "dilations" => self.dilations = list(value)?,
            "stem_channels" => self.stem_channels = int(value)?,
            "in_channels" => self.in_channels = int(value)?,
            "num_classes" => self.num_classes = int(value)?,
            "input_side" => self.input_side = int(value)?,
            _ => return Err(format!("unknown model key {key:?}")),
        }
        Ok(())
    }

    /// Parses the key-value text format, starting from `base`.
    pub fn parse_with(base: Self, text: &str) -> Result<Self> {
        let mut cfg = base;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Config {
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v).map_err(|msg| Error::Config { line: i + 1, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(Self::toy(10), text)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("stage_depths", join(&self.stage_depths)),
            ("stage_channels", join(&self.stage_channels)),
            ("large_kernels", join(&self.large_kernels)),
            ("small_kernel", self.small_kernel.to_string()),
            ("dilations", join(&self.dilations)),
            ("stem_channels", self.stem_channels.to_string()),
            ("in_channels", self.in_channels.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("input_side", self.input_side.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for cfg in [LaKNetConfig::full(600), LaKNetConfig::toy(10)] {
            assert_eq!(LaKNetConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn stage_sides_follow_downsampling() {
        assert_eq!(LaKNetConfig::full(600).stage_sides(), vec![56, 28, 14, 7]);
        assert_eq!(LaKNetConfig::toy(10).stage_sides(), vec![8, 4, 2, 1]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let err = LaKNetConfig::parse("stage_depths = 1,1,1").unwrap_err();
        assert!(err.to_string().contains("stage_depths"), "{err}");
        assert!(LaKNetConfig::parse("large_kernels = 7,7,6,3").is_err());
        assert!(LaKNetConfig::parse("num_classes = 1").is_err());
        assert!(LaKNetConfig::parse("input_side = 30").is_err());
        let err = LaKNetConfig::parse("\n\nwidth = 3").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
    }
}
