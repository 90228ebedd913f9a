//! Pipeline constants and the `key=value` configuration file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::wls::WlsParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scale: usize,
    pub wls: WlsParams,
    /// Exponent turning display-encoded luminance into linear luminance.
    pub gamma_linearize: f64,
    /// Compensation exponent applied to the upscaled illumination.
    pub gamma_illum: f64,
    /// Exponent mapping the recombined RGB to irradiance.
    pub gamma_final: f64,
    pub tonemap_key: f64,
    pub weights_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            wls: WlsParams::default(),
            gamma_linearize: 2.2,
            gamma_illum: 1.0 / 2.2,
            gamma_final: 2.2,
            tonemap_key: 0.18,
            weights_path: None,
        }
    }
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: {key} expects a number, got {value:?}")))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale != 2 {
            return Err(Error::Config(format!("only scale 2 is supported, got {}", self.scale)));
        }
        self.wls.validate().map_err(|e| Error::Config(e.to_string()))?;
        positive("gamma_linearize", self.gamma_linearize)?;
        positive("gamma_illum", self.gamma_illum)?;
        positive("gamma_final", self.gamma_final)?;
        positive("tonemap_key", self.tonemap_key)
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored; unknown keys are errors.
    pub fn apply_overrides(mut self, text: &str) -> Result<Self> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {n}: expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "scale" => {
                    self.scale = value
                        .parse()
                        .map_err(|_| Error::Config(format!("line {n}: scale expects an integer")))?
                }
                "lambda" => self.wls.lambda = parse_f64(key, value, n)?,
                "alpha" => self.wls.alpha = parse_f64(key, value, n)?,
                "epsilon" => self.wls.epsilon = parse_f64(key, value, n)?,
                "gamma_linearize" => self.gamma_linearize = parse_f64(key, value, n)?,
                "gamma_illum" => self.gamma_illum = parse_f64(key, value, n)?,
                "gamma_final" => self.gamma_final = parse_f64(key, value, n)?,
                "tonemap_key" => self.tonemap_key = parse_f64(key, value, n)?,
                "weights_path" => self.weights_path = Some(PathBuf::from(value)),
                _ => return Err(Error::Config(format!("line {n}: unknown key {key:?}"))),
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::default().apply_overrides(&text)
    }
}
