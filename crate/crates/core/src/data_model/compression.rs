use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMethod {
    None,
    MagnitudePrune,
    QuantFloat16,
    QuantDynamicInt8,
    QuantFixedInt8,
}

impl CompressionMethod {
    pub const ALL: [CompressionMethod; 5] = [
        CompressionMethod::None,
        CompressionMethod::MagnitudePrune,
        CompressionMethod::QuantFloat16,
        CompressionMethod::QuantDynamicInt8,
        CompressionMethod::QuantFixedInt8,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CompressionMethod::None => "none",
            CompressionMethod::MagnitudePrune => "magnitude_prune",
            CompressionMethod::QuantFloat16 => "quant_float16",
            CompressionMethod::QuantDynamicInt8 => "quant_dynamic_int8",
            CompressionMethod::QuantFixedInt8 => "quant_fixed_int8",
        }
    }

    pub fn is_quantization(self) -> bool {
        matches!(
            self,
            CompressionMethod::QuantFloat16
                | CompressionMethod::QuantDynamicInt8
                | CompressionMethod::QuantFixedInt8
        )
    }
}

impl fmt::Display for CompressionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompressionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompressionMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown compression method `{s}`")))
    }
}

/// Which compression a population was trained or post-processed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionSpec {
    pub method: CompressionMethod,
    /// Fraction of weights set to zero; non-zero only for magnitude pruning.
    #[serde(default)]
    pub sparsity: f64,
}

impl CompressionSpec {
    pub const NONE: CompressionSpec = CompressionSpec {
        method: CompressionMethod::None,
        sparsity: 0.0,
    };

    pub fn prune(sparsity: f64) -> Result<Self> {
        let spec = CompressionSpec {
            method: CompressionMethod::MagnitudePrune,
            sparsity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn quant(method: CompressionMethod) -> Result<Self> {
        let spec = CompressionSpec {
            method,
            sparsity: 0.0,
        };
        if !method.is_quantization() {
            return Err(Error::Invalid(format!(
                "{method} is not a quantization scheme"
            )));
        }
        Ok(spec)
    }

    pub fn new(method: CompressionMethod, sparsity: f64) -> Result<Self> {
        let spec = CompressionSpec { method, sparsity };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            CompressionMethod::MagnitudePrune => {
                if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
                    return Err(Error::Invalid(format!(
                        "magnitude_prune needs sparsity in (0, 1), got {}",
                        self.sparsity
                    )));
                }
            }
            _ => {
                if self.sparsity != 0.0 {
                    return Err(Error::Invalid(format!(
                        "{} carries no sparsity, got {}",
                        self.method, self.sparsity
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_baseline(&self) -> bool {
        self.method == CompressionMethod::None
    }

    /// Short identifier used for population ids and file names.
    pub fn label(&self) -> String {
        match self.method {
            CompressionMethod::None => "baseline".to_string(),
            CompressionMethod::MagnitudePrune => format!("prune_{}", self.sparsity),
            m => m.as_str().to_string(),
        }
    }
}

impl fmt::Display for CompressionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            CompressionMethod::MagnitudePrune => write!(f, "{}@{}", self.method, self.sparsity),
            m => write!(f, "{m}"),
        }
    }
}
