use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::data_model::{CompressionMethod, CompressionSpec, ExampleRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantKind {
    Float16,
    DynamicInt8,
    FixedInt8,
}

impl QuantKind {
    pub fn method(self) -> CompressionMethod {
        match self {
            QuantKind::Float16 => CompressionMethod::QuantFloat16,
            QuantKind::DynamicInt8 => CompressionMethod::QuantDynamicInt8,
            QuantKind::FixedInt8 => CompressionMethod::QuantFixedInt8,
        }
    }

    pub fn from_method(method: CompressionMethod) -> Option<Self> {
        match method {
            CompressionMethod::QuantFloat16 => Some(QuantKind::Float16),
            CompressionMethod::QuantDynamicInt8 => Some(QuantKind::DynamicInt8),
            CompressionMethod::QuantFixedInt8 => Some(QuantKind::FixedInt8),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationScheme {
    pub kind: QuantKind,
    /// Calibration examples for `FixedInt8`, taken from the head of the training split.
    pub representative_count: usize,
}

impl QuantizationScheme {
    pub const DEFAULT_REPRESENTATIVE_COUNT: usize = 100;

    pub fn new(kind: QuantKind) -> Self {
        QuantizationScheme {
            kind,
            representative_count: Self::DEFAULT_REPRESENTATIVE_COUNT,
        }
    }
}

const F16_MANTISSA_BITS: i32 = 10;
const F16_MIN_EXP: i32 = -14;
/// Halfway between the largest finite half (65504) and 2^16.
const F16_OVERFLOW: f64 = 65520.0;

/// Rounds to the nearest IEEE-754 binary16 value, ties to even.
pub fn round_to_f16(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let a = x.abs();
    if a >= F16_OVERFLOW {
        return f64::INFINITY.copysign(x);
    }
    let biased = ((a.to_bits() >> 52) & 0x7ff) as i32;
    let exp = (biased - 1023).max(F16_MIN_EXP);
    let quantum = 2f64.powi(exp - F16_MANTISSA_BITS);
    ((a / quantum).round_ties_even() * quantum).copysign(x)
}

/// Symmetric per-tensor int8 quantization of a weight tensor in place.
/// Returns the scale, or `None` when the tensor is all zero and left untouched.
pub fn quantize_int8_symmetric(weights: &mut [f64]) -> Option<f64> {
    let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max_abs == 0.0 {
        return None;
    }
    let scale = max_abs / 127.0;
    for w in weights.iter_mut() {
        // w / scale computed as w * 127 / max_abs keeps exact halves exact.
        let q = (*w * 127.0 / max_abs).round().clamp(-127.0, 127.0);
        *w = q * scale;
    }
    Some(scale)
}

/// Post-training quantization. Weights are quantized and stored dequantized.
///
/// Float16 also rounds biases; the int8 schemes keep biases real. FixedInt8
/// additionally records each layer's pre-activation range on the calibration
/// examples so inference saturates to it.
pub fn quantize_model(
    model: &Mlp,
    scheme: &QuantizationScheme,
    calibration: Option<&[ExampleRecord]>,
) -> Result<Mlp> {
    let mut out = model.clone();
    out.compression = CompressionSpec::quant(scheme.kind.method())?;
    out.activation_ranges = None;
    match scheme.kind {
        QuantKind::Float16 => {
            for layer in &mut out.layers {
                layer.weights.iter_mut().for_each(|w| *w = round_to_f16(*w));
                layer.biases.iter_mut().for_each(|b| *b = round_to_f16(*b));
            }
        }
        QuantKind::DynamicInt8 | QuantKind::FixedInt8 => {
            for (l, layer) in out.layers.iter_mut().enumerate() {
                if quantize_int8_symmetric(&mut layer.weights).is_none() {
                    log::debug!("layer {l}: all-zero weights, int8 quantization skipped");
                }
            }
        }
    }
    if scheme.kind == QuantKind::FixedInt8 {
        let calibration = calibration.unwrap_or(&[]);
        if scheme.representative_count == 0 || calibration.len() < scheme.representative_count {
            return Err(Error::Config(format!(
                "fixed_int8 needs {} calibration examples, got {}",
                scheme.representative_count,
                calibration.len()
            )));
        }
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); out.layers.len()];
        for ex in &calibration[..scheme.representative_count] {
            for (range, z) in ranges.iter_mut().zip(out.pre_activations(&ex.features)?) {
                for v in z {
                    range.0 = range.0.min(v);
                    range.1 = range.1.max(v);
                }
            }
        }
        out.activation_ranges = Some(ranges);
    }
    Ok(out)
}
