//! 8-bit number formats for vectors and matrices.
//!
//! Three modes are supported: plain fp32, fp8 in the e4m3 layout
//! (bias 7, no infinities, saturating at ±448) and symmetric per-tensor
//! int8 with codes in [-127, 127].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::vsa::{cosine_slices, Hypervector, Scalar, ValueClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecisionMode {
    #[serde(rename = "fp32")]
    Fp32,
    #[serde(rename = "fp8")]
    Fp8E4m3,
    #[serde(rename = "int8")]
    Int8Symmetric,
}

impl PrecisionMode {
    pub fn bytes_per_elem(self) -> u64 {
        match self {
            PrecisionMode::Fp32 => 4,
            PrecisionMode::Fp8E4m3 | PrecisionMode::Int8Symmetric => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrecisionMode::Fp32 => "fp32",
            PrecisionMode::Fp8E4m3 => "fp8",
            PrecisionMode::Int8Symmetric => "int8",
        }
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecisionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp32" => Ok(PrecisionMode::Fp32),
            "fp8" | "fp8_e4m3" => Ok(PrecisionMode::Fp8E4m3),
            "int8" | "int8_symmetric" => Ok(PrecisionMode::Int8Symmetric),
            other => Err(Error::InvalidInput(format!("unknown precision `{other}` (expected fp32, fp8 or int8)"))),
        }
    }
}

/// Precision mode plus the per-tensor scale used by int8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub mode: PrecisionMode,
    pub scale: f64,
}

impl QuantScheme {
    pub const FP32: QuantScheme = QuantScheme { mode: PrecisionMode::Fp32, scale: 1.0 };
    pub const FP8: QuantScheme = QuantScheme { mode: PrecisionMode::Fp8E4m3, scale: 1.0 };

    pub fn int8(scale: f64) -> Result<Self> {
        let s = QuantScheme { mode: PrecisionMode::Int8Symmetric, scale };
        s.validate()?;
        Ok(s)
    }

    /// Int8 scheme that maps `max_abs` onto code 127. A zero range falls back to scale 1.
    pub fn int8_for_range(max_abs: f64) -> Self {
        let scale = if max_abs > 0.0 && max_abs.is_finite() { max_abs / 127.0 } else { 1.0 };
        QuantScheme { mode: PrecisionMode::Int8Symmetric, scale }
    }

    /// Scheme of the given mode; int8 gets a scale fitted to `max_abs`.
    pub fn fitted(mode: PrecisionMode, max_abs: f64) -> Self {
        match mode {
            PrecisionMode::Int8Symmetric => Self::int8_for_range(max_abs),
            PrecisionMode::Fp8E4m3 => Self::FP8,
            PrecisionMode::Fp32 => Self::FP32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == PrecisionMode::Int8Symmetric && !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!("int8 scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// Nearest representable value of `x` (quantize then dequantize).
    pub fn round_trip(&self, x: f64) -> f64 {
        match self.mode {
            PrecisionMode::Fp32 => x as f32 as f64,
            PrecisionMode::Fp8E4m3 => Fp8E4m3::from_f64(x).to_f64(),
            PrecisionMode::Int8Symmetric => int8_code(x, self.scale) as f64 * self.scale,
        }
    }
}

/// An fp8 value in the e4m3 layout: 1 sign bit, 4 exponent bits (bias 7),
/// 3 mantissa bits. `S.1111.111` is NaN; there are no infinities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fp8E4m3(pub u8);

impl Fp8E4m3 {
    pub const MAX: f64 = 448.0;
    const BIAS: i32 = 7;

    pub fn is_nan(self) -> bool {
        self.0 & 0x7F == 0x7F
    }

    /// Round to nearest, ties to even, saturating at ±448.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            return Fp8E4m3(0x7F);
        }
        let sign = if x.is_sign_negative() { 0x80u8 } else { 0 };
        let a = x.abs();
        if a >= Self::MAX {
            return Fp8E4m3(sign | 0x7E);
        }
        let min_normal = 2f64.powi(1 - Self::BIAS);
        let bits = if a < min_normal {
            // subnormal grid step is 2^-9; a result of 8 carries into the first normal
            let m = (a / 2f64.powi(-9)).round_ties_even() as u8;
            m
        } else {
            let mut e = a.log2().floor() as i32;
            // guard against log2 rounding at exact powers of two
            if 2f64.powi(e) > a {
                e -= 1;
            } else if 2f64.powi(e + 1) <= a {
                e += 1;
            }
            let mut m = ((a / 2f64.powi(e) - 1.0) * 8.0).round_ties_even() as u32;
            if m == 8 {
                m = 0;
                e += 1;
            }
            let biased = (e + Self::BIAS) as u32;
            if biased > 15 || (biased == 15 && m == 7) {
                return Fp8E4m3(sign | 0x7E);
            }
            ((biased << 3) | m) as u8
        };
        Fp8E4m3(sign | bits)
    }

    pub fn to_f64(self) -> f64 {
        if self.is_nan() {
            return f64::NAN;
        }
        let sign = if self.0 & 0x80 != 0 { -1.0 } else { 1.0 };
        let e = ((self.0 >> 3) & 0x0F) as i32;
        let m = (self.0 & 0x07) as f64;
        let mag = if e == 0 {
            m * 2f64.powi(-9)
        } else {
            (1.0 + m / 8.0) * 2f64.powi(e - Self::BIAS)
        };
        sign * mag
    }
}

fn int8_code(x: f64, scale: f64) -> i8 {
    (x / scale).round_ties_even().clamp(-127.0, 127.0) as i8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuantCodes {
    Fp32(Vec<f32>),
    Fp8(Vec<Fp8E4m3>),
    Int8(Vec<i8>),
}

/// A vector stored in one of the supported number formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedVector {
    pub scheme: QuantScheme,
    pub codes: QuantCodes,
}

impl QuantizedVector {
    pub fn len(&self) -> usize {
        match &self.codes {
            QuantCodes::Fp32(v) => v.len(),
            QuantCodes::Fp8(v) => v.len(),
            QuantCodes::Int8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn storage_bytes(&self) -> u64 {
        self.len() as u64 * self.scheme.mode.bytes_per_elem()
    }

    pub fn dequantize(&self) -> Hypervector<f32> {
        let elems: Vec<f32> = match &self.codes {
            QuantCodes::Fp32(v) => v.clone(),
            QuantCodes::Fp8(v) => v.iter().map(|c| c.to_f64() as f32).collect(),
            QuantCodes::Int8(v) => v.iter().map(|&c| (c as f64 * self.scheme.scale) as f32).collect(),
        };
        Hypervector::with_class(elems, ValueClass::Quantized).expect("quantized vectors are non-empty")
    }
}

pub fn quantize<T: Scalar>(v: &Hypervector<T>, scheme: QuantScheme) -> Result<QuantizedVector> {
    scheme.validate()?;
    let vals = v.to_f64();
    if let Some(i) = vals.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite element at index {i}")));
    }
    let codes = match scheme.mode {
        PrecisionMode::Fp32 => QuantCodes::Fp32(vals.iter().map(|&x| x as f32).collect()),
        PrecisionMode::Fp8E4m3 => QuantCodes::Fp8(vals.iter().map(|&x| Fp8E4m3::from_f64(x)).collect()),
        PrecisionMode::Int8Symmetric => QuantCodes::Int8(vals.iter().map(|&x| int8_code(x, scheme.scale)).collect()),
    };
    Ok(QuantizedVector { scheme, codes })
}

/// Quantize-dequantize in place on raw values.
pub fn fake_quantize(values: &mut [f64], scheme: QuantScheme) {
    for v in values {
        *v = scheme.round_trip(*v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantError {
    pub max_abs: f64,
    pub rms: f64,
    pub cosine: f64,
}

pub fn quant_error<A: Scalar, B: Scalar>(original: &Hypervector<A>, roundtripped: &Hypervector<B>) -> Result<QuantError> {
    check_dims(original.dim(), roundtripped.dim())?;
    let (a, b) = (original.to_f64(), roundtripped.to_f64());
    let mut max_abs = 0.0f64;
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let e = (x - y).abs();
        max_abs = max_abs.max(e);
        sq += e * e;
    }
    Ok(QuantError { max_abs, rms: (sq / a.len() as f64).sqrt(), cosine: cosine_slices(&a, &b) })
}

/// Total bytes to hold `elems` elements in `mode`.
pub fn storage_bytes(mode: PrecisionMode, elems: u64) -> u64 {
    elems * mode.bytes_per_elem()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::vsa::random_bipolar;
    use rand::Rng;

    fn all_finite_fp8() -> Vec<(u8, f64)> {
        (0u8..=255).map(|c| (c, Fp8E4m3(c))).filter(|(_, f)| !f.is_nan()).map(|(c, f)| (c, f.to_f64())).collect()
    }

    #[test]
    fn fp8_known_values() {
        assert_eq!(Fp8E4m3(0x7E).to_f64(), 448.0);
        assert_eq!(Fp8E4m3(0x38).to_f64(), 1.0);
        assert_eq!(Fp8E4m3(0x01).to_f64(), 2f64.powi(-9));
        assert_eq!(Fp8E4m3(0x08).to_f64(), 2f64.powi(-6));
        assert_eq!(Fp8E4m3::from_f64(1e9).to_f64(), 448.0);
        assert_eq!(Fp8E4m3::from_f64(-1e9).to_f64(), -448.0);
        assert_eq!(Fp8E4m3::from_f64(1.0), Fp8E4m3(0x38));
        assert_eq!(Fp8E4m3::from_f64(-1.0), Fp8E4m3(0xB8));
    }

    #[test]
    fn fp8_codes_round_trip() {
        for (c, v) in all_finite_fp8() {
            let back = Fp8E4m3::from_f64(v);
            if v == 0.0 {
                assert_eq!(back.to_f64(), 0.0);
            } else {
                assert_eq!(back.0, c, "code {c:#04x} value {v}");
            }
        }
    }

    #[test]
    fn fp8_rounds_to_nearest_by_brute_force() {
        let table = all_finite_fp8();
        let mut rng = rng_from_seed(8);
        for _ in 0..20_000 {
            let x: f64 = rng.random_range(-500.0..500.0) * 10f64.powi(rng.random_range(-4..1));
            let got = Fp8E4m3::from_f64(x).to_f64();
            let best = table.iter().map(|&(_, v)| (v - x).abs()).fold(f64::INFINITY, f64::min);
            assert!(((got - x).abs() - best).abs() < 1e-12, "x={x} got={got} best err {best}");
        }
    }

    #[test]
    fn fp8_ties_go_to_even_mantissa() {
        // 1.0625 sits halfway between 1.0 (m=0) and 1.125 (m=1)
        assert_eq!(Fp8E4m3::from_f64(1.0625).to_f64(), 1.0);
        // 1.1875 sits halfway between 1.125 (m=1) and 1.25 (m=2)
        assert_eq!(Fp8E4m3::from_f64(1.1875).to_f64(), 1.25);
    }

    #[test]
    fn bipolar_exact_in_every_mode() {
        let v = random_bipolar(256, &mut rng_from_seed(1)).unwrap();
        for scheme in [QuantScheme::FP32, QuantScheme::FP8, QuantScheme::int8(1.0).unwrap()] {
            let back = quantize(&v, scheme).unwrap().dequantize();
            assert_eq!(back.as_slice().iter().map(|&x| x as i32).collect::<Vec<_>>(), v.as_slice());
        }
    }

    #[test]
    fn int8_grid_point() {
        let v = Hypervector::real(vec![0.4f64, -0.4]).unwrap();
        let q = quantize(&v, QuantScheme::int8(0.1).unwrap()).unwrap();
        assert_eq!(q.codes, QuantCodes::Int8(vec![4, -4]));
        let back = q.dequantize();
        assert!((back[0] - 0.4).abs() < 1e-7 && (back[1] + 0.4).abs() < 1e-7);
    }

    #[test]
    fn int8_rounding_bounds() {
        let mut rng = rng_from_seed(4);
        let v: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let v = Hypervector::real(v).unwrap();
        let scale = 1.0 / 127.0;
        let back = quantize(&v, QuantScheme::int8(scale).unwrap()).unwrap().dequantize();
        let err = quant_error(&v, &back).unwrap();
        assert!(err.max_abs <= 0.5 * scale + 1e-7, "max {}", err.max_abs);
        assert!(err.rms <= 0.29 * scale, "rms {}", err.rms);
    }

    #[test]
    fn quant_error_definitions() {
        let v = Hypervector::real(vec![1.0f64, -2.0, 3.0]).unwrap();
        let e = quant_error(&v, &v).unwrap();
        assert_eq!(e.max_abs, 0.0);
        assert!((e.cosine - 1.0).abs() < 1e-12);
        let neg = v.map(|x| -x);
        assert!((quant_error(&v, &neg).unwrap().cosine + 1.0).abs() < 1e-12);
        let short = Hypervector::real(vec![1.0f64]).unwrap();
        assert!(quant_error(&v, &short).is_err());
    }

    #[test]
    fn rejects_non_finite_and_bad_scale() {
        let v = Hypervector::real(vec![1.0f64, f64::NAN]).unwrap();
        assert!(quantize(&v, QuantScheme::FP8).is_err());
        assert!(QuantScheme::int8(0.0).is_err());
        assert!(QuantScheme::int8(-1.0).is_err());
    }

    #[test]
    fn int8_storage_is_quarter_of_fp32() {
        let v = random_bipolar(1000, &mut rng_from_seed(2)).unwrap();
        let f = quantize(&v, QuantScheme::FP32).unwrap().storage_bytes();
        let i = quantize(&v, QuantScheme::int8(1.0).unwrap()).unwrap().storage_bytes();
        assert_eq!(f, 4 * i);
        assert_eq!(storage_bytes(PrecisionMode::Fp32, 37), 4 * storage_bytes(PrecisionMode::Int8Symmetric, 37));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("int8".parse::<PrecisionMode>().unwrap(), PrecisionMode::Int8Symmetric);
        assert_eq!("fp8".parse::<PrecisionMode>().unwrap(), PrecisionMode::Fp8E4m3);
        assert!("bf16".parse::<PrecisionMode>().is_err());
        assert_eq!(serde_json::to_string(&PrecisionMode::Fp8E4m3).unwrap(), "\"fp8\"");
    }
}
