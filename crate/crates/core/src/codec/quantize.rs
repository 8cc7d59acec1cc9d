use serde::{Deserialize, Serialize};

use super::CodecError;

pub const DEFAULT_BINS: u32 = 1000;

/// Pixel ⇄ bin conversion for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub bins: u32,
    pub image_width: u32,
    pub image_height: u32,
}

impl Quantizer {
    pub fn new(image_width: u32, image_height: u32) -> Self {
        Self {
            bins: DEFAULT_BINS,
            image_width,
            image_height,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.bins < 2 {
            return Err(CodecError::Quantizer(format!(
                "bins must be >= 2, got {}",
                self.bins
            )));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(CodecError::Quantizer(
                "image dimensions must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn quantize_x(&self, x: f64) -> Result<u32, CodecError> {
        quantize(x, f64::from(self.image_width), self)
    }

    pub fn quantize_y(&self, y: f64) -> Result<u32, CodecError> {
        quantize(y, f64::from(self.image_height), self)
    }

    pub fn dequantize_x(&self, bin: u32) -> Result<f64, CodecError> {
        dequantize(bin, f64::from(self.image_width), self)
    }

    pub fn dequantize_y(&self, bin: u32) -> Result<f64, CodecError> {
        dequantize(bin, f64::from(self.image_height), self)
    }
}

/// `min(bins - 1, floor(x / axis_size * bins))` for `x ∈ [0, axis_size]`.
pub fn quantize(x: f64, axis_size: f64, q: &Quantizer) -> Result<u32, CodecError> {
    q.validate()?;
    if !(axis_size > 0.0 && axis_size.is_finite()) {
        return Err(CodecError::Quantizer(format!(
            "axis size must be positive, got {axis_size}"
        )));
    }
    if !(0.0..=axis_size).contains(&x) {
        return Err(CodecError::Range {
            value: x,
            max: axis_size,
        });
    }
    let bin = (x / axis_size * f64::from(q.bins)).floor() as u32;
    Ok(bin.min(q.bins - 1))
}

/// Bin center: `(bin + 0.5) / bins * axis_size`.
pub fn dequantize(bin: u32, axis_size: f64, q: &Quantizer) -> Result<f64, CodecError> {
    q.validate()?;
    if bin >= q.bins {
        return Err(CodecError::Range {
            value: f64::from(bin),
            max: f64::from(q.bins - 1),
        });
    }
    Ok((f64::from(bin) + 0.5) / f64::from(q.bins) * axis_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let q = Quantizer::new(1024, 1000);
        assert_eq!(quantize(0.0, 1024.0, &q).unwrap(), 0);
        assert_eq!(quantize(1024.0, 1024.0, &q).unwrap(), 999);
        assert_eq!(quantize(512.0, 1024.0, &q).unwrap(), 500);
        assert_eq!(dequantize(0, 1000.0, &q).unwrap(), 0.5);
        assert!((dequantize(500, 1024.0, &q).unwrap() - 512.512).abs() < 1e-9);
        assert_eq!(q.quantize_y(1000.0).unwrap(), 999);
    }

    #[test]
    fn centers_roundtrip_for_every_bin() {
        for axis in [1.0, 37.0, 1000.0, 1024.0, 4097.0] {
            let q = Quantizer::new(axis as u32, axis as u32);
            for b in 0..1000 {
                let x = dequantize(b, axis, &q).unwrap();
                assert_eq!(quantize(x, axis, &q).unwrap(), b, "axis {axis} bin {b}");
            }
        }
    }

    #[test]
    fn out_of_range_inputs() {
        let q = Quantizer::new(100, 100);
        assert!(matches!(
            quantize(-0.1, 100.0, &q),
            Err(CodecError::Range { .. })
        ));
        assert!(matches!(
            quantize(100.5, 100.0, &q),
            Err(CodecError::Range { .. })
        ));
        assert!(matches!(
            quantize(f64::NAN, 100.0, &q),
            Err(CodecError::Range { .. })
        ));
        assert!(matches!(
            dequantize(1000, 100.0, &q),
            Err(CodecError::Range { .. })
        ));
        let bad = Quantizer { bins: 1, ..q };
        assert!(matches!(
            quantize(1.0, 100.0, &bad),
            Err(CodecError::Quantizer(_))
        ));
    }
}
