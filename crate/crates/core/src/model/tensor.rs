use super::ModelError;

/// Signed 16-bit fixed-point tensor with a power-of-two scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedTensor {
    values: Vec<i16>,
    shape: Vec<usize>,
    scale: u64,
}

pub const QUANT_MAX: i64 = (1 << 15) - 1;

impl QuantizedTensor {
    pub fn new(values: Vec<i16>, shape: Vec<usize>, scale: u64) -> Result<Self, ModelError> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(ModelError::Shape(format!(
                "shape {shape:?} does not hold {} values",
                values.len()
            )));
        }
        if scale == 0 || !scale.is_power_of_two() {
            return Err(ModelError::Invalid(format!(
                "scale {scale} is not a power of two"
            )));
        }
        if values.contains(&i16::MIN) {
            return Err(ModelError::Invalid(
                "value -2^15 is outside the 16-bit range".into(),
            ));
        }
        Ok(Self {
            values,
            shape,
            scale,
        })
    }

    /// Builds from wide integers, failing if any value leaves `(-2^15, 2^15)`.
    pub fn from_i64(values: &[i64], shape: Vec<usize>, scale: u64) -> Result<Self, ModelError> {
        let narrowed = values
            .iter()
            .map(|&v| {
                if v.abs() > QUANT_MAX {
                    Err(ModelError::ActivationOverflow(v))
                } else {
                    Ok(v as i16)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(narrowed, shape, scale)
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    pub fn to_i64(&self) -> Vec<i64> {
        self.values.iter().map(|&v| v as i64).collect()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| v as f64 / self.scale as f64)
            .collect()
    }

    pub fn argmax(&self) -> usize {
        argmax_i64(&self.to_i64())
    }
}

pub fn argmax_i64(xs: &[i64]) -> usize {
    xs.iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i)
}

/// Round-to-nearest scaling by `scale` with saturation at `+/-(2^15 - 1)`.
pub fn quantize(
    values: &[f64],
    shape: Vec<usize>,
    scale: u64,
) -> Result<QuantizedTensor, ModelError> {
    let q = values
        .iter()
        .map(|&x| {
            if !x.is_finite() {
                return Err(ModelError::Invalid(format!("non-finite input {x}")));
            }
            let scaled = (x * scale as f64).round();
            Ok(scaled.clamp(-(QUANT_MAX as f64), QUANT_MAX as f64) as i16)
        })
        .collect::<Result<Vec<_>, _>>()?;
    QuantizedTensor::new(q, shape, scale)
}
