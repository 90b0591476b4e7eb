//! Integer-exact reference forward pass, the oracle for secure inference.

use crate::field::PrimeField;
use crate::layers::{apply_nonlinear, plan_schedule, Geometry, OpKind, Ordering, Schedule};

use super::graph::{Layer, ModelGraph};
use super::tensor::{QuantizedTensor, QUANT_MAX};
use super::ModelError;

/// `q / d` rounded to nearest with ties toward `+inf`: `floor((2q + d) / 2d)`.
///
/// Unlike rounding half away from zero this commutes with adding a multiple
/// of `d`, so the masked value the elite divides gives the same answer as the
/// unmasked one.
pub fn round_half_up_div(q: i64, d: i64) -> i64 {
    (2 * q + d).div_euclid(2 * d)
}

/// Values entering each op, plus the final output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaintextTrace {
    pub op_inputs: Vec<Vec<i64>>,
    pub output: Vec<i64>,
    pub output_shape: Vec<usize>,
}

/// Runs `schedule` on plaintext integers with the same semantics as the secure ops.
pub fn plaintext_run(
    model: &ModelGraph,
    schedule: &Schedule,
    input: &[i64],
) -> Result<PlaintextTrace, ModelError> {
    if input.len() != schedule.input_shape.iter().product::<usize>() {
        return Err(ModelError::Shape(format!(
            "{} input values for shape {:?}",
            input.len(),
            schedule.input_shape
        )));
    }
    if let Some(&v) = input.iter().find(|v| v.abs() > QUANT_MAX) {
        return Err(ModelError::ActivationOverflow(v));
    }
    let linears: Vec<_> = model
        .layers()
        .iter()
        .filter_map(|l| match l {
            Layer::Linear(lin) => Some(lin),
            _ => None,
        })
        .collect();
    let mut x = input.to_vec();
    let mut op_inputs = Vec::with_capacity(schedule.ops.len());
    for op in &schedule.ops {
        op_inputs.push(x.clone());
        x = match op.kind {
            OpKind::Linear { layer, kind, .. } => {
                let lin = linears.get(layer).ok_or_else(|| {
                    ModelError::Invalid(format!("schedule names missing linear layer {layer}"))
                })?;
                if lin.kind != kind {
                    return Err(ModelError::Invalid(
                        "schedule does not match the model".into(),
                    ));
                }
                let g = Geometry::new(&kind, &op.in_shape)?;
                g.apply_i64(&x, &lin.weights.to_i64(), lin.bias.as_deref())
            }
            OpKind::Truncation { scale, divisor } => {
                let mut out = Vec::with_capacity(x.len());
                for &v in &x {
                    let q = v.div_euclid(scale as i64);
                    let q = if divisor > 1 {
                        round_half_up_div(q, divisor as i64)
                    } else {
                        q
                    };
                    if q.abs() > QUANT_MAX {
                        return Err(ModelError::ActivationOverflow(q));
                    }
                    out.push(q);
                }
                out
            }
            OpKind::NonLinear { relu, pool, .. } => {
                apply_nonlinear(&x, &op.in_shape, relu, pool)
                    .map_err(|e| ModelError::Shape(e.to_string()))?
            }
        };
    }
    Ok(PlaintextTrace {
        op_inputs,
        output: x,
        output_shape: schedule.output_shape().to_vec(),
    })
}

fn check_input(model: &ModelGraph, input: &QuantizedTensor) -> Result<(), ModelError> {
    if input.shape() != model.input_shape() || input.scale() != model.input_scale() {
        return Err(ModelError::Shape(format!(
            "input {:?} at scale {} does not match model input {:?} at scale {}",
            input.shape(),
            input.scale(),
            model.input_shape(),
            model.input_scale()
        )));
    }
    Ok(())
}

/// Plans `ordering` and runs it in plaintext.
pub fn plaintext_trace(
    model: &ModelGraph,
    ordering: Ordering,
    input: &QuantizedTensor,
) -> Result<PlaintextTrace, ModelError> {
    check_input(model, input)?;
    let schedule = plan_schedule(&model.skeleton(), ordering, &PrimeField::default())
        .map_err(|e| ModelError::Unsupported(e.to_string()))?;
    plaintext_run(model, &schedule, &input.to_i64())
}

/// Reference inference in the default linear, truncation, nonlinear order.
pub fn plaintext_infer(
    model: &ModelGraph,
    input: &QuantizedTensor,
) -> Result<QuantizedTensor, ModelError> {
    let t = plaintext_trace(model, Ordering::Ltn, input)?;
    QuantizedTensor::from_i64(&t.output, t.output_shape, model.input_scale())
}

/// Per-block sums of a `CxHxW` tensor; the exact average is `sum / (kh kw)`.
pub fn block_sums(
    x: &[i64],
    shape: &[usize],
    kh: usize,
    kw: usize,
) -> Result<Vec<i64>, ModelError> {
    let [c, h, w] = shape else {
        return Err(ModelError::Shape(format!("expected CxHxW, got {shape:?}")));
    };
    if h % kh != 0 || w % kw != 0 || x.len() != c * h * w {
        return Err(ModelError::Shape(format!(
            "{kh}x{kw} does not tile {shape:?}"
        )));
    }
    let (oh, ow) = (h / kh, w / kw);
    let mut out = vec![0; c * oh * ow];
    for ch in 0..*c {
        for y in 0..*h {
            for xx in 0..*w {
                out[(ch * oh + y / kh) * ow + xx / kw] += x[(ch * h + y) * w + xx];
            }
        }
    }
    Ok(out)
}
