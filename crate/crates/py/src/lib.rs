//! Python bindings: field sharing helpers and simulated secure inference.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ssnet_core::field::{PrimeField, DEFAULT_MODULUS};
use ssnet_core::layers::Ordering;
use ssnet_core::model::{
    argmax_i64, plaintext_trace, quantize, reference_avgpool_model, reference_lenet, ModelGraph,
    QuantizedTensor, REFERENCE_INPUT_SCALE, REFERENCE_WEIGHT_SCALE,
};
use ssnet_core::protocol::{simulate_inference, SimConfig};
use ssnet_core::sss::{ShareTensor, SssScheme};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_model(spec: &str, seed: u64) -> PyResult<ModelGraph> {
    let float = match spec {
        "reference" => reference_lenet(seed),
        "reference-avgpool" => reference_avgpool_model(seed),
        path => return ModelGraph::load(std::path::Path::new(path)).map_err(value_err),
    };
    float
        .quantize(REFERENCE_INPUT_SCALE, REFERENCE_WEIGHT_SCALE)
        .map_err(value_err)
}

fn quantize_input(model: &ModelGraph, input: &[f64]) -> PyResult<QuantizedTensor> {
    quantize(input, model.input_shape().to_vec(), model.input_scale()).map_err(value_err)
}

/// The default prime modulus.
#[pyfunction]
fn modulus() -> u64 {
    DEFAULT_MODULUS
}

/// Shares signed integers among `n` parties with threshold `k`; one list per party.
#[pyfunction]
#[pyo3(signature = (secrets, k, n, seed = 0))]
fn gen(secrets: Vec<i64>, k: usize, n: usize, seed: u64) -> PyResult<Vec<Vec<u64>>> {
    let scheme = SssScheme::new(PrimeField::default(), k, n).map_err(value_err)?;
    let enc = scheme.field().encode_slice(&secrets).map_err(value_err)?;
    let shares = scheme
        .gen(&enc, &[enc.len()], &mut ChaCha20Rng::seed_from_u64(seed))
        .map_err(value_err)?;
    Ok(shares.iter().map(|s| s.values().to_vec()).collect())
}

/// Reconstructs signed integers from the shares of the given party indices.
#[pyfunction]
fn rec(shares: Vec<Vec<u64>>, parties: Vec<usize>, k: usize, n: usize) -> PyResult<Vec<i64>> {
    let scheme = SssScheme::new(PrimeField::default(), k, n).map_err(value_err)?;
    if shares.len() != parties.len() {
        return Err(PyValueError::new_err("one party index per share list"));
    }
    let tensors = shares
        .into_iter()
        .zip(&parties)
        .map(|(v, &p)| {
            if p >= n {
                return Err(PyValueError::new_err(format!("party {p} out of range")));
            }
            ShareTensor::new(scheme.party_id(p), k - 1, vec![v.len()], v).map_err(value_err)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let refs: Vec<&ShareTensor> = tensors.iter().collect();
    let secret = scheme.rec(&refs, refs.len()).map_err(value_err)?;
    Ok(scheme.field().decode_slice(&secret))
}

/// Integer plaintext inference, the oracle the secure run must match.
#[pyfunction]
#[pyo3(signature = (input, model = "reference", model_seed = 2024, ordering = "ltn"))]
fn plaintext_infer(
    input: Vec<f64>,
    model: &str,
    model_seed: u64,
    ordering: &str,
) -> PyResult<Vec<i64>> {
    let m = load_model(model, model_seed)?;
    let ordering: Ordering = ordering.parse().map_err(value_err)?;
    let x = quantize_input(&m, &input)?;
    Ok(plaintext_trace(&m, ordering, &x).map_err(value_err)?.output)
}

/// Runs one secure inference in-process and returns output and per-op metrics.
#[pyfunction]
#[pyo3(signature = (input, k = 2, n = 3, seed = 0, ordering = "ltn", model = "reference", model_seed = 2024))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    input: Vec<f64>,
    k: usize,
    n: usize,
    seed: u64,
    ordering: &str,
    model: &str,
    model_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = load_model(model, model_seed)?;
    let cfg = SimConfig {
        k,
        n,
        seed,
        ordering: ordering.parse().map_err(value_err)?,
        ..SimConfig::default()
    };
    let x = quantize_input(&m, &input)?;
    let out = py
        .detach(|| simulate_inference(&m, &x, &cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let output = out.output.to_i64();
    let ops = out
        .metrics
        .ops()
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("layer", s.section.layer())?;
            d.set_item("operation", s.section.label())?;
            d.set_item("elements", s.elements)?;
            d.set_item("bytes", s.bytes)?;
            d.set_item("rounds", s.rounds)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let d = PyDict::new(py);
    d.set_item("top1", argmax_i64(&output))?;
    d.set_item("output", output)?;
    d.set_item("online_elements", out.metrics.online_elements())?;
    d.set_item("ops", ops)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "ssnet")]
pub fn ssnet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(modulus, m)?)?;
    m.add_function(wrap_pyfunction!(gen, m)?)?;
    m.add_function(wrap_pyfunction!(rec, m)?)?;
    m.add_function(wrap_pyfunction!(plaintext_infer, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
