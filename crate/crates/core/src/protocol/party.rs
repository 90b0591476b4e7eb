//! Per-party execution of a schedule, and the trusted source's online role.

use crate::layers::{sss_linear, sss_nonlinear, sss_truncation, Geometry, OpKind, Schedule};
use crate::model::LinearShares;
use crate::sss::{interpolate_at_zero, ShareTensor, SssError};

use super::masks::MaskBundle;
use super::metrics::Section;
use super::net::PartyNet;
use super::wire::Phase;
use super::ProtocolError;

/// Runs `schedule` as party `net.index()`.
///
/// Receives the mask bundle and input share from the source, executes every
/// op in order, then opens the result at the elite. Returns the decoded
/// output on the elite and `None` elsewhere.
pub fn run_party(
    net: &mut PartyNet,
    schedule: &Schedule,
    weights: &[LinearShares],
) -> Result<Option<Vec<i64>>, ProtocolError> {
    let i = net.index();
    let source = net.source();
    let field = *net.field();

    net.set_section(Section::Offline);
    let raw = net.recv_bytes(source, Phase::MaskBundle)?;
    let bundle = MaskBundle::from_bytes(&raw, &field)?;
    if bundle.party != i {
        return Err(ProtocolError::Mask(format!(
            "bundle for party {} sent to {i}",
            bundle.party
        )));
    }
    if bundle.schedule_digest != schedule.digest() || bundle.ops.len() != schedule.ops.len() {
        return Err(ProtocolError::ScheduleDivergence(
            "mask bundle was prepared for a different schedule".into(),
        ));
    }

    net.set_section(Section::Input);
    let input = net.recv_tensor(source, Phase::ShareDist)?;
    if input.shape() != schedule.input_shape {
        return Err(ProtocolError::ScheduleDivergence(format!(
            "input shape {:?}, schedule expects {:?}",
            input.shape(),
            schedule.input_shape
        )));
    }

    let mut x = Some(input);
    for (index, (op, masks)) in schedule.ops.iter().zip(&bundle.ops).enumerate() {
        net.set_section(Section::Op {
            index,
            name: op.kind.name(),
        });
        let result = match op.kind {
            OpKind::Linear { layer, kind, .. } => {
                let w = weights.get(layer).ok_or_else(|| {
                    ProtocolError::ScheduleDivergence(format!("no weight shares for layer {layer}"))
                })?;
                let geometry = Geometry::new(&kind, &op.in_shape)
                    .map_err(|e| ProtocolError::ScheduleDivergence(e.to_string()))?;
                sss_linear(net, x.as_ref(), w, &geometry, op.passive_out, masks)
            }
            OpKind::Truncation { scale, divisor } => {
                sss_truncation(net, x.as_ref(), scale, divisor, &op.in_shape, masks).map(Some)
            }
            OpKind::NonLinear { relu, pool, .. } => sss_nonlinear(
                net,
                x.as_ref(),
                relu,
                pool,
                &op.in_shape,
                &op.out_shape,
                op.passive_out,
                masks,
            ),
        };
        x = result.map_err(|e| e.at(i, index, op.kind.name()))?;
    }

    net.set_section(Section::Output);
    open_output(net, x.as_ref())
}

/// Front parties send their result shares to the elite, which interpolates and decodes.
fn open_output(
    net: &mut PartyNet,
    share: Option<&ShareTensor>,
) -> Result<Option<Vec<i64>>, ProtocolError> {
    let (k, i) = (net.k(), net.index());
    if i >= k {
        return Ok(None);
    }
    let share = share.ok_or(ProtocolError::MissingInput { party: i })?;
    if i > 0 {
        net.send_tensor(0, Phase::OutputOpen, share)?;
        return Ok(None);
    }
    let mut columns = vec![share.clone()];
    for j in 1..k {
        let s = net.recv_tensor(j, Phase::OutputOpen)?;
        if s.shape() != share.shape() {
            return Err(
                SssError::ShapeMismatch(format!("{:?} vs {:?}", s.shape(), share.shape())).into(),
            );
        }
        columns.push(s);
    }
    let scheme = net.scheme();
    let cols: Vec<&[u64]> = columns.iter().map(|c| c.values()).collect();
    let opened = interpolate_at_zero(
        scheme.field(),
        &scheme.party_ids()[..k],
        scheme.front_weights(),
        &cols,
    );
    Ok(Some(scheme.field().decode_slice(&opened)))
}

/// The trusted source's online part: deliver bundles, then share the input.
pub fn run_source(
    net: &mut PartyNet,
    bundles: &[MaskBundle],
    input: &[i64],
    input_shape: &[usize],
) -> Result<(), ProtocolError> {
    let scheme = net.scheme().clone();
    if bundles.len() != scheme.n() {
        return Err(ProtocolError::Config(format!(
            "{} bundles for {} parties",
            bundles.len(),
            scheme.n()
        )));
    }
    net.set_section(Section::Offline);
    for (p, b) in bundles.iter().enumerate() {
        net.send_bytes(p, Phase::MaskBundle, b.to_bytes())?;
    }
    net.set_section(Section::Input);
    let encoded = scheme.field().encode_slice(input).map_err(SssError::from)?;
    let shares = scheme.gen(&encoded, input_shape, net.rng())?;
    for (p, s) in shares.iter().enumerate() {
        net.send_tensor(p, Phase::ShareDist, s)?;
    }
    Ok(())
}
