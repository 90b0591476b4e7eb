//! Golden checks and share-file consistency.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use ssnet_core::field::PrimeField;
use ssnet_core::layers::sss_truncation;
use ssnet_core::model::{ModelGraph, PartyModelShares};
use ssnet_core::protocol::{
    derivable_shares, naive_degree_reduce_demo, rerand, simulate_network, OpMasks,
};
use ssnet_core::sss::{ShareTensor, SssScheme};

use crate::{load_model, CliError, CliResult};

type Check = Result<String, String>;

/// Decoded weights and optional bias of each linear layer.
type LayerValues = Vec<(Vec<i64>, Option<Vec<i64>>)>;

fn f11_scheme() -> Result<SssScheme, String> {
    let field = PrimeField::new(11).map_err(|e| e.to_string())?;
    SssScheme::new(field, 2, 3).map_err(|e| e.to_string())
}

fn values(shares: &[ShareTensor]) -> Vec<u64> {
    shares.iter().map(|s| s.values()[0]).collect()
}

/// `(2 + 4x)(3 + x)` over F_11, reduced and rerandomized with `0 + 4x`.
fn worked_example() -> Check {
    let scheme = f11_scheme()?;
    let err = |e: ssnet_core::sss::SssError| e.to_string();
    let a = scheme
        .gen_with_coefficients(&[2], &[1], &[vec![4]])
        .map_err(err)?;
    let b = scheme
        .gen_with_coefficients(&[3], &[1], &[vec![1]])
        .map_err(err)?;
    let c = a
        .iter()
        .zip(&b)
        .map(|(x, y)| scheme.share_mul(x, y))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    if values(&c) != [2, 6, 7] {
        return Err(format!("product shares {:?}", values(&c)));
    }
    let refs: Vec<&ShareTensor> = c.iter().collect();
    let reduced = scheme.reduce_degree_centrally(&refs).map_err(err)?;
    let zero = scheme
        .gen_with_coefficients(&[0], &[1], &[vec![4]])
        .map_err(err)?;
    let fresh = reduced
        .iter()
        .zip(&zero)
        .map(|(s, z)| rerand(&scheme, s, z))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    if values(&fresh) != [2, 9, 5] {
        return Err(format!("reduced shares {:?}", values(&fresh)));
    }
    let secret = scheme.rec(&[&fresh[0], &fresh[1]], 2).map_err(err)?;
    if secret != [6] {
        return Err(format!("reconstructed {secret:?}"));
    }
    Ok("shares (2,6,7) reduce to (2,9,5) and open to 6".into())
}

/// Halving the shares of 5 opens to 8; the masked truncation opens to 2.
fn truncation_counterexample() -> Check {
    let scheme = f11_scheme()?;
    let shares = scheme
        .gen_with_coefficients(&[5], &[1], &[vec![6]])
        .map_err(|e| e.to_string())?;
    let halved: Vec<ShareTensor> = shares
        .iter()
        .map(|s| ShareTensor::new(s.party_id(), 1, vec![1], vec![s.values()[0] / 2]))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let naive = scheme
        .rec(&[&halved[0], &halved[1]], 2)
        .map_err(|e| e.to_string())?[0];
    if naive != 8 {
        return Err(format!("naive truncation opened to {naive}"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let alpha = scheme
        .gen(&[0], &[1], &mut rng)
        .map_err(|e| e.to_string())?;
    let alpha_bar = scheme
        .gen(&[0], &[1], &mut rng)
        .map_err(|e| e.to_string())?;
    let results = simulate_network(&scheme, 2, false, |net| {
        let i = net.index();
        if i == net.n() {
            return Ok(None);
        }
        let masks = OpMasks::Truncation {
            alpha: alpha[i].clone(),
            alpha_bar: alpha_bar[i].clone(),
        };
        sss_truncation(net, Some(&shares[i]), 2, 1, &[1], &masks).map(Some)
    })
    .map_err(|e| e.to_string())?;
    let out: Vec<ShareTensor> = results.into_iter().filter_map(|(s, _)| s).collect();
    let secure = scheme
        .rec(&[&out[0], &out[1]], 2)
        .map_err(|e| e.to_string())?[0];
    if secure != 2 {
        return Err(format!("secure truncation opened to {secure}"));
    }
    Ok("naive halving opens to 8, secure truncation to 2".into())
}

/// The insecure reduction must be caught by the transcript scan.
fn naive_reduction_flagged() -> Check {
    let scheme = SssScheme::new(PrimeField::default(), 2, 3).map_err(|e| e.to_string())?;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let a = scheme
        .gen(&[1234], &[1], &mut rng)
        .map_err(|e| e.to_string())?;
    let b = scheme
        .gen(&[5678], &[1], &mut rng)
        .map_err(|e| e.to_string())?;
    let c = (0..3)
        .map(|i| scheme.share_mul(&a[i], &b[i]))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let demo = naive_degree_reduce_demo(&c, &scheme).map_err(|e| e.to_string())?;
    let raw: Vec<&[u64]> = c.iter().map(|s| s.values()).collect();
    let received: Vec<&[u64]> = demo.received.iter().map(|v| v.as_slice()).collect();
    let flagged = derivable_shares(scheme.field(), &raw, Some(0), &received);
    if flagged != [1, 2] {
        return Err(format!("scan flagged {flagged:?}"));
    }
    Ok(format!(
        "naive reduction recovers {} and the scan flags holders {flagged:?}",
        demo.secret[0]
    ))
}

fn load_party_files(dir: &Path) -> Result<Vec<PartyModelShares>, String> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ssns"))
        .collect();
    paths.sort();
    let mut parties = Vec::with_capacity(paths.len());
    for p in paths {
        parties.push(PartyModelShares::load(&p).map_err(|e| format!("{}: {e}", p.display()))?);
    }
    parties.sort_by_key(|s| s.party);
    Ok(parties)
}

/// Every `k`-subset of consecutive parties (cyclically) must open each layer
/// to the same weights, and to `model` when given.
fn share_consistency(dir: &Path, model: Option<&ModelGraph>) -> Check {
    let parties = load_party_files(dir)?;
    let first = parties.first().ok_or("no share files")?;
    let scheme = first.scheme().map_err(|e| e.to_string())?;
    let (k, n) = (scheme.k(), scheme.n());
    if parties.len() != n || parties.iter().enumerate().any(|(i, p)| p.party != i) {
        return Err(format!(
            "expected party files 0..{n}, found {}",
            parties.len()
        ));
    }
    for p in &parties {
        p.check_scheme(&scheme).map_err(|e| e.to_string())?;
        if p.model_digest != first.model_digest || p.skeleton != first.skeleton {
            return Err(format!("party {} holds a different model", p.party));
        }
    }
    if let Some(m) = model {
        if m.digest() != first.model_digest {
            return Err("shares are for a different model".into());
        }
    }
    let expected: Option<LayerValues> = model.map(|m| {
        m.linear_layers()
            .map(|l| (l.weights.to_i64(), l.bias.clone()))
            .collect()
    });
    let field = scheme.field();
    let layers = first.layers.len();
    for layer in 0..layers {
        let mut opened: Option<(Vec<u64>, Option<Vec<u64>>)> = None;
        for start in 0..n {
            let subset: Vec<&PartyModelShares> =
                (0..k).map(|j| &parties[(start + j) % n]).collect();
            let names: Vec<usize> = subset.iter().map(|p| p.party).collect();
            let w: Vec<&ShareTensor> = subset.iter().map(|p| &p.layers[layer].weights).collect();
            let w = scheme.rec(&w, k).map_err(|e| e.to_string())?;
            let b = match &first.layers[layer].bias {
                Some(_) => {
                    let b = subset
                        .iter()
                        .map(|p| p.layers[layer].bias.as_ref().ok_or("bias missing"))
                        .collect::<Result<Vec<_>, _>>()?;
                    Some(scheme.rec(&b, k).map_err(|e| e.to_string())?)
                }
                None => None,
            };
            match &opened {
                None => opened = Some((w, b)),
                Some(prev) if *prev != (w, b) => {
                    return Err(format!(
                        "rec mismatch in layer {layer} for parties {names:?}"
                    ));
                }
                Some(_) => {}
            }
        }
        if let (Some(exp), Some((w, b))) = (&expected, &opened) {
            let (ew, eb) = &exp[layer];
            if field.decode_slice(w) != *ew || b.as_ref().map(|b| field.decode_slice(b)) != *eb {
                return Err(format!("rec mismatch in layer {layer} against the model"));
            }
        }
    }
    Ok(format!(
        "{n} party files, {layers} layers open identically from every window of {k}"
    ))
}

pub fn run(shares: Option<&Path>, model: Option<&str>) -> CliResult {
    let mut checks: Vec<(&str, Check)> = vec![
        ("worked example", worked_example()),
        ("truncation counterexample", truncation_counterexample()),
        ("naive reduction flagged", naive_reduction_flagged()),
    ];
    if let Some(dir) = shares {
        let model = model.map(load_model).transpose()?;
        checks.push(("share files", share_consistency(dir, model.as_ref())));
    } else if model.is_some() {
        return Err(CliError::config("--model needs --shares"));
    }
    let mut failed = 0;
    for (name, result) in &checks {
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        return Err(CliError::failed(format!(
            "{failed} of {} checks failed",
            checks.len()
        )));
    }
    Ok(())
}
