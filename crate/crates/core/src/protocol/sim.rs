//! In-process execution: one thread per endpoint over the simulated network.

use std::net::TcpListener;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::field::PrimeField;
use crate::layers::{plan_schedule, Ordering, Schedule};
use crate::model::{plaintext_run, share_model, ModelGraph, PartyModelShares, QuantizedTensor};
use crate::sss::SssScheme;

use super::audit::{audit_observations, AuditReport};
use super::masks::{trusted_source_prepare, MaskBundle, SourceAudit, SourceOptions};
use super::metrics::RunMetrics;
use super::net::{NetSummary, PartyNet};
use super::party::{run_party, run_source};
use super::source::handshake_digest;
use super::tcp::{tcp_connect_with_listener, Hello, TcpOptions};
use super::transport::{sim_network, SimEndpoint, Transport};
use super::ProtocolError;

/// Runs `f` on every endpoint `0..=n` in its own thread, with the transport
/// for endpoint `i` built by `connect(i)` inside that thread.
///
/// A failing endpoint drops its links, so its peers fail with `Disconnected`
/// instead of blocking. The first error that is not a mere disconnect is
/// returned.
pub fn run_endpoints<T, C, F>(
    scheme: &SssScheme,
    seed: u64,
    audit: bool,
    connect: C,
    f: F,
) -> Result<Vec<(T, NetSummary)>, ProtocolError>
where
    T: Send,
    C: Fn(usize) -> Result<Box<dyn Transport>, ProtocolError> + Sync,
    F: Fn(&mut PartyNet) -> Result<T, ProtocolError> + Sync,
{
    let results: Vec<Result<(T, NetSummary), ProtocolError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..=scheme.n())
            .map(|i| {
                let (f, connect) = (&f, &connect);
                let scheme = scheme.clone();
                s.spawn(move || {
                    let mut net = PartyNet::new(scheme, connect(i)?, seed, audit);
                    let out = f(&mut net)?;
                    Ok((out, net.finish()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("endpoint thread panicked"))
            .collect()
    });
    if results.iter().any(Result::is_err) {
        let mut errors: Vec<ProtocolError> = results.into_iter().filter_map(Result::err).collect();
        let primary = errors
            .iter()
            .position(|e| !matches!(e.root(), ProtocolError::Disconnected { .. }))
            .unwrap_or(0);
        return Err(errors.swap_remove(primary));
    }
    Ok(results.into_iter().map(|r| r.expect("checked")).collect())
}

/// [`run_endpoints`] over the in-process simulated network.
pub fn simulate_network<T, F>(
    scheme: &SssScheme,
    seed: u64,
    audit: bool,
    f: F,
) -> Result<Vec<(T, NetSummary)>, ProtocolError>
where
    T: Send,
    F: Fn(&mut PartyNet) -> Result<T, ProtocolError> + Sync,
{
    let slots: Mutex<Vec<Option<SimEndpoint>>> =
        Mutex::new(sim_network(scheme.n() + 1).into_iter().map(Some).collect());
    run_endpoints(
        scheme,
        seed,
        audit,
        |i| {
            let ep = slots.lock().expect("endpoint slots")[i]
                .take()
                .expect("each endpoint is taken once");
            Ok(Box::new(ep) as Box<dyn Transport>)
        },
        f,
    )
}

/// [`run_endpoints`] over a TCP mesh on `127.0.0.1` with ephemeral ports.
pub fn localhost_network<T, F>(
    scheme: &SssScheme,
    hello: Hello,
    opts: TcpOptions,
    seed: u64,
    audit: bool,
    f: F,
) -> Result<Vec<(T, NetSummary)>, ProtocolError>
where
    T: Send,
    F: Fn(&mut PartyNet) -> Result<T, ProtocolError> + Sync,
{
    let n = scheme.n();
    let mut listeners = Vec::with_capacity(n + 1);
    let mut addrs = Vec::with_capacity(n);
    for _ in 0..n {
        let l = TcpListener::bind("127.0.0.1:0")?;
        addrs.push(l.local_addr()?);
        listeners.push(Some(l));
    }
    listeners.push(None);
    let slots = Mutex::new(listeners);
    run_endpoints(
        scheme,
        seed,
        audit,
        |i| {
            let l = slots.lock().expect("listener slots")[i].take();
            let ep = tcp_connect_with_listener(i, &addrs, l, hello, opts)?;
            Ok(Box::new(ep) as Box<dyn Transport>)
        },
        f,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub k: usize,
    pub n: usize,
    pub field: PrimeField,
    pub ordering: Ordering,
    pub seed: u64,
    /// Log observations and received shares, and audit them after the run.
    pub audit: bool,
    /// Use `alpha = 0`; only for oracle-alignment tests.
    pub zero_alpha: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            k: 2,
            n: 3,
            field: PrimeField::default(),
            ordering: Ordering::Ltn,
            seed: 0,
            audit: false,
            zero_alpha: false,
        }
    }
}

/// Scheme, schedule and weight shares, reusable across inferences for benchmarking.
#[derive(Debug, Clone)]
pub struct InferenceSetup {
    pub scheme: SssScheme,
    pub schedule: Schedule,
    pub model_digest: [u8; 32],
    pub weights: Vec<PartyModelShares>,
}

impl InferenceSetup {
    /// Shares the model with a ChaCha stream derived from `seed`.
    pub fn new(model: &ModelGraph, cfg: &SimConfig) -> Result<Self, ProtocolError> {
        let scheme = SssScheme::new(cfg.field, cfg.k, cfg.n)?;
        let schedule = plan_schedule(&model.skeleton(), cfg.ordering, &cfg.field)?;
        let weights = share_model(model, &scheme, &mut ChaCha20Rng::seed_from_u64(cfg.seed))?;
        Ok(Self {
            scheme,
            schedule,
            model_digest: model.digest(),
            weights,
        })
    }

    /// Mask bundles for one inference, drawn from a stream of `seed` that no party uses.
    pub fn bundles(
        &self,
        seed: u64,
        opts: SourceOptions,
    ) -> Result<(Vec<MaskBundle>, Option<SourceAudit>), ProtocolError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        trusted_source_prepare(&self.schedule, &self.scheme, &mut rng, opts)
    }

    /// HELLO every endpoint presents for this model and schedule.
    pub fn hello(&self) -> Hello {
        Hello::new(
            self.scheme.k(),
            self.scheme.n(),
            handshake_digest(&self.model_digest, &self.schedule),
        )
    }

    /// One inference over the simulated network with fresh masks drawn from `seed`.
    pub fn run(
        &self,
        input: &[i64],
        seed: u64,
        audit: bool,
        zero_alpha: bool,
    ) -> Result<SimRun, ProtocolError> {
        let (bundles, source_audit) = self.bundles(seed, SourceOptions { audit, zero_alpha })?;
        let results = simulate_network(&self.scheme, seed, audit, |net| {
            self.endpoint(net, &bundles, input)
        })?;
        SimRun::collect(results, source_audit)
    }

    /// The same inference with every endpoint on its own localhost TCP socket.
    pub fn run_tcp_local(
        &self,
        input: &[i64],
        seed: u64,
        opts: TcpOptions,
    ) -> Result<SimRun, ProtocolError> {
        let (bundles, _) = self.bundles(seed, SourceOptions::default())?;
        let results = localhost_network(&self.scheme, self.hello(), opts, seed, false, |net| {
            self.endpoint(net, &bundles, input)
        })?;
        SimRun::collect(results, None)
    }

    fn endpoint(
        &self,
        net: &mut PartyNet,
        bundles: &[MaskBundle],
        input: &[i64],
    ) -> Result<Option<Vec<i64>>, ProtocolError> {
        let i = net.index();
        if i == self.scheme.n() {
            run_source(net, bundles, input, &self.schedule.input_shape)?;
            Ok(None)
        } else {
            run_party(net, &self.schedule, &self.weights[i].layers)
        }
    }
}

/// Raw result of one simulated inference.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub output: Vec<i64>,
    pub source_audit: Option<SourceAudit>,
    /// Parties `0..n`, then the source.
    pub summaries: Vec<NetSummary>,
}

impl SimRun {
    fn collect(
        results: Vec<(Option<Vec<i64>>, NetSummary)>,
        source_audit: Option<SourceAudit>,
    ) -> Result<Self, ProtocolError> {
        let mut output = None;
        let mut summaries = Vec::with_capacity(results.len());
        for (out, summary) in results {
            if out.is_some() {
                output = out;
            }
            summaries.push(summary);
        }
        Ok(Self {
            output: output
                .ok_or_else(|| ProtocolError::Config("elite produced no output".into()))?,
            source_audit,
            summaries,
        })
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics::from_parties(self.summaries.iter().map(|s| s.metrics.clone()).collect())
    }

    pub fn transcripts(&self) -> Vec<[u8; 32]> {
        self.summaries.iter().map(|s| s.transcript).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub output: QuantizedTensor,
    pub schedule: Schedule,
    pub metrics: RunMetrics,
    /// Per-endpoint transcript digests, parties first.
    pub transcripts: Vec<[u8; 32]>,
    pub audit: Option<AuditReport>,
    pub summaries: Vec<NetSummary>,
}

/// Shares `model`, runs one inference on `input` and returns the opened output.
pub fn simulate_inference(
    model: &ModelGraph,
    input: &QuantizedTensor,
    cfg: &SimConfig,
) -> Result<SimOutcome, ProtocolError> {
    if input.shape() != model.input_shape() || input.scale() != model.input_scale() {
        return Err(ProtocolError::Config(format!(
            "input {:?} at scale {} does not match model input {:?} at scale {}",
            input.shape(),
            input.scale(),
            model.input_shape(),
            model.input_scale()
        )));
    }
    let setup = InferenceSetup::new(model, cfg)?;
    let x = input.to_i64();
    let run = setup.run(&x, cfg.seed, cfg.audit, cfg.zero_alpha)?;
    let audit = match &run.source_audit {
        Some(sa) => {
            let trace = plaintext_run(model, &setup.schedule, &x)?;
            Some(audit_observations(
                &setup.schedule,
                &trace,
                sa,
                &run.summaries,
                setup.scheme.k(),
            ))
        }
        None => None,
    };
    let output = QuantizedTensor::from_i64(
        &run.output,
        setup.schedule.output_shape().to_vec(),
        model.input_scale(),
    )?;
    Ok(SimOutcome {
        output,
        metrics: run.metrics(),
        transcripts: run.transcripts(),
        schedule: setup.schedule,
        audit,
        summaries: run.summaries,
    })
}
