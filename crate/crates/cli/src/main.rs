//! `ssnet`: share a model, run secure inference in one process or across
//! processes over TCP, and verify share files against the golden examples.

mod verify;

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use ssnet_core::layers::{plan_schedule, Ordering};
use ssnet_core::model::{
    argmax_i64, plaintext_trace, quantize, reference_avgpool_model, reference_lenet, ModelError,
    ModelGraph, PartyModelShares, QuantizedTensor, Skeleton, REFERENCE_INPUT_SCALE,
    REFERENCE_WEIGHT_SCALE,
};
use ssnet_core::protocol::{
    handshake_digest, run_party, run_source, tcp_connect, Hello, InferenceSetup, PartyNet,
    ProtocolError, Role, RunMetrics, SimConfig, SimRun, SourceBundle, SourceOptions, TcpOptions,
};

/// Seed of the built-in reference weights.
const REFERENCE_SEED: u64 = 2024;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn failed(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        Self {
            code: e.exit_code() as u8,
            msg: e.to_string(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::failed(format!("i/o: {e}"))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "ssnet",
    version,
    about = "Secure multi-party DNN inference over Shamir secret shares"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the quantized reference model to a file.
    ExportModel {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Share a model's weights into one file per party plus a source bundle.
    Share {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for `party_<i>.ssns` and `source.ssnb`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one inference with every party in this process.
    InferSim {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value_t = TransportKind::Sim)]
        transport: TransportKind,
        /// Check every value the parties see against the plaintext run.
        #[arg(long)]
        audit: bool,
        /// Write per-operation, per-party metrics as NDJSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Print one JSON object instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run one party of a TCP deployment.
    RunParty {
        /// Party index, 0 being the elite.
        #[arg(long)]
        index: usize,
        /// Expected role; rejected if it does not match the index.
        #[arg(long, value_enum)]
        role: Option<RoleArg>,
        #[command(flatten)]
        net: NetArgs,
        /// This party's share file.
        #[arg(long)]
        shares: PathBuf,
        #[arg(long, default_value_t = Ordering::Ltn)]
        ordering: Ordering,
        #[arg(long, env = "SSNET_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run the trusted source: deliver mask bundles and the shared input.
    RunSource {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, env = "SSNET_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Run the golden checks and, with `--shares`, check a directory of share files.
    Verify {
        /// Directory written by `share`.
        #[arg(long)]
        shares: Option<PathBuf>,
        /// Model the shares must reconstruct to.
        #[arg(long)]
        model: Option<String>,
    },
    /// Time repeated inferences over one set of weight shares.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        runs: u64,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model file, or `reference` / `reference-avgpool` for the built-in models.
    #[arg(long, default_value = "reference")]
    model: String,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Threshold and party count as `k,n`.
    #[arg(long, default_value = "2,3", value_parser = parse_scheme)]
    scheme: (usize, usize),
    #[arg(long, default_value_t = Ordering::Ltn)]
    ordering: Ordering,
    #[arg(long, env = "SSNET_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// JSON array of real-valued inputs, quantized at the model input scale.
    #[arg(long, conflicts_with = "input_seed")]
    input: Option<PathBuf>,
    /// Draw a uniform [0, 1) input from this seed.
    #[arg(long, default_value_t = 0)]
    input_seed: u64,
}

#[derive(Args, Debug)]
struct NetArgs {
    /// Party listen addresses in index order, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    peers: Vec<SocketAddr>,
    #[arg(long, default_value_t = 30)]
    io_timeout_secs: u64,
    #[arg(long, default_value_t = 30)]
    connect_timeout_secs: u64,
    /// Override the HELLO protocol version; for testing version checks.
    #[arg(long, hide = true)]
    hello_version: Option<u16>,
}

impl NetArgs {
    fn options(&self) -> TcpOptions {
        TcpOptions {
            io_timeout: Duration::from_secs(self.io_timeout_secs),
            connect_timeout: Duration::from_secs(self.connect_timeout_secs),
        }
    }

    fn hello(&self, k: usize, n: usize, digest: [u8; 32]) -> Hello {
        let mut hello = Hello::new(k, n, digest);
        if let Some(v) = self.hello_version {
            hello.version = v;
        }
        hello
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TransportKind {
    Sim,
    Tcp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RoleArg {
    Elite,
    Active,
    Passive,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Elite => Role::Elite,
            RoleArg::Active => Role::Active,
            RoleArg::Passive => Role::Passive,
        }
    }
}

fn parse_scheme(s: &str) -> Result<(usize, usize), String> {
    let (k, n) = s.split_once(',').ok_or("expected k,n")?;
    let k = k.trim().parse().map_err(|e| format!("k: {e}"))?;
    let n = n.trim().parse().map_err(|e| format!("n: {e}"))?;
    Ok((k, n))
}

pub fn load_model(spec: &str) -> CliResult<ModelGraph> {
    let float = match spec {
        "reference" => reference_lenet(REFERENCE_SEED),
        "reference-avgpool" => reference_avgpool_model(REFERENCE_SEED),
        path => return Ok(ModelGraph::load(Path::new(path))?),
    };
    Ok(float.quantize(REFERENCE_INPUT_SCALE, REFERENCE_WEIGHT_SCALE)?)
}

fn load_input(args: &InputArgs, skeleton: &Skeleton) -> CliResult<QuantizedTensor> {
    let len: usize = skeleton.input_shape.iter().product();
    let values: Vec<f64> = match &args.input {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?,
        None => {
            let mut rng = ChaCha20Rng::seed_from_u64(args.input_seed);
            (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()
        }
    };
    if values.len() != len {
        return Err(CliError::config(format!(
            "input has {} values, model expects {len} ({:?})",
            values.len(),
            skeleton.input_shape
        )));
    }
    Ok(quantize(
        &values,
        skeleton.input_shape.clone(),
        skeleton.input_scale,
    )?)
}

fn sim_config(run: &RunArgs) -> SimConfig {
    SimConfig {
        k: run.scheme.0,
        n: run.scheme.1,
        ordering: run.ordering,
        seed: run.seed,
        ..SimConfig::default()
    }
}

fn write_metrics(path: &Path, metrics: &RunMetrics) -> CliResult {
    std::fs::write(path, metrics.to_ndjson())?;
    Ok(())
}

fn export_model(model: &ModelArgs, out: &Path) -> CliResult {
    let m = load_model(&model.model)?;
    m.save(out)?;
    println!("{}", json!({ "model": out, "digest": hex(&m.digest()) }));
    Ok(())
}

fn share(model: &ModelArgs, run: &RunArgs, out: &Path) -> CliResult {
    let m = load_model(&model.model)?;
    let cfg = sim_config(run);
    let setup = InferenceSetup::new(&m, &cfg)?;
    let (bundles, _) = setup.bundles(run.seed, SourceOptions::default())?;
    std::fs::create_dir_all(out)?;
    for w in &setup.weights {
        let path = out.join(format!("party_{}.ssns", w.party));
        w.save(&path)?;
        println!(
            "{}",
            json!({ "party": w.party, "role": Role::of(w.party, cfg.k).to_string(), "file": path })
        );
    }
    let bundle = SourceBundle {
        k: cfg.k,
        modulus: setup.scheme.field().modulus(),
        party_ids: setup.scheme.party_ids().to_vec(),
        model_digest: setup.model_digest,
        ordering: run.ordering,
        skeleton: m.skeleton(),
        bundles,
    };
    let path = out.join("source.ssnb");
    bundle.save(&path)?;
    println!(
        "{}",
        json!({ "source": path, "ordering": run.ordering.to_string() })
    );
    Ok(())
}

fn op_rows(metrics: &RunMetrics) -> Vec<serde_json::Value> {
    metrics
        .ops()
        .iter()
        .map(|s| {
            json!({
                "op": s.section.layer(),
                "operation": s.section.label(),
                "elements": s.elements,
                "bytes": s.bytes,
                "rounds": s.rounds,
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn infer_sim(
    model: &ModelArgs,
    run: &RunArgs,
    input: &InputArgs,
    transport: TransportKind,
    audit: bool,
    metrics_out: Option<&Path>,
    as_json: bool,
) -> CliResult {
    let m = load_model(&model.model)?;
    let x = load_input(input, &m.skeleton())?;
    let cfg = SimConfig {
        audit,
        ..sim_config(run)
    };
    let setup = InferenceSetup::new(&m, &cfg)?;
    let started = Instant::now();
    let out: SimRun = match transport {
        TransportKind::Sim => setup.run(&x.to_i64(), run.seed, audit, false)?,
        TransportKind::Tcp => {
            if audit {
                return Err(CliError::config("--audit needs --transport sim"));
            }
            setup.run_tcp_local(&x.to_i64(), run.seed, TcpOptions::default())?
        }
    };
    let elapsed = started.elapsed();
    let metrics = out.metrics();
    if let Some(path) = metrics_out {
        write_metrics(path, &metrics)?;
    }
    let oracle = plaintext_trace(&m, run.ordering, &x)?;
    let matches = oracle.output == out.output;
    let audit_report = match &out.source_audit {
        Some(sa) => {
            let trace = ssnet_core::model::plaintext_run(&m, &setup.schedule, &x.to_i64())?;
            Some(ssnet_core::protocol::audit_observations(
                &setup.schedule,
                &trace,
                sa,
                &out.summaries,
                cfg.k,
            ))
        }
        None => None,
    };
    let scale = m.input_scale() as f64;
    if as_json {
        let mut obj = json!({
            "scheme": [cfg.k, cfg.n],
            "ordering": run.ordering.to_string(),
            "transport": format!("{transport:?}").to_lowercase(),
            "output": out.output,
            "decoded": out.output.iter().map(|&v| v as f64 / scale).collect::<Vec<_>>(),
            "top1": argmax_i64(&out.output),
            "matches_plaintext": matches,
            "online_elements": metrics.online_elements(),
            "ops": op_rows(&metrics),
            "seconds": elapsed.as_secs_f64(),
        });
        if let Some(r) = &audit_report {
            obj["audit"] = json!({
                "checked": r.checked,
                "exposed": r.exposed,
                "violations": r.violations,
            });
        }
        println!("{obj}");
    } else {
        println!(
            "scheme ({}, {}), ordering {}, {:?} transport",
            cfg.k, cfg.n, run.ordering, transport
        );
        println!("output   {:?}", out.output);
        println!("top-1    {}", argmax_i64(&out.output));
        println!("oracle   {}", if matches { "match" } else { "MISMATCH" });
        println!(
            "{:>5}  {:<12} {:>10} {:>12} {:>6}",
            "op", "operation", "elements", "bytes", "rounds"
        );
        for s in metrics.ops() {
            println!(
                "{:>5}  {:<12} {:>10} {:>12} {:>6}",
                s.section.layer().map_or("-".into(), |l| l.to_string()),
                s.section.label(),
                s.elements,
                s.bytes,
                s.rounds
            );
        }
        println!(
            "online elements {}, {:.3} s",
            metrics.online_elements(),
            elapsed.as_secs_f64()
        );
        if let Some(r) = &audit_report {
            println!(
                "audit    {} checked, {} exposed, {} violations",
                r.checked,
                r.exposed,
                r.violations.len()
            );
        }
    }
    if !matches {
        return Err(CliError::failed(
            "secure output differs from the plaintext oracle",
        ));
    }
    if audit_report.is_some_and(|r| !r.passed()) {
        return Err(CliError::failed("audit failed"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn party(
    index: usize,
    role: Option<RoleArg>,
    net_args: &NetArgs,
    shares_path: &Path,
    ordering: Ordering,
    seed: u64,
    metrics_out: Option<&Path>,
) -> CliResult {
    let shares = PartyModelShares::load(shares_path)?;
    if shares.party != index {
        return Err(CliError::config(format!(
            "{} belongs to party {}, not {index}",
            shares_path.display(),
            shares.party
        )));
    }
    let actual = Role::of(index, shares.k);
    if let Some(r) = role.map(Role::from) {
        if r != actual {
            return Err(CliError::config(format!(
                "party {index} is {actual}, not {r}"
            )));
        }
    }
    let scheme = shares.scheme()?;
    let schedule = plan_schedule(&shares.skeleton, ordering, scheme.field())
        .map_err(|e| CliError::config(e.to_string()))?;
    let hello = net_args.hello(
        shares.k,
        shares.n(),
        handshake_digest(&shares.model_digest, &schedule),
    );
    log::info!(
        "party {index} ({actual}) connecting to {} peers",
        net_args.peers.len()
    );
    let ep = tcp_connect(index, &net_args.peers, hello, net_args.options())?;
    let mut net = PartyNet::new(scheme, Box::new(ep), seed, false);
    let output = run_party(&mut net, &schedule, &shares.layers)?;
    let summary = net.finish();
    let metrics = RunMetrics::from_parties(vec![summary.metrics]);
    if let Some(path) = metrics_out {
        write_metrics(path, &metrics)?;
    }
    let mut obj = json!({
        "party": index,
        "role": actual.to_string(),
        "elements_sent": metrics.online_elements(),
        "transcript": hex(&summary.transcript),
    });
    if let Some(out) = output {
        obj["output"] = json!(out);
        obj["top1"] = json!(argmax_i64(&out));
    }
    println!("{obj}");
    Ok(())
}

fn source(net_args: &NetArgs, bundle_path: &Path, input: &InputArgs, seed: u64) -> CliResult {
    let bundle = SourceBundle::load(bundle_path)?;
    let scheme = bundle.scheme()?;
    let schedule = bundle.schedule()?;
    let x = load_input(input, &bundle.skeleton)?;
    let hello = net_args.hello(
        bundle.k,
        scheme.n(),
        handshake_digest(&bundle.model_digest, &schedule),
    );
    let ep = tcp_connect(scheme.n(), &net_args.peers, hello, net_args.options())?;
    let mut net = PartyNet::new(scheme, Box::new(ep), seed, false);
    run_source(
        &mut net,
        &bundle.bundles,
        &x.to_i64(),
        &schedule.input_shape,
    )?;
    let summary = net.finish();
    println!(
        "{}",
        json!({ "source": true, "transcript": hex(&summary.transcript) })
    );
    Ok(())
}

fn bench(model: &ModelArgs, run: &RunArgs, runs: u64) -> CliResult {
    if runs == 0 {
        return Err(CliError::config("--runs must be positive"));
    }
    let m = load_model(&model.model)?;
    let cfg = sim_config(run);
    let setup = InferenceSetup::new(&m, &cfg)?;
    let mut times = Vec::with_capacity(runs as usize);
    let mut last = None;
    for i in 0..runs {
        let x = load_input(
            &InputArgs {
                input: None,
                input_seed: i,
            },
            &m.skeleton(),
        )?;
        let started = Instant::now();
        let out = setup.run(&x.to_i64(), run.seed.wrapping_add(i), false, false)?;
        times.push(started.elapsed().as_secs_f64());
        last = Some(out);
    }
    let metrics = last.expect("runs > 0").metrics();
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    println!(
        "{}",
        json!({
            "scheme": [cfg.k, cfg.n],
            "ordering": run.ordering.to_string(),
            "runs": runs,
            "mean_seconds": mean,
            "min_seconds": times.iter().cloned().fold(f64::INFINITY, f64::min),
            "online_elements": metrics.online_elements(),
            "online_bytes": metrics.ops().iter().map(|s| s.bytes).sum::<u64>(),
            "ops": op_rows(&metrics),
        })
    );
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::ExportModel { model, out } => export_model(&model, &out),
        Command::Share { model, run, out } => share(&model, &run, &out),
        Command::InferSim {
            model,
            run,
            input,
            transport,
            audit,
            metrics,
            json,
        } => infer_sim(
            &model,
            &run,
            &input,
            transport,
            audit,
            metrics.as_deref(),
            json,
        ),
        Command::RunParty {
            index,
            role,
            net,
            shares,
            ordering,
            seed,
            metrics,
        } => party(
            index,
            role,
            &net,
            &shares,
            ordering,
            seed,
            metrics.as_deref(),
        ),
        Command::RunSource {
            net,
            bundle,
            input,
            seed,
        } => source(&net, &bundle, &input, seed),
        Command::Verify { shares, model } => verify::run(shares.as_deref(), model.as_deref()),
        Command::Bench { model, run, runs } => bench(&model, &run, runs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssnet: {e}");
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssnet_core::field::PrimeField;

    #[test]
    fn scheme_argument() {
        assert_eq!(parse_scheme("3,5"), Ok((3, 5)));
        assert_eq!(parse_scheme(" 2, 3"), Ok((2, 3)));
        assert!(parse_scheme("3").is_err());
        assert!(parse_scheme("a,b").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn field_is_the_default() {
        let cfg = sim_config(&RunArgs {
            scheme: (3, 5),
            ordering: Ordering::Lnt,
            seed: 4,
        });
        assert_eq!(cfg.field, PrimeField::default());
        assert_eq!((cfg.k, cfg.n, cfg.seed), (3, 5, 4));
    }
}
