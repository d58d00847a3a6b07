//! Command-line front end: `demo`, `bench` and `attack`.
//!
//! Every flag can also come from a JSON file passed with `--config`, whose
//! keys are the long flag names with dashes replaced by underscores. Flags
//! given on the command line win over the file.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::adversary::{self, AttackMode, AttackTrialConfig, Victims};
use crate::bench::{self, BenchMode, SweepConfig};
use crate::bus::{Bus, BusConfig, Topic};
use crate::error::{Error, Result};
use crate::keyexchange::{SUPPORTED_DH_BITS, SUPPORTED_HMAC_BITS};
use crate::node::session::{NodePair, SessionSeeds};
use crate::node::{EventKind, LogEvent, Node, NodeConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROTOCOL: i32 = 2;
pub const EXIT_BENCH_INCOMPLETE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub const LOG_DIR_ENV: &str = "AUTHLINK_LOG_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "authlink",
    version,
    about = "Authenticated drone-to-drone channel: demo, benchmark and attack simulation"
)]
pub struct Cli {
    /// JSON file with default values for any flag (keys use underscores)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one honest drone0/drone1 session and send one authenticated payload
    Demo(DemoArgs),
    /// Time every DH size against every HMAC key size
    Bench(BenchArgs),
    /// Run seeded man-in-the-middle trials against the key exchange
    Attack(AttackArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamsModeArg {
    /// Search for fresh safe-prime parameters
    Generate,
    /// Use a fixed published group of the requested size
    #[value(name = "well-known", alias = "well_known")]
    WellKnown,
}

impl From<ParamsModeArg> for BenchMode {
    fn from(m: ParamsModeArg) -> Self {
        match m {
            ParamsModeArg::Generate => BenchMode::Generate,
            ParamsModeArg::WellKnown => BenchMode::WellKnown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackModeArg {
    Tamper,
    Replace,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetsArg {
    Drone0,
    Drone1,
    Both,
    /// No adversary: honest control runs
    None,
}

fn dh_bits(s: &str) -> std::result::Result<u32, String> {
    let v: u32 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if SUPPORTED_DH_BITS.contains(&v) {
        Ok(v)
    } else {
        Err(format!("unsupported DH size {v} (expected one of {SUPPORTED_DH_BITS:?})"))
    }
}

fn hmac_bits(s: &str) -> std::result::Result<u32, String> {
    let v: u32 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if SUPPORTED_HMAC_BITS.contains(&v) {
        Ok(v)
    } else {
        Err(format!("unsupported HMAC key size {v} (expected one of {SUPPORTED_HMAC_BITS:?})"))
    }
}

fn fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Diffie-Hellman modulus size in bits
    #[arg(long, default_value_t = 2048, value_parser = dh_bits)]
    pub dh_bits: u32,
    /// Derived HMAC key size in bits
    #[arg(long, default_value_t = 512, value_parser = hmac_bits)]
    pub hmac_bits: u32,
    #[arg(long, value_enum, default_value_t = ParamsModeArg::WellKnown)]
    pub params_mode: ParamsModeArg,
    /// Data drone0 sends to drone1 once the session is up
    #[arg(long, default_value = "hello")]
    pub payload: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where drone0.log and drone1.log are written
    #[arg(long, env = LOG_DIR_ENV, default_value = ".")]
    pub log_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated DH sizes
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_DH_BITS, value_parser = dh_bits)]
    pub dh_bits: Vec<u32>,
    /// Comma-separated HMAC key sizes
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_HMAC_BITS, value_parser = hmac_bits)]
    pub hmac_bits: Vec<u32>,
    /// Trials per (DH, HMAC) combination
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, value_enum, default_value_t = ParamsModeArg::Generate)]
    pub params_mode: ParamsModeArg,
    /// CSV output, written row by row
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
    /// Directory for scatter.svg and histogram.svg
    #[arg(long, default_value = "plots")]
    pub plots: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allow 4096-bit groups in generate mode (can take over 10 minutes per trial)
    #[arg(long, default_value_t = false)]
    pub allow_4096: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    /// Number of seeded trials
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = AttackModeArg::Random)]
    pub mode: AttackModeArg,
    /// Portion of public-key bytes altered by a tamper
    #[arg(long, default_value_t = adversary::DEFAULT_TAMPER_FRACTION, value_parser = fraction)]
    pub tamper_fraction: f64,
    /// Drone(s) whose incoming public key is attacked
    #[arg(long, value_enum, default_value_t = TargetsArg::Both)]
    pub targets: TargetsArg,
    /// Also tamper with the victims' authenticated data
    #[arg(long, default_value_t = false)]
    pub attack_data: bool,
    #[arg(long, default_value_t = 2048, value_parser = dh_bits)]
    pub dh_bits: u32,
    #[arg(long, default_value_t = 512, value_parser = hmac_bits)]
    pub hmac_bits: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where drone0.log and drone1.log are written
    #[arg(long, env = LOG_DIR_ENV, default_value = ".")]
    pub log_dir: PathBuf,
    /// Per-trial report CSV
    #[arg(long, default_value = "attack_report.csv")]
    pub report: PathBuf,
    /// Optional CSV of every intercepted and altered message
    #[arg(long)]
    pub records: Option<PathBuf>,
}

struct Usage(String);

fn parse(args: Vec<OsString>) -> std::result::Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&args)?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches);
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let extra = config_args(&path, sub)
        .map_err(|Usage(msg)| Cli::command().error(clap::error::ErrorKind::ValueValidation, msg))?;
    let mut args = args;
    args.extend(extra);
    let matches = Cli::command().try_get_matches_from(&args)?;
    Cli::from_arg_matches(&matches)
}

/// Flags to append for every config-file key not already on the command line.
fn config_args(path: &Path, sub: &ArgMatches) -> std::result::Result<Vec<OsString>, Usage> {
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = doc else {
        return Err(Usage(format!("{} must hold a JSON object", path.display())));
    };
    let known: Vec<&str> = sub.ids().map(|id| id.as_str()).collect();
    let mut out = Vec::new();
    for (key, value) in map {
        if key == "config" || !known.contains(&key.as_str()) {
            return Err(Usage(format!("unknown config key {key:?}")));
        }
        if sub.value_source(&key) == Some(ValueSource::CommandLine) {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            other => Err(Usage(format!("unsupported value for {key}: {other}"))),
        };
        match &value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<std::result::Result<Vec<_>, _>>()?.join(",");
                out.push(flag.into());
                out.push(joined.into());
            }
            v => {
                out.push(flag.into());
                out.push(scalar(v)?.into());
            }
        }
    }
    Ok(out)
}

/// Parse `args` (program name first), run the subcommand, and return the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Demo(a) => demo(a, stdout),
        Command::Bench(a) => bench_cmd(a, stdout, stderr),
        Command::Attack(a) => attack(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e @ (Error::Parameter(_) | Error::Config(_))) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_PROTOCOL
        }
    }
}

fn write_log(dir: &Path, node_id: &str, events: &[LogEvent]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{node_id}.log"));
    let mut w = BufWriter::new(File::create(&path)?);
    for e in events {
        writeln!(w, "{}", e.to_line())?;
    }
    w.flush()?;
    Ok(path)
}

fn describe_params(node: &Node) -> String {
    match node.params() {
        Some(p) => match p.group() {
            Some(g) => format!("{g}, {} bits, g={}", p.bits(), p.g()),
            None => format!("generated, {} bits, g={}", p.bits(), p.g()),
        },
        None => "none".into(),
    }
}

fn demo(args: &DemoArgs, out: &mut dyn Write) -> Result<i32> {
    let mode = NodeConfig::mode_for(args.dh_bits, args.params_mode == ParamsModeArg::WellKnown)?;
    let (a, b) = (
        NodeConfig::drone0(args.dh_bits, args.hmac_bits, mode),
        NodeConfig::drone1(args.dh_bits, args.hmac_bits, mode),
    );
    a.validate()?;
    b.validate()?;
    let seeds = SessionSeeds::from_seed(args.seed);
    let bus = Bus::new(BusConfig::deterministic(seeds.scheduler));
    let mut pair = NodePair::new(&bus, a, b, seeds)?;
    pair.handshake(&bus);

    let (d0, d1) = (&pair.initiator, &pair.responder);
    for node in [d0, d1] {
        writeln!(out, "[step 1] {}: DH parameters ready ({})", node.id(), describe_params(node))?;
    }
    for node in [d0, d1] {
        if node.keypair().is_some() {
            writeln!(out, "[step 2] {}: private and public keys generated", node.id())?;
        }
    }
    writeln!(out, "[step 3] nodes started: drone0_authentication_and_send, drone1_authentication_and_receive")?;
    for node in [d0, d1] {
        if node.log().contains(EventKind::PubkeyPublished) {
            writeln!(out, "[step 4] {}: public key published to {}", node.id(), Topic::public_key(node.id())?)?;
        }
    }
    for (step, node) in [(5, d1), (6, d0)] {
        match node.session_key() {
            Some(key) => writeln!(
                out,
                "[step {step}] {}: key exchange complete, {}-bit HMAC key {}",
                node.id(),
                key.bits(),
                key.fingerprint()
            )?,
            None => writeln!(out, "[step {step}] {}: key exchange failed", node.id())?,
        }
    }

    let mut code = EXIT_PROTOCOL;
    if pair.established() {
        writeln!(out, "[step 7] drone1: subscribed to {}", Topic::authenticated_data("drone1")?)?;
        let seq = pair.initiator.send_authenticated(args.payload.as_bytes())?;
        writeln!(out, "[step 8] drone0: signed {} payload bytes (seq {seq})", args.payload.len())?;
        writeln!(out, "[step 9] drone0: published to {}", Topic::authenticated_data("drone1")?)?;
        bus.deliver_all();
        let reception = pair.responder.recv_data(Duration::from_secs(1))?;
        if reception.verdict.is_accepted() {
            let text = String::from_utf8_lossy(reception.payload.as_deref().unwrap_or_default());
            writeln!(out, "[step 10] drone1: HMAC verified, payload {text:?}")?;
            code = EXIT_OK;
        } else {
            writeln!(out, "[step 10] drone1: HMAC mismatch, data discarded")?;
        }
    } else {
        for node in [d0, d1] {
            if let Some(reason) = &node.state().failure {
                writeln!(out, "{}: session failed: {reason}", node.id())?;
            }
        }
    }

    for node in [&pair.initiator, &pair.responder] {
        let path = write_log(&args.log_dir, node.id(), node.log().events())?;
        writeln!(out, "log: {}", path.display())?;
    }
    Ok(code)
}

fn bench_cmd(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let config = SweepConfig {
        dh_bits: args.dh_bits.clone(),
        hmac_bits: args.hmac_bits.clone(),
        repeats: args.repeats,
        params_mode: args.params_mode.into(),
        seed: args.seed,
        allow_4096: args.allow_4096,
        timeout: None,
    };
    config.validate()?;
    if config.params_mode == BenchMode::Generate && config.dh_bits.contains(&4096) {
        writeln!(err, "warning: 4096-bit parameter generation may take more than 10 minutes per trial")?;
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut csv_out = File::create(&args.out)?;
    let total = config.trial_count();
    let records = bench::sweep_with_progress(&config, &mut csv_out, &mut |r| {
        let _ = writeln!(
            out,
            "trial {}/{total}: dh={} hmac={} {} total={:.6}s",
            r.trial_id + 1,
            r.dh_bits,
            r.hmac_bits,
            r.outcome,
            r.t_total
        );
    })?;
    writeln!(out, "csv: {}", args.out.display())?;

    let all_ok = records.iter().all(|r| r.is_ok());
    fs::create_dir_all(&args.plots)?;
    let scatter = args.plots.join("scatter.svg");
    let histogram = args.plots.join("histogram.svg");
    match bench::emit_scatter(&records, &mut File::create(&scatter)?)
        .and_then(|_| bench::emit_histogram(&records, &mut File::create(&histogram)?))
    {
        Ok(()) => writeln!(out, "plots: {}, {}", scatter.display(), histogram.display())?,
        Err(Error::EmptyData) => {
            writeln!(err, "no successful trials to plot")?;
            return Ok(EXIT_BENCH_INCOMPLETE);
        }
        Err(e) => return Err(e),
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_BENCH_INCOMPLETE })
}

fn attack(args: &AttackArgs, out: &mut dyn Write) -> Result<i32> {
    let params_mode = NodeConfig::mode_for(args.dh_bits, true)?;
    let victims = match args.targets {
        TargetsArg::Drone0 => Some(Victims::Drone0),
        TargetsArg::Drone1 => Some(Victims::Drone1),
        TargetsArg::Both => Some(Victims::Both),
        TargetsArg::None => None,
    };
    let config = AttackTrialConfig {
        mode: match args.mode {
            AttackModeArg::Tamper => AttackMode::Tamper,
            AttackModeArg::Replace => AttackMode::Replace,
            AttackModeArg::Random => AttackMode::Random,
        },
        tamper_fraction: args.tamper_fraction,
        victims,
        attack_data: args.attack_data,
        dh_bits: args.dh_bits,
        hmac_bits: args.hmac_bits,
        params_mode,
        ..Default::default()
    };

    if let Some(parent) = args.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut report = csv::Writer::from_path(&args.report)?;
    let mut logs: [(&str, Vec<LogEvent>); 2] = [("drone0", Vec::new()), ("drone1", Vec::new())];
    let mut records = Vec::new();
    let (mut detected, mut false_alarms, mut silent) = (0u64, 0u64, 0u64);

    for trial_id in 0..args.trials {
        let trial = adversary::run_trial(&config, trial_id, args.seed)?;
        report.serialize(trial.report_row())?;
        if victims.is_some() {
            if trial.detected() {
                detected += 1;
            }
        } else if !trial.logs.values().flatten().all(|e| !e.event.is_detection()) || !trial.round_trip_ok {
            false_alarms += 1;
        }
        if trial.silent_mismatch() {
            silent += 1;
        }
        for (id, sink) in logs.iter_mut() {
            for e in trial.logs.get(*id).into_iter().flatten() {
                let mut e = e.clone();
                e.detail = if e.detail.is_empty() {
                    format!("trial={trial_id}")
                } else {
                    format!("trial={trial_id} {}", e.detail)
                };
                sink.push(e);
            }
        }
        records.extend(trial.records);
    }
    report.flush()?;

    for (id, events) in &logs {
        write_log(&args.log_dir, id, events)?;
    }
    if let Some(path) = &args.records {
        adversary::write_records_csv(&records, &mut BufWriter::new(File::create(path)?))?;
    }

    let n = args.trials;
    writeln!(out, "report: {}", args.report.display())?;
    let ok = if victims.is_some() {
        writeln!(out, "detected {detected}/{n}")?;
        detected == n && silent == 0
    } else {
        writeln!(out, "false alarms {false_alarms}/{n}")?;
        false_alarms == 0
    };
    if silent > 0 {
        writeln!(out, "undetected key mismatches: {silent}")?;
    }
    Ok(if ok { EXIT_OK } else { EXIT_PROTOCOL })
}
