mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command, Format, OutputOpts, VerifyArgs};
use commands::Outcome;

pub const SCHEMA: u32 = 1;

/// Timing fields that legitimately differ between runs.
const UNSTABLE_KEYS: &[&str] = &["mean_secs", "sd_secs", "median_secs", "ratio"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lp(#[from] lpstat::Error),
    #[error("{0}")]
    Mismatch(String),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lp(lpstat::Error::Numeric(format!("cannot serialize result: {e}")))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lp(e) if e.is_data_error() => 2,
            CliError::Lp(_) | CliError::Mismatch(_) => 3,
        }
    }
}

fn envelope(cmd: &Command, out: &Outcome) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(cmd)?;
    let obj = v.as_object_mut().expect("tagged command");
    obj.insert("schema".into(), json!(SCHEMA));
    obj.insert("tool".into(), json!("lpstat"));
    obj.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    obj.insert("timestamp".into(), json!(chrono::Utc::now().to_rfc3339()));
    obj.insert("seed".into(), json!(out.seed));
    obj.insert("selection".into(), json!(out.selection));
    obj.insert("warnings".into(), json!(out.warnings));
    obj.insert("results".into(), out.results.clone());
    Ok(v)
}

fn write_to(path: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))
        }
    }
}

fn emit(cmd: &Command, opts: &OutputOpts, out: &Outcome) -> Result<(), CliError> {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if let (Some(kind), Some(path)) = (opts.plot, &opts.plot_out) {
        let (_, csv) = out
            .plots
            .iter()
            .find(|(k, _)| *k == kind)
            .ok_or_else(|| CliError::Usage("plot kind not available for this command".into()))?;
        write_to(Some(path), csv)?;
    }
    let text = match opts.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&envelope(cmd, out)?)?;
            s.push('\n');
            s
        }
        Format::Csv => out
            .csv
            .clone()
            .ok_or_else(|| CliError::Usage("no CSV form for this command".into()))?,
    };
    write_to(opts.output.as_deref(), &text)
}

/// Paths where two JSON values differ, ignoring timing fields.
fn diff(a: &Value, b: &Value, path: &str, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                if UNSTABLE_KEYS.contains(&k.as_str()) {
                    continue;
                }
                match y.get(k) {
                    Some(vb) => diff(va, vb, &format!("{path}.{k}"), out),
                    None => out.push(format!("{path}.{k} missing")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(format!("{path}.{k} unexpected"));
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (va, vb)) in x.iter().zip(y).enumerate() {
                diff(va, vb, &format!("{path}[{i}]"), out);
            }
        }
        _ if a == b => {}
        _ => out.push(format!("{path}: saved {a}, recomputed {b}")),
    }
}

fn count_numbers(v: &Value) -> usize {
    match v {
        Value::Number(_) => 1,
        Value::Array(a) => a.iter().map(count_numbers).sum(),
        Value::Object(o) => o.values().map(count_numbers).sum(),
        _ => 0,
    }
}

fn verify(a: &VerifyArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.input.display())))?;
    let saved: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("not a result file: {e}")))?;
    if saved.get("schema") != Some(&json!(SCHEMA)) {
        return Err(CliError::Usage(format!("unsupported schema {}", saved["schema"])));
    }
    let cmd: Command = serde_json::from_value(json!({
        "command": saved["command"],
        "config": saved["config"],
    }))
    .map_err(|e| CliError::Usage(format!("cannot rebuild the run configuration: {e}")))?;
    let fresh = commands::run(&cmd)?;
    let mut diffs = Vec::new();
    diff(&saved["results"], &fresh.results, "results", &mut diffs);
    if diffs.is_empty() {
        println!("verified: {} numbers reproduced exactly ({})", count_numbers(&saved["results"]), cmd.name());
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("{} difference(s):\n  {}", diffs.len(), diffs.join("\n  "))))
    }
}

fn real_main() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {t} threads: {e}")))?;
    }
    match &cli.command {
        Command::Verify(a) => verify(a),
        cmd => {
            let out = commands::run(cmd)?;
            emit(cmd, &cmd.output(), &out)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lpstat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
