use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fedft_core::federation::{
    client_options, obtain_data, prepare, run_centralized, run_client, run_federated_server,
    run_simulation, ExperimentConfig, ExperimentOutcome, FedError, Mode, Seeds,
};
use fedft_core::metrics::{emit_report, read_report, ExperimentReport, MetricsError, ReportFormat};
use fedft_core::nn::serialize_params;
use fedft_core::transport::{connect_tcp_retry, TcpServer};

const SEED_ENV: &str = "FEDFT_SEED";

/// Federated fine-tuning of a Conv1D intrusion detector on NSL-KDD.
#[derive(Debug, Parser)]
#[command(name = "fedft", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition, scale and project the raw train/test files into per-client
    /// and server containers.
    Prepare {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory [default: dataset.prepared_dir, else ./prepared].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment, or one side of a TCP deployment.
    Run {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = RunMode::Simulate)]
        mode: RunMode,
        /// Address the server binds (serve mode) [default: transport.listen].
        #[arg(long, value_name = "HOST:PORT")]
        listen: Option<String>,
        /// Address clients connect to (client mode) [default: transport.server].
        #[arg(long, value_name = "HOST:PORT")]
        server: Option<String>,
        /// This process's client id, 0-based (client mode).
        #[arg(long)]
        client_id: Option<u32>,
        /// Directory for report.json, report.csv and model.fftp.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Tabulate one or more JSON reports side by side.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = TableFormat::Text)]
        format: TableFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RunMode {
    /// Pool all shards and train one model.
    Centralized,
    /// Server plus in-process clients.
    Simulate,
    /// TCP server only.
    Serve,
    /// TCP client only.
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

/// A problem with what the user asked for (exit code 2).
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() || cause.is::<MetricsError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<FedError>() {
            return if e.is_input_error() { 2 } else { 3 };
        }
    }
    3
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        let base: u64 = raw
            .trim()
            .parse()
            .map_err(|_| input(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        cfg.federation.seeds = Seeds::from_base(base);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("write {}", path.display()))
}

fn cmd_prepare(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let dir = out
        .or_else(|| cfg.dataset.prepared_dir.clone())
        .unwrap_or_else(|| PathBuf::from("prepared"));
    let data = prepare(&cfg)?;
    data.write(&dir)?;
    let m = &data.manifest;
    println!("train rows {} ({} normal), test rows {}", m.train_rows, m.train_normal, m.test_rows);
    for (i, n) in m.client_rows.iter().enumerate() {
        println!("client_{i}.fftd  {n} rows");
    }
    println!("proxy.fftd  {} rows", m.proxy_rows);
    println!("eval.fftd  {} rows", m.eval_rows);
    println!("wrote {}", dir.display());
    Ok(())
}

fn save_outcome(out: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    emit_report(&outcome.report, ReportFormat::Json, &out.join("report.json"))?;
    emit_report(&outcome.report, ReportFormat::Csv, &out.join("report.csv"))?;
    write_file(&out.join("model.fftp"), &serialize_params(&outcome.final_params))?;
    let r = &outcome.report;
    println!(
        "{}: accuracy {:.4}, loss {:.4} after {} round(s); wrote {}",
        r.label,
        r.final_accuracy,
        r.final_loss,
        r.rounds.len(),
        out.display()
    );
    Ok(())
}

fn cmd_run(
    config: &Path,
    mode: RunMode,
    listen: Option<String>,
    server: Option<String>,
    client_id: Option<u32>,
    out: &Path,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if mode == RunMode::Centralized {
        cfg.federation.mode = Mode::Centralized;
    } else if cfg.federation.mode == Mode::Centralized {
        return Err(input(
            "federation.mode is centralized; use --mode centralized or pick fedft/fedavg_full",
        ));
    }
    if let Some(addr) = listen {
        cfg.transport.listen = addr;
    }
    if let Some(addr) = server {
        cfg.transport.server = addr;
    }
    if mode == RunMode::Client && client_id.is_none() {
        return Err(input("--mode client needs --client-id"));
    }
    let data = obtain_data(&cfg)?;
    match mode {
        RunMode::Centralized => save_outcome(out, &run_centralized(&cfg, &data)?),
        RunMode::Simulate => save_outcome(out, &run_simulation(&cfg, &data)?),
        RunMode::Serve => {
            let mut listener = TcpServer::bind(&cfg.transport.listen)
                .with_context(|| format!("bind {}", cfg.transport.listen))?;
            println!(
                "listening on {}, waiting for {} client(s)",
                listener.local_addr()?,
                cfg.federation.n_clients
            );
            save_outcome(out, &run_federated_server(&cfg, &data, &mut listener)?)
        }
        RunMode::Client => {
            let id = client_id.expect("checked above");
            let shard = data
                .clients
                .get(id as usize)
                .ok_or_else(|| input(format!("client id {id} out of range for {} clients", data.clients.len())))?
                .dataset()?;
            let arch = cfg.architecture()?;
            let timeout = Duration::from_secs_f64(cfg.transport.accept_timeout_secs);
            let mut ch = connect_tcp_retry(&cfg.transport.server, timeout)
                .with_context(|| format!("connect to {}", cfg.transport.server))?;
            let outcome = run_client(&mut ch, &arch, &shard, &client_options(&cfg, id))?;
            std::fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
            if let Some(p) = &outcome.final_params {
                write_file(&out.join(format!("client_{id}_model.fftp")), &serialize_params(p))?;
            }
            match outcome.final_eval {
                Some((acc, loss)) => println!(
                    "client {id}: {} round(s), local accuracy {acc:.4}, loss {loss:.4}",
                    outcome.rounds_trained
                ),
                None => println!("client {id}: {} round(s)", outcome.rounds_trained),
            }
            Ok(())
        }
    }
}

const COLUMNS: [&str; 7] = [
    "framework",
    "accuracy",
    "loss",
    "memory_kb",
    "client_time_ms",
    "rounds",
    "file",
];

fn row(r: &ExperimentReport, path: &Path) -> [String; 7] {
    [
        r.label.clone(),
        format!("{:.4}", r.final_accuracy),
        format!("{:.4}", r.final_loss),
        format!("{:.1}", r.memory.total_bytes as f64 / 1024.0),
        format!("{:.0}", r.mean_client_time_ms),
        r.rounds.len().to_string(),
        path.display().to_string(),
    ]
}

fn render_table(rows: &[[String; 7]], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        TableFormat::Text => {
            let mut width = COLUMNS.map(str::len);
            for r in rows {
                for (w, cell) in width.iter_mut().zip(r) {
                    *w = (*w).max(cell.len());
                }
            }
            let line = |cells: Vec<&str>| -> String {
                let padded: Vec<String> = cells
                    .iter()
                    .zip(width)
                    .enumerate()
                    .map(|(i, (c, w))| if i == 0 || i == 6 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                padded.join("  ").trim_end().to_string() + "\n"
            };
            out.push_str(&line(COLUMNS.to_vec()));
            let rule = width.map(|w| "-".repeat(w));
            out.push_str(&line(rule.iter().map(String::as_str).collect()));
            for r in rows {
                out.push_str(&line(r.iter().map(String::as_str).collect()));
            }
        }
    }
    out
}

fn cmd_report(paths: &[PathBuf], format: TableFormat) -> Result<()> {
    let rows = paths
        .iter()
        .map(|p| read_report(p).map(|r| row(&r, p)))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", render_table(&rows, format));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { config, out } => cmd_prepare(&config, out),
        Command::Run {
            config,
            mode,
            listen,
            server,
            client_id,
            out,
        } => cmd_run(&config, mode, listen, server, client_id, &out),
        Command::Report { paths, format } => cmd_report(&paths, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedft_core::transport::TransportError;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&input("x")), 2);
        assert_eq!(exit_code(&FedError::Config("x".into()).into()), 2);
        assert_eq!(exit_code(&FedError::Transport(TransportError::Timeout("accept".into())).into()), 3);
        let wrapped = anyhow::Error::from(FedError::Config("x".into())).context("outer");
        assert_eq!(exit_code(&wrapped), 2);
    }

    #[test]
    fn text_table_aligns() {
        let rows = vec![
            ["FedFT-3".to_string(), "0.9500".into(), "0.1".into(), "1.0".into(), "5".into(), "1".into(), "a".into()],
            ["Centralized".to_string(), "0.9".into(), "0.25".into(), "10.0".into(), "50".into(), "10".into(), "b".into()],
        ];
        let t = render_table(&rows, TableFormat::Text);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("FedFT-3    "));
        let csv = render_table(&rows, TableFormat::Csv);
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
