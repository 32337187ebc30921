//! `simharness` — scenario runner, auth demo, and auth service host.
//!
//! Exit codes: 0 success, 2 configuration/fixture error, 3 scenario
//! assertion failure.

use clap::{Parser, Subcommand};
use mdds_core::services::auth::{AuthFlow, AuthGateway, GatewayConfig};
use mdds_core::services::cards::CardStore;
use mdds_core::services::clock::{parse_date, ServiceClock};
use mdds_core::services::http::HttpServer;
use mdds_core::services::store::AccountStore;
use simharness::runner::{run_scenario, run_scenario_realtime, ScenarioError};
use simharness::scenario::ScenarioConfig;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "simharness", about = "Scenario runner for the mdds middleware stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config (or a named preset) and print the metrics
    /// report as JSON.
    Run {
        /// Scenario JSON path, or one of: mp32, mmog256, mmog256_lossy.
        #[arg(long)]
        config: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Wall clock + real UDP sockets instead of the simulator.
        #[arg(long)]
        realtime: bool,
        /// UDP base port for realtime mode.
        #[arg(long, default_value_t = 7400)]
        base_port: u16,
        /// Override drop probability.
        #[arg(long)]
        loss: Option<f64>,
        /// Override mean latency (ms).
        #[arg(long)]
        latency_mean: Option<u64>,
        /// Override latency jitter (ms).
        #[arg(long)]
        latency_jitter: Option<u64>,
        /// Override player count.
        #[arg(long)]
        players: Option<u32>,
        /// Override duration (simulated seconds).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Exercise the account approval flow over fixture files.
    AuthDemo {
        #[arg(long)]
        accounts: PathBuf,
        #[arg(long)]
        cards: PathBuf,
        /// Extra completion-order trials.
        #[arg(long, default_value_t = 4)]
        trials: u32,
        /// Fixture clock date (MM/DD/YYYY).
        #[arg(long, default_value = "01/01/2014")]
        today: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Host the login/session/join HTTP endpoints.
    ServeAuth {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        accounts: PathBuf,
        #[arg(long)]
        cards: PathBuf,
        /// Fixture clock date (MM/DD/YYYY); defaults to the system date.
        #[arg(long)]
        today: Option<String>,
        /// Session token TTL in seconds.
        #[arg(long, default_value_t = 900)]
        ttl_s: u64,
        /// Game domain granted to admitted sessions.
        #[arg(long, default_value_t = 0)]
        domain_id: u8,
        /// Initial AOI regions granted on join (comma separated).
        #[arg(long, default_value = "0,1,2,3", value_delimiter = ',')]
        aoi: Vec<u32>,
    },
}

fn load_scenario(spec: &str) -> Result<(ScenarioConfig, String), String> {
    match spec {
        "mp32" => Ok((ScenarioConfig::mp32(), "mp32".to_string())),
        "mmog256" => Ok((ScenarioConfig::mmog256(), "mmog256".to_string())),
        "mmog256_lossy" => Ok((ScenarioConfig::mmog256_lossy(), "mmog256_lossy".to_string())),
        path => {
            let p = std::path::Path::new(path);
            let config = ScenarioConfig::load(p)?;
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| path.to_string());
            Ok((config, name))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            realtime,
            base_port,
            loss,
            latency_mean,
            latency_jitter,
            players,
            duration,
        } => {
            let (mut scenario, name) = match load_scenario(&config) {
                Ok(loaded) => loaded,
                Err(message) => {
                    eprintln!("{message}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                scenario.seed = seed;
                scenario.net.rng_seed = seed;
            }
            if let Some(loss) = loss {
                scenario.net.drop_probability = loss;
            }
            if let Some(mean) = latency_mean {
                scenario.net.latency_mean_ms = mean;
            }
            if let Some(jitter) = latency_jitter {
                scenario.net.latency_jitter_ms = jitter;
            }
            if let Some(players) = players {
                scenario.players = players;
            }
            if let Some(duration) = duration {
                scenario.duration_s = duration;
            }
            let outcome = if realtime {
                run_scenario_realtime(&scenario, &name, base_port)
            } else {
                run_scenario(&scenario, &name)
            };
            let output = match outcome {
                Ok(output) => output,
                Err(ScenarioError::Config(message)) => {
                    eprintln!("config error: {message}");
                    return ExitCode::from(2);
                }
                Err(error) => {
                    eprintln!("{error}");
                    return ExitCode::FAILURE;
                }
            };
            let json = output.report.to_json_pretty();
            if let Some(path) = out {
                if let Err(error) = std::fs::write(&path, format!("{json}\n")) {
                    eprintln!("cannot write {}: {error}", path.display());
                    return ExitCode::FAILURE;
                }
            } else {
                println!("{json}");
            }
            eprintln!("wall clock: {} ms", output.wall_ms);
            if output.report.all_assertions_passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "failed assertions: {}",
                    output.report.failed_assertions().join(", ")
                );
                ExitCode::from(3)
            }
        }
        Command::AuthDemo {
            accounts,
            cards,
            trials,
            today,
            out,
        } => {
            let Some(today) = parse_date(&today) else {
                eprintln!("--today must be MM/DD/YYYY");
                return ExitCode::from(2);
            };
            match simharness::authdemo::run_auth_demo(&accounts, &cards, trials, today) {
                Ok(report) => {
                    let json = serde_json::to_string_pretty(&report).expect("serializes");
                    if let Some(path) = out {
                        if let Err(error) = std::fs::write(&path, format!("{json}\n")) {
                            eprintln!("cannot write {}: {error}", path.display());
                            return ExitCode::FAILURE;
                        }
                    } else {
                        println!("{json}");
                    }
                    if report.all_passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(simharness::authdemo::AuthDemoError::Fixture(message)) => {
                    eprintln!("fixture error: {message}");
                    ExitCode::from(2)
                }
                Err(error) => {
                    eprintln!("{error}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::ServeAuth {
            port,
            accounts,
            cards,
            today,
            ttl_s,
            domain_id,
            aoi,
        } => {
            let clock = match today {
                Some(text) => match parse_date(&text) {
                    Some(date) => ServiceClock::fixed(date),
                    None => {
                        eprintln!("--today must be MM/DD/YYYY");
                        return ExitCode::from(2);
                    }
                },
                None => ServiceClock::system(),
            };
            let accounts = match AccountStore::load_jsonl(&accounts) {
                Ok(store) => store,
                Err(error) => {
                    eprintln!("accounts fixture: {error}");
                    return ExitCode::from(2);
                }
            };
            let cards = match CardStore::load_jsonl(&cards) {
                Ok(store) => store,
                Err(error) => {
                    eprintln!("cards fixture: {error}");
                    return ExitCode::from(2);
                }
            };
            let flow =
                match AuthFlow::in_process(Arc::new(accounts), Arc::new(cards), clock.clone()) {
                    Ok(flow) => flow,
                    Err(error) => {
                        eprintln!("process definition: {error}");
                        return ExitCode::from(2);
                    }
                };
            let gateway = Arc::new(AuthGateway::new(
                flow,
                clock,
                GatewayConfig {
                    domain_id,
                    initial_aoi: aoi,
                    token_ttl_ms: ttl_s * 1000,
                },
            ));
            let server = match HttpServer::spawn(&format!("0.0.0.0:{port}"), gateway.handler()) {
                Ok(server) => server,
                Err(error) => {
                    eprintln!("cannot bind port {port}: {error}");
                    return ExitCode::from(2);
                }
            };
            eprintln!("auth service listening on {}", server.addr());
            loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            }
        }
    }
}
