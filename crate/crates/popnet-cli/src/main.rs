//! `popnet` — bring a multi-PoP platform up and operate it over HTTP.
//!
//! `up` is the only long-running verb: it compiles a topology, serves one
//! management endpoint per PoP and advances the virtual clock once per
//! wall-clock second until interrupted. Every other operational verb is a
//! thin HTTP client against those endpoints, so anything the CLI can do an
//! external orchestrator can do with the same requests. `scenario run` is
//! fully local: it replays a workload on a fresh in-process platform and
//! writes the usage series as CSV.
//!
//! Exit codes: 0 success, 1 the platform refused the operation (admission
//! rejection, unknown id, chain conflict), 2 the request never made sense
//! (bad flags, malformed files, no platform listening).

mod client;
mod render;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use popnet_core::model::ModelRegistry;
use popnet_core::sim::builtin::{builtin_names, builtin_scenario, builtin_sweep, run_sweep};
use popnet_core::sim::{load_scenario, run_scenario};
use popnet_core::topology::{parse_topology, Topology, TopologyDoc};
use popnet_core::{PathMetric, PlatformState};
use popnet_core::InstanceId;
use popnet_service::{
    spawn_wall_clock_ticker, start_endpoints, AllocateRequest, ChainRequest, EndpointRegistry,
    ServiceError,
};

use client::{core_error, Client, CliError, CliResult};

/// Default port of the first PoP's endpoint, overridable with
/// `POPNET_BASE_PORT`.
const DEFAULT_BASE_PORT: u16 = 8081;

#[derive(Parser)]
#[command(name = "popnet", version, about = "Desk-scale multi-PoP NFV emulation")]
struct Cli {
    /// Print raw JSON responses instead of tables.
    #[arg(long, global = true)]
    json: bool,

    /// Base management endpoint (any PoP's listener). Defaults to the first
    /// PoP at 127.0.0.1 on POPNET_BASE_PORT (8081 when unset).
    #[arg(long, global = true)]
    endpoint: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a topology and serve its endpoints until interrupted.
    Up {
        /// Topology document (TOML).
        #[arg(long)]
        topology: PathBuf,
        /// Platform-wide CPU budget e_cpu in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        e_cpu: f64,
    },
    /// List every PoP with model, occupancy and endpoint.
    Pops,
    /// List compute instances, platform-wide or for one PoP.
    Instances {
        #[arg(long)]
        pop: Option<String>,
    },
    /// Allocate one compute instance.
    Alloc {
        /// Hosting PoP.
        #[arg(long)]
        pop: String,
        /// CPU compute units.
        #[arg(long)]
        cu: u64,
        /// Memory in MB.
        #[arg(long)]
        mem: Option<u64>,
        /// Workload image name.
        #[arg(long)]
        image: Option<String>,
        /// CPU demand in [0, 1].
        #[arg(long)]
        demand: Option<f64>,
    },
    /// Release a compute instance.
    Release {
        /// Instance id (any PoP).
        id: String,
    },
    /// Install or remove service chains.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Inspect service chains.
    #[command(subcommand)]
    Chains(ChainsCommand),
    /// Platform statistics, or one instance's usage history.
    Stats {
        /// Instance id; omit for the platform-wide snapshot.
        id: Option<String>,
    },
    /// Walk a payload along a chain and report delay, bottleneck and loss.
    Traffic {
        /// Chain id.
        id: String,
        /// Payload size in megabits.
        #[arg(long)]
        mbits: f64,
    },
    /// Run workload scenarios locally.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Install a chain over two or more instances, in hop order.
    Set {
        /// Instance ids, first to last hop.
        #[arg(required = true, num_args = 2..)]
        ids: Vec<String>,
        /// Path selection metric.
        #[arg(long, value_enum, default_value_t = MetricArg::Hops)]
        metric: MetricArg,
    },
    /// Remove a chain and free its VLAN tag.
    Del {
        /// Chain id.
        id: String,
    },
}

#[derive(Subcommand)]
enum ChainsCommand {
    /// List every installed chain.
    Dump,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Replay a scenario and export the usage series as CSV.
    Run {
        /// Scenario file (TOML), or the name of a built-in.
        source: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    /// Fewest links end to end.
    Hops,
    /// Smallest accumulated link delay.
    Delay,
}

impl From<MetricArg> for PathMetric {
    fn from(arg: MetricArg) -> Self {
        match arg {
            MetricArg::Hops => PathMetric::FewestHops,
            MetricArg::Delay => PathMetric::SmallestDelay,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let base = cli.endpoint.clone().unwrap_or_else(default_endpoint);
    match cli.command {
        Command::Up { topology, e_cpu } => cmd_up(&topology, e_cpu),
        Command::Pops => cmd_pops(&base, cli.json),
        Command::Instances { pop } => cmd_instances(&base, pop.as_deref(), cli.json),
        Command::Alloc {
            pop,
            cu,
            mem,
            image,
            demand,
        } => cmd_alloc(&base, &pop, cu, mem, image, demand, cli.json),
        Command::Release { id } => cmd_release(&base, &id, cli.json),
        Command::Chain(ChainCommand::Set { ids, metric }) => {
            cmd_chain_set(&base, &ids, metric.into(), cli.json)
        }
        Command::Chain(ChainCommand::Del { id }) => cmd_chain_del(&base, &id, cli.json),
        Command::Chains(ChainsCommand::Dump) => cmd_chains_dump(&base, cli.json),
        Command::Stats { id } => cmd_stats(&base, id.as_deref(), cli.json),
        Command::Traffic { id, mbits } => cmd_traffic(&base, &id, mbits, cli.json),
        Command::Scenario(ScenarioCommand::Run { source, out }) => {
            cmd_scenario_run(&source, &out, cli.json)
        }
    }
}

fn default_endpoint() -> String {
    format!("http://127.0.0.1:{}", base_port())
}

fn base_port() -> u16 {
    std::env::var("POPNET_BASE_PORT")
        .ok()
        .and_then(|raw| raw.parse().ok())
        .unwrap_or(DEFAULT_BASE_PORT)
}

// ---------------------------------------------------------------------------
// up
// ---------------------------------------------------------------------------

fn cmd_up(topology_path: &Path, e_cpu: f64) -> CliResult<()> {
    let text = std::fs::read_to_string(topology_path).map_err(|err| {
        CliError::Usage(format!(
            "cannot read topology `{}`: {err}",
            topology_path.display()
        ))
    })?;
    let mut doc = parse_topology(&text).map_err(core_error)?;
    assign_ports(&mut doc)?;
    let topology = Topology::build(&doc).map_err(core_error)?;
    let registry = ModelRegistry::builtin();
    let platform = popnet_service::shared(
        PlatformState::new(topology, e_cpu, &registry).map_err(core_error)?,
    );

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|err| CliError::Usage(format!("cannot start async runtime: {err}")))?;

    runtime.block_on(async {
        let handle = start_endpoints(Arc::clone(&platform), &EndpointRegistry::builtin())
            .await
            .map_err(service_error)?;

        println!("platform up: {} PoPs, cpu budget {e_cpu}", handle.endpoints().len());
        for endpoint in handle.endpoints() {
            println!("{}: http://{}", endpoint.pop, endpoint.addr);
        }
        println!("virtual clock ticking once per second; Ctrl-C to stop");
        // Tests and scripts read these lines from a pipe; make sure they
        // arrive before the long wait.
        let _ = std::io::stdout().flush();

        let ticker = spawn_wall_clock_ticker(Arc::clone(&platform), Duration::from_secs(1));
        tokio::signal::ctrl_c()
            .await
            .map_err(|err| CliError::Usage(format!("cannot listen for Ctrl-C: {err}")))?;
        ticker.abort();
        handle.shutdown().await;
        println!("platform stopped");
        Ok(())
    })
}

/// Applies `POPNET_BASE_PORT` and resolves ephemeral ports.
///
/// With a base port set, PoPs get consecutive ports in name order: the first
/// PoP listens on the base port itself, so client verbs find it by default.
/// A base of 0 makes every listener ephemeral. Any port still 0 afterwards
/// is resolved by briefly binding it, so the declared topology — and with it
/// `/pops` discovery — always names real ports.
fn assign_ports(doc: &mut TopologyDoc) -> CliResult<()> {
    if let Ok(raw) = std::env::var("POPNET_BASE_PORT") {
        let base: u16 = raw.parse().map_err(|_| {
            CliError::Usage(format!("POPNET_BASE_PORT must be a port number, got `{raw}`"))
        })?;
        let mut names: Vec<_> = doc.pops.iter().map(|p| p.name.clone()).collect();
        names.sort();
        for pop in &mut doc.pops {
            let index = names.iter().position(|n| *n == pop.name).unwrap() as u16;
            if let Some(endpoint) = &mut pop.endpoint {
                endpoint.port = if base == 0 {
                    0
                } else {
                    base.checked_add(index).ok_or_else(|| {
                        CliError::Usage(format!(
                            "POPNET_BASE_PORT {base} leaves no room for {} PoPs",
                            names.len()
                        ))
                    })?
                };
            }
        }
    }
    for pop in &mut doc.pops {
        if let Some(endpoint) = &mut pop.endpoint {
            if endpoint.port == 0 {
                let listener = std::net::TcpListener::bind((endpoint.bind.as_str(), 0))
                    .map_err(|err| {
                        CliError::Usage(format!(
                            "cannot pick a port on {} for PoP `{}`: {err}",
                            endpoint.bind, pop.name
                        ))
                    })?;
                let port = listener
                    .local_addr()
                    .map_err(|err| CliError::Usage(err.to_string()))?
                    .port();
                // Racy by nature (the port is free again until the platform
                // binds it), but good enough for development and tests.
                drop(listener);
                endpoint.port = port;
            }
        }
    }
    Ok(())
}

fn service_error(err: ServiceError) -> CliError {
    CliError::Usage(err.to_string())
}

// ---------------------------------------------------------------------------
// Read verbs
// ---------------------------------------------------------------------------

fn cmd_pops(base: &str, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    let pops: Vec<Value> = fetch_json(client.get(&client.base_url("/pops"))?)?;
    if json {
        println!("{}", render::json_pretty(&Value::Array(pops)));
    } else {
        print!("{}", render::pops_table(&pops));
    }
    Ok(())
}

fn cmd_instances(base: &str, pop: Option<&str>, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    let pops = client.pops()?;
    let endpoints = match pop {
        Some(name) => vec![(name.to_owned(), client.endpoint_of(&pops, name)?)],
        None => client.all_endpoints(&pops),
    };
    let mut instances = Vec::new();
    for (_, url) in &endpoints {
        let mut page: Vec<Value> = fetch_json(client.get(&format!("{url}/instances"))?)?;
        instances.append(&mut page);
    }
    if json {
        println!("{}", render::json_pretty(&Value::Array(instances)));
    } else {
        print!("{}", render::instances_table(&instances));
    }
    Ok(())
}

fn cmd_stats(base: &str, id: Option<&str>, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    match id {
        None => {
            let stats: Value = fetch_json(client.get(&client.base_url("/platform/stats"))?)?;
            if json {
                println!("{}", render::json_pretty(&stats));
            } else {
                print!("{}", render::platform_stats_lines(&stats));
            }
        }
        Some(id) => {
            let (_, response) = probe_instance(&client, id, &format!("/instances/{id}/stats"))?;
            let stats: Value = fetch_json(response)?;
            if json {
                println!("{}", render::json_pretty(&stats));
            } else {
                print!("{}", render::instance_stats_lines(&stats));
            }
        }
    }
    Ok(())
}

fn cmd_chains_dump(base: &str, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    let chains: Vec<Value> = fetch_json(client.get(&client.base_url("/chains"))?)?;
    if json {
        println!("{}", render::json_pretty(&Value::Array(chains)));
    } else {
        print!("{}", render::chains_table(&chains));
    }
    Ok(())
}

fn cmd_traffic(base: &str, id: &str, mbits: f64, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    let url = client.base_url(&format!("/chains/{id}/traffic?mbits={mbits}"));
    let report: Value = fetch_json(client.get(&url)?)?;
    if json {
        println!("{}", render::json_pretty(&report));
    } else {
        print!("{}", render::traffic_lines(&report));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mutating verbs
// ---------------------------------------------------------------------------

fn cmd_alloc(
    base: &str,
    pop: &str,
    cu: u64,
    mem: Option<u64>,
    image: Option<String>,
    demand: Option<f64>,
    json: bool,
) -> CliResult<()> {
    let client = Client::new(base);
    let pops = client.pops()?;
    let endpoint = client.endpoint_of(&pops, pop)?;
    let body = AllocateRequest {
        cpu_cus: cu,
        memory_mb: mem.unwrap_or(0),
        storage_gb: 0,
        image,
        demand,
    };
    let created: Value = fetch_json(client.post_json(&format!("{endpoint}/instances"), &body)?)?;
    if json {
        println!("{}", render::json_pretty(&created));
    } else {
        let instance = &created["instance"];
        println!(
            "allocated {} on {} (limit {})",
            instance["id"].as_str().unwrap_or("?"),
            pop,
            instance["cpu_fraction"]
        );
        if let Some(updates) = created["updated_fractions"].as_object() {
            for (other, fraction) in updates {
                println!("repriced {other} -> {fraction}");
            }
        }
    }
    Ok(())
}

fn cmd_release(base: &str, id: &str, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    let pops = client.pops()?;
    for (_, url) in client.all_endpoints(&pops) {
        if let Some(_response) = client.try_delete(&format!("{url}/instances/{id}"))? {
            if json {
                println!("{}", render::json_pretty(&serde_json::json!({ "released": id })));
            } else {
                println!("released {id}");
            }
            return Ok(());
        }
    }
    Err(CliError::Domain(format!("unknown instance `{id}`")))
}

fn cmd_chain_set(base: &str, ids: &[String], metric: PathMetric, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    let body = ChainRequest {
        hops: ids.iter().map(|id| InstanceId::from(id.as_str())).collect(),
        metric,
    };
    let chain: Value = fetch_json(client.post_json(&client.base_url("/chains"), &body)?)?;
    if json {
        println!("{}", render::json_pretty(&chain));
    } else {
        let hops = chain["hops"]
            .as_array()
            .map(|hops| {
                hops.iter()
                    .map(|h| h.as_str().unwrap_or("?").to_owned())
                    .collect::<Vec<_>>()
                    .join(" -> ")
            })
            .unwrap_or_default();
        println!(
            "installed {} (vlan {}): {hops}",
            chain["id"].as_str().unwrap_or("?"),
            chain["vlan_tag"]
        );
    }
    Ok(())
}

fn cmd_chain_del(base: &str, id: &str, json: bool) -> CliResult<()> {
    let client = Client::new(base);
    client.delete(&client.base_url(&format!("/chains/{id}")))?;
    if json {
        println!("{}", render::json_pretty(&serde_json::json!({ "removed": id })));
    } else {
        println!("removed {id}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// scenario run
// ---------------------------------------------------------------------------

fn cmd_scenario_run(source: &str, out: &Path, json: bool) -> CliResult<()> {
    let registry = ModelRegistry::builtin();

    // Built-ins first: a sweep name exports steady-state rows per sweep
    // point, everything else is an ordinary timed scenario.
    if let Some(variant) = builtin_sweep(source) {
        let summary = run_sweep(variant, &registry).map_err(core_error)?;
        let csv = summary.to_csv();
        std::fs::write(out, &csv)
            .map_err(|err| CliError::Usage(format!("cannot write `{}`: {err}", out.display())))?;
        let rows = summary.rows.len();
        if json {
            println!(
                "{}",
                render::json_pretty(&serde_json::json!({
                    "sweep": summary.name,
                    "rows": rows,
                    "out": out.display().to_string(),
                }))
            );
        } else {
            println!("wrote {rows} sweep rows to {}", out.display());
        }
        return Ok(());
    }

    let scenario = if let Some(builtin) = builtin_scenario(source) {
        builtin
    } else if Path::new(source).exists() {
        load_scenario(Path::new(source)).map_err(core_error)?
    } else {
        return Err(CliError::Usage(format!(
            "`{source}` is neither a scenario file nor a built-in (built-ins: {})",
            builtin_names().join(", ")
        )));
    };

    let series = run_scenario(&scenario, &registry).map_err(core_error)?;
    std::fs::write(out, series.to_csv())
        .map_err(|err| CliError::Usage(format!("cannot write `{}`: {err}", out.display())))?;
    if json {
        println!(
            "{}",
            render::json_pretty(&serde_json::json!({
                "scenario": series.scenario,
                "samples": series.samples.len(),
                "accepted": series.accepted_count(),
                "rejected": series.rejected_count(),
                "out": out.display().to_string(),
            }))
        );
    } else {
        println!(
            "wrote {} samples to {} ({} accepted, {} rejected)",
            series.samples.len(),
            out.display(),
            series.accepted_count(),
            series.rejected_count()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn fetch_json<T: serde::de::DeserializeOwned>(
    response: reqwest::blocking::Response,
) -> CliResult<T> {
    response
        .json()
        .map_err(|err| CliError::Usage(format!("malformed response from the platform: {err}")))
}

/// Finds the endpoint owning `id` by probing each PoP's listener with
/// `path`; unknown ids are a domain error.
fn probe_instance(
    client: &Client,
    id: &str,
    path: &str,
) -> CliResult<(String, reqwest::blocking::Response)> {
    let pops = client.pops()?;
    for (pop, url) in client.all_endpoints(&pops) {
        if let Some(response) = client.try_get(&format!("{url}{path}"))? {
            return Ok((pop, response));
        }
    }
    Err(CliError::Domain(format!("unknown instance `{id}`")))
}
