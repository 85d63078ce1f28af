use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;

use cacti_bench::bandwidth::bench_bandwidth;
use cacti_bench::phases::{bench_lists, bench_signatures, bench_timestamps, ListMode};
use cacti_bench::report::{write_bandwidth, write_phases, write_signatures, PhaseRow};
use cacti_bench::Lab;
use cacti_core::client::wire::Message;
use cacti_core::client::{ConfirmationPolicy, Guard, Host};
use cacti_core::groupsig::{GroupManager, MasterSecret};
use cacti_core::services::{ProvisioningAuthority, TrustedPa, Verifier, VerifierConfig};
use cacti_core::tee::{ManufacturerKey, ServerKey};
use cacti_core::Timestamp;
use cacti_http::{flows, pa_router, system_clock, verifier_router, HttpClient, PaState, Running, VerifierState};

#[derive(Parser)]
#[command(name = "cacti", version, about = "Rate-proof client, servers and benchmarks")]
struct Cli {
    /// Client state directory (store, sealed blob, hardware file, journal).
    #[arg(long, global = true, default_value = ".cacti")]
    home: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join the group of the PA at ADDR.
    Provision {
        #[arg(long)]
        pa: SocketAddr,
    },
    /// Answer the VISIT_REQUEST in FILE; prints the VISIT_RESPONSE.
    Visit {
        file: PathBuf,
        #[command(flatten)]
        confirm: Confirm,
        /// Post the response to this verifier and print its verdict.
        #[arg(long)]
        submit: Option<SocketAddr>,
    },
    /// Merge global-list timestamps before T_P into its count.
    PruneGlobal {
        #[arg(allow_negative_numbers = true)]
        t_p: i32,
    },
    /// Recompute every chain and the Merkle root; exit 1 on any mismatch.
    Audit,
    /// Serve length-prefixed frames on stdin/stdout.
    Stdio {
        #[command(flatten)]
        confirm: Confirm,
    },
    /// Phase, signature and bandwidth benchmarks as CSV.
    Bench(BenchArgs),
    /// Run a provisioning authority.
    ServePa {
        #[arg(long, default_value = "127.0.0.1:8701")]
        addr: SocketAddr,
        #[arg(long, default_value = "pa")]
        name: String,
        /// Group master secret; created on first start.
        #[arg(long)]
        master: Option<PathBuf>,
    },
    /// Run a verifier.
    ServeVerifier {
        #[arg(long, default_value = "127.0.0.1:8702")]
        addr: SocketAddr,
        /// VERIFIER_CONFIG file (list, window, k, trusted PA keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trust the PA at this address, fetching its group key.
        #[arg(long)]
        pa: Option<SocketAddr>,
        #[arg(long, default_value = "example.com")]
        list: String,
        #[arg(long, default_value_t = 86_400)]
        window: i64,
        #[arg(long, default_value_t = 10)]
        k: u64,
    },
}

#[derive(clap::Args)]
struct Confirm {
    #[arg(long, value_enum, default_value_t = Policy::Always)]
    policy: Policy,
    /// Approve every request that needs confirmation without asking.
    #[arg(long)]
    yes: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Always,
    FirstVisit,
    Untrusted,
    Never,
}

impl From<Policy> for ConfirmationPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Always => ConfirmationPolicy::AlwaysAsk,
            Policy::FirstVisit => ConfirmationPolicy::AskFirstVisit,
            Policy::Untrusted => ConfirmationPolicy::AskUntrusted,
            Policy::Never => ConfirmationPolicy::NeverAsk,
        }
    }
}

#[derive(clap::Args)]
struct BenchArgs {
    /// List sizes for the timestamp benchmark, e.g. 10,100,1000,10000.
    #[arg(long, value_delimiter = ',')]
    timestamps: Vec<usize>,
    /// List counts for the list benchmark, e.g. 1,64,4096.
    #[arg(long, value_delimiter = ',')]
    lists: Vec<usize>,
    /// Target an existing list or a new one; both when omitted.
    #[arg(long)]
    mode: Option<ListMode>,
    #[arg(long)]
    signatures: bool,
    #[arg(long)]
    bandwidth: bool,
    /// Every benchmark at its standard sizes.
    #[arg(long)]
    all: bool,
    /// Timed runs per point (at least 10).
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Write the phase table here; signature and bandwidth tables go next
    /// to it as <stem>-signatures.csv and <stem>-bandwidth.csv. Stdout when
    /// omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Provision { pa } => {
            let mut host = open(&cli.home)?;
            let gpk = flows::provision(&mut host, &HttpClient::new(pa))?;
            println!("provisioned; group {}", gpk.fingerprint());
        }
        Command::Visit {
            file,
            confirm,
            submit,
        } => {
            let text = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let Message::VisitRequest { request, reply_url } = Message::decode(&text)? else {
                bail!("{} does not hold a VISIT_REQUEST", file.display());
            };
            let mut host = open(&cli.home)?;
            configure(&mut host, &confirm, true);
            let result = host
                .visit(&request, Timestamp::now())
                .map_err(|e| cacti_core::client::wire::ErrorReply::new(e.code(), &e));
            let failed = result.is_err();
            let body = Message::VisitResponse(result).encode();
            io::stdout().write_all(&body)?;
            if failed {
                return Ok(ExitCode::FAILURE);
            }
            if let Some(addr) = submit {
                let ex = HttpClient::new(addr).post(&reply_url, &body)?;
                println!("{} {}", ex.status, String::from_utf8_lossy(&ex.body).trim_end());
                return Ok(if ex.status == 200 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
            }
        }
        Command::PruneGlobal { t_p } => {
            let mut host = open(&cli.home)?;
            let changed = host.prune_global(Timestamp(t_p))?;
            println!("{}", if changed { "pruned" } else { "unchanged" });
        }
        Command::Audit => {
            let host = open(&cli.home)?;
            let audit = host.audit()?;
            println!(
                "lists={} timestamps={} bad_rows={} root_matches={}",
                audit.store.lists,
                audit.store.timestamps,
                audit.store.bad_rows.len(),
                audit.root_matches
            );
            for (list, t) in &audit.store.bad_rows {
                println!("bad row: {list} {t}");
            }
            if !audit.is_clean() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Stdio { confirm } => {
            let mut host = open(&cli.home)?;
            // Stdin carries frames, so there is nobody to ask.
            configure(&mut host, &confirm, false);
            host.run_stdio(&mut io::stdin().lock(), &mut io::stdout().lock())?;
        }
        Command::Bench(args) => bench(args)?,
        Command::ServePa { addr, name, master } => {
            let manager = match &master {
                Some(path) if path.exists() => {
                    let bytes = fs::read(path)?;
                    GroupManager::from_master(MasterSecret::from_bytes(&bytes)?)
                }
                _ => {
                    let manager = GroupManager::setup(128, &mut OsRng)?;
                    if let Some(path) = &master {
                        fs::write(path, manager.master().to_bytes())?;
                    }
                    manager
                }
            };
            let pa = ProvisioningAuthority::from_manager(name, ManufacturerKey::development(), manager);
            println!("group {}", pa.gpk().fingerprint());
            let running = Running::spawn_on(addr, pa_router(PaState::new(pa, system_clock())))?;
            println!("provisioning authority on http://{}", running.addr);
            running.wait();
        }
        Command::ServeVerifier {
            addr,
            config,
            pa,
            list,
            window,
            k,
        } => {
            let mut cfg = match config {
                Some(path) => VerifierConfig::parse(&fs::read_to_string(path)?)?,
                None => VerifierConfig {
                    policy: cacti_core::services::ThresholdPolicy::new(list, window, k),
                    trusted: Vec::new(),
                },
            };
            if let Some(pa) = pa {
                let client = HttpClient::new(pa);
                cfg.trusted.push(TrustedPa {
                    name: pa.to_string(),
                    gpk: flows::fetch_gpk(&client)?,
                    revoked: flows::fetch_revocation_list(&client)?,
                });
            }
            if cfg.trusted.is_empty() {
                bail!("no trusted PA: pass --pa or a config with pa.<name> keys");
            }
            let verifier = Verifier::new(cfg.policy, Some(ServerKey::generate(&mut OsRng)), cfg.trusted);
            let state = VerifierState::new(verifier, system_clock());
            let running = Running::spawn_on(addr, verifier_router(state))?;
            println!("verifier on http://{}", running.addr);
            running.wait();
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn open(home: &Path) -> Result<Host> {
    Host::open(home).with_context(|| format!("opening client state in {}", home.display()))
}

fn configure(host: &mut Host, confirm: &Confirm, may_prompt: bool) {
    host.guard = Guard::new(confirm.policy.into());
    let yes = confirm.yes;
    host.set_confirmer(move |req| {
        if yes {
            return true;
        }
        if !may_prompt {
            return false;
        }
        eprint!(
            "allow a rate-proof for {} (k={}, since {})? [y/N] ",
            req.list_name, req.k, req.t_s
        );
        let mut line = String::new();
        io::stdin().lock().read_line(&mut line).is_ok() && line.trim().eq_ignore_ascii_case("y")
    });
}

fn bench(mut args: BenchArgs) -> Result<()> {
    if args.all {
        args.timestamps = vec![10, 100, 1000, 10_000];
        args.lists = vec![1, 16, 256, 4096];
        args.signatures = true;
        args.bandwidth = true;
    }
    if args.timestamps.is_empty() && args.lists.is_empty() && !args.signatures && !args.bandwidth {
        bail!("nothing to run: pass --timestamps, --lists, --signatures, --bandwidth or --all");
    }
    let modes = match args.mode {
        Some(m) => vec![m],
        None => vec![ListMode::Existing, ListMode::New],
    };

    let mut lab = Lab::new();
    let mut rows = Vec::new();
    for &n in &args.timestamps {
        eprintln!("timestamps n={n}");
        rows.push(PhaseRow {
            bench: "timestamps",
            param: n,
            mode: None,
            report: bench_timestamps(&mut lab, n.max(1), args.runs),
        });
    }
    for &s in &args.lists {
        for &mode in &modes {
            eprintln!("lists s={s} mode={mode}");
            rows.push(PhaseRow {
                bench: "lists",
                param: s,
                mode: Some(mode),
                report: bench_lists(&mut lab, s.max(1), mode, args.runs),
            });
        }
    }

    let sibling = |suffix: &str| -> Option<PathBuf> {
        let path = args.csv.as_ref()?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        Some(path.with_file_name(format!("{stem}-{suffix}.csv")))
    };
    let sink = |path: Option<PathBuf>| -> Result<Box<dyn Write>> {
        Ok(match path {
            Some(p) => Box::new(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(io::stdout()),
        })
    };

    if !rows.is_empty() {
        write_phases(sink(args.csv.clone())?, &rows)?;
    }
    if args.signatures {
        eprintln!("signatures");
        write_signatures(sink(sibling("signatures"))?, &bench_signatures(args.runs))?;
    }
    if args.bandwidth {
        eprintln!("bandwidth");
        let r = bench_bandwidth().map_err(|e| anyhow!("bandwidth exchange: {e}"))?;
        write_bandwidth(sink(sibling("bandwidth"))?, &r)?;
    }
    Ok(())
}
