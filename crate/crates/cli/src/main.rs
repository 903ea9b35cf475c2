//! `lbsim` command line: run scenarios, manage the advertiser and user
//! registries behind a snapshot file, and validate route files.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lbsim_core::geo::GeoPoint;
use lbsim_core::sim::{load_routes, run, SimConfig, SimError};
use lbsim_core::store::{Advertiser, AdvertiserUpdate, Database, StoreError, UserClass};

#[derive(Parser)]
#[command(
    name = "lbsim",
    about = "Deterministic simulator for location-triggered mobile advertising",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file.
    Run {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manage the advertiser registry in a snapshot file.
    #[command(subcommand)]
    Adv(AdvCommand),
    /// Manage user subscriptions in a snapshot file.
    #[command(subcommand)]
    User(UserCommand),
    /// Check route files against the schema without running anything.
    Validate {
        /// Route file or directory of route files.
        #[arg(long)]
        routes: PathBuf,
    },
}

#[derive(Subcommand)]
enum AdvCommand {
    /// Register a new advertiser (creates the snapshot if missing).
    Add {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        secret: String,
        /// Position, meters east.
        #[arg(long)]
        x: f64,
        /// Position, meters north.
        #[arg(long)]
        y: f64,
        /// Service type tag users subscribe to.
        #[arg(long)]
        service: String,
        /// Promotional text attached to every message.
        #[arg(long, default_value = "")]
        promo: String,
        /// Per-advertiser trigger distance in meters.
        #[arg(long)]
        limit: Option<f64>,
    },
    /// Update fields of an existing advertiser (requires the secret).
    Update {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        secret: String,
        #[arg(long, requires = "y")]
        x: Option<f64>,
        #[arg(long, requires = "x")]
        y: Option<f64>,
        #[arg(long)]
        service: Option<String>,
        #[arg(long)]
        promo: Option<String>,
        #[arg(long)]
        limit: Option<f64>,
    },
    /// Remove an advertiser (requires the secret).
    Rm {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        id: String,
        #[arg(long)]
        secret: String,
    },
    /// List registered advertisers.
    List {
        #[command(flatten)]
        snapshot: SnapshotArg,
    },
}

#[derive(Subcommand)]
enum UserCommand {
    /// Subscribe a user, replacing any existing profile.
    Sub {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        msisdn: String,
        #[arg(long, value_enum)]
        class: ClassArg,
        /// Service types to receive; repeat or comma-separate.
        #[arg(long = "subscribe", value_delimiter = ',')]
        subscriptions: Vec<String>,
        /// Mark the handset application as running.
        #[arg(long)]
        app_active: bool,
    },
    /// Remove a user's subscription.
    Unsub {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        msisdn: String,
    },
    /// List subscribed users.
    List {
        #[command(flatten)]
        snapshot: SnapshotArg,
    },
}

#[derive(Args)]
struct SnapshotArg {
    /// Database snapshot file (JSON).
    #[arg(long)]
    snapshot: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Common,
    Gprs,
    GprsGps,
}

impl From<ClassArg> for UserClass {
    fn from(value: ClassArg) -> Self {
        match value {
            ClassArg::Common => UserClass::Common,
            ClassArg::Gprs => UserClass::Gprs,
            ClassArg::GprsGps => UserClass::GprsGps,
        }
    }
}

enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Io { .. } => CliError::Io(err.to_string()),
            _ => CliError::Validation(err.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Io { .. } => CliError::Io(err.to_string()),
            SimError::Store(inner) => inner.into(),
            SimError::Dispatch(lbsim_core::dispatch::DispatchError::Io(_)) => {
                CliError::Io(err.to_string())
            }
            _ => CliError::Validation(err.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let report = run(&cfg)?;
            for msisdn in &report.skipped_routes {
                eprintln!("warning: route for {msisdn:?} has no subscribed user, skipped");
            }
            print!("{}", report.summary());
            Ok(())
        }
        Command::Adv(cmd) => adv_command(cmd),
        Command::User(cmd) => user_command(cmd),
        Command::Validate { routes } => {
            let loaded = load_routes(&routes)?;
            println!("ok: {} route(s)", loaded.len());
            Ok(())
        }
    }
}

fn adv_command(cmd: AdvCommand) -> Result<(), CliError> {
    match cmd {
        AdvCommand::Add {
            snapshot,
            id,
            secret,
            x,
            y,
            service,
            promo,
            limit,
        } => {
            let mut db = load_or_new(&snapshot.snapshot)?;
            db.register_advertiser(Advertiser {
                advertiser_id: id.clone(),
                secret,
                position: GeoPoint::new(x, y),
                service_type: service,
                promo_text: promo,
                trigger_limit: limit,
            })?;
            db.save_snapshot(&snapshot.snapshot)?;
            println!("registered advertiser {id:?}");
            Ok(())
        }
        AdvCommand::Update {
            snapshot,
            id,
            secret,
            x,
            y,
            service,
            promo,
            limit,
        } => {
            let mut db = Database::load_snapshot(&snapshot.snapshot)?;
            let position = match (x, y) {
                (Some(x), Some(y)) => Some(GeoPoint::new(x, y)),
                _ => None,
            };
            db.update_advertiser(
                &id,
                &secret,
                AdvertiserUpdate {
                    position,
                    service_type: service,
                    promo_text: promo,
                    trigger_limit: limit,
                },
            )?;
            db.save_snapshot(&snapshot.snapshot)?;
            println!("updated advertiser {id:?}");
            Ok(())
        }
        AdvCommand::Rm { snapshot, id, secret } => {
            let mut db = Database::load_snapshot(&snapshot.snapshot)?;
            db.remove_advertiser(&id, &secret)?;
            db.save_snapshot(&snapshot.snapshot)?;
            println!("removed advertiser {id:?}");
            Ok(())
        }
        AdvCommand::List { snapshot } => {
            let db = Database::load_snapshot(&snapshot.snapshot)?;
            for adv in db.advertisers().values() {
                let limit = adv
                    .trigger_limit
                    .map(|l| format!("{l}"))
                    .unwrap_or_else(|| "default".to_string());
                println!(
                    "{}\tservice={}\tposition=({}, {})\tlimit={}\tpromo={:?}",
                    adv.advertiser_id, adv.service_type, adv.position.x, adv.position.y, limit,
                    adv.promo_text
                );
            }
            Ok(())
        }
    }
}

fn user_command(cmd: UserCommand) -> Result<(), CliError> {
    match cmd {
        UserCommand::Sub {
            snapshot,
            msisdn,
            class,
            subscriptions,
            app_active,
        } => {
            let mut db = load_or_new(&snapshot.snapshot)?;
            let tags: BTreeSet<String> =
                subscriptions.into_iter().filter(|s| !s.is_empty()).collect();
            db.subscribe_user(&msisdn, class.into(), tags)?;
            if app_active {
                db.set_app_active(&msisdn, true)?;
            }
            db.save_snapshot(&snapshot.snapshot)?;
            println!("subscribed {msisdn:?}");
            Ok(())
        }
        UserCommand::Unsub { snapshot, msisdn } => {
            let mut db = Database::load_snapshot(&snapshot.snapshot)?;
            db.unsubscribe_user(&msisdn)?;
            db.save_snapshot(&snapshot.snapshot)?;
            println!("unsubscribed {msisdn:?}");
            Ok(())
        }
        UserCommand::List { snapshot } => {
            let db = Database::load_snapshot(&snapshot.snapshot)?;
            for user in db.users().values() {
                let tags: Vec<&str> = user.subscriptions.iter().map(|s| s.as_str()).collect();
                println!(
                    "{}\tclass={:?}\tapp_active={}\tsubscriptions={}",
                    user.msisdn,
                    user.user_class,
                    user.app_active,
                    tags.join(",")
                );
            }
            Ok(())
        }
    }
}

/// Existing snapshot, or a fresh database when the file does not exist yet
/// (so `adv add` / `user sub` can bootstrap one).
fn load_or_new(path: &Path) -> Result<Database, CliError> {
    if path.exists() {
        Ok(Database::load_snapshot(path)?)
    } else {
        Ok(Database::new())
    }
}
