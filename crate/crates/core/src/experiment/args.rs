//! Command-line parsing into an [`ExperimentSpec`].
//!
//! Parameters may come from a flat `key = value` config file (`--config`);
//! flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{ExperimentSpec, Mode, SimControls, Sweep};
use crate::config::{validate_config, RawConfig};
use crate::error::Error;
use crate::optimize::{lin_grid, log_grid, Refinement};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "FALOHA_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "frameless-aoi",
    version,
    about = "Throughput and peak Age of Information of frameless ALOHA: exact analysis, simulation and enumeration checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze one configuration (or a load grid) and write stationary laws.
    Analyze {
        #[command(flatten)]
        system: SystemArgs,
        /// Sweep the load gammaU over these values instead.
        #[arg(long, value_delimiter = ',')]
        loads: Option<Vec<f64>>,
        /// Also write P(D|N), P(M|N) and beta.
        #[arg(long)]
        tables: bool,
    },
    /// Analyze over a grid of access probabilities q.
    SweepQ {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: QGridArgs,
    },
    /// Throughput-optimize q for each d_max (and load) and report S and peak AoI there.
    SweepDmax {
        #[command(flatten)]
        system: SystemArgs,
        /// d_max values [default: 10,20,...,150].
        #[arg(long, value_delimiter = ',')]
        dmaxs: Option<Vec<usize>>,
        /// Loads gammaU [default: the configured load].
        #[arg(long, value_delimiter = ',')]
        loads: Option<Vec<f64>>,
        /// Lower end of the coarse log q-grid.
        #[arg(long, default_value_t = 0.005)]
        q_from: f64,
        /// Upper end of the coarse log q-grid.
        #[arg(long, default_value_t = 0.5)]
        q_to: f64,
        /// Points of the coarse log q-grid.
        #[arg(long, default_value_t = 24)]
        q_points: usize,
        /// Keep the coarse-grid optimum (no golden-section refinement).
        #[arg(long)]
        no_refine: bool,
        /// Refinement stops when the bracket is narrower than this in ln q.
        #[arg(long, default_value_t = 0.01)]
        q_tol: f64,
    },
    /// Simulate one configuration (or a q / load grid).
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        axis: PointAxisArgs,
    },
    /// Analyze and simulate side by side, with z-scores.
    Compare {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        axis: PointAxisArgs,
    },
    /// Check the analytic tables against exhaustive enumeration (U <= 3, dmax <= 4).
    Oracle {
        #[command(flatten)]
        system: SystemArgs,
    },
}

#[derive(Debug, Args)]
struct SystemArgs {
    /// Flat `key = value` file (keys: users, q, gamma, load, dmax, seed, cps, warmup, replications).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of users U.
    #[arg(long)]
    users: Option<usize>,
    /// Per-slot access probability q for slots after the first.
    #[arg(long)]
    q: Option<f64>,
    /// Per-slot packet generation probability.
    #[arg(long, conflicts_with = "load")]
    gamma: Option<f64>,
    /// Load gammaU (gamma = load / U).
    #[arg(long)]
    load: Option<f64>,
    /// Maximum CP length in slots.
    #[arg(long)]
    dmax: Option<usize>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct QGridArgs {
    /// Explicit q values (instead of --from/--to/--points).
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "points", "log"])]
    qs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.002)]
    from: f64,
    #[arg(long, default_value_t = 0.5)]
    to: f64,
    #[arg(long, default_value_t = 40)]
    points: usize,
    /// Space the grid logarithmically.
    #[arg(long)]
    log: bool,
    /// A load grid here would be a second sweep axis.
    #[arg(long, value_delimiter = ',', hide = true)]
    loads: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct PointAxisArgs {
    /// Sweep these q values.
    #[arg(long, value_delimiter = ',')]
    qs: Option<Vec<f64>>,
    /// Sweep these loads gammaU.
    #[arg(long, value_delimiter = ',')]
    loads: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Measured CPs per replication.
    #[arg(long)]
    cps: Option<u64>,
    /// Discarded CPs at the start of each replication.
    #[arg(long)]
    warmup: Option<u64>,
    /// Independent replications (RNG streams 0..R of the seed), pooled.
    #[arg(long)]
    replications: Option<u64>,
}

/// Why argument parsing stopped.
#[derive(Debug)]
pub enum ArgsError {
    /// Malformed command line, or `--help` / `--version`.
    Clap(clap::Error),
    /// Well-formed but invalid experiment.
    Invalid(Error),
}

impl From<Error> for ArgsError {
    fn from(e: Error) -> Self {
        ArgsError::Invalid(e)
    }
}

const FILE_KEYS: [&str; 9] = [
    "users",
    "q",
    "gamma",
    "load",
    "dmax",
    "seed",
    "cps",
    "warmup",
    "replications",
];

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    parse_config_text(&std::fs::read_to_string(path)?)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, Error> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if !FILE_KEYS.contains(&k) {
            return Err(Error::Usage(format!("config line {}: unknown key `{k}`", i + 1)));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Usage(format!("config line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(map)
}

fn file_value<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &'static str) -> Result<Option<T>, Error> {
    map.get(key)
        .map(|v| v.parse().map_err(|_| Error::param(key, format!("cannot parse {v:?}"))))
        .transpose()
}

struct Resolved {
    raw: RawConfig,
    file: BTreeMap<String, String>,
    out: PathBuf,
}

fn resolve(system: SystemArgs) -> Result<Resolved, Error> {
    let file = match &system.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let flags = RawConfig {
        users: system.users,
        q: system.q,
        gamma: system.gamma,
        load: system.load,
        dmax: system.dmax,
    };
    Ok(Resolved {
        raw: RawConfig::from_map(&file)?.overlay(&flags),
        file,
        out: system.out,
    })
}

fn sim_controls(args: SimArgs, file: &BTreeMap<String, String>) -> Result<SimControls, Error> {
    let d = SimControls::default();
    Ok(SimControls {
        seed: args.seed.or(file_value(file, "seed")?).unwrap_or(d.seed),
        num_cps: args.cps.or(file_value(file, "cps")?).unwrap_or(d.num_cps),
        warmup_cps: args.warmup.or(file_value(file, "warmup")?).unwrap_or(d.warmup_cps),
        replications: args
            .replications
            .or(file_value(file, "replications")?)
            .unwrap_or(d.replications),
    })
}

fn point_axis(axis: PointAxisArgs) -> Result<Sweep, Error> {
    match (axis.qs, axis.loads) {
        (Some(_), Some(_)) => Err(Error::Usage("give at most one sweep axis (--qs or --loads)".into())),
        (Some(qs), None) => Ok(Sweep::Q(qs)),
        (None, Some(loads)) => Ok(Sweep::Load(loads)),
        (None, None) => Ok(Sweep::None),
    }
}

/// Fills a missing base q from the first grid value; sweeps over q do not
/// need one.
fn with_default_q(mut raw: RawConfig, q: Option<f64>) -> RawConfig {
    if raw.q.is_none() {
        raw.q = q;
    }
    raw
}

fn sim_spec(mode: Mode, system: SystemArgs, sim: SimArgs, axis: PointAxisArgs) -> Result<ExperimentSpec, Error> {
    let sweep = point_axis(axis)?;
    let r = resolve(system)?;
    let first_q = match &sweep {
        Sweep::Q(qs) => qs.first().copied(),
        _ => None,
    };
    let mut spec = ExperimentSpec::new(validate_config(&with_default_q(r.raw, first_q))?, mode, r.out);
    spec.sim = sim_controls(sim, &r.file)?;
    spec.sweep = sweep;
    Ok(spec)
}

/// Parses a full command line (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<ExperimentSpec, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ArgsError::Clap)?;
    let spec = match cli.command {
        Command::Analyze { system, loads, tables } => {
            let r = resolve(system)?;
            let mut spec = ExperimentSpec::new(validate_config(&r.raw)?, Mode::Analyze, r.out);
            spec.sweep = loads.map_or(Sweep::None, Sweep::Load);
            spec.dump_tables = tables;
            spec
        }
        Command::SweepQ { system, grid } => {
            if grid.loads.is_some() {
                return Err(Error::Usage("sweep-q takes a single load; use analyze --loads for a load grid".into()).into());
            }
            let qs = match grid.qs {
                Some(qs) => qs,
                None if grid.log => log_grid(grid.from, grid.to, grid.points)?,
                None => lin_grid(grid.from, grid.to, grid.points)?,
            };
            let r = resolve(system)?;
            let base = validate_config(&with_default_q(r.raw, qs.first().copied()))?;
            let mut spec = ExperimentSpec::new(base, Mode::Analyze, r.out);
            spec.sweep = Sweep::Q(qs);
            spec
        }
        Command::SweepDmax {
            system,
            dmaxs,
            loads,
            q_from,
            q_to,
            q_points,
            no_refine,
            q_tol,
        } => {
            let coarse_q = log_grid(q_from, q_to, q_points)?;
            let dmaxs = dmaxs.unwrap_or_else(|| (1..=15).map(|k| 10 * k).collect());
            let r = resolve(system)?;
            let mut raw = with_default_q(r.raw, coarse_q.first().copied());
            if raw.dmax.is_none() {
                raw.dmax = dmaxs.first().copied();
            }
            let base = validate_config(&raw)?;
            if q_tol.is_nan() || q_tol <= 0.0 {
                return Err(Error::param("q-tol", "must be positive").into());
            }
            let mut spec = ExperimentSpec::new(base, Mode::Analyze, r.out);
            spec.sweep = Sweep::Dmax {
                dmaxs,
                loads: loads.unwrap_or_else(|| vec![base.load()]),
                coarse_q,
                refine: Refinement {
                    enabled: !no_refine,
                    log_tol: q_tol,
                    ..Refinement::default()
                },
            };
            spec
        }
        Command::Simulate { system, sim, axis } => sim_spec(Mode::Simulate, system, sim, axis)?,
        Command::Compare { system, sim, axis } => sim_spec(Mode::Compare, system, sim, axis)?,
        Command::Oracle { system } => {
            let mut r = resolve(system)?;
            // The CP tables do not depend on the traffic.
            if r.raw.gamma.is_none() && r.raw.load.is_none() {
                r.raw.gamma = Some(0.0);
            }
            ExperimentSpec::new(validate_config(&r.raw)?, Mode::Oracle, r.out)
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(line: &str) -> Result<ExperimentSpec, ArgsError> {
        parse_args(std::iter::once("frameless-aoi").chain(line.split_whitespace()))
    }

    #[test]
    fn single_point_analysis() {
        let spec = parse("analyze --users 100 --q 0.1 --load 0.6 --dmax 100 --out x").unwrap();
        assert_eq!(spec.mode, Mode::Analyze);
        assert_eq!(spec.sweep, Sweep::None);
        assert_eq!(spec.base.num_users(), 100);
        assert_eq!(spec.base.gen_prob(), 0.006);
        assert_eq!(spec.out_dir, PathBuf::from("x"));
    }

    #[test]
    fn log_q_grid() {
        let spec = parse("sweep-q --users 100 --load 0.6 --dmax 100 --from 0.002 --to 0.5 --points 40 --log").unwrap();
        match spec.sweep {
            Sweep::Q(qs) => {
                assert_eq!(qs.len(), 40);
                assert_eq!((qs[0], qs[39]), (0.002, 0.5));
                assert!((qs[1] / qs[0] - qs[39] / qs[38]).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulation_controls() {
        let spec = parse("simulate --seed 7 --cps 100000 --warmup 1000 --users 10 --q 0.2 --gamma 0.01 --dmax 20").unwrap();
        assert_eq!(spec.mode, Mode::Simulate);
        assert_eq!(
            spec.sim,
            SimControls {
                seed: 7,
                num_cps: 100_000,
                warmup_cps: 1000,
                replications: 1
            }
        );
    }

    #[test]
    fn two_sweep_axes_are_rejected() {
        let err = parse("compare --users 10 --q 0.2 --load 0.5 --dmax 20 --qs 0.1,0.2 --loads 0.5,0.6").unwrap_err();
        assert!(matches!(err, ArgsError::Invalid(Error::Usage(_))));
        let err = parse("sweep-q --users 10 --load 0.5 --dmax 20 --loads 0.5,0.6").unwrap_err();
        assert!(matches!(err, ArgsError::Invalid(Error::Usage(_))));
    }

    #[test]
    fn unknown_flags_and_conflicts_are_rejected() {
        assert!(matches!(parse("analyze --bogus 1"), Err(ArgsError::Clap(_))));
        assert!(matches!(
            parse("analyze --users 3 --q 0.1 --gamma 0.1 --load 0.3 --dmax 4"),
            Err(ArgsError::Clap(_))
        ));
    }

    #[test]
    fn invalid_values_name_the_field() {
        match parse("analyze --users 10 --q 1.5 --load 0.5 --dmax 20") {
            Err(ArgsError::Invalid(Error::InvalidParameter { field, .. })) => assert_eq!(field, "q"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_file_with_flag_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        std::fs::write(&path, "# reference scale\nusers = 100\nq = 0.1\nload = 0.6\ndmax = 50\nseed = 3\n").unwrap();
        let line = format!("simulate --config {} --dmax 100 --cps 10", path.display());
        let spec = parse(&line).unwrap();
        assert_eq!(spec.base.max_cp_len(), 100);
        assert_eq!(spec.base.tx_prob(), 0.1);
        assert_eq!((spec.sim.seed, spec.sim.num_cps), (3, 10));
        // A flag for gamma replaces the file's load.
        let line = format!("analyze --config {} --gamma 0.01", path.display());
        assert_eq!(parse(&line).unwrap().base.gen_prob(), 0.01);
    }

    #[test]
    fn config_file_errors() {
        assert!(parse_config_text("users = 3\nfoo = 1\n").is_err());
        assert!(parse_config_text("users 3\n").is_err());
        assert!(parse_config_text("q = 0.1\nq = 0.2\n").is_err());
        let map = parse_config_text("  users=3 # trailing\n\n").unwrap();
        assert_eq!(map["users"], "3");
    }

    #[test]
    fn oracle_needs_small_instance() {
        assert!(parse("oracle --users 2 --q 0.5 --gamma 0.3 --dmax 2").is_ok());
        assert!(matches!(
            parse("oracle --users 5 --q 0.5 --gamma 0.3 --dmax 2"),
            Err(ArgsError::Invalid(Error::Usage(_)))
        ));
    }

    #[test]
    fn dmax_sweep_defaults() {
        let spec = parse("sweep-dmax --users 100 --load 0.6 --loads 0.6,0.8,1.0").unwrap();
        match spec.sweep {
            Sweep::Dmax { dmaxs, loads, coarse_q, refine } => {
                assert_eq!(dmaxs.first(), Some(&10));
                assert_eq!(dmaxs.last(), Some(&150));
                assert_eq!(loads, vec![0.6, 0.8, 1.0]);
                assert_eq!(coarse_q.len(), 24);
                assert!(refine.enabled);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn help_is_a_clap_exit() {
        match parse("--help") {
            Err(ArgsError::Clap(e)) => assert!(!e.use_stderr()),
            other => panic!("{other:?}"),
        }
    }
}
