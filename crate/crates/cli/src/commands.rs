//! Argument grammar and one handler per subcommand.
//!
//! Handlers build their whole output before anything is written, so a failing
//! command prints nothing to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use auction_calib_core::calibrate::{describe_outcome, enumerate_fixed_points_within, iterate_t, TraceOutcome};
use auction_calib_core::empirical::{run_loop, simulate_batch};
use auction_calib_core::generators::{paper_fixture, random_instance, Enforce, Fixture, RandomSpec};
use auction_calib_core::metrics::{calibration_report, expected_value, Condition};
use auction_calib_core::optimize::{
    mfas_exact, mfas_to_instance, optimal_map_all, optimal_map_one_exact, Tournament, DEFAULT_CONFIG_BUDGET,
};
use auction_calib_core::properties::{
    baseline_map, check_e1, check_e2, check_si, single_query_one_map, PropertyVerdict, Witness,
};
use auction_calib_core::rational::format_rational;
use auction_calib_core::{validate, Mechanism, PredictionMap, ProblemInstance};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::report::Report;
use crate::{click_log, instance_file, CliError};

fn values(f: &PredictionMap) -> String {
    instance_file::format_values(f.values())
}

#[derive(Debug, Parser)]
#[command(
    name = "auction-calib",
    version,
    about = "Exact calibration and efficiency analysis of bucketed ad auctions"
)]
pub struct Cli {
    /// Instance file to read.
    #[arg(long, global = true, conflicts_with = "fixture")]
    pub instance: Option<PathBuf>,
    /// Built-in fixture, e.g. `si_not_e1` or `all_three_class(5)`.
    #[arg(long, global = true)]
    pub fixture: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    pub format: Format,
    /// Seed for random generation and simulation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Search-node budget for exact `ONE` computations.
    #[arg(long, global = true, default_value_t = DEFAULT_CONFIG_BUDGET)]
    pub budget: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance for structural problems (exit 1 if any).
    Validate,
    /// Expected value and per-bucket calibration of a map.
    Ev {
        /// Comma-separated map values, one per bucket.
        #[arg(long)]
        map: String,
    },
    /// Iterate the calibration operator until a fixed point or cycle.
    Calibrate {
        #[arg(long)]
        start: String,
        #[arg(long, default_value_t = 100)]
        max_steps: usize,
    },
    /// List fixed-point classes of the calibration operator.
    FixedPoints {
        #[arg(long, default_value_t = 64)]
        limit: usize,
    },
    /// Efficiency-maximizing prediction map.
    Optimize,
    /// Decide properties E1, E2 and SI, with witnesses on failure.
    CheckProps,
    /// The baseline self-calibrated map (or the single-query ONE map).
    NiceMap {
        #[arg(long)]
        single_query: bool,
    },
    /// Build the ONE instance encoding a tournament's feedback arc set.
    ReduceMfas {
        #[command(flatten)]
        tournament: TournamentArgs,
        /// Write the instance here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum feedback arc set of a tournament, by exact search.
    Mfas {
        #[command(flatten)]
        tournament: TournamentArgs,
    },
    /// Emit a fixture (`--fixture`) or a random instance (`--random`).
    Gen {
        #[arg(long, conflicts_with = "fixture")]
        random: bool,
        #[arg(long, default_value_t = 3)]
        queries: usize,
        #[arg(long, default_value_t = 2)]
        buckets: usize,
        #[arg(long, default_value_t = 1)]
        min_ads: usize,
        #[arg(long, default_value_t = 3)]
        max_ads: usize,
        #[arg(long, default_value = "ONE")]
        mechanism: Mechanism,
        /// Force property E1 or E2 to hold.
        #[arg(long)]
        enforce: Option<Enforce>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sampled recalibration loop.
    Simulate {
        #[arg(long)]
        start: String,
        #[arg(long, default_value_t = 5)]
        batches: usize,
        /// Queries served per batch.
        #[arg(long, default_value_t = 10_000)]
        queries: usize,
        /// Write each batch's click log to `<dir>/batch-<t>.log`.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TournamentArgs {
    /// Results like `1>2 2>3 3>1`; players are numbered from 1.
    #[arg(long)]
    tournament: Option<String>,
    /// A random tournament on this many players, drawn from `--seed`.
    #[arg(long)]
    random: Option<usize>,
}

pub enum Output {
    Report(Report),
    /// Verbatim text, e.g. an instance file.
    Text(String),
}

impl Output {
    pub fn render(&self, format: Format) -> String {
        match (self, format) {
            (Output::Report(r), Format::Human) => r.render_human(),
            (Output::Report(r), Format::Machine) => r.render_machine(),
            (Output::Text(t), _) => t.clone(),
        }
    }
}

/// Runs one command. The `u8` is the exit status for a successful run that
/// still reports a domain failure (`validate` on a bad instance).
pub fn run(cli: &Cli) -> Result<(Output, u8), CliError> {
    let report = |r: Report| Ok((Output::Report(r), 0));
    match &cli.command {
        Command::Validate => validate_cmd(cli),
        Command::Ev { map } => report(ev(&load(cli)?, map)?),
        Command::Calibrate { start, max_steps } => report(calibrate(&load(cli)?, start, *max_steps)?),
        Command::FixedPoints { limit } => report(fixed_points(&load(cli)?, *limit, cli.budget)?),
        Command::Optimize => report(optimize(&load(cli)?, cli.budget)?),
        Command::CheckProps => report(check_props(&load(cli)?, cli.budget)?),
        Command::NiceMap { single_query } => report(nice_map(&load(cli)?, *single_query)?),
        Command::ReduceMfas { tournament, out } => {
            let instance = mfas_to_instance(&tournament_of(tournament, cli.seed)?)?;
            emit_instance(&instance, out.as_deref())
        }
        Command::Mfas { tournament } => report(mfas(&tournament_of(tournament, cli.seed)?)?),
        Command::Gen {
            random,
            queries,
            buckets,
            min_ads,
            max_ads,
            mechanism,
            enforce,
            out,
        } => {
            if cli.instance.is_some() {
                return Err(CliError::Usage(
                    "gen takes --fixture or --random, not --instance".into(),
                ));
            }
            let instance = if *random {
                let mut spec = RandomSpec::new(cli.seed, *queries, *buckets, *mechanism);
                spec.ads_per_query = *min_ads..=*max_ads;
                spec.enforce = *enforce;
                random_instance(&spec)?
            } else {
                load(cli)?
            };
            emit_instance(&instance, out.as_deref())
        }
        Command::Simulate {
            start,
            batches,
            queries,
            log_dir,
        } => report(simulate(
            &load(cli)?,
            start,
            *batches,
            *queries,
            cli.seed,
            log_dir.as_deref(),
        )?),
    }
}

fn read_instance(cli: &Cli) -> Result<ProblemInstance, CliError> {
    match (&cli.instance, &cli.fixture) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            instance_file::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
        (None, Some(name)) => Ok(paper_fixture(&name.parse::<Fixture>()?)),
        (None, None) => Err(CliError::Usage("this command needs --instance or --fixture".into())),
    }
}

/// Reads and validates the input instance; an invalid instance is bad input.
fn load(cli: &Cli) -> Result<ProblemInstance, CliError> {
    let instance = read_instance(cli)?;
    match validate(&instance).first() {
        Some(v) => Err(CliError::Usage(format!("invalid instance: {v}"))),
        None => Ok(instance),
    }
}

fn parse_map(text: &str) -> Result<PredictionMap, CliError> {
    Ok(PredictionMap::new(instance_file::parse_values(text)?)?)
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, text)
        .and_then(|()| fs::rename(&tmp, path))
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit_instance(instance: &ProblemInstance, out: Option<&Path>) -> Result<(Output, u8), CliError> {
    let text = instance_file::emit(instance);
    match out {
        None => Ok((Output::Text(text), 0)),
        Some(path) => {
            write_atomic(path, &text)?;
            let mut r = Report::new("write");
            r.push("path", path.display());
            r.push("queries", instance.queries().len());
            r.push("ads", instance.ads().len());
            Ok((Output::Report(r), 0))
        }
    }
}

fn validate_cmd(cli: &Cli) -> Result<(Output, u8), CliError> {
    let instance = read_instance(cli)?;
    let violations = validate(&instance);
    let mut r = Report::new("validate");
    r.push("valid", violations.is_empty());
    r.push("violations", violations.len());
    for (i, v) in violations.iter().enumerate() {
        r.push(format!("violation.{}", i + 1), v);
    }
    let code = if violations.is_empty() { 0 } else { 1 };
    Ok((Output::Report(r), code))
}

fn ev(instance: &ProblemInstance, map: &str) -> Result<Report, CliError> {
    let f = parse_map(map)?;
    let mut r = Report::new("ev");
    r.push("map", values(&f));
    r.push("ev", format_rational(&expected_value(instance, &f)?));
    let calib = calibration_report(instance, &f)?;
    r.push("self_calibrated", calib.is_self_calibrated());
    let or_none = |v: &Option<_>| v.as_ref().map_or("none".to_string(), format_rational);
    for b in &calib.buckets {
        r.push(format!("bucket.{}.predicted", b.bucket), format_rational(&b.predicted));
        r.push(format!("bucket.{}.observed", b.bucket), or_none(&b.observed));
        r.push(format!("bucket.{}.residual", b.bucket), or_none(&b.residual));
    }
    Ok(r)
}

fn calibrate(instance: &ProblemInstance, start: &str, max_steps: usize) -> Result<Report, CliError> {
    let trace = iterate_t(instance, &parse_map(start)?, max_steps)?;
    let mut r = Report::new("calibrate");
    r.push("start", values(&trace.maps[0]));
    r.push("steps", trace.maps.len() - 1);
    match trace.outcome {
        TraceOutcome::FixedPoint(i) => {
            r.push("outcome", "fixed-point");
            r.push("outcome.step", i);
            r.push("fixed_point", values(&trace.maps[i]));
        }
        TraceOutcome::Cycle { start, period } => {
            r.push("outcome", "cycle");
            r.push("outcome.start", start);
            r.push("outcome.period", period);
            for (j, m) in trace.maps[start..start + period].iter().enumerate() {
                r.push(format!("cycle.{j}"), values(m));
            }
        }
        TraceOutcome::BudgetExhausted => r.push("outcome", "budget-exhausted"),
    }
    r.push("summary", describe_outcome(&trace.outcome));
    for (i, m) in trace.maps.iter().enumerate() {
        r.push(format!("trace.{i}"), values(m));
    }
    Ok(r)
}

fn fixed_points(instance: &ProblemInstance, limit: usize, budget: usize) -> Result<Report, CliError> {
    let fp = enumerate_fixed_points_within(instance, limit, budget)?;
    let mut r = Report::new("fixed-points");
    r.push("mechanism", instance.mechanism());
    r.push("listed", fp.classes.len());
    r.push("truncated", fp.truncated);
    r.push(
        "class_count",
        fp.class_count().map_or("unknown".into(), |n| n.to_string()),
    );
    for (i, c) in fp.classes.iter().enumerate() {
        r.push(format!("class.{}.map", i + 1), values(&c.representative));
        r.push(format!("class.{}.ev", i + 1), format_rational(&c.ev));
        r.push(format!("class.{}.shows_ads", i + 1), c.shows_ads);
    }
    for (z, options) in fp.bucket_options.iter().enumerate() {
        for (j, o) in options.iter().enumerate() {
            r.push(
                format!("bucket.{}.option.{}", z + 1, j + 1),
                format!("groups={} value={}", o.shown_groups, format_rational(&o.value)),
            );
        }
    }
    Ok(r)
}

fn optimize(instance: &ProblemInstance, budget: usize) -> Result<Report, CliError> {
    let mut r = Report::new("optimize");
    r.push("mechanism", instance.mechanism());
    match instance.mechanism() {
        Mechanism::All => {
            let opt = optimal_map_all(instance)?;
            r.push("map", values(&opt.map));
            r.push("ev", format_rational(&opt.ev));
            for (z, n) in opt.shown_groups.iter().enumerate() {
                r.push(format!("bucket.{}.shown_groups", z + 1), n);
            }
        }
        Mechanism::One => {
            let opt = optimal_map_one_exact(instance, budget)?;
            r.push("map", values(&opt.map));
            r.push("ev", format_rational(&opt.ev));
            let excluded: Vec<String> = opt.config.excluded.iter().map(ToString::to_string).collect();
            r.push(
                "excluded",
                if excluded.is_empty() {
                    "none".into()
                } else {
                    excluded.join(",")
                },
            );
            for ((q, _), winners) in instance.queries().entries().iter().zip(&opt.config.winners) {
                let shown = match winners {
                    None => "none".to_string(),
                    Some(ads) => ads
                        .iter()
                        .map(|&i| instance.ads()[i].id.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                };
                r.push(format!("winners.{q}"), shown);
            }
        }
    }
    Ok(r)
}

fn describe_condition(c: &Condition) -> String {
    let mut s = format!("z={}", c.bucket);
    if let Some(b) = &c.bid {
        s += &format!(", b={}", format_rational(b));
    }
    if let Some(q) = &c.query {
        s += &format!(", q={q}");
    }
    s
}

fn describe_witness(w: &Witness) -> String {
    match w {
        Witness::Conditional {
            lhs,
            lhs_value,
            rhs,
            rhs_value,
        } => format!(
            "E[p | {}] = {} but E[p | {}] = {}",
            describe_condition(lhs),
            format_rational(lhs_value),
            describe_condition(rhs),
            format_rational(rhs_value)
        ),
        Witness::Selection {
            bucket,
            low,
            low_map,
            high,
            high_map,
        } => format!(
            "bucket {bucket} serves E[p] = {} under {low_map} and {} under {high_map}",
            format_rational(low),
            format_rational(high)
        ),
    }
}

fn check_props(instance: &ProblemInstance, budget: usize) -> Result<Report, CliError> {
    let verdicts = [check_e1(instance), check_e2(instance), check_si(instance, budget)?];
    let mut r = Report::new("check-props");
    for PropertyVerdict {
        property,
        holds,
        witness,
    } in &verdicts
    {
        r.push(property.to_string(), if *holds { "holds" } else { "fails" });
        if let Some(w) = witness {
            r.push(format!("{property}.witness"), describe_witness(w));
        }
    }
    Ok(r)
}

fn nice_map(instance: &ProblemInstance, single_query: bool) -> Result<Report, CliError> {
    let f = if single_query {
        single_query_one_map(instance)?
    } else {
        baseline_map(instance)
    };
    let mut r = Report::new("nice-map");
    r.push("map", values(&f));
    r.push("ev", format_rational(&expected_value(instance, &f)?));
    r.push(
        "self_calibrated",
        calibration_report(instance, &f)?.is_self_calibrated(),
    );
    Ok(r)
}

fn tournament_of(args: &TournamentArgs, seed: u64) -> Result<Tournament, CliError> {
    if let Some(n) = args.random {
        return Ok(Tournament::random(n, seed));
    }
    let text = args.tournament.as_deref().unwrap_or_default();
    let bad = |tok: &str| CliError::Usage(format!("bad tournament result `{tok}`, expected like `1>2`"));
    let results = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|tok| {
            let (w, l) = tok.split_once('>').ok_or_else(|| bad(tok))?;
            Ok((w.parse().map_err(|_| bad(tok))?, l.parse().map_err(|_| bad(tok))?))
        })
        .collect::<Result<Vec<(usize, usize)>, CliError>>()?;
    let players = results.iter().map(|&(w, l)| w.max(l)).max().unwrap_or(0);
    let t = Tournament::from_results(players, &results)?;
    if results.len() != t.pairs() {
        return Err(CliError::Usage(format!(
            "a tournament on {players} players has {} results, found {}",
            t.pairs(),
            results.len()
        )));
    }
    Ok(t)
}

fn mfas(t: &Tournament) -> Result<Report, CliError> {
    let (upsets, ranking) = mfas_exact(t)?;
    let mut r = Report::new("mfas");
    r.push("players", t.players());
    r.push(
        "results",
        t.results()
            .iter()
            .map(|(w, l)| format!("{w}>{l}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
    r.push("upsets", upsets);
    r.push(
        "ranking",
        ranking
            .order()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    Ok(r)
}

fn simulate(
    instance: &ProblemInstance,
    start: &str,
    batches: usize,
    n_queries: usize,
    seed: u64,
    log_dir: Option<&Path>,
) -> Result<Report, CliError> {
    let maps = run_loop(instance, &parse_map(start)?, batches, n_queries, seed)?;
    let mut r = Report::new("simulate");
    r.push("batches", batches);
    r.push("queries_per_batch", n_queries);
    r.push("seed", seed);
    for (t, m) in maps.iter().enumerate() {
        r.push(format!("map.{t}"), values(m));
    }
    if let Some(dir) = log_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        // Batches are deterministic in (map, seed), so replaying them gives
        // exactly the logs the loop consumed.
        for (t, m) in maps[..batches].iter().enumerate() {
            let log = simulate_batch(instance, m, n_queries, seed.wrapping_add(t as u64))?;
            let path = dir.join(format!("batch-{t}.log"));
            write_atomic(&path, &click_log::emit(&log))?;
            r.push(format!("log.{t}"), path.display());
        }
    }
    Ok(r)
}
