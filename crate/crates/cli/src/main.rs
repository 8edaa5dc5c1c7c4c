use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use isl_noma::partition::PartitionJson;
use isl_noma::report::{self, scheme_json, SweepPoint};
use isl_noma::scenario::{Epoch, Scenario, SearchKind};
use isl_noma::study::{LinkSet, ResolvedEpoch, Scheme, SchemeResult, Study};
use isl_noma::Error;

#[derive(Parser)]
#[command(name = "isl-noma", version, about = "Inter-plane ISL feasibility, Doppler and hybrid NOMA-OMA capacity studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Feasible-set timeline over the observation horizon and window statistics.
    Feasibility(Common),
    /// Doppler table of the feasible links at the epoch.
    Doppler(Common),
    /// Capacity and fairness of the selected schemes, optionally swept over S and F.
    Compare(CompareArgs),
    /// Partition from Algorithm 1 or 2 as JSON with its rate report.
    Partition(PartitionArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seconds or auto-L=<n>; overrides the scenario.
    #[arg(long)]
    epoch: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum)]
    search_mode: Option<SearchModeArg>,
    /// Lift the cost gate on exhaustive search.
    #[arg(long)]
    allow_exhaustive: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated scheme names; all seven by default.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long = "sweep-S", value_delimiter = ',')]
    sweep_s: Option<Vec<usize>>,
    #[arg(long = "sweep-noise-figure", value_delimiter = ',')]
    sweep_noise_figure: Option<Vec<f64>>,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_enum, default_value_t = Algorithm::Alg2)]
    algorithm: Algorithm,
    #[arg(long, value_enum, default_value_t = DofArg::Optimized)]
    dof: DofArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchModeArg {
    Exhaustive,
    RandomSample,
    SwapHeuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Alg1,
    Alg2,
}

#[derive(Clone, Copy, ValueEnum)]
enum DofArg {
    Uniform,
    Optimized,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Infeasible(_) => 3,
        Error::CostGate { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Feasibility(c) => run_feasibility(&c),
        Command::Doppler(c) => run_doppler(&c),
        Command::Compare(a) => run_compare(&a),
        Command::Partition(a) => run_partition(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(c: &Common, search: Option<&SearchArgs>) -> Result<(Scenario, String), Error> {
    let mut sc = Scenario::load(&c.scenario).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", c.scenario.display())),
        e => e,
    })?;
    if let Some(e) = &c.epoch {
        sc.epoch = e.parse::<Epoch>()?;
    }
    if let Some(s) = c.seed {
        sc.seed = s;
    }
    if let Some(s) = search {
        if let Some(m) = s.search_mode {
            sc.partition.search = match m {
                SearchModeArg::Exhaustive => SearchKind::Exhaustive,
                SearchModeArg::RandomSample => SearchKind::RandomSample,
                SearchModeArg::SwapHeuristic => SearchKind::SwapHeuristic,
            };
        }
        if s.allow_exhaustive {
            sc.partition.exhaustive_limit = u128::MAX;
        }
    }
    sc.validate()?;
    let hash: String = Sha256::digest(serde_json::to_vec(&sc)?).iter().map(|b| format!("{b:02x}")).collect();
    Ok((sc, hash))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    fs::create_dir_all(out)?;
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn run_feasibility(c: &Common) -> Result<(), Error> {
    let (sc, hash) = load(c, None)?;
    let study = Study::new(sc)?;
    let tl = study.timeline()?;
    let stats = Study::stats(&tl)?;
    match c.format {
        Format::Csv => {
            report::write_timeline(create(&c.out, "timeline.csv")?, &hash, &tl)?;
            report::write_stats(create(&c.out, "stats.csv")?, &hash, &stats)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                timeline: &'a [isl_noma::feasibility::FeasibilityWindow],
                stats: &'a isl_noma::feasibility::WindowStats,
            }
            report::write_json(create(&c.out, "feasibility.json")?, &hash, &Body { timeline: &tl, stats: &stats })?;
        }
    }
    Ok(())
}

fn epoch_links(study: &Study) -> Result<(ResolvedEpoch, LinkSet), Error> {
    let ep = study.resolve_epoch()?;
    let ls = study.link_set(ep.t)?;
    Ok((ep, ls))
}

fn run_doppler(c: &Common) -> Result<(), Error> {
    let (sc, hash) = load(c, None)?;
    let study = Study::new(sc)?;
    let (ep, ls) = epoch_links(&study)?;
    let rows = study.doppler_table(&ls)?;
    match c.format {
        Format::Csv => report::write_doppler(create(&c.out, "doppler.csv")?, &hash, &rows)?,
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                epoch_s: f64,
                rows: &'a [isl_noma::study::DopplerRow],
            }
            report::write_json(create(&c.out, "doppler.json")?, &hash, &Body { epoch_s: ep.t, rows: &rows })?;
        }
    }
    Ok(())
}

fn announce_exhaustive(sc: &Scenario, ls: &LinkSet, schemes: &[Scheme]) {
    if sc.partition.search != SearchKind::Exhaustive || !schemes.iter().any(|s| matches!(s, Scheme::Alg2Opt | Scheme::Alg2Uni)) {
        return;
    }
    let g = ls.sink_plane.iter().filter(|&&b| b).count();
    let space = isl_noma::partition::search_space_size(g, ls.len() - g);
    eprintln!("exhaustive search: {space} candidate partitions (G={g}, L={})", ls.len());
}

fn run_compare(a: &CompareArgs) -> Result<(), Error> {
    let (sc, hash) = load(&a.common, Some(&a.search))?;
    let schemes: Vec<Scheme> = match &a.schemes {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?,
        None => Scheme::ALL.to_vec(),
    };
    let base = Study::new(sc.clone())?;
    let ep = base.resolve_epoch()?;
    let s_values = a.sweep_s.clone().unwrap_or_else(|| vec![sc.oversampling]);
    let f_values = a.sweep_noise_figure.clone().unwrap_or_else(|| vec![sc.noise_figure_db]);

    let mut runs: Vec<(SweepPoint, Vec<SchemeResult>)> = Vec::new();
    let mut last_links = None;
    for &s in &s_values {
        let study_s = base.with_oversampling(s)?;
        let ls = study_s.link_set(ep.t)?;
        announce_exhaustive(&sc, &ls, &schemes);
        for &f in &f_values {
            let study = study_s.with_noise_figure(f)?;
            runs.push((SweepPoint { oversampling: s, noise_figure_db: f }, study.compare(&ls, &schemes)?));
        }
        last_links = Some(ls);
    }
    let ls = last_links.expect("at least one oversampling value");
    match a.common.format {
        Format::Csv => {
            report::write_summary(create(&a.common.out, "summary.csv")?, &hash, &runs)?;
            report::write_rates(create(&a.common.out, "rates.csv")?, &hash, &ls, &runs)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Run<'a> {
                #[serde(flatten)]
                point: SweepPoint,
                schemes: Vec<report::SchemeJson<'a>>,
            }
            #[derive(Serialize)]
            struct Body<'a> {
                epoch_s: f64,
                runs: Vec<Run<'a>>,
            }
            let body = Body { epoch_s: ep.t, runs: runs.iter().map(|(p, rs)| Run { point: *p, schemes: rs.iter().map(scheme_json).collect() }).collect() };
            report::write_json(create(&a.common.out, "compare.json")?, &hash, &body)?;
        }
    }
    Ok(())
}

fn run_partition(a: &PartitionArgs) -> Result<(), Error> {
    let (sc, hash) = load(&a.common, Some(&a.search))?;
    let study = Study::new(sc.clone())?;
    let (ep, ls) = epoch_links(&study)?;
    let scheme = match (a.algorithm, a.dof) {
        (Algorithm::Alg1, DofArg::Optimized) => Scheme::Alg1Opt,
        (Algorithm::Alg1, DofArg::Uniform) => Scheme::Alg1Uni,
        (Algorithm::Alg2, DofArg::Optimized) => Scheme::Alg2Opt,
        (Algorithm::Alg2, DofArg::Uniform) => Scheme::Alg2Uni,
    };
    announce_exhaustive(&sc, &ls, &[scheme]);
    let r = study.run_scheme(&ls, scheme, None)?;
    if a.common.format == Format::Csv {
        let runs = [(point(&sc), vec![r.clone()])];
        report::write_summary(create(&a.common.out, "summary.csv")?, &hash, &runs)?;
        report::write_rates(create(&a.common.out, "rates.csv")?, &hash, &ls, &runs)?;
    }
    #[derive(Serialize)]
    struct Body<'a> {
        epoch_s: f64,
        #[serde(flatten)]
        partition: PartitionJson,
        c_sum: f64,
        fairness: f64,
        scheme: &'a str,
    }
    let body = Body { epoch_s: ep.t, partition: r.partition.to_json(), c_sum: r.report.c_sum, fairness: r.report.fairness, scheme: scheme.name() };
    report::write_json(create(&a.common.out, "partition.json")?, &hash, &body)?;
    Ok(())
}

fn point(sc: &Scenario) -> SweepPoint {
    SweepPoint { oversampling: sc.oversampling, noise_figure_db: sc.noise_figure_db }
}
