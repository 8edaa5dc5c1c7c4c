//! CSV and JSON output. Every CSV starts with a `# scenario-hash: <hex>` line.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::feasibility::{FeasibilityWindow, WindowStats};
use crate::study::{DopplerRow, LinkSet, SchemeResult};

fn csv_writer<W: Write>(mut w: W, hash: &str) -> Result<csv::Writer<W>> {
    writeln!(w, "# scenario-hash: {hash}")?;
    Ok(csv::Writer::from_writer(w))
}

fn members(w: &FeasibilityWindow) -> String {
    w.members.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";")
}

/// `t_start,t_end,duration_s,l,members`
pub fn write_timeline<W: Write>(w: W, hash: &str, timeline: &[FeasibilityWindow]) -> Result<()> {
    let mut c = csv_writer(w, hash)?;
    c.write_record(["t_start", "t_end", "duration_s", "l", "members"])?;
    for win in timeline {
        c.write_record([win.t_start.to_string(), win.t_end.to_string(), win.duration().to_string(), win.len().to_string(), members(win)])?;
    }
    c.flush()?;
    Ok(())
}

/// `l,count,min_s,max_s,mean_s,std_s`
pub fn write_stats<W: Write>(w: W, hash: &str, stats: &WindowStats) -> Result<()> {
    let mut c = csv_writer(w, hash)?;
    c.write_record(["l", "count", "min_s", "max_s", "mean_s", "std_s"])?;
    for (l, s) in &stats.per_l {
        c.write_record([l.to_string(), s.count.to_string(), s.min.to_string(), s.max.to_string(), s.mean.to_string(), s.std.to_string()])?;
    }
    c.flush()?;
    Ok(())
}

/// One row per feasible link, 1D index order.
pub fn write_doppler<W: Write>(w: W, hash: &str, rows: &[DopplerRow]) -> Result<()> {
    let mut c = csv_writer(w, hash)?;
    for r in rows {
        c.serialize(r)?;
    }
    c.flush()?;
    Ok(())
}

fn groups_text(r: &SchemeResult) -> String {
    r.partition
        .groups()
        .iter()
        .map(|g| g.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("|")
}

/// Labels a comparison inside a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub oversampling: usize,
    pub noise_figure_db: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    oversampling: usize,
    noise_figure_db: f64,
    scheme: &'a str,
    c_sum: f64,
    fairness: f64,
    groups: usize,
    partition: String,
    rank_deficient_groups: usize,
}

/// `oversampling,noise_figure_db,scheme,c_sum,fairness,groups,partition,rank_deficient_groups`
pub fn write_summary<W: Write>(w: W, hash: &str, runs: &[(SweepPoint, Vec<SchemeResult>)]) -> Result<()> {
    let mut c = csv_writer(w, hash)?;
    for (pt, results) in runs {
        for r in results {
            c.serialize(SummaryRow {
                oversampling: pt.oversampling,
                noise_figure_db: pt.noise_figure_db,
                scheme: r.scheme.name(),
                c_sum: r.report.c_sum,
                fairness: r.report.fairness,
                groups: r.partition.num_groups(),
                partition: groups_text(r),
                rank_deficient_groups: r.report.rank_deficient.len(),
            })?;
        }
    }
    c.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RateRow<'a> {
    oversampling: usize,
    noise_figure_db: f64,
    scheme: &'a str,
    index: usize,
    p: usize,
    n: usize,
    group: usize,
    stage: usize,
    rho: f64,
    rate: f64,
}

/// Per-satellite rates; `group` and `index` are 1-based, `stage` 0 is decoded first.
pub fn write_rates<W: Write>(w: W, hash: &str, ls: &LinkSet, runs: &[(SweepPoint, Vec<SchemeResult>)]) -> Result<()> {
    let mut c = csv_writer(w, hash)?;
    for (pt, results) in runs {
        for r in results {
            for s in &r.report.satellites {
                c.serialize(RateRow {
                    oversampling: pt.oversampling,
                    noise_figure_db: pt.noise_figure_db,
                    scheme: r.scheme.name(),
                    index: s.link + 1,
                    p: ls.sats[s.link].p,
                    n: ls.sats[s.link].n,
                    group: s.group + 1,
                    stage: s.stage,
                    rho: r.report.rhos[s.group],
                    rate: s.rate,
                })?;
            }
        }
    }
    c.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct SchemeJson<'a> {
    pub scheme: &'a str,
    pub c_sum: f64,
    pub fairness: f64,
    pub partition: crate::partition::PartitionJson,
    pub rates: Vec<f64>,
    pub rank_deficient: &'a [usize],
    pub evaluated: Option<String>,
    pub search_space: Option<String>,
}

pub fn scheme_json(r: &SchemeResult) -> SchemeJson<'_> {
    SchemeJson {
        scheme: r.scheme.name(),
        c_sum: r.report.c_sum,
        fairness: r.report.fairness,
        partition: r.partition.to_json(),
        rates: r.report.rates(),
        rank_deficient: &r.report.rank_deficient,
        evaluated: r.search.map(|(e, _)| e.to_string()),
        search_space: r.search.map(|(_, s)| s.to_string()),
    }
}

/// Pretty JSON with the scenario hash at the top level.
pub fn write_json<W: Write, T: Serialize>(mut w: W, hash: &str, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        scenario_hash: &'a str,
        #[serde(flatten)]
        body: &'a T,
    }
    serde_json::to_writer_pretty(&mut w, &Doc { scenario_hash: hash, body })?;
    writeln!(w)?;
    Ok(())
}
