use std::fmt::Write as _;

use junction_core::sim::{simulate, MetricsReport, Pipeline, RunStatus};
use rayon::prelude::*;
use serde::Serialize;

use crate::plan::{Axis, ExperimentPlan};

/// One member run of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub point: f64,
    pub seed: u64,
    pub algorithm: Pipeline,
    /// The report, or the reason no report exists.
    pub result: Result<MetricsReport, String>,
}

impl RunOutcome {
    /// Why the run does not count towards the statistics, if it does not.
    pub fn failure(&self) -> Option<String> {
        match &self.result {
            Ok(r) if r.status == RunStatus::Completed => None,
            Ok(r) => Some(format!("{:?}", r.status).to_lowercase()),
            Err(e) if e.starts_with("collision") => Some("collision".into()),
            Err(_) => Some("error".into()),
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Statistics of one algorithm at one axis point over completed runs.
#[derive(Debug, Clone, Serialize)]
pub struct CellStats {
    pub point: f64,
    pub algorithm: Pipeline,
    pub runs: usize,
    pub completed: usize,
    /// `(seed, reason)` for every run left out of the statistics.
    pub failures: Vec<(u64, String)>,
    pub t_evc: Option<(f64, f64)>,
    pub t_attd: Option<(f64, f64)>,
}

impl CellStats {
    fn marker(&self) -> String {
        if self.failures.is_empty() {
            return String::new();
        }
        let seeds: Vec<String> = self.failures.iter().map(|(s, why)| format!("{why}@{s}")).collect();
        format!("FAIL {}/{} ({})", self.failures.len(), self.runs, seeds.join(" "))
    }
}

/// Percent reduction `100 (base - ours) / base` of the mean metrics.
#[derive(Debug, Clone, Serialize)]
pub struct Reduction {
    pub point: f64,
    pub ours: Pipeline,
    pub base: Pipeline,
    pub t_evc: Option<f64>,
    pub t_attd: Option<f64>,
}

pub fn percent_reduction(base: f64, ours: f64) -> f64 {
    100.0 * (base - ours) / base
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub axis: Axis,
    pub cells: Vec<CellStats>,
    pub reductions: Vec<Reduction>,
    pub runs: Vec<RunOutcome>,
}

/// Runs every member of `plan` in parallel and aggregates per cell.
/// `progress` is called once per finished run, in no particular order.
pub fn compare(plan: &ExperimentPlan, progress: impl Fn(&RunOutcome) + Sync) -> Comparison {
    let jobs: Vec<(f64, u64, Pipeline)> = plan
        .points
        .iter()
        .flat_map(|&p| plan.algorithms.iter().flat_map(move |&a| plan.seeds.iter().map(move |&s| (p, s, a))))
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(point, seed, algorithm)| {
            let cfg = plan.config(point, seed, algorithm);
            let out = RunOutcome {
                point,
                seed,
                algorithm,
                result: simulate(&cfg, None).map(|r| r.report).map_err(|e| e.to_string()),
            };
            progress(&out);
            out
        })
        .collect();
    aggregate(plan, runs)
}

/// Order-independent reduction of member runs into the table.
pub fn aggregate(plan: &ExperimentPlan, runs: Vec<RunOutcome>) -> Comparison {
    let mut cells = Vec::new();
    for &point in &plan.points {
        for &algorithm in &plan.algorithms {
            let mut mine: Vec<&RunOutcome> = runs
                .iter()
                .filter(|r| r.point == point && r.algorithm == algorithm)
                .collect();
            mine.sort_by_key(|r| r.seed);
            let ok: Vec<&MetricsReport> = mine
                .iter()
                .filter(|r| r.failure().is_none())
                .filter_map(|r| r.result.as_ref().ok())
                .collect();
            let evc: Vec<f64> = ok.iter().filter_map(|r| r.t_evc).collect();
            let attd: Vec<f64> = ok.iter().filter_map(|r| r.t_attd).collect();
            cells.push(CellStats {
                point,
                algorithm,
                runs: mine.len(),
                completed: ok.len(),
                failures: mine.iter().filter_map(|r| r.failure().map(|f| (r.seed, f))).collect(),
                t_evc: mean_std(&evc),
                t_attd: mean_std(&attd),
            });
        }
    }
    let mut reductions = Vec::new();
    if let Some((&ours, rest)) = plan.algorithms.split_first() {
        for &point in &plan.points {
            let cell = |a: Pipeline| cells.iter().find(|c| c.point == point && c.algorithm == a);
            let mine = cell(ours);
            for &base in rest {
                let theirs = cell(base);
                let red = |f: fn(&CellStats) -> Option<(f64, f64)>| {
                    let o = mine.and_then(f)?.0;
                    let b = theirs.and_then(f)?.0;
                    Some(percent_reduction(b, o))
                };
                reductions.push(Reduction {
                    point,
                    ours,
                    base,
                    t_evc: red(|c| c.t_evc),
                    t_attd: red(|c| c.t_attd),
                });
            }
        }
    }
    Comparison {
        axis: plan.axis,
        cells,
        reductions,
        runs,
    }
}

fn fmt_point(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{p:.0}")
    } else {
        format!("{p}")
    }
}

fn fmt_stat(s: Option<(f64, f64)>) -> String {
    s.map_or_else(|| "-".into(), |(m, sd)| format!("{m:.1} ± {sd:.1}"))
}

fn fmt_opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(String::new, |v| format!("{v:.digits$}"))
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|k| rows.iter().map(|r| r[k].chars().count()).chain([header[k].len()]).max().unwrap_or(0))
        .collect();
    let line = |cols: Vec<&str>| {
        let padded: Vec<String> = cols.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{}", line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

impl Comparison {
    /// Human-readable summary and reduction tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                vec![
                    fmt_point(c.point),
                    c.algorithm.to_string(),
                    format!("{}/{}", c.completed, c.runs),
                    fmt_stat(c.t_evc),
                    fmt_stat(c.t_attd),
                    c.marker(),
                ]
            })
            .collect();
        table(&mut out, &[self.axis.name(), "algorithm", "ok", "t_evc (s)", "ATTD (s)", "notes"], &rows);
        if !self.reductions.is_empty() {
            out.push('\n');
            let rows: Vec<Vec<String>> = self
                .reductions
                .iter()
                .map(|r| {
                    let pct = |x: Option<f64>| x.map_or_else(|| "-".into(), |v| format!("{v:.1}%"));
                    vec![fmt_point(r.point), r.ours.to_string(), r.base.to_string(), pct(r.t_evc), pct(r.t_attd)]
                })
                .collect();
            table(&mut out, &[self.axis.name(), "ours", "baseline", "t_evc reduction", "ATTD reduction"], &rows);
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!(
            "{},algorithm,runs,completed,t_evc_mean,t_evc_std,t_attd_mean,t_attd_std,failures\n",
            self.axis.name()
        );
        for c in &self.cells {
            let failures: Vec<String> = c.failures.iter().map(|(s, why)| format!("{why}@{s}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_point(c.point),
                c.algorithm,
                c.runs,
                c.completed,
                fmt_opt(c.t_evc.map(|s| s.0), 3),
                fmt_opt(c.t_evc.map(|s| s.1), 3),
                fmt_opt(c.t_attd.map(|s| s.0), 3),
                fmt_opt(c.t_attd.map(|s| s.1), 3),
                failures.join(" ")
            );
        }
        out
    }

    pub fn reductions_csv(&self) -> String {
        let mut out = format!("{},ours,baseline,t_evc_reduction_pct,t_attd_reduction_pct\n", self.axis.name());
        for r in &self.reductions {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_point(r.point),
                r.ours,
                r.base,
                fmt_opt(r.t_evc, 3),
                fmt_opt(r.t_attd, 3)
            );
        }
        out
    }

    /// Every member report, one per line.
    pub fn runs_csv(&self) -> String {
        let mut out = format!("{},algorithm,seed,status,t_evc,t_attd,crossed,sim_time\n", self.axis.name());
        for r in &self.runs {
            let (status, evc, attd, crossed, time) = match &r.result {
                Ok(m) => (
                    format!("{:?}", m.status).to_lowercase(),
                    fmt_opt(m.t_evc, 3),
                    fmt_opt(m.t_attd, 3),
                    m.crossed.to_string(),
                    format!("{:.1}", m.sim_time),
                ),
                Err(_) => (r.failure().unwrap_or_default(), String::new(), String::new(), String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{},{status},{evc},{attd},{crossed},{time}", fmt_point(r.point), r.algorithm, r.seed);
        }
        out
    }

    /// True when any member run failed.
    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| !c.failures.is_empty())
    }
}
