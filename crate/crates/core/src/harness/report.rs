use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_records, RunMetrics};
use super::trace::TraceRecord;
use super::HarnessError;

/// Baseline separation above which an advisory counts as a false positive, m.
pub const FP_SEPARATION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FalsePositives {
    pub false_positives: u64,
    pub advisories: u64,
}

impl FalsePositives {
    pub fn rate(&self) -> f64 {
        if self.advisories == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.advisories as f64
        }
    }

    pub fn add(&mut self, other: FalsePositives) {
        self.false_positives += other.false_positives;
        self.advisories += other.advisories;
    }
}

/// Advisories of the enabled run issued to pairs that stayed more than
/// [`FP_SEPARATION`] apart in the advisory-free baseline run.
pub fn false_positive_rate(enabled: &RunMetrics, baseline: &RunMetrics) -> Result<FalsePositives, HarnessError> {
    if enabled.seed != baseline.seed {
        return Err(HarnessError::SeedMismatch(enabled.seed, baseline.seed));
    }
    if !enabled.advisories_enabled || baseline.advisories_enabled {
        return Err(HarnessError::NotPaired);
    }
    let mut fp = FalsePositives {
        false_positives: 0,
        advisories: enabled.advisories_issued,
    };
    for (pair, n) in &enabled.advisories_by_pair {
        if baseline.min_separation.get(pair).is_some_and(|d| *d > FP_SEPARATION) {
            fp.false_positives += n;
        }
    }
    Ok(fp)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::CorruptTrace {
                file: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn find_traces(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_traces(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "trace.jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Runs with advisories on and off for one (scenario, seed).
type Pairing<'a> = (Vec<&'a RunMetrics>, Vec<&'a RunMetrics>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub runs: Vec<(String, RunMetrics)>,
    pub aggregate: Vec<AggregateRow>,
    /// Summed over every (advisories on, advisories off) pair of runs that
    /// share a scenario name and seed.
    pub false_positives: Option<FalsePositives>,
}

impl Report {
    pub fn from_runs(runs: Vec<(String, RunMetrics)>) -> Self {
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        for (_, m) in &runs {
            for (i, (k, v)) in m.scalars().into_iter().enumerate() {
                if columns.len() <= i {
                    columns.push((k, Vec::new()));
                }
                columns[i].1.push(v);
            }
        }
        let aggregate = columns
            .into_iter()
            .map(|(metric, v)| {
                let n = v.len();
                let mean = v.iter().sum::<f64>() / n as f64;
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                AggregateRow {
                    metric,
                    n,
                    mean,
                    std: var.sqrt(),
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();

        let mut by_key: BTreeMap<(String, u64), Pairing> = BTreeMap::new();
        for (_, m) in &runs {
            let e = by_key.entry((m.scenario.clone(), m.seed)).or_default();
            if m.advisories_enabled {
                e.0.push(m);
            } else {
                e.1.push(m);
            }
        }
        let mut fp: Option<FalsePositives> = None;
        for (on, off) in by_key.values() {
            if let ([on], [off]) = (on.as_slice(), off.as_slice()) {
                if let Ok(x) = false_positive_rate(on, off) {
                    fp.get_or_insert_with(FalsePositives::default).add(x);
                }
            }
        }
        Self {
            runs,
            aggregate,
            false_positives: fp,
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let mut s = String::new();
        match format {
            ReportFormat::Csv => {
                s.push_str("metric,n,mean,std,min,max\n");
                for r in &self.aggregate {
                    let _ = writeln!(s, "{},{},{},{},{},{}", r.metric, r.n, r.mean, r.std, r.min, r.max);
                }
                if let Some(fp) = self.false_positives {
                    let _ = writeln!(
                        s,
                        "false_positive_rate,{},{},0,{},{}",
                        fp.advisories,
                        fp.rate(),
                        fp.rate(),
                        fp.rate()
                    );
                }
            }
            ReportFormat::Text => {
                let _ = writeln!(s, "runs: {}", self.runs.len());
                for (path, m) in &self.runs {
                    let _ = writeln!(
                        s,
                        "  {path}  scenario={} seed={} advisories={} collisions={} issued={} reversals={}",
                        m.scenario, m.seed, m.advisories_enabled, m.collisions, m.advisories_issued, m.reversals
                    );
                }
                let _ = writeln!(s);
                let _ = writeln!(
                    s,
                    "{:<32} {:>6} {:>14} {:>14} {:>14} {:>14}",
                    "metric", "n", "mean", "std", "min", "max"
                );
                for r in &self.aggregate {
                    let _ = writeln!(
                        s,
                        "{:<32} {:>6} {:>14.4} {:>14.4} {:>14.4} {:>14.4}",
                        r.metric, r.n, r.mean, r.std, r.min, r.max
                    );
                }
                if let Some(fp) = self.false_positives {
                    let _ = writeln!(
                        s,
                        "\nfalse positives: {} of {} advisories (rate {:.4})",
                        fp.false_positives,
                        fp.advisories,
                        fp.rate()
                    );
                }
            }
        }
        s
    }
}

/// Recomputes metrics from every `trace.jsonl` under `dir` and aggregates
/// them. Runs are ordered by path.
pub fn report(dir: &Path) -> Result<Report, HarnessError> {
    let mut paths = Vec::new();
    if dir.is_file() {
        paths.push(dir.to_path_buf());
    } else {
        find_traces(dir, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(HarnessError::NoTraces(dir.display().to_string()));
    }
    let mut runs = Vec::new();
    for p in paths {
        let recs = load_trace(&p)?;
        let rel = p.strip_prefix(dir).unwrap_or(&p).display().to_string();
        runs.push((rel, metrics_from_records(&recs)));
    }
    Ok(Report::from_runs(runs))
}
