use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};

use gmm_nls::benchmarks::{HessianSweep, StudyReport, TrialRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Md,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Csv, Format::Json, Format::Md];

    pub fn parse_list(s: &str) -> Result<Vec<Format>> {
        let mut out = Vec::new();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let f = match name.to_ascii_lowercase().as_str() {
                "csv" => Format::Csv,
                "json" => Format::Json,
                "md" | "markdown" => Format::Md,
                other => bail!("unknown format `{other}`"),
            };
            if !out.contains(&f) {
                out.push(f);
            }
        }
        if out.is_empty() {
            bail!("no output formats selected");
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Table {
    Toy,
    Psr,
}

pub const TRIAL_HEADER: [&str; 10] = [
    "trial_id",
    "method",
    "converged",
    "success",
    "iterations",
    "rmse",
    "rmse_rot_deg",
    "rmse_trans_m",
    "anees_term",
    "wall_time_s",
];

pub const SWEEP_HEADER: [&str; 6] = ["x", "h_exact", "h_mm", "h_sm", "h_msm", "h_hsm"];

/// `Display` for f64 is the shortest string that parses back to the same value.
fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn trial_row(r: &TrialRecord, omit_timing: bool) -> [String; 10] {
    [
        r.trial_id.to_string(),
        r.method.short_name().to_string(),
        r.converged.to_string(),
        opt(r.success),
        r.iterations.to_string(),
        opt(r.rmse),
        opt(r.rmse_rot_deg),
        opt(r.rmse_trans_m),
        opt(r.anees_term),
        if omit_timing {
            String::new()
        } else {
            r.wall_time_s.to_string()
        },
    ]
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"))
}

/// Markdown summary table, one row per method.
pub fn markdown_table(report: &StudyReport, table: Table, omit_timing: bool) -> String {
    let time = |t: f64| {
        if omit_timing {
            "n/a".to_string()
        } else {
            format!("{t:.3}")
        }
    };
    let mut s = String::new();
    match table {
        Table::Toy => {
            s.push_str("| Method | RMSE (m) | Success rate (%) | Avg. Iter. | Time (s) |\n");
            s.push_str("|---|---|---|---|---|\n");
            for a in &report.aggregates {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {:.1} | {} |",
                    a.method.label(),
                    fmt_opt(a.rmse, 3),
                    fmt_opt(a.success_rate.map(|r| 100.0 * r), 1),
                    a.avg_iterations,
                    time(a.wall_time_s)
                );
            }
        }
        Table::Psr => {
            s.push_str(
                "| Method | RMSE rot (deg) | RMSE trans (m) | ANEES | Avg. Iter. | Time (s) |\n",
            );
            s.push_str("|---|---|---|---|---|---|\n");
            let mut excluded = Vec::new();
            for a in &report.aggregates {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {:.1} | {} |",
                    a.method.label(),
                    fmt_opt(a.rmse_rot_deg, 3),
                    fmt_opt(a.rmse_trans_m, 3),
                    fmt_opt(a.anees, 2),
                    a.avg_iterations,
                    time(a.wall_time_s)
                );
                if a.anees_excluded > 0 {
                    excluded.push(format!("{}: {}", a.method.label(), a.anees_excluded));
                }
            }
            if !excluded.is_empty() {
                let _ = writeln!(
                    s,
                    "\nTrials excluded from ANEES (singular information): {}",
                    excluded.join(", ")
                );
            }
        }
    }
    s
}

pub fn aggregate_json(report: &StudyReport) -> Result<Value> {
    let mut map = Map::new();
    for a in &report.aggregates {
        map.insert(a.method.short_name().to_string(), serde_json::to_value(a)?);
    }
    Ok(Value::Object(map))
}

/// Writes result files into one directory, creating it if needed.
pub struct OutputSink {
    dir: PathBuf,
    formats: Vec<Format>,
    omit_timing: bool,
}

impl OutputSink {
    pub fn new(dir: &Path, formats: &[Format], omit_timing: bool) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        // Fail before a long run rather than after it.
        let probe = dir.join(".gmmnls-write-probe");
        fs::write(&probe, b"")
            .with_context(|| format!("output directory {} is not writable", dir.display()))?;
        let _ = fs::remove_file(probe);
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            omit_timing,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_study(&self, stem: &str, report: &StudyReport, table: Table) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let path = self.path(&format!("{stem}_trials.csv"));
            let mut w = csv::Writer::from_path(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            w.write_record(TRIAL_HEADER)?;
            for r in &report.records {
                w.write_record(trial_row(r, self.omit_timing))?;
            }
            w.flush()?;
        }
        if self.formats.contains(&Format::Json) {
            let mut value = aggregate_json(report)?;
            if self.omit_timing {
                for v in value
                    .as_object_mut()
                    .into_iter()
                    .flat_map(|m| m.values_mut())
                {
                    v["wall_time_s"] = Value::Null;
                }
            }
            self.write_text(
                &format!("{stem}_summary.json"),
                &(serde_json::to_string_pretty(&value)? + "\n"),
            )?;
        }
        if self.formats.contains(&Format::Md) {
            self.write_text(
                &format!("{stem}_table.md"),
                &markdown_table(report, table, self.omit_timing),
            )?;
        }
        Ok(())
    }

    pub fn write_sweep(&self, stem: &str, sweep: &HessianSweep) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let path = self.path(&format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            w.write_record(SWEEP_HEADER)?;
            for r in &sweep.rows {
                w.write_record(
                    [r.x, r.h_exact, r.h_mm, r.h_sm, r.h_msm, r.h_hsm].map(|v| v.to_string()),
                )?;
            }
            w.flush()?;
        }
        let deviation: Map<String, Value> = sweep
            .deviation
            .iter()
            .map(|(m, d)| (m.short_name().to_string(), json!(d)))
            .collect();
        if self.formats.contains(&Format::Json) {
            self.write_text(
                &format!("{stem}_deviation.json"),
                &(serde_json::to_string_pretty(&Value::Object(deviation))? + "\n"),
            )?;
        }
        if self.formats.contains(&Format::Md) {
            let mut s = String::from("| Method | Integrated abs. Hessian error |\n|---|---|\n");
            for (m, d) in &sweep.deviation {
                let _ = writeln!(s, "| {} | {d:.4} |", m.label());
            }
            self.write_text(&format!("{stem}_table.md"), &s)?;
        }
        Ok(())
    }
}
