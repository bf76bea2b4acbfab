//! Recomputes decomposition metrics, SR bars and smoothness tables from a
//! stored run directory:
//!
//! ```text
//! <runs>/outputs/<sample>.json   generated steps
//! <runs>/refs/<sample>.json      reference steps
//! <runs>/trials.json             optional, list of score cards
//! <runs>/traces/*.csv            optional, execution traces
//! ```
//!
//! Step files hold either a JSON array of strings or `{"steps": [...]}`.
//! Missing or unreadable inputs are listed in the report instead of
//! aborting it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    edit_distance_from, match_steps, rouge_l, rouge_n, summarize, EvalError, MatchParams, Prf, ScoreCard, SrSummary, StepSequence,
};
use crate::executor::{smoothness_report, ExecMode, ExecutionTrace, SmoothnessReport, JOINTS};

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub runs_dir: PathBuf,
    /// Defaults to `<runs>/report`.
    pub out_dir: Option<PathBuf>,
    pub params: MatchParams,
}

impl EvalConfig {
    pub fn new(runs_dir: impl Into<PathBuf>) -> Self {
        Self { runs_dir: runs_dir.into(), out_dir: None, params: MatchParams::default() }
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| self.runs_dir.join(REPORT_DIR))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub sample: String,
    pub gen_len: usize,
    pub ref_len: usize,
    pub matched: usize,
    pub edit_distance: f64,
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSmoothness {
    pub trace: String,
    /// Taken from the file name suffix, `unknown` otherwise.
    pub mode: String,
    pub report: SmoothnessReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvalReport {
    /// Sorted by sample name.
    pub samples: Vec<SampleMetrics>,
    /// Per group, then `all` pooled over every trial.
    pub sr: Vec<SrSummary>,
    pub smoothness: Vec<TraceSmoothness>,
    /// Inputs that were expected but absent or unusable.
    pub missing: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl EvalReport {
    pub fn is_partial(&self) -> bool {
        !self.missing.is_empty()
    }

    /// Per-sample average, or `None` without samples.
    pub fn mean(&self) -> Option<SampleMetrics> {
        if self.samples.is_empty() {
            return None;
        }
        let n = self.samples.len() as f64;
        let avg = |f: &dyn Fn(&SampleMetrics) -> f64| self.samples.iter().map(f).sum::<f64>() / n;
        let avg_prf = |f: &dyn Fn(&SampleMetrics) -> Prf| Prf {
            precision: avg(&|s| f(s).precision),
            recall: avg(&|s| f(s).recall),
            f1: avg(&|s| f(s).f1),
        };
        Some(SampleMetrics {
            sample: "mean".into(),
            gen_len: self.samples.iter().map(|s| s.gen_len).sum(),
            ref_len: self.samples.iter().map(|s| s.ref_len).sum(),
            matched: self.samples.iter().map(|s| s.matched).sum(),
            edit_distance: avg(&|s| s.edit_distance),
            rouge1: avg_prf(&|s| s.rouge1),
            rouge2: avg_prf(&|s| s.rouge2),
            rouge_l: avg_prf(&|s| s.rouge_l),
        })
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = format!(
            "# edit_distance and ROUGE columns of the mean row are per-sample averages over {} samples\n",
            self.samples.len()
        );
        out.push_str("sample,gen_len,ref_len,matched,edit_distance");
        for m in ["rouge1", "rouge2", "rougeL"] {
            let _ = write!(out, ",{m}_p,{m}_r,{m}_f1");
        }
        out.push('\n');
        for s in self.samples.iter().cloned().chain(self.mean()) {
            let _ = write!(out, "{},{},{},{},{:.6}", s.sample, s.gen_len, s.ref_len, s.matched, s.edit_distance);
            for p in [s.rouge1, s.rouge2, s.rouge_l] {
                let _ = write!(out, ",{:.6},{:.6},{:.6}", p.precision, p.recall, p.f1);
            }
            out.push('\n');
        }
        out
    }

    pub fn sr_csv(&self) -> String {
        let mut out = String::from("group,trials,s_obs,s_max,sr_percent,wilson68_low,wilson68_high\n");
        for s in &self.sr {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                s.group, s.trials, s.s_obs, s.s_max, s.sr_percent, s.wilson_low, s.wilson_high
            );
        }
        out
    }

    pub fn smoothness_csv(&self) -> String {
        let mut out = String::from("trace,mode,max_joint_delta,sum_sq_jerk,wall_steps,executed_steps,pause_count\n");
        for t in &self.smoothness {
            let r = &t.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t.trace, t.mode, r.max_joint_delta, r.sum_sq_jerk, r.wall_steps, r.executed_steps, r.pause_count
            );
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StepFile {
    Bare(Vec<String>),
    Wrapped { steps: Vec<String> },
}

fn read_steps(path: &Path) -> Result<StepSequence, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file: StepFile = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let steps = match file {
        StepFile::Bare(s) | StepFile::Wrapped { steps: s } => s,
    };
    StepSequence::new(steps).map_err(|e| format!("{}: {e}", path.display()))
}

/// `<stem>.json` files of a directory, by stem.
fn json_stems(dir: &Path) -> Option<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).ok()?;
    let mut out = BTreeMap::new();
    for e in entries.flatten() {
        let p = e.path();
        if p.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), p);
            }
        }
    }
    Some(out)
}

pub fn score_sample(
    name: &str,
    gen: &StepSequence,
    reference: &StepSequence,
    params: MatchParams,
) -> Result<SampleMetrics, EvalError> {
    let matches = match_steps(gen, reference, params)?;
    let (g, r) = (gen.joined(), reference.joined());
    Ok(SampleMetrics {
        sample: name.to_string(),
        gen_len: gen.len(),
        ref_len: reference.len(),
        matched: matches.pairs.len(),
        edit_distance: edit_distance_from(&matches, gen.len(), reference.len()),
        rouge1: rouge_n(&g, &r, 1)?,
        rouge2: rouge_n(&g, &r, 2)?,
        rouge_l: rouge_l(&g, &r),
    })
}

fn mode_from_name(stem: &str) -> String {
    ["async_naive", "async_rtc", "sync"]
        .into_iter()
        .find(|m| stem == *m || stem.ends_with(&format!("_{m}")) || stem.ends_with(&format!("-{m}")))
        .unwrap_or("unknown")
        .to_string()
}

fn collect_samples(cfg: &EvalConfig, report: &mut EvalReport) {
    let outputs = json_stems(&cfg.runs_dir.join("outputs"));
    let refs = json_stems(&cfg.runs_dir.join("refs"));
    if outputs.is_none() {
        report.missing.push("outputs/".into());
    }
    if refs.is_none() {
        report.missing.push("refs/".into());
    }
    let (outputs, refs) = (outputs.unwrap_or_default(), refs.unwrap_or_default());
    for name in refs.keys().filter(|k| !outputs.contains_key(*k)) {
        report.missing.push(format!("outputs/{name}.json"));
    }
    for (name, out_path) in &outputs {
        let Some(ref_path) = refs.get(name) else {
            report.missing.push(format!("refs/{name}.json"));
            continue;
        };
        let scored = read_steps(out_path)
            .and_then(|g| read_steps(ref_path).map(|r| (g, r)))
            .and_then(|(g, r)| score_sample(name, &g, &r, cfg.params).map_err(|e| format!("{name}: {e}")));
        match scored {
            Ok(m) => report.samples.push(m),
            Err(e) => report.missing.push(e),
        }
    }
}

fn collect_trials(cfg: &EvalConfig, report: &mut EvalReport) {
    let path = cfg.runs_dir.join("trials.json");
    let Ok(text) = std::fs::read_to_string(&path) else {
        return;
    };
    let cards: Vec<ScoreCard> = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return report.missing.push(format!("trials.json: {e}")),
    };
    let mut groups: BTreeMap<&str, Vec<ScoreCard>> = BTreeMap::new();
    for c in &cards {
        groups.entry(c.group.as_str()).or_default().push(c.clone());
    }
    let mut rows: Vec<(String, Vec<ScoreCard>)> =
        groups.into_iter().filter(|(g, _)| !g.is_empty()).map(|(g, c)| (g.to_string(), c)).collect();
    rows.push(("all".into(), cards));
    for (g, c) in rows {
        match summarize(&g, &c) {
            Ok(s) => report.sr.push(s),
            Err(e) => report.missing.push(format!("trials.json group {g}: {e}")),
        }
    }
}

fn collect_traces(cfg: &EvalConfig, report: &mut EvalReport) -> Vec<(String, ExecutionTrace)> {
    let Ok(entries) = std::fs::read_dir(cfg.runs_dir.join("traces")) else {
        return Vec::new();
    };
    let mut paths: Vec<PathBuf> =
        entries.flatten().map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "csv")).collect();
    paths.sort();
    let mut traces = Vec::new();
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mode = mode_from_name(&stem);
        let parsed = std::fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|t| ExecutionTrace::from_csv(&t, mode.parse().unwrap_or(ExecMode::AsyncRtc)).map_err(|e| e.to_string()))
            .and_then(|t| {
                let joints = t.records.first().map_or(0, |r| r.commanded.len().min(JOINTS));
                smoothness_report(&t, joints).map(|r| (t, r)).map_err(|e| e.to_string())
            });
        match parsed {
            Ok((t, r)) => {
                report.smoothness.push(TraceSmoothness { trace: stem.clone(), mode, report: r });
                traces.push((stem, t));
            }
            Err(e) => report.missing.push(format!("traces/{stem}.csv: {e}")),
        }
    }
    traces
}

fn commanded_csv(trace: &ExecutionTrace) -> String {
    let joints = trace.records.first().map_or(0, |r| r.commanded.len().min(JOINTS));
    let mut out = String::from("tick,step");
    for k in 0..joints {
        let _ = write!(out, ",joint{k}");
    }
    out.push('\n');
    for (tick, r) in trace.records.iter().enumerate() {
        let _ = write!(out, "{tick},{}", r.step);
        for v in &r.commanded[..joints] {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn write(report: &mut EvalReport, path: PathBuf, text: &str) -> Result<(), EvalError> {
    std::fs::write(&path, text).map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
    report.written.push(path);
    Ok(())
}

/// Builds the report and writes `metrics.csv`, `sr.csv`, `plotdata/*.csv`
/// and, when inputs are missing, `missing.txt`.
pub fn run_eval(cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.params.validate()?;
    if !cfg.runs_dir.is_dir() {
        return Err(EvalError::Io {
            path: cfg.runs_dir.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found"),
        });
    }
    let mut report = EvalReport::default();
    collect_samples(cfg, &mut report);
    collect_trials(cfg, &mut report);
    let traces = collect_traces(cfg, &mut report);

    let dir = cfg.report_dir();
    let plot = dir.join("plotdata");
    std::fs::create_dir_all(&plot).map_err(|e| EvalError::Io { path: plot.display().to_string(), source: e })?;
    let (metrics, sr, smooth) = (report.metrics_csv(), report.sr_csv(), report.smoothness_csv());
    write(&mut report, dir.join("metrics.csv"), &metrics)?;
    write(&mut report, dir.join("sr.csv"), &sr)?;
    write(&mut report, plot.join("smoothness.csv"), &smooth)?;
    let mut ed = String::from("sample,edit_distance\n");
    for s in &report.samples {
        let _ = writeln!(ed, "{},{}", s.sample, s.edit_distance);
    }
    write(&mut report, plot.join("edit_distance.csv"), &ed)?;
    for (stem, t) in &traces {
        write(&mut report, plot.join(format!("{stem}_commanded.csv")), &commanded_csv(t))?;
    }
    let missing_path = dir.join("missing.txt");
    if report.is_partial() {
        let text: String = report.missing.iter().map(|m| format!("{m}\n")).collect();
        write(&mut report, missing_path, &text)?;
    } else if missing_path.exists() {
        let _ = std::fs::remove_file(missing_path);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(root: &Path, rel: &str, text: &str) {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, text).unwrap();
    }

    #[test]
    fn identical_outputs_give_zero_edit_distance() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "outputs/a.json", r#"["open the bottle", "pour 5 ml into the beaker"]"#);
        put(dir.path(), "refs/a.json", r#"{"steps": ["open the bottle", "pour 5 ml into the beaker"]}"#);
        let r = run_eval(&EvalConfig::new(dir.path())).unwrap();
        assert!(!r.is_partial());
        assert_eq!(r.samples[0].edit_distance, 0.0);
        assert_eq!(r.samples[0].rouge_l.f1, 1.0);
        let csv = std::fs::read_to_string(dir.path().join("report/metrics.csv")).unwrap();
        assert!(csv.starts_with("# edit_distance and ROUGE columns of the mean row are per-sample averages"));
        assert!(csv.contains("\na,2,2,2,0.000000,"));
    }

    #[test]
    fn missing_inputs_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "outputs/a.json", r#"["x"]"#);
        put(dir.path(), "outputs/b.json", r#"["y"]"#);
        put(dir.path(), "refs/b.json", r#"["y"]"#);
        put(dir.path(), "refs/c.json", r#"["z"]"#);
        put(dir.path(), "outputs/d.json", r#"[""]"#);
        put(dir.path(), "refs/d.json", r#"["z"]"#);
        let r = run_eval(&EvalConfig::new(dir.path())).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.missing.len(), 3, "{:?}", r.missing);
        assert!(r.missing.contains(&"refs/a.json".to_string()));
        assert!(r.missing.contains(&"outputs/c.json".to_string()));
        assert!(dir.path().join("report/missing.txt").is_file());
    }

    #[test]
    fn mode_suffixes() {
        assert_eq!(mode_from_name("pair1_async_rtc"), "async_rtc");
        assert_eq!(mode_from_name("pair1_sync"), "sync");
        assert_eq!(mode_from_name("sync"), "sync");
        assert_eq!(mode_from_name("async"), "unknown");
    }

    #[test]
    fn mean_is_per_sample() {
        let p = MatchParams::default();
        let a = score_sample("a", &StepSequence::new(["x y"]).unwrap(), &StepSequence::new(["x y"]).unwrap(), p).unwrap();
        let b = score_sample("b", &StepSequence::new(["x"]).unwrap(), &StepSequence::new(["q", "r"]).unwrap(), p).unwrap();
        assert_eq!(b.edit_distance, 3.0);
        let r = EvalReport { samples: vec![a, b], ..Default::default() };
        assert_eq!(r.mean().unwrap().edit_distance, 1.5);
    }
}
