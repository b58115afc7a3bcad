//! Subprocess tools: one JSON request on stdin, one JSON response on stdout.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::report::{Flag, ReportTable, ToolReport};
use super::{Params, ToolInput};
use crate::dataset::{read_csv_path, write_csv_path, TabularDataset};

#[derive(Debug, Serialize)]
struct Request<'a> {
    input_csv_path: &'a Path,
    params: &'a Params,
    seed: u64,
    workdir: &'a Path,
}

#[derive(Debug, Deserialize)]
struct Response {
    status: String,
    #[serde(default)]
    output_csv_path: Option<PathBuf>,
    #[serde(default)]
    report: ExternalReport,
}

#[derive(Debug, Default, Deserialize)]
struct ExternalReport {
    #[serde(default)]
    summary: String,
    #[serde(default)]
    tables: Vec<ReportTable>,
    #[serde(default)]
    flags: Vec<Flag>,
    #[serde(default)]
    metrics: BTreeMap<String, f64>,
    #[serde(default)]
    data: serde_json::Value,
}

const POLL: Duration = Duration::from_millis(50);

/// Runs an external tool. Every failure mode comes back as a failed report;
/// the input dataset is never touched.
pub(super) fn run(
    name: &str,
    executable: &Path,
    input: &ToolInput<'_>,
    timeout: Duration,
) -> (Option<TabularDataset>, ToolReport) {
    let fail = |cause: String| (None, ToolReport::failed(name, input.seed, cause));
    let workdir = match &input.aux.workdir {
        Some(w) => w.clone(),
        None => std::env::temp_dir().join(format!("curate-{name}-{}-{}", std::process::id(), input.seed)),
    };
    if let Err(e) = std::fs::create_dir_all(&workdir) {
        return fail(format!("cannot create workdir: {e}"));
    }
    let input_path = workdir.join("input.csv");
    if let Err(e) = write_csv_path(input.dataset, &input_path) {
        return fail(format!("cannot write input: {e}"));
    }
    let request = Request { input_csv_path: &input_path, params: input.params, seed: input.seed, workdir: &workdir };
    let body = match serde_json::to_vec(&request) {
        Ok(b) => b,
        Err(e) => return fail(e.to_string()),
    };

    let mut child = match Command::new(executable)
        .current_dir(&workdir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return fail(format!("cannot spawn {}: {e}", executable.display())),
    };
    if let Some(mut stdin) = child.stdin.take() {
        // A tool that ignores stdin may close it early; that is not our error.
        let _ = stdin.write_all(&body);
    }
    // Drain pipes on threads so a chatty tool cannot deadlock on a full pipe.
    let stdout = child.stdout.take().map(|mut s| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = std::io::Read::read_to_end(&mut s, &mut buf);
            buf
        })
    });
    let stderr = child.stderr.take().map(|mut s| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = std::io::Read::read_to_end(&mut s, &mut buf);
            buf
        })
    });

    let started = Instant::now();
    let status = loop {
        if input.aux.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst)) {
            let _ = child.kill();
            let _ = child.wait();
            return fail("cancelled".into());
        }
        match child.wait_timeout(POLL) {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return fail(format!("timed out after {}s", timeout.as_secs()));
            }
            Ok(None) => continue,
            Err(e) => return fail(e.to_string()),
        }
    };
    let out = stdout.and_then(|h| h.join().ok()).unwrap_or_default();
    let err = stderr.and_then(|h| h.join().ok()).unwrap_or_default();
    if !status.success() {
        let tail = String::from_utf8_lossy(&err);
        let tail = tail.trim();
        return fail(format!("exited with {status}{}{}", if tail.is_empty() { "" } else { ": " }, last_line(tail)));
    }
    let response: Response = match serde_json::from_slice(&out) {
        Ok(r) => r,
        Err(e) => return fail(format!("protocol error: unparseable stdout ({e})")),
    };
    let mut report = ToolReport::ok(name, input.seed, response.report.summary);
    report.tables = response.report.tables;
    report.flags = response.report.flags;
    report.metrics = response.report.metrics;
    report.data = response.report.data;
    if response.status != "ok" {
        report.status = super::report::ReportStatus::Failed;
        if report.summary.is_empty() {
            report.summary = format!("tool reported status '{}'", response.status);
        }
        return (None, report);
    }
    let dataset = match response.output_csv_path {
        None => None,
        Some(p) => {
            let p = if p.is_relative() { workdir.join(p) } else { p };
            match read_csv_path(&p) {
                Ok(d) => Some(d),
                Err(e) => return fail(format!("protocol error: unreadable output csv ({e})")),
            }
        }
    };
    (dataset, report)
}

fn last_line(s: &str) -> &str {
    s.lines().last().unwrap_or("")
}
