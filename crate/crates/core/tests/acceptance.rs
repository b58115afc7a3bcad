//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Runs as a plain binary (`harness = false`) so the summary is always shown.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use curate_core::dataset::{dataset_fingerprint, read_csv_path};
use curate_core::harness::{
    apply_oracle, corrupt, flagged_ids, gen_clean, load_scenario, recovery_score, run_scenario, CleanSpec, CorruptionStep, Truth, GENERATORS,
};
use curate_core::models::{self, auroc, binary_labels, cindex, cox, evaluate_cv, fit, leakage_probe, Hyperparams};
use curate_core::registry::{AuxInputs, Params, RegistryError};
use curate_core::session::{ExpertScript, ScriptedExpert};
use curate_core::tools::shapley::knn_shapley;
use curate_core::{
    Cell, ColumnKind, EventKind, EventRecord, Plan, Policy, Session, SessionConfig, SessionInputs, SessionStatus, StateBank, SystemState,
    TabularDataset, TaskKind, TaskSpec, ToolRegistry,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn registry() -> Arc<ToolRegistry> {
    Arc::new(ToolRegistry::with_builtins())
}

/// Declines every question except the keyed answers given.
fn script(answers: &[(&str, Value)]) -> ScriptedExpert {
    let mut rules: Vec<Value> = answers.iter().map(|(k, a)| json!({ "key": k, "answer": a, "times": 100 })).collect();
    rules.push(json!({ "match": ".*", "answer": "decline", "times": 1000 }));
    let s: ExpertScript = serde_json::from_value(json!({ "rules": rules })).expect("script parses");
    ScriptedExpert::new(s).expect("script compiles")
}

fn ids(ds: &TabularDataset, col: &str) -> Vec<String> {
    ds.column_index(col).map(|c| ds.column_cells(c).map(Cell::render).collect()).unwrap_or_default()
}

fn tool_events<'a>(events: &'a [EventRecord], tool: &'a str) -> impl Iterator<Item = (usize, &'a EventRecord)> + 'a {
    events.iter().enumerate().filter(move |(_, e)| e.kind == EventKind::ToolInvoked && e.payload["tool"] == tool)
}

// ---------------------------------------------------------------- oracles

fn oracle_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn oracle_cindex(times: &[f64], events: &[bool], risk: &[f64]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..times.len() {
        for j in 0..times.len() {
            if events[i] && times[i] < times[j] {
                pairs += 1;
                twice += if risk[i] > risk[j] { 2 } else if risk[i] == risk[j] { 1 } else { 0 };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Exact Shapley values of the averaged KNN utility by subset enumeration.
fn oracle_shapley(x: &[Vec<f64>], y: &[u8], vx: &[Vec<f64>], vy: &[u8], k: usize) -> Vec<f64> {
    let n = x.len();
    let utility = |mask: u32| -> f64 {
        let mut total = 0.0;
        for (q, &label) in vx.iter().zip(vy) {
            let mut members: Vec<(f64, usize)> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| (x[i].iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
                .collect();
            members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let hits = members.iter().take(k).filter(|(_, i)| y[*i] == label).count();
            total += hits as f64 / k as f64;
        }
        total / vx.len() as f64
    };
    let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        for mask in 0u32..(1 << n) {
            if mask & (1 << i) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact(s) * fact(n - s - 1) / fact(n);
            *p += w * (utility(mask | (1 << i)) - utility(mask));
        }
    }
    phi
}

// ---------------------------------------------------------------- criteria

fn c1_missingness_backtrack() -> Outcome {
    let ds = read_csv_path(fixtures().join("missingness_backtrack.csv")).map_err(|e| e.to_string())?;
    ensure(ds.row_count() == 60 && ds.column_count() == 6, || format!("fixture is {}x{}", ds.row_count(), ds.column_count()))?;
    let inputs = SessionInputs::new(ds.clone(), TaskSpec::regression("score"));
    let mut s = Session::new("missingness", inputs, SessionConfig::default(), registry(), Policy::Rules, None).map_err(|e| e.to_string())?;
    let report = s.run(&mut ScriptedExpert::empty()).map_err(|e| e.to_string())?;
    let events = s.bank().events();

    let golden: Vec<String> = std::fs::read_to_string(fixtures().join("missingness_backtrack.events"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(str::to_string)
        .collect();
    let kinds: Vec<String> = events.iter().map(|e| e.kind.as_str().to_string()).collect();
    ensure(kinds == golden, || format!("event kinds {kinds:?}"))?;

    let (drop_at, drop) = tool_events(events, "drop_missing").next().ok_or("drop_missing never ran")?;
    let after = drop.payload["output_fingerprint"].as_str().and_then(|f| s.bank().dataset(f)).ok_or("drop output not stored")?;
    ensure(after.row_count() < 50, || format!("drop_missing left {} rows", after.row_count()))?;
    let (bt_at, bt) = events.iter().enumerate().find(|(_, e)| e.kind == EventKind::Backtrack).ok_or("no backtrack")?;
    ensure(bt_at > drop_at, || "backtrack before the drop".into())?;
    let reason = bt.payload["reason"].as_str().unwrap_or("");
    ensure(reason.contains("insufficient rows") && bt.payload["initiator"] == "coordinator", || format!("backtrack payload {}", bt.payload))?;
    let k = bt.payload["to"].as_u64().ok_or("backtrack without target")?;
    let pre_drop = events
        .iter()
        .find(|e| e.kind == EventKind::StateAppended && e.payload["step"] == k)
        .and_then(|e| e.payload["state"]["dataset_ref"].as_str())
        .ok_or("no state at the backtrack target")?;
    ensure(pre_drop == drop.payload["input_fingerprint"], || "restored state is not the pre-drop state".into())?;
    let (imp_at, imp) = tool_events(events, "impute").next().ok_or("impute never ran")?;
    ensure(imp_at > bt_at && imp.payload["input_fingerprint"] == pre_drop, || "impute did not start from the restored dataset".into())?;
    let fin = s.current_dataset();
    ensure(report.status == SessionStatus::Converged, || format!("status {:?}", report.status))?;
    ensure(fin.row_count() == 60 && fin.total_missing() == 0, || format!("{} rows, {} missing", fin.row_count(), fin.total_missing()))?;
    Ok(format!("{} events match golden; restored step {k} fingerprint exact; 60 rows, 0 missing", events.len()))
}

fn tiny_dataset(variant: u8) -> TabularDataset {
    let schema = vec![("a".to_string(), ColumnKind::Numeric), ("b".to_string(), ColumnKind::Categorical)];
    let rows = (0..3 + variant as usize % 4)
        .map(|r| vec![Cell::Num((r as f64) * 0.5 + variant as f64), Cell::Text(format!("v{}", (r + variant as usize) % 3))])
        .collect();
    TabularDataset::new(schema, rows).expect("valid dataset")
}

#[derive(Debug, Clone)]
enum Op {
    Append(u8),
    Restore(f64),
}

fn c2_exact_restore() -> Outcome {
    let op = prop_oneof![3 => (0u8..8).prop_map(Op::Append), 1 => (0.0f64..1.0).prop_map(Op::Restore)];
    let scripts = proptest::collection::vec(op, 1..40);
    let mut runner = TestRunner::new(Config { cases: 100, failure_persistence: None, ..Config::default() });
    let mut restores = 0usize;
    let counter = std::cell::Cell::new(0usize);
    let result = runner.run(&scripts, |ops| {
        let dir = tempfile::tempdir().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut bank = StateBank::create(dir.path()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut expected: Vec<String> = Vec::new();
        for op in ops {
            match op {
                Op::Append(v) => {
                    let ds = tiny_dataset(v);
                    let state = SystemState {
                        step: expected.len() as u64,
                        dataset_ref: ds.fingerprint().to_string(),
                        history_ref: 0,
                        plan: Plan::default(),
                        episode_meta: Vec::new(),
                        tool_set: Vec::new(),
                    };
                    bank.append_state(state, &ds).map_err(|e| TestCaseError::fail(e.to_string()))?;
                    expected.push(ds.fingerprint().to_string());
                }
                Op::Restore(frac) if !expected.is_empty() => {
                    let k = ((expected.len() as f64) * frac) as usize;
                    bank.restore(k as u64, "test").map_err(|e| TestCaseError::fail(e.to_string()))?;
                    expected.truncate(k + 1);
                    counter.set(counter.get() + 1);
                    let cur = bank.current_dataset().ok_or_else(|| TestCaseError::fail("no dataset after restore"))?;
                    prop_assert_eq!(dataset_fingerprint(&cur), expected[k].clone());
                    prop_assert_eq!(bank.current_step(), Some(k as u64));
                }
                Op::Restore(_) => {}
            }
        }
        if let Some(last) = expected.last() {
            let reopened = StateBank::open(dir.path()).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let cur = reopened.current_dataset().ok_or_else(|| TestCaseError::fail("reopened bank is empty"))?;
            prop_assert_eq!(&dataset_fingerprint(&cur), last);
        }
        Ok(())
    });
    restores += counter.get();
    result.map_err(|e| e.to_string())?;
    Ok(format!("100 scripts, {restores} restores, all fingerprints exact (including after reopen)"))
}

fn c3_single_corruption_inverse() -> Outcome {
    let reg = registry();
    let spec = CleanSpec { categorical: 2, ..CleanSpec::new(TaskKind::Classification, 200) };
    let (clean, task) = gen_clean(&spec, 11).map_err(|e| e.to_string())?;
    // flips are only identifiable when the clean label is a function of the features
    let (separable, _) = gen_clean(&CleanSpec { separable: true, margin: 0.5, ..spec.clone() }, 11).map_err(|e| e.to_string())?;
    let mut steps: Vec<(String, CorruptionStep)> = GENERATORS
        .iter()
        .map(|g| {
            let p = if *g == "scramble_units" { json!({ "factor": 10.0 }) } else { json!({}) };
            (g.to_string(), CorruptionStep::new(g, p))
        })
        .collect();
    steps.push(("scramble_units(case)".into(), CorruptionStep::new("scramble_units", json!({ "mode": "case" }))));
    let mut failures = Vec::new();
    for (label, step) in &steps {
        let base = if label == "flip_labels" { &separable } else { &clean };
        let c = corrupt(base, &task, std::slice::from_ref(step), 7).map_err(|e| format!("{label}: {e}"))?;
        let before = recovery_score(base, &c.key, &c.train, c.test.as_ref()).map_err(|e| e.to_string())?;
        let (train, test) = apply_oracle(&reg, &c, 7).map_err(|e| format!("{label}: {e}"))?;
        let after = recovery_score(base, &c.key, &train, test.as_ref()).map_err(|e| e.to_string())?;
        if before.all_fixed() {
            failures.push(format!("{label}: corrupted data already scores as fixed"));
        }
        if !after.all_fixed() {
            failures.push(format!("{label}: {:?}", after.issue_resolution));
        }
        if label.starts_with("scramble_units") && after.cell_match != 1.0 {
            failures.push(format!("{label}: cell match {}", after.cell_match));
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(format!("{} generators plus case mode inverted; units/case cell-exact", GENERATORS.len()))
}

fn c4_leakage() -> Outcome {
    let spec = CleanSpec { numeric: 5, noise: 3.0, ..CleanSpec::new(TaskKind::Classification, 300) };
    let (clean, task) = gen_clean(&spec, 42).map_err(|e| e.to_string())?;
    let c = corrupt(&clean, &task, &[CorruptionStep::new("add_leak_column", json!({}))], 42).map_err(|e| e.to_string())?;
    let leak = match c.key.truth("add_leak_column") {
        Some(Truth::Leak { column }) => column.clone(),
        other => return Err(format!("unexpected key {other:?}")),
    };
    let hyper = Hyperparams::default();

    // the library metric agrees with pair counting on a held-out split
    let cut = c.train.row_count() * 7 / 10;
    let train = c.train.select_rows(&(0..cut).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let hold = c.train.select_rows(&(cut..c.train.row_count()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let m = fit(&train, &task, hyper, 42).map_err(|e| e.to_string())?;
    let scores = m.scores(&hold).map_err(|e| e.to_string())?;
    let (labels, _) = binary_labels(&hold, &task.target_col).map_err(|e| e.to_string())?;
    let lib = auroc(&scores, &labels).map_err(|e| e.to_string())?.value;
    ensure(lib == oracle_auroc(&scores, &labels), || format!("auroc {lib} differs from pair count"))?;

    let probe = leakage_probe(&c.train, &task, std::slice::from_ref(&leak), 5, 42, hyper).map_err(|e| e.to_string())?;
    ensure(probe.with_suspects >= 0.99, || format!("AUROC with leak {:.3}", probe.with_suspects))?;
    ensure(probe.gap >= 0.2, || format!("probe gap {:.3}", probe.gap))?;

    let reg = registry();
    let inv = reg.invoke("detect_label_leakage", &c.train, &task, &Params::new(), 42, &AuxInputs::default()).map_err(|e| e.to_string())?;
    ensure(inv.report.flags.iter().any(|f| f.columns.contains(&leak)), || format!("{leak} not flagged: {:?}", inv.report.flags))?;

    let inputs = SessionInputs::new(c.train.clone(), task.clone());
    let mut s = Session::new("leak", inputs, SessionConfig::default(), reg, Policy::Rules, None).map_err(|e| e.to_string())?;
    let mut expert = script(&[("label_leakage", json!("approve"))]);
    let report = s.run(&mut expert).map_err(|e| e.to_string())?;
    ensure(report.status == SessionStatus::Converged, || format!("status {:?}", report.status))?;
    let events = s.bank().events();
    let approved = events
        .iter()
        .position(|e| e.kind == EventKind::FeedbackReceived && e.payload["answer"]["value"].as_array().is_some_and(|v| v.iter().any(|c| c == leak.as_str())));
    let dropped = tool_events(events, "drop_columns")
        .find(|(_, e)| e.payload["report"]["status"] == "ok" && e.payload["params"]["columns"].as_array().is_some_and(|v| v.iter().any(|c| c == leak.as_str())))
        .map(|(i, _)| i);
    ensure(matches!((approved, dropped), (Some(a), Some(d)) if a < d), || format!("approval at {approved:?}, drop at {dropped:?}"))?;
    let curated = s.current_dataset();
    ensure(curated.column_index(&leak).is_none(), || "leak column survived".into())?;
    let after = evaluate_cv(&curated, &task, 5, 42, hyper).map_err(|e| e.to_string())?.value;
    ensure((0.60..=0.95).contains(&after), || format!("AUROC after removal {after:.3}"))?;
    Ok(format!(
        "AUROC with leak {:.3}, after approved removal {after:.3}, probe gap {:.3}",
        probe.with_suspects, probe.gap
    ))
}

fn c5_aggregation() -> Outcome {
    let spec = CleanSpec { numeric: 20, informative: Some(3), ..CleanSpec::new(TaskKind::Survival, 60) };
    let (clean, task) = gen_clean(&spec, 42).map_err(|e| e.to_string())?;
    let c = corrupt(&clean, &task, &[CorruptionStep::new("duplicate_visits", json!({ "visits": 5 }))], 42).map_err(|e| e.to_string())?;
    let id_col = c.key.id_col.clone();

    let inputs = SessionInputs::new(c.train.clone(), task.clone());
    let mut s = Session::new("visits", inputs, SessionConfig::default(), registry(), Policy::Rules, None).map_err(|e| e.to_string())?;
    let mut expert = script(&[("aggregation_policy", json!({ "type": "choice", "value": "last" }))]);
    let report = s.run(&mut expert).map_err(|e| e.to_string())?;
    ensure(report.status == SessionStatus::Converged, || format!("status {:?}", report.status))?;
    let curated = s.current_dataset();
    let got = ids(&curated, &id_col);
    let distinct: BTreeSet<&String> = got.iter().collect();
    ensure(!got.is_empty() && distinct.len() == got.len(), || format!("{} rows for {} ids", got.len(), distinct.len()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..50 {
        let groups = rng.random_range(5..40);
        let rows = rng.random_range(groups..groups * 6);
        let keys: Vec<String> = (0..rows).map(|r| if r < groups { format!("g{r}") } else { format!("g{}", rng.random_range(0..groups)) }).collect();
        let folds = rng.random_range(2..=groups.min(10));
        let assignment = models::assign_groups(&keys, folds, rng.random()).map_err(|e| e.to_string())?;
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (k, &f) in keys.iter().zip(&assignment) {
            if *fold_of.entry(k).or_insert(f) != f {
                return Err(format!("grouping {case}: id {k} in two folds"));
            }
        }
    }
    let split = models::split_grouped(&c.train, Some(&id_col), 5, 42).map_err(|e| e.to_string())?;
    let train_ids = ids(&c.train, &id_col);
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, &f) in train_ids.iter().zip(&split) {
        ensure(*fold_of.entry(k).or_insert(f) == f, || format!("fixture id {k} in two folds"))?;
    }

    let hyper = Hyperparams::default();
    let row_level = evaluate_cv(&c.train, &task, 5, 42, hyper).map_err(|e| e.to_string())?.value;
    let grouped = evaluate_cv(&c.train, &task.clone().with_group(&id_col), 5, 42, hyper).map_err(|e| e.to_string())?.value;
    ensure(row_level > grouped, || format!("row-level {row_level:.3} vs grouped {grouped:.3}"))?;
    Ok(format!("{} ids, one row each; 50 groupings leak-free; row-level C {row_level:.3} > grouped {grouped:.3}", got.len()))
}

fn c6_knn_shapley() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=n);
        let classes = rng.random_range(2..=3u8);
        let grid = case % 3 == 0; // integer coordinates force distance ties
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..2).map(|_| if grid { rng.random_range(0..3) as f64 } else { rng.random_range(-1.0..1.0) }).collect()
        };
        let x: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let m = rng.random_range(1..=3);
        let vx: Vec<Vec<f64>> = (0..m).map(|_| point(&mut rng)).collect();
        let vy: Vec<u8> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let fast = knn_shapley(&x, &y, &vx, &vy, k)?;
        let exact = oracle_shapley(&x, &y, &vx, &vy, k);
        for (a, b) in fast.iter().zip(&exact) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= 1e-9, || format!("instance {case} (n={n}, K={k}): {fast:?} vs {exact:?}"))?;
    }
    Ok(format!("50 instances, max |error| {worst:.1e}"))
}

fn c7_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let n = rng.random_range(2..=200);
        // a coarse grid makes ties in scores and times common
        let levels = if case % 2 == 0 { 7.0 } else { 1e6 };
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor()).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let lib = auroc(&scores, &labels).map_err(|e| e.to_string())?.value;
        let brute = oracle_auroc(&scores, &labels);
        ensure(lib == brute, || format!("auroc case {case}: {lib} vs {brute}"))?;

        let times: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor()).collect();
        let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        events[0] = true;
        let risk: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor()).collect();
        let brute = oracle_cindex(&times, &events, &risk);
        match cindex(&times, &events, &risk) {
            Ok(m) => ensure(m.value == brute, || format!("cindex case {case}: {} vs {brute}", m.value))?,
            Err(_) => ensure(brute.is_nan(), || format!("cindex case {case} refused comparable data"))?,
        }
        if !brute.is_nan() {
            for f in [|r: f64| 2.0 * r + r.cbrt() - 5.0, |r: f64| (r + 1.0).ln(), |r: f64| -1.0 / (r + 1.0)] {
                let transformed: Vec<f64> = risk.iter().map(|&r| f(r)).collect();
                let t = cindex(&times, &events, &transformed).map_err(|e| e.to_string())?.value;
                ensure(t == brute, || format!("cindex case {case} not invariant under a monotone transform"))?;
            }
        }
    }
    let times: Vec<f64> = (0..50).map(f64::from).collect();
    let events = vec![true; 50];
    let perfect: Vec<f64> = times.iter().map(|t| -t).collect();
    let flat = vec![1.0; 50];
    let p = cindex(&times, &events, &perfect).map_err(|e| e.to_string())?.value;
    let f = cindex(&times, &events, &flat).map_err(|e| e.to_string())?.value;
    let labels: Vec<bool> = (0..50).map(|i| i >= 25).collect();
    let a = auroc(&times, &labels).map_err(|e| e.to_string())?.value;
    let af = auroc(&flat, &labels).map_err(|e| e.to_string())?.value;
    ensure(p == 1.0 && f == 0.5 && a == 1.0 && af == 0.5, || format!("perfect/constant gave C {p}/{f}, AUROC {a}/{af}"))?;
    Ok("100 instances exact; monotone invariance; perfect 1.0, constant 0.5".into())
}

fn c8_cox_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, d) = (40, 4);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let times: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).floor()).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let g = cox::gradient(&x, &times, &events, &beta);
        let fd: Vec<f64> = (0..d)
            .map(|j| {
                let (mut up, mut down) = (beta.clone(), beta.clone());
                up[j] += h;
                down[j] -= h;
                (cox::partial_loglik(&x, &times, &events, &up) - cox::partial_loglik(&x, &times, &events, &down)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);
    }
    ensure(worst < 1e-5, || format!("relative error {worst:.2e}"))?;
    Ok(format!("20 points, max relative error {worst:.1e}"))
}

fn c9_noisy_labels() -> Outcome {
    let sc = load_scenario(&scenarios().join("prostate-analog.json")).map_err(|e| e.to_string())?;
    let seed = sc.seed;
    let (clean, task) = gen_clean(&sc.clean, seed).map_err(|e| e.to_string())?;
    let c = corrupt(&clean, &task, &sc.corruptions, seed).map_err(|e| e.to_string())?;
    let test = c.test.clone().ok_or("fixture has no test split")?;
    let flipped: BTreeSet<String> = match c.key.truth("flip_labels") {
        Some(Truth::Flips { ids }) => ids.iter().cloned().collect(),
        other => return Err(format!("unexpected key {other:?}")),
    };
    let id_col = c.key.id_col.clone();

    let inputs = SessionInputs { dataset: c.train.clone(), task: task.clone(), extra_files: Vec::new(), test: Some(test.clone()) };
    let config = SessionConfig { seed, ..SessionConfig::default() };
    let mut s = Session::new("noisy", inputs, config, registry(), Policy::Rules, None).map_err(|e| e.to_string())?;
    let mut expert = script(&[("noisy_labels", json!({ "type": "choice", "value": "remove" }))]);
    let report = s.run(&mut expert).map_err(|e| e.to_string())?;
    ensure(report.status == SessionStatus::Converged, || format!("status {:?}", report.status))?;

    let flagged = flagged_ids(s.bank(), &id_col, "flag_noisy_labels");
    let clean_ids: BTreeSet<String> = ids(&c.train, &id_col).into_iter().filter(|i| !flipped.contains(i)).collect();
    let recall = flipped.iter().filter(|i| flagged.contains(*i)).count() as f64 / flipped.len() as f64;
    let ffr = clean_ids.iter().filter(|i| flagged.contains(*i)).count() as f64 / clean_ids.len() as f64;

    let hyper = Hyperparams::default();
    let shifted_auroc = |train: &TabularDataset| -> Result<f64, String> {
        let m = fit(train, &task, hyper, seed).map_err(|e| e.to_string())?;
        let scores = m.scores(&test).map_err(|e| e.to_string())?;
        let (labels, _) = binary_labels(&test, &task.target_col).map_err(|e| e.to_string())?;
        Ok(oracle_auroc(&scores, &labels))
    };
    let baseline = shifted_auroc(&c.train)?;
    let curated = shifted_auroc(&s.current_dataset())?;
    let gain = curated - baseline;
    let detail = format!(
        "recall {recall:.2} ({} planted), false-flag rate {ffr:.3}, shifted-test AUROC {baseline:.3} -> {curated:.3} (gain {gain:+.3})",
        flipped.len()
    );
    ensure(recall >= 0.8 && ffr <= 0.05 && gain >= 0.02, || detail.clone())?;
    Ok(detail)
}

fn normalized_log(dir: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(dir.join("events.ndjson")).map_err(|e| e.to_string())?;
    let dir = dir.display().to_string();
    text.lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).map_err(|e| e.to_string())?;
            v["ts"] = Value::Null;
            Ok(v.to_string().replace(&dir, "<dir>"))
        })
        .collect()
}

fn c10_replay_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reg = registry();
    let mut lines = Vec::new();
    for name in ["pbc-analog", "lung-analog", "prostate-analog"] {
        let sc = load_scenario(&scenarios().join(format!("{name}.json"))).map_err(|e| e.to_string())?;
        ensure(sc.policy == "llm" && sc.provider.as_deref() == Some("replay"), || format!("{name} does not use a replay fixture"))?;
        let mut logs = Vec::new();
        for run in 0..2 {
            let wd = tmp.path().join(format!("{name}-{run}"));
            let r = run_scenario(&sc, reg.clone(), Some(&wd), None).map_err(|e| format!("{name}: {e}"))?;
            let failed: Vec<String> = r.expectations.iter().filter(|e| !e.passed).map(|e| format!("{} ({})", e.name, e.detail)).collect();
            ensure(failed.is_empty(), || format!("{name}: {}", failed.join(", ")))?;
            logs.push(normalized_log(&wd)?);
        }
        ensure(logs[0] == logs[1], || format!("{name}: logs differ"))?;
        lines.push(format!("{name} {} events", logs[0].len()));
    }
    Ok(lines.join(", "))
}

fn purity_params(tool: &str, ds: &TabularDataset) -> Params {
    let first_numeric = ds.columns().iter().find(|c| c.kind == ColumnKind::Numeric).map(|c| c.name.clone()).unwrap_or_default();
    let p = match tool {
        "harmonize_values" => json!({ "column": first_numeric, "scale": 2.0, "round_digits": 3 }),
        "extract_text_features" => json!({ "column": "notes", "patterns": { "high": "high", "low": "low" } }),
        "drop_rows" => json!({ "rows": [0, 2, 4] }),
        "drop_columns" => json!({ "columns": [first_numeric] }),
        _ => json!({}),
    };
    serde_json::from_value(p).expect("params")
}

fn c11_tool_purity() -> Outcome {
    let reg = registry();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut calls, mut failures_seen) = (0usize, 0usize);
    for case in 0..20u64 {
        let kind = [TaskKind::Classification, TaskKind::Regression, TaskKind::Survival][case as usize % 3];
        let spec = CleanSpec {
            numeric: rng.random_range(2..6),
            categorical: rng.random_range(0..3),
            ..CleanSpec::new(kind, rng.random_range(40..90))
        };
        let (clean, task) = gen_clean(&spec, case).map_err(|e| e.to_string())?;
        let mut steps = vec![CorruptionStep::new("inject_missing", json!({ "rate": 0.05 }))];
        if case % 2 == 0 {
            steps.push(CorruptionStep::new("shift_test_split", json!({})));
        }
        let c = corrupt(&clean, &task, &steps, case).map_err(|e| e.to_string())?;
        let ds = if case % 4 == 1 {
            let notes: Vec<Cell> = (0..c.train.row_count()).map(|r| Cell::Text(if r % 3 == 0 { "High risk".into() } else { "low".into() })).collect();
            c.train.push_column("notes", ColumnKind::Text, notes).map_err(|e| e.to_string())?
        } else {
            c.train.clone()
        };
        let aux = AuxInputs { test: c.test.clone(), datasets: c.extra_files.clone(), ..AuxInputs::default() };
        let before = dataset_fingerprint(&ds);
        for name in reg.names() {
            let params = purity_params(&name, &ds);
            let run = || reg.invoke(&name, &ds, &task, &params, case, &aux);
            let (a, b) = match (run(), run()) {
                (Err(RegistryError::UnsupportedTask { .. }), _) => continue,
                (Ok(a), Ok(b)) => (a, b),
                (a, b) => return Err(format!("{name} on dataset {case}: {:?} / {:?}", a.err(), b.err())),
            };
            calls += 2;
            if !a.report.is_ok() {
                failures_seen += 1;
            }
            ensure(a.dataset.fingerprint() == b.dataset.fingerprint(), || format!("{name} on dataset {case}: outputs differ"))?;
            ensure(a.report == b.report, || format!("{name} on dataset {case}: reports differ"))?;
            ensure(dataset_fingerprint(&ds) == before && ds.fingerprint() == before, || format!("{name} changed its input"))?;
        }
    }
    Ok(format!("{calls} invocations over 20 datasets deterministic; inputs untouched ({failures_seen} failing calls included)"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 missingness backtracking", Duration::from_secs(5), c1_missingness_backtrack),
        ("2 exact restore", Duration::from_secs(30), c2_exact_restore),
        ("3 single-corruption inverse", Duration::from_secs(60), c3_single_corruption_inverse),
        ("4 label leakage", Duration::from_secs(30), c4_leakage),
        ("5 per-id aggregation", Duration::from_secs(30), c5_aggregation),
        ("6 KNN-Shapley oracle", Duration::from_secs(60), c6_knn_shapley),
        ("7 metric oracles", Duration::from_secs(30), c7_metric_oracles),
        ("8 Cox gradient", Duration::from_secs(10), c8_cox_gradient),
        ("9 noisy labels", Duration::from_secs(60), c9_noisy_labels),
        ("10 replay determinism", Duration::from_secs(120), c10_replay_determinism),
        ("11 tool purity", Duration::from_secs(60), c11_tool_purity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", budget.as_secs())),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!("criterion {name}: {} ({:.2}s) {detail}", if ok { "PASS" } else { "FAIL" }, took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
