//! Builtin data-centric tools and their registry entries.

pub mod aggregate;
pub mod characterize;
pub mod eda;
pub mod harmonize;
pub mod importance;
pub mod leakage;
pub mod merge;
pub mod missing;
pub mod noisy;
pub mod outliers;
pub mod redundancy;
pub mod shapley;
pub mod shift;
pub mod smote;
pub mod text;

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::models::{self, Encoder, Hyperparams};
use crate::registry::{
    Flag, ParamSpec, ParamType, Params, ParamsExt, ReportTable, TaskSupport, ToolCategory, ToolInput, ToolManifest,
    ToolOutput, ToolRegistry, ToolReport,
};

use TaskSupport::{Any, Classification};

fn int(default: i64, min: f64, max: f64) -> ParamSpec {
    ParamSpec::new(ParamType::Int).default_value(default).bounds(Some(min), Some(max))
}

fn float(default: f64, min: f64, max: f64) -> ParamSpec {
    ParamSpec::new(ParamType::Float).default_value(default).bounds(Some(min), Some(max))
}

fn optional(ty: ParamType) -> ParamSpec {
    ParamSpec::new(ty).default_value(Value::Null)
}

fn hyper(p: &Params) -> Hyperparams {
    Hyperparams { epochs: p.usize_or("epochs", 500), learning_rate: p.f64_or("learning_rate", 0.1) }
}

fn with_training(m: ToolManifest) -> ToolManifest {
    m.param("epochs", int(500, 1.0, 100_000.0)).param("learning_rate", float(0.1, 1e-6, 10.0))
}

fn string_map(p: &Params, key: &str) -> BTreeMap<String, String> {
    p.get(key)
        .and_then(Value::as_object)
        .map(|o| {
            o.iter()
                .map(|(k, v)| (k.clone(), v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))
                .collect()
        })
        .unwrap_or_default()
}

pub fn register_builtins(r: &mut ToolRegistry) {
    let entries: Vec<(ToolManifest, crate::registry::BuiltinFn)> = vec![
        (
            ToolManifest::builtin("eda_summary", ToolCategory::Eda, &[Any])
                .report_only()
                .describe("Shape, per-column statistics, missingness, correlations, duplicates and IQR outliers"),
            run_eda,
        ),
        (
            ToolManifest::builtin("drop_missing", ToolCategory::Missingness, &[Any])
                .describe("Remove every row that has a missing cell"),
            run_drop_missing,
        ),
        (
            ToolManifest::builtin("impute", ToolCategory::Missingness, &[Any])
                .param("strategy", ParamSpec::new(ParamType::String).default_value("mean").choices(&["mean", "mode", "knn"]))
                .param("k", int(5, 1.0, 50.0))
                .describe("Fill missing cells by mean/mode or k-nearest-neighbour imputation"),
            run_impute,
        ),
        (
            ToolManifest::builtin("detect_outliers", ToolCategory::Outliers, &[Any])
                .report_only()
                .param("k", float(1.5, 0.0, 100.0))
                .param("skip_task_columns", ParamSpec::new(ParamType::Bool).default_value(true))
                .describe("Flag values outside the Tukey fences of each numeric column"),
            run_outliers,
        ),
        (
            ToolManifest::builtin("detect_label_leakage", ToolCategory::LabelLeakage, &[Any])
                .report_only()
                .param("threshold", float(leakage::DEFAULT_THRESHOLD, 0.0, 1.0))
                .describe("Suspect columns that encode the outcome, by correlation and by name"),
            run_leakage,
        ),
        (
            with_training(
                ToolManifest::builtin("leakage_probe", ToolCategory::LabelLeakage, &[Any])
                    .report_only()
                    .param("suspects", ParamSpec::new(ParamType::StringList).default_value(json!([])))
                    .param("folds", int(5, 2.0, 20.0)),
            )
            .describe("Cross-validated metric with and without suspect columns"),
            run_probe,
        ),
        (
            ToolManifest::builtin("prune_redundant", ToolCategory::FeatureRedundancy, &[Any])
                .requires_approval()
                .param("threshold", float(0.98, 0.0, 1.0))
                .param("dry_run", ParamSpec::new(ParamType::Bool).default_value(false))
                .describe("Drop one column of every highly correlated numeric pair"),
            run_prune,
        ),
        (
            ToolManifest::builtin("aggregate_records", ToolCategory::MultipleMeasurements, &[Any])
                .requires_approval()
                .param("id_col", optional(ParamType::String))
                .param("policy", ParamSpec::new(ParamType::String).default_value("last").choices(&["last", "mean", "first"]))
                .param("time_col", optional(ParamType::String))
                .describe("Collapse repeated measurements to one row per id"),
            run_aggregate,
        ),
        (
            ToolManifest::builtin("merge_files", ToolCategory::MultipleFiles, &[Any])
                .describe("Align columns by name and stack several source files"),
            run_merge,
        ),
        (
            ToolManifest::builtin("harmonize_values", ToolCategory::InconsistentData, &[Any])
                .param("column", ParamSpec::new(ParamType::String).required())
                .param("mapping", ParamSpec::new(ParamType::Map).default_value(json!({})))
                .param("scale", optional(ParamType::Float))
                .param("offset", optional(ParamType::Float))
                .param("rows", optional(ParamType::IntList))
                .param("min_value", optional(ParamType::Float))
                .param("round_digits", ParamSpec::new(ParamType::Int).default_value(Value::Null).bounds(Some(0.0), Some(15.0)))
                .describe("Recode inconsistent values or rescale units"),
            run_harmonize,
        ),
        (
            ToolManifest::builtin("extract_text_features", ToolCategory::DataExtraction, &[Any])
                .param("column", ParamSpec::new(ParamType::String).required())
                .param("patterns", ParamSpec::new(ParamType::Map).required())
                .param("case_insensitive", ParamSpec::new(ParamType::Bool).default_value(true))
                .describe("Binary indicator columns from regex matches on a text column"),
            run_text,
        ),
        (
            ToolManifest::builtin("detect_shift", ToolCategory::DataShift, &[Any])
                .report_only()
                .param("min_statistic", float(0.1, 0.0, 1.0))
                .param("alpha", float(0.01, 0.0, 1.0))
                .describe("Two-sample Kolmogorov-Smirnov test per shared numeric column"),
            run_shift,
        ),
        (
            with_training(
                ToolManifest::builtin("flag_noisy_labels", ToolCategory::NoisyLabels, &[Classification])
                    .report_only()
                    .param("folds", int(5, 2.0, 20.0))
                    .param("margin", float(0.75, 0.5, 1.0)),
            )
            .describe("Flag labels contradicted by confident out-of-fold predictions"),
            run_noisy,
        ),
        (
            with_training(
                ToolManifest::builtin("characterize_examples", ToolCategory::SubgroupChallenges, &[Classification])
                    .report_only()
                    .param("checkpoints", int(20, 1.0, 10_000.0))
                    .param("easy_confidence", float(0.75, 0.0, 1.0))
                    .param("hard_confidence", float(0.25, 0.0, 1.0))
                    .param("max_variability", float(0.1, 0.0, 1.0)),
            )
            .describe("Bucket examples as easy, ambiguous or hard from training dynamics"),
            run_characterize,
        ),
        (
            ToolManifest::builtin("knn_shapley", ToolCategory::DataValuation, &[Classification])
                .report_only()
                .param("k", int(5, 1.0, 1000.0))
                .param("validation_fraction", float(0.2, 0.01, 0.9))
                .describe("Closed-form KNN-Shapley value of every training row"),
            run_shapley,
        ),
        (
            ToolManifest::builtin("smote_balance", ToolCategory::Imbalance, &[Classification])
                .param("k", int(5, 1.0, 50.0))
                .describe("Oversample the minority class with SMOTE"),
            run_smote,
        ),
        (
            with_training(
                ToolManifest::builtin("train_evaluate", ToolCategory::ModelBuilding, &[Any])
                    .report_only()
                    .param("folds", int(5, 2.0, 20.0)),
            )
            .describe("Fit the baseline model for the task and report its metric"),
            run_train,
        ),
        (
            ToolManifest::builtin("permutation_importance", ToolCategory::Interpretability, &[Any])
                .report_only()
                .param("repeats", int(5, 1.0, 1000.0))
                .describe("Metric drop after shuffling each feature column"),
            run_importance,
        ),
        (
            ToolManifest::builtin("drop_rows", ToolCategory::Curation, &[Any])
                .requires_approval()
                .param("rows", ParamSpec::new(ParamType::IntList).required())
                .param("reason", ParamSpec::new(ParamType::String).default_value(""))
                .describe("Remove the listed rows"),
            run_drop_rows,
        ),
        (
            ToolManifest::builtin("drop_columns", ToolCategory::Curation, &[Any])
                .requires_approval()
                .param("columns", ParamSpec::new(ParamType::StringList).required())
                .param("reason", ParamSpec::new(ParamType::String).default_value(""))
                .describe("Remove the listed columns"),
            run_drop_columns,
        ),
    ];
    for (m, f) in entries {
        r.register_builtin(m, f).expect("builtin manifests are valid and unique");
    }
}

fn run_eda(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    Ok(ToolOutput::report(eda::eda_summary(i.dataset, i.seed)))
}

fn run_drop_missing(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let (d, r) = missing::drop_missing(i.dataset, i.seed)?;
    Ok(ToolOutput::transformed(d, r))
}

fn run_impute(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let s = i.params.str_opt("strategy").unwrap_or("mean");
    let k = i.params.usize_or("k", 5);
    let (d, filled) = missing::impute(i.dataset, i.task, s.parse()?, k)?;
    Ok(ToolOutput::transformed(d, missing::impute_report(s, k, filled, i.seed)))
}

fn run_outliers(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let k = i.params.f64_or("k", 1.5);
    let skip = i.params.get("skip_task_columns").and_then(Value::as_bool).unwrap_or(true);
    let found = outliers::detect_outliers(i.dataset, i.task, k, skip);
    Ok(ToolOutput::report(outliers::outlier_report(&found, k, i.seed)))
}

fn run_leakage(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let suspects = leakage::detect_label_leakage(i.dataset, i.task, i.params.f64_or("threshold", leakage::DEFAULT_THRESHOLD))?;
    let mut r = ToolReport::ok(
        "detect_label_leakage",
        i.seed,
        if suspects.is_empty() {
            "no leakage suspects".to_string()
        } else {
            format!("{} leakage suspects: {}", suspects.len(), suspects.iter().map(|s| s.column.as_str()).collect::<Vec<_>>().join(", "))
        },
    )
    .metric("suspects", suspects.len() as f64);
    let mut table = ReportTable::new("suspects", &["column", "correlation", "name_pattern", "post_outcome"]);
    for s in &suspects {
        table.push(vec![json!(s.column), json!(s.evidence.correlation), json!(s.evidence.name_pattern), json!(s.evidence.post_outcome)]);
        r.flags.push(Flag { columns: vec![s.column.clone()], rows: Vec::new(), reason: "possible label leakage; ask the expert".into() });
    }
    r.tables.push(table);
    r.data = json!({ "suspects": suspects });
    Ok(ToolOutput::report(r))
}

fn run_probe(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let suspects = i.params.string_list("suspects");
    for s in &suspects {
        if i.dataset.column_index(s).is_none() {
            return Err(format!("suspect column '{s}' not found"));
        }
    }
    let p = models::leakage_probe(i.dataset, i.task, &suspects, i.params.usize_or("folds", 5), i.seed, hyper(i.params))
        .map_err(|e| e.to_string())?;
    let mut r = ToolReport::ok(
        "leakage_probe",
        i.seed,
        format!("{} {:.3} with suspects, {:.3} without (gap {:.3})", p.metric, p.with_suspects, p.without_suspects, p.gap),
    )
    .metric("with_suspects", p.with_suspects)
    .metric("without_suspects", p.without_suspects)
    .metric("gap", p.gap);
    r.data = json!({ "probe": p, "suspects": suspects });
    Ok(ToolOutput::report(r))
}

fn run_prune(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let pairs = redundancy::redundant_pairs(i.dataset, i.task, i.params.f64_or("threshold", 0.98));
    let dropped: Vec<String> = pairs.iter().map(|p| p.dropped.clone()).collect();
    let dry = i.params.get("dry_run").and_then(Value::as_bool).unwrap_or(false);
    let mut table = ReportTable::new("pairs", &["kept", "dropped", "correlation"]);
    for p in &pairs {
        table.push(vec![json!(p.kept), json!(p.dropped), json!(p.correlation)]);
    }
    let mut r = ToolReport::ok(
        "prune_redundant",
        i.seed,
        format!("{} redundant columns{}: {}", dropped.len(), if dry { " proposed" } else { " dropped" }, dropped.join(", ")),
    )
    .metric("redundant_columns", dropped.len() as f64);
    r.tables.push(table);
    if !dropped.is_empty() {
        r.flags.push(Flag { columns: dropped.clone(), rows: Vec::new(), reason: "redundant with a kept column".into() });
    }
    r.data = json!({ "pairs": pairs, "dropped": dropped });
    if dry || dropped.is_empty() {
        return Ok(ToolOutput::report(r));
    }
    let d = i.dataset.drop_columns(&dropped).map_err(|e| e.to_string())?;
    Ok(ToolOutput::transformed(d, r))
}

fn run_aggregate(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let id = i
        .params
        .str_opt("id_col")
        .or(i.task.group_col.as_deref())
        .ok_or("no id column given and the task has no group column")?;
    let policy = i.params.str_opt("policy").unwrap_or("last");
    let time = i.params.str_opt("time_col");
    let d = aggregate::aggregate_records(i.dataset, id, policy.parse()?, time)?;
    let r = ToolReport::ok(
        "aggregate_records",
        i.seed,
        format!("aggregated {} rows to {} (one per '{id}', policy {policy})", i.dataset.row_count(), d.row_count()),
    )
    .metric("rows_before", i.dataset.row_count() as f64)
    .metric("rows_after", d.row_count() as f64);
    Ok(ToolOutput::transformed(d, r))
}

fn run_merge(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let mut sources = vec![i.dataset];
    sources.extend(i.aux.datasets.iter());
    let (d, s) = merge::merge_files(&sources)?;
    let mut r = ToolReport::ok(
        "merge_files",
        i.seed,
        format!("merged {} files ({:?} rows) into {} rows; {} duplicate rows dropped", sources.len(), s.rows_per_source, d.row_count(), s.duplicates_dropped),
    )
    .metric("duplicates_dropped", s.duplicates_dropped as f64)
    .metric("rows_after", d.row_count() as f64);
    r.data = json!({ "rows_per_source": s.rows_per_source });
    Ok(ToolOutput::transformed(d, r))
}

fn run_harmonize(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let column = i.params.str_opt("column").ok_or("column is required")?;
    let h = harmonize::Harmonization {
        mapping: string_map(i.params, "mapping"),
        scale: i.params.get("scale").and_then(Value::as_f64),
        offset: i.params.get("offset").and_then(Value::as_f64),
        rows: i.params.get("rows").filter(|v| !v.is_null()).map(|_| i.params.index_list("rows")),
        min_value: i.params.get("min_value").and_then(Value::as_f64),
        round_digits: i.params.get("round_digits").and_then(Value::as_u64).map(|v| v as u32),
    };
    let (d, s) = harmonize::harmonize_values(i.dataset, column, &h)?;
    let mut r = ToolReport::ok("harmonize_values", i.seed, format!("changed {} cells in '{column}'; {} values unmapped", s.changed, s.unmapped.len()))
        .metric("cells_changed", s.changed as f64);
    r.data = json!({ "unmapped": s.unmapped });
    Ok(ToolOutput::transformed(d, r))
}

fn run_text(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let column = i.params.str_opt("column").ok_or("column is required")?;
    let patterns = string_map(i.params, "patterns");
    let ci = i.params.get("case_insensitive").and_then(Value::as_bool).unwrap_or(true);
    let (d, hits) = text::extract_text_features(i.dataset, column, &patterns, ci)?;
    let mut r = ToolReport::ok("extract_text_features", i.seed, format!("added {} indicator columns from '{column}'", patterns.len()));
    r.data = json!({ "matches": hits });
    Ok(ToolOutput::transformed(d, r))
}

fn run_shift(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let test = i.aux.test.as_ref().ok_or("no test dataset supplied")?;
    let cols = shift::detect_shift(i.dataset, test, i.params.f64_or("min_statistic", 0.1), i.params.f64_or("alpha", 0.01))?;
    let flagged: Vec<&str> = cols.iter().filter(|c| c.flagged).map(|c| c.column.as_str()).collect();
    let mut table = ReportTable::new("ks", &["column", "statistic", "p_value", "flagged"]);
    for c in &cols {
        table.push(vec![json!(c.column), json!(c.statistic), json!(c.p_value), json!(c.flagged)]);
    }
    let mut r = ToolReport::ok("detect_shift", i.seed, format!("{} of {} shared numeric columns shifted: {}", flagged.len(), cols.len(), flagged.join(", ")))
        .metric("shifted_columns", flagged.len() as f64);
    r.tables.push(table);
    if !flagged.is_empty() {
        r.flags.push(Flag { columns: flagged.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), reason: "distribution differs between train and test".into() });
    }
    r.data = json!({ "columns": cols });
    Ok(ToolOutput::report(r))
}

fn run_noisy(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let found = noisy::flag_noisy_labels(
        i.dataset,
        i.task,
        i.params.usize_or("folds", 5),
        i.params.f64_or("margin", 0.75),
        i.seed,
        hyper(i.params),
    )?;
    let rows: Vec<usize> = found.iter().map(|n| n.row).collect();
    let mut r = ToolReport::ok("flag_noisy_labels", i.seed, format!("{} rows with likely label errors", rows.len()))
        .metric("flagged", rows.len() as f64);
    if !rows.is_empty() {
        r.flags.push(Flag { columns: vec![i.task.target_col.clone()], rows: rows.clone(), reason: "label contradicted by a confident out-of-fold prediction".into() });
    }
    r.data = json!({ "rows": rows, "details": found });
    Ok(ToolOutput::report(r))
}

fn run_characterize(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let th = characterize::Thresholds {
        easy_confidence: i.params.f64_or("easy_confidence", 0.75),
        hard_confidence: i.params.f64_or("hard_confidence", 0.25),
        max_variability: i.params.f64_or("max_variability", 0.1),
    };
    let labels = characterize::characterize_examples(i.dataset, i.task, i.params.usize_or("checkpoints", 20), hyper(i.params), th)?;
    let pick = |b| labels.iter().filter(|l| l.bucket == b).map(|l| l.row).collect::<Vec<_>>();
    let (easy, amb, hard) = (pick(characterize::Bucket::Easy), pick(characterize::Bucket::Ambiguous), pick(characterize::Bucket::Hard));
    let mut r = ToolReport::ok("characterize_examples", i.seed, format!("{} easy, {} ambiguous, {} hard examples", easy.len(), amb.len(), hard.len()))
        .metric("easy", easy.len() as f64)
        .metric("ambiguous", amb.len() as f64)
        .metric("hard", hard.len() as f64);
    if !amb.is_empty() {
        r.flags.push(Flag { columns: Vec::new(), rows: amb.clone(), reason: "ambiguous".into() });
    }
    if !hard.is_empty() {
        r.flags.push(Flag { columns: Vec::new(), rows: hard.clone(), reason: "hard".into() });
    }
    r.data = json!({ "labels": labels, "ambiguous": amb, "hard": hard });
    Ok(ToolOutput::report(r))
}

fn run_shapley(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let (labels, _) = models::binary_labels(i.dataset, &i.task.target_col).map_err(|e| e.to_string())?;
    let features = models::feature_columns(i.dataset, i.task);
    if features.is_empty() {
        return Err("no feature columns".into());
    }
    let k = i.params.usize_or("k", 5);
    let enc = Encoder::fit(i.dataset, &features).map_err(|e| e.to_string())?;
    let x = enc.transform(i.dataset).map_err(|e| e.to_string())?;
    let (train, val_x, val_y, val_rows) = match &i.aux.test {
        Some(test) => {
            let (tl, _) = models::binary_labels(test, &i.task.target_col).map_err(|e| e.to_string())?;
            let tx = enc.transform(test).map_err(|e| e.to_string())?;
            ((0..i.dataset.row_count()).collect::<Vec<_>>(), tx, tl, Vec::new())
        }
        None => {
            let (train, val) = shapley::holdout_split(i.dataset.row_count(), i.params.f64_or("validation_fraction", 0.2), i.seed);
            let vx = val.iter().map(|&r| x[r].clone()).collect();
            let vy = val.iter().map(|&r| labels[r]).collect();
            (train, vx, vy, val)
        }
    };
    let tx: Vec<Vec<f64>> = train.iter().map(|&r| x[r].clone()).collect();
    let ty: Vec<bool> = train.iter().map(|&r| labels[r]).collect();
    let vals = shapley::knn_shapley(&tx, &ty, &val_x, &val_y, k)?;
    let mut per_row = vec![Value::Null; i.dataset.row_count()];
    for (&r, v) in train.iter().zip(&vals) {
        per_row[r] = json!(v);
    }
    let negative: Vec<usize> = train.iter().zip(&vals).filter(|(_, v)| **v < 0.0).map(|(&r, _)| r).collect();
    let mut r = ToolReport::ok("knn_shapley", i.seed, format!("valued {} rows; {} have negative value", train.len(), negative.len()))
        .metric("negative_rows", negative.len() as f64);
    if !negative.is_empty() {
        r.flags.push(Flag { columns: Vec::new(), rows: negative.clone(), reason: "negative data value".into() });
    }
    r.data = json!({ "values": per_row, "validation_rows": val_rows, "negative": negative });
    Ok(ToolOutput::report(r))
}

fn run_smote(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let (d, synth) = smote::smote_balance(i.dataset, i.task, i.params.usize_or("k", 5), i.seed)?;
    let mut r = ToolReport::ok("smote_balance", i.seed, format!("added {} synthetic minority rows", synth.len()))
        .metric("synthetic_rows", synth.len() as f64);
    r.data = json!({ "synthetic": synth });
    Ok(ToolOutput::transformed(d, r))
}

fn run_train(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let h = hyper(i.params);
    let model = models::fit(i.dataset, i.task, h, i.seed).map_err(|e| e.to_string())?;
    let cv = models::evaluate_cv(i.dataset, i.task, i.params.usize_or("folds", 5), i.seed, h).map_err(|e| e.to_string())?;
    let mut r = ToolReport::ok("train_evaluate", i.seed, String::new())
        .metric("cv_mean", cv.value)
        .metric("cv_std", cv.std.unwrap_or(0.0));
    let (value, source) = match &i.aux.test {
        Some(test) => {
            let m = model.evaluate(test).map_err(|e| e.to_string())?;
            r = r.metric("test", m.value);
            (m.value, "test")
        }
        None => (cv.value, "cv"),
    };
    r.summary = format!("{} = {:.4} ({source}); cross-validated {:.4} ± {:.4} over {} folds", cv.name, value, cv.value, cv.std.unwrap_or(0.0), cv.folds.len());
    r = r.metric(&cv.name, value);
    let coefficients: BTreeMap<&String, f64> = model.feature_names().iter().zip(&model.weights[0]).map(|(n, w)| (n, *w)).collect();
    r.data = json!({ "metric": cv.name, "value": value, "source": source, "cv": cv, "coefficients": coefficients });
    Ok(ToolOutput { dataset: None, report: r, model: Some(model) })
}

fn run_importance(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let fitted;
    let model = match &i.aux.model {
        Some(m) => m,
        None => {
            fitted = models::fit(i.dataset, i.task, Hyperparams::default(), i.seed).map_err(|e| e.to_string())?;
            &fitted
        }
    };
    let (baseline, imp) = importance::permutation_importance(model, i.dataset, i.params.usize_or("repeats", 5), i.seed)?;
    let mut table = ReportTable::new("importance", &["column", "mean", "std"]);
    let mut sorted = imp.clone();
    sorted.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.column.cmp(&b.column)));
    for x in &sorted {
        table.push(vec![json!(x.column), json!(x.mean), json!(x.std)]);
    }
    let top = sorted.first().map(|x| x.column.clone()).unwrap_or_default();
    let mut r = ToolReport::ok("permutation_importance", i.seed, format!("baseline {baseline:.4}; most important feature: {top}"))
        .metric("baseline", baseline);
    r.tables.push(table);
    r.data = json!({ "importances": sorted });
    Ok(ToolOutput::report(r))
}

fn run_drop_rows(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let mut rows = i.params.index_list("rows");
    rows.sort_unstable();
    rows.dedup();
    if let Some(bad) = rows.iter().find(|&&r| r >= i.dataset.row_count()) {
        return Err(format!("row {bad} out of range"));
    }
    let d = i.dataset.filter_rows(|r, _| rows.binary_search(&r).is_err()).map_err(|e| e.to_string())?;
    let reason = i.params.str_opt("reason").unwrap_or("").to_string();
    let mut r = ToolReport::ok("drop_rows", i.seed, format!("removed {} rows; {} remain", rows.len(), d.row_count()))
        .metric("rows_removed", rows.len() as f64);
    if !rows.is_empty() {
        r.flags.push(Flag { columns: Vec::new(), rows, reason: if reason.is_empty() { "removed".into() } else { reason } });
    }
    Ok(ToolOutput::transformed(d, r))
}

fn run_drop_columns(i: &ToolInput<'_>) -> Result<ToolOutput, String> {
    let cols = i.params.string_list("columns");
    let d = i.dataset.drop_columns(&cols).map_err(|e| e.to_string())?;
    let mut r = ToolReport::ok("drop_columns", i.seed, format!("removed columns: {}", cols.join(", "))).metric("columns_removed", cols.len() as f64);
    if !cols.is_empty() {
        r.flags.push(Flag { columns: cols, rows: Vec::new(), reason: i.params.str_opt("reason").unwrap_or("removed").to_string() });
    }
    Ok(ToolOutput::transformed(d, r))
}
