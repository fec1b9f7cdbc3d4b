use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Datelike;
use loskit::codemaps::CodeMapSet;
use loskit::eval::{compute_metrics, residual_report, run_experiment, temporal_split, EvaluationReport, SplitScenario};
use loskit::features::{featurize as compute_features, FeatureMatrix, Role};
use loskit::learn::{grid_search, read_model, write_model, HyperGrid, LeaderboardRow, ModelConfig, ModelFile};
use loskit::model::{load_dataset, write_dataset, AdmissionType, AgeGroup, Dataset, HistoryIndex, LoadOptions};
use loskit::provenance::Provenance;
use loskit::stats::{
    discretize_comorbidity, discretize_elixhauser, fit_random_intercept, group_descriptives, kruskal_wallis,
    year_interaction_design, MixedModelInput,
};
use loskit::synth::{generate_dataset, marginal_report, synthetic_code_maps};
use serde::Serialize;

use crate::config::{parse_family, parse_grid, parse_metric, RunConfig};
use crate::error::CliError;
use crate::{AnalyzeArgs, EvaluateArgs, FeaturizeArgs, GenerateArgs, ReportArgs, TrainArgs};

fn progress(verbose: bool, msg: impl AsRef<str>) {
    if verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::validation("MissingPath", format!("{} does not exist", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::validation("MissingPath", format!("{} is not a directory", path.display())))
    }
}

/// The output's parent directory must already exist.
fn require_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(p) if !p.is_dir() => {
            Err(CliError::validation("MissingPath", format!("output directory {} does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime("Io", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, provenance: &Provenance, body: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(provenance.comment_header().as_bytes())?;
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, key: &str, value: &T) -> Result<(), CliError> {
    let ser = |e: serde_json::Error| CliError::runtime("Serialize", e.to_string());
    let indent = |s: String| s.replace('\n', "\n  ");
    let text = format!(
        "{{\n  \"provenance\": {},\n  {}: {}\n}}\n",
        indent(serde_json::to_string_pretty(provenance).map_err(ser)?),
        serde_json::to_string(key).map_err(ser)?,
        indent(serde_json::to_string_pretty(value).map_err(ser)?)
    );
    fs::write(path, text).map_err(|e| CliError::runtime("Io", format!("{}: {e}", path.display())))
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn load_records(path: &Path, strict: bool) -> Result<(Dataset, usize), CliError> {
    let file = File::open(path).map_err(|e| CliError::validation("MissingPath", format!("{}: {e}", path.display())))?;
    let (ds, rejected) = load_dataset(BufReader::new(file), LoadOptions { strict, ..LoadOptions::default() })?;
    if ds.is_empty() {
        return Err(CliError::validation("BadInput", format!("{} holds no valid records", path.display())));
    }
    Ok((ds, rejected.len()))
}

fn load_maps(dir: Option<&Path>) -> Result<CodeMapSet, CliError> {
    match dir {
        None => Ok(CodeMapSet::default()),
        Some(d) => CodeMapSet::load_dir(d).map_err(|e| CliError::validation("BadInput", e.to_string())),
    }
}

fn load_features(features: &Path, schema: Option<&Path>) -> Result<FeatureMatrix, CliError> {
    let schema = schema.map(Path::to_path_buf).unwrap_or_else(|| sidecar(features, ".schema.json"));
    require_file(features)?;
    require_file(&schema)?;
    let schema_text = fs::read_to_string(&schema)?;
    let file = File::open(features)?;
    Ok(FeatureMatrix::read(BufReader::new(file), &schema_text)?)
}

pub fn generate(a: &GenerateArgs, verbose: bool) -> Result<(), CliError> {
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    require_parent(&a.out)?;
    if let Some(m) = &a.marginals {
        require_parent(m)?;
    }
    let mut cfg = RunConfig::load(a.config.as_deref())?.with_seed(a.seed);
    if let Some(n) = a.n_records {
        cfg.generator.n_records = n;
    }
    cfg.generator.validate()?;
    let prov = Provenance::new(cfg.seed(), &cfg.digest_text("generate", &[]));

    progress(verbose, format!("generating {} records", cfg.generator.n_records));
    let ds = generate_dataset(&cfg.generator)?;
    let mut w = create(&a.out)?;
    w.write_all(prov.comment_header().as_bytes())?;
    write_dataset(&ds, &mut w).map_err(|e| CliError::runtime("Io", e.to_string()))?;
    w.flush()?;

    if let Some(dir) = &a.maps_out {
        let maps = synthetic_code_maps(&cfg.generator)?;
        maps.write_dir(dir)?;
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                let body = fs::read_to_string(&path)?;
                write_text(&path, &prov, &body)?;
            }
        }
    }
    if let Some(path) = &a.marginals {
        write_text(path, &prov, &marginal_report(&ds)?.to_csv())?;
    }
    Ok(())
}

pub fn featurize(a: &FeaturizeArgs, verbose: bool) -> Result<(), CliError> {
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    let cfg = RunConfig::load(a.config.as_deref())?.with_seed(a.seed);
    let data = a.data.clone().or_else(|| cfg.paths.data.clone()).ok_or_else(|| {
        CliError::validation("MissingPath", "no dataset given (--data or paths.data)")
    })?;
    require_file(&data)?;
    let maps_dir = a.maps_dir.clone().or_else(|| cfg.paths.maps_dir.clone());
    if let Some(d) = &maps_dir {
        require_dir(d)?;
    }
    require_parent(&a.out)?;
    let scenario = a.split_scenario.as_deref().map(str::parse::<SplitScenario>).transpose()?;
    cfg.features.validate()?;

    let (ds, rejected) = load_records(&data, a.strict)?;
    progress(verbose, format!("{} records loaded, {rejected} rejected", ds.len()));
    let maps = load_maps(maps_dir.as_deref())?;
    let roles = match scenario {
        Some(s) => temporal_split(&ds, s)?.roles,
        None => vec![Some(Role::Train); ds.len()],
    };
    let index = HistoryIndex::build(&ds);
    let fm = compute_features(&ds, &index, &maps, &cfg.features, &roles)?;

    let scenario_text = scenario.map_or("none".to_string(), |s| s.to_string());
    let prov = Provenance::new(cfg.seed(), &cfg.digest_text("featurize", &[("scenario", scenario_text)]));
    let mut w = create(&a.out)?;
    fm.write_csv(&mut w, &prov)?;
    w.flush()?;
    let schema_out = a.schema_out.clone().unwrap_or_else(|| sidecar(&a.out, ".schema.json"));
    fs::write(&schema_out, fm.schema_json(&prov))?;
    Ok(())
}

fn descriptives_rows<G: Ord + Clone>(
    out: &mut String,
    variable: &str,
    y: &[f64],
    keys: &[G],
    label: impl Fn(&G) -> String,
) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = group_descriptives(y, keys).map_err(|e| CliError::runtime("StatsError", e.to_string()))?;
    let mut groups: BTreeMap<&G, Vec<f64>> = BTreeMap::new();
    for (k, v) in keys.iter().zip(y) {
        groups.entry(k).or_default().push(*v);
    }
    for r in rows {
        out.push_str(&format!(
            "{variable},{},{},{:.2},{},{:.2},{},{},{},{}\n",
            label(&r.group),
            r.n,
            r.percent,
            r.median,
            r.std,
            r.q25,
            r.q75,
            r.min,
            r.max
        ));
    }
    Ok(groups.into_values().collect())
}

pub fn analyze(a: &AnalyzeArgs, verbose: bool) -> Result<(), CliError> {
    require_parent(&a.out_dir)?;
    let fm = load_features(&a.features, a.schema.as_deref())?;
    if fm.n_rows() == 0 {
        return Err(CliError::validation("BadInput", "feature file has no rows"));
    }
    fs::create_dir_all(&a.out_dir)?;
    let prov = Provenance::new(
        fm.schema.config.seed,
        &format!("command=analyze\n{}", serde_json::to_string(&fm.schema).unwrap_or_default()),
    );
    let y = &fm.targets;
    let col = |name: &str| fm.column(name);
    let is_raw = |name: &str| {
        fm.schema.columns.iter().any(|c| c.name == name && c.kind == loskit::features::ColumnKind::Categorical)
    };

    let mut desc = String::from("variable,category,n,percent,median,std,q25,q75,min,max\n");
    let mut tests: Vec<(&str, Vec<Vec<f64>>)> = Vec::new();
    if let Some(c) = col("age_group") {
        let keys: Vec<usize> = c.iter().map(|v| *v as usize).collect();
        let label = |k: &usize| AgeGroup::from_index(*k).map_or(k.to_string(), |g| g.label().to_string());
        tests.push(("age_group", descriptives_rows(&mut desc, "age_group", y, &keys, label)?));
    }
    if let Some(c) = col("n_comorbidities") {
        let keys: Vec<_> = c.iter().map(|v| discretize_comorbidity(*v as u32)).collect();
        tests.push(("n_comorbidities", descriptives_rows(&mut desc, "n_comorbidities", y, &keys, |k| k.to_string())?));
    }
    if let Some(c) = col("elixhauser_index") {
        let keys: Vec<_> = c.iter().map(|v| discretize_elixhauser(*v as i32)).collect();
        tests.push(("elixhauser_index", descriptives_rows(&mut desc, "elixhauser_index", y, &keys, |k| k.to_string())?));
    }
    if let (Some(c), true) = (col("admission_type"), is_raw("admission_type")) {
        let keys: Vec<usize> = c.iter().map(|v| *v as usize).collect();
        let label = |k: &usize| AdmissionType::ALL.get(*k).map_or(k.to_string(), |t| t.as_str().to_string());
        tests.push(("admission_type", descriptives_rows(&mut desc, "admission_type", y, &keys, label)?));
    }
    if let Some(c) = col("admission_month") {
        let keys: Vec<u32> = c.iter().map(|v| *v as u32).collect();
        tests.push(("admission_month", descriptives_rows(&mut desc, "admission_month", y, &keys, |k| k.to_string())?));
    }
    let years: Vec<i32> = fm.admission_dates.iter().map(|d| d.year()).collect();
    descriptives_rows(&mut desc, "year", y, &years, |k| k.to_string())?;
    write_text(&a.out_dir.join("descriptives.csv"), &prov, &desc)?;

    let mut kw = String::from("variable,H,df,p\n");
    let mut summary = String::from("Kruskal-Wallis tests\n");
    for (name, groups) in &tests {
        match kruskal_wallis(groups) {
            Ok(r) => {
                kw.push_str(&format!("{name},{:?},{},{:?}\n", r.h_corrected, r.df, r.p));
                summary.push_str(&format!("  {name:<18} H = {:>12.3}  df = {:>2}  p = {:.3e}\n", r.h_corrected, r.df, r.p));
            }
            Err(e) => {
                kw.push_str(&format!("{name},,,\n"));
                summary.push_str(&format!("  {name:<18} not testable: {e}\n"));
            }
        }
    }
    write_text(&a.out_dir.join("kruskal_wallis.csv"), &prov, &kw)?;

    let mut mixed = String::from("model,term,estimate,std_error,z,p\n");
    let mut fits = BTreeMap::new();
    summary.push_str("\nMixed models (diagnosis random intercept, predictor x year)\n");
    match (col("diagnosis"), is_raw("diagnosis")) {
        (Some(dx), true) => {
            let groups: Vec<i64> = dx.iter().map(|v| *v as i64).collect();
            for predictor in ["patient_volume", "historical_los"] {
                let Some(x) = col(predictor) else { continue };
                progress(verbose, format!("fitting mixed model on {predictor}"));
                let (design, terms) = year_interaction_design(predictor, x, &years);
                let input = MixedModelInput { y: y.clone(), x: design, groups: groups.clone(), terms };
                match fit_random_intercept(&input) {
                    Ok(fit) => {
                        for i in 0..fit.terms.len() {
                            mixed.push_str(&format!(
                                "{predictor},{},{:?},{:?},{:?},{:?}\n",
                                fit.terms[i], fit.beta[i], fit.std_errors[i], fit.z[i], fit.p[i]
                            ));
                        }
                        summary.push_str(&format!(
                            "  {predictor}: sigma_u2 = {:.4}, sigma_e2 = {:.4}, log-likelihood = {:.2}, converged = {}, significant: {}\n",
                            fit.sigma_u2,
                            fit.sigma_e2,
                            fit.log_likelihood,
                            fit.converged,
                            fit.significant_terms().join(" ")
                        ));
                        fits.insert(predictor, fit);
                    }
                    Err(e) => summary.push_str(&format!("  {predictor}: not fitted: {e}\n")),
                }
            }
        }
        _ => summary.push_str("  skipped: needs the raw diagnosis column\n"),
    }
    write_text(&a.out_dir.join("mixed_model.csv"), &prov, &mixed)?;
    write_json(&a.out_dir.join("mixed_model.json"), &prov, "fits", &fits)?;
    write_text(&a.out_dir.join("summary.txt"), &prov, &summary)?;
    Ok(())
}

fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from("index,params,train_score,val_score,error\n");
    for r in rows {
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.index,
            params.join(";"),
            num(r.train_score),
            num(r.val_score),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        ));
    }
    out
}

pub fn train(a: &TrainArgs, verbose: bool) -> Result<(), CliError> {
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    require_parent(&a.out_model)?;
    let cfg = RunConfig::load(a.config.as_deref())?.with_seed(a.seed);
    let family = parse_family(&a.family)?;
    let metric = parse_metric(&a.metric)?;
    let grid: HyperGrid = match &a.grid {
        Some(spec) => parse_grid(spec)?,
        None => cfg.grid_for(family)?.unwrap_or_else(|| HyperGrid::default_for(family)),
    };
    let fm = load_features(&a.features, a.schema.as_deref())?;
    let (train_rows, val_rows) = (fm.rows_with_role(Role::Train), fm.rows_with_role(Role::Validation));
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(CliError::validation(
            "EmptyRole",
            "training needs train and validation rows; featurize with --split-scenario",
        ));
    }
    let (xt, yt) = fm.subset(&train_rows);
    let (xv, yv) = fm.subset(&val_rows);
    progress(verbose, format!("searching {} configurations", grid.cardinality()));
    let outcome = grid_search(
        ModelConfig::default_for(family).with_seed(cfg.seed()),
        &grid,
        &fm.schema.categorical_columns(),
        (&xt, &yt),
        (&xv, &yv),
        metric,
    )?;

    let grid_text = serde_json::to_string(&grid).unwrap_or_default();
    let prov = Provenance::new(
        cfg.seed(),
        &cfg.digest_text("train", &[("family", a.family.clone()), ("grid", grid_text), ("metric", a.metric.clone())]),
    );
    let file = ModelFile::new(outcome.best_model, fm.schema.column_names())?;
    let mut w = create(&a.out_model)?;
    w.write_all(prov.comment_header().as_bytes())?;
    write_model(&file, &mut w)?;
    w.flush()?;
    write_text(&sidecar(&a.out_model, ".leaderboard.csv"), &prov, &leaderboard_csv(&outcome.leaderboard))?;
    Ok(())
}

#[derive(Serialize)]
struct ModelEvaluation {
    rows: usize,
    metrics: loskit::eval::MetricSet,
    residuals: loskit::eval::ResidualReport,
}

pub fn evaluate(a: &EvaluateArgs, verbose: bool) -> Result<(), CliError> {
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    let cfg = RunConfig::load(a.config.as_deref())?.with_seed(a.seed);
    let out_dir = a.out_dir.clone().or_else(|| cfg.paths.out_dir.clone()).ok_or_else(|| {
        CliError::validation("MissingPath", "no output directory given (--out-dir or paths.out_dir)")
    })?;

    if let Some(model_path) = &a.model {
        require_file(model_path)?;
        let features = a.features.as_deref().expect("clap enforces --features");
        let fm = load_features(features, a.schema.as_deref())?;
        fs::create_dir_all(&out_dir)?;
        let file = read_model(BufReader::new(File::open(model_path)?))?;
        let rows = fm.rows_with_role(Role::Test);
        if rows.is_empty() {
            return Err(CliError::validation("EmptyRole", "the feature file has no test rows"));
        }
        let (x, y) = fm.subset(&rows);
        let pred = file.predict(&fm.schema.column_names(), &x)?;
        let report = ModelEvaluation {
            rows: rows.len(),
            metrics: compute_metrics(&y, &pred, x.n_cols())?,
            residuals: residual_report(&y, &pred)?,
        };
        let prov = Provenance::new(cfg.seed(), &format!("command=evaluate-model\nschema={}", file.schema_digest()));
        return write_json(&out_dir.join("model_evaluation.json"), &prov, "evaluation", &report);
    }

    let data = a.data.clone().or_else(|| cfg.paths.data.clone()).ok_or_else(|| {
        CliError::validation("MissingPath", "no dataset given (--data or paths.data)")
    })?;
    require_file(&data)?;
    let maps_dir = a.maps_dir.clone().or_else(|| cfg.paths.maps_dir.clone());
    if let Some(d) = &maps_dir {
        require_dir(d)?;
    }
    let exp = cfg.experiment()?;
    let (ds, rejected) = load_records(&data, false)?;
    progress(verbose, format!("{} records loaded, {rejected} rejected", ds.len()));
    for &s in &exp.scenarios {
        temporal_split(&ds, s)?;
    }
    let maps = load_maps(maps_dir.as_deref())?;
    fs::create_dir_all(&out_dir)?;
    progress(verbose, "running the ablation experiment");
    let report = run_experiment(&ds, &maps, &exp)?;

    let prov = Provenance::new(cfg.seed(), &cfg.digest_text("evaluate", &[]));
    write_json(&out_dir.join("evaluation.json"), &prov, "report", &report)?;
    write_text(&out_dir.join("table6.csv"), &prov, &report.table6_csv())?;
    for (name, table) in report.metric_tables() {
        write_text(&out_dir.join(format!("{name}.csv")), &prov, &table)?;
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let path = a.eval_dir.join("evaluation.json");
    require_file(&path)?;
    require_parent(&a.out)?;
    let text = fs::read_to_string(&path)?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::validation("BadInput", format!("{}: {e}", path.display())))?;
    let report: EvaluationReport = serde_json::from_value(doc["report"].clone())
        .map_err(|e| CliError::validation("BadInput", format!("{}: {e}", path.display())))?;
    let seed = doc["provenance"]["seed"].as_u64().unwrap_or(report.seed);
    let prov = Provenance::new(seed, &format!("command=report\n{}", serde_json::to_string(&report).unwrap_or_default()));
    write_text(&a.out, &prov, &report.to_text())?;
    if let Some(hist) = report.histogram_csv() {
        write_text(&a.out.with_extension("hist.csv"), &prov, &hist)?;
    }
    Ok(())
}
