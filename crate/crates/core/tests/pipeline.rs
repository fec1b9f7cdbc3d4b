use loskit::codemaps::CodeMapSet;
use loskit::eval::{compute_metrics, temporal_split, SplitScenario};
use loskit::features::{featurize, Encoding, FeatureConfig, FeatureMatrix, Role};
use loskit::learn::{grid_search, read_model, write_model, Family, HyperGrid, Metric, ModelConfig, ModelFile};
use loskit::model::{load_dataset, write_dataset, HistoryIndex, LoadOptions};
use loskit::provenance::Provenance;
use loskit::synth::{generate_dataset, synthetic_code_maps, GeneratorConfig};

#[test]
fn records_to_saved_model() {
    let g = GeneratorConfig { n_records: 3000, seed: 9, ..GeneratorConfig::default() };
    let generated = generate_dataset(&g).unwrap();

    let mut csv = Vec::new();
    write_dataset(&generated, &mut csv).unwrap();
    let (ds, rejected) = load_dataset(&csv[..], LoadOptions::default()).unwrap();
    assert!(rejected.is_empty());
    assert_eq!(ds.records(), generated.records());

    let dir = tempfile::tempdir().unwrap();
    synthetic_code_maps(&g).unwrap().write_dir(dir.path()).unwrap();
    let maps = CodeMapSet::load_dir(dir.path()).unwrap();

    let split = temporal_split(&ds, SplitScenario::A).unwrap();
    let cfg = FeatureConfig {
        diagnosis_encoding: Encoding::Embedding,
        procedure_encoding: Encoding::OneHot,
        admission_type_encoding: Encoding::Target,
        ..FeatureConfig::default()
    };
    let fm = featurize(&ds, &HistoryIndex::build(&ds), &maps, &cfg, &split.roles).unwrap();
    assert_eq!(fm.n_rows(), ds.len());
    assert!(fm.values.all_finite());
    assert!(fm.schema.column_names().iter().any(|c| c == "diagnosis_emb_1"));

    let prov = Provenance::new(9, "pipeline");
    let mut features_csv = Vec::new();
    fm.write_csv(&mut features_csv, &prov).unwrap();
    let back = FeatureMatrix::read(&features_csv[..], &fm.schema_json(&prov)).unwrap();
    assert_eq!(back.schema.column_names(), fm.schema.column_names());
    assert_eq!(back.roles, fm.roles);

    let (xt, yt) = back.subset(&back.rows_with_role(Role::Train));
    let (xv, yv) = back.subset(&back.rows_with_role(Role::Validation));
    let grid = HyperGrid::new(vec![("n_trees".into(), vec![10.0]), ("max_depth".into(), vec![4.0, 6.0])]);
    let outcome = grid_search(
        ModelConfig::default_for(Family::Forest).with_seed(3),
        &grid,
        &[],
        (&xt, &yt),
        (&xv, &yv),
        Metric::Mae,
    )
    .unwrap();
    assert_eq!(outcome.leaderboard.len(), 2);

    let file = ModelFile::new(outcome.best_model, back.schema.column_names()).unwrap();
    let mut bytes = Vec::new();
    write_model(&file, &mut bytes).unwrap();
    let loaded = read_model(&bytes[..]).unwrap();

    let (xs, ys) = back.subset(&back.rows_with_role(Role::Test));
    let columns = back.schema.column_names();
    let pred = loaded.predict(&columns, &xs).unwrap();
    assert_eq!(pred, file.predict(&columns, &xs).unwrap());
    let m = compute_metrics(&ys, &pred, columns.len()).unwrap();
    assert!(m.mae.is_finite() && m.r2 > 0.0, "{m:?}");
}
