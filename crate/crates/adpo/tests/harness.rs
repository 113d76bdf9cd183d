use std::path::Path;
use std::process::Command;

use adpo::dataset_file::{self, DatasetMeta};
use adpo::plan::Experiment;
use adpo::report;
use adpo::runner::{self, RESULTS_HEADER, RESULTS_SCHEMA};
use adpo_core::datagen::{self, FeatureSource};
use adpo_core::{metrics, Algorithm, GeneratorSpec};

fn small_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec { n_points: 512, dim: 6, n_classes: 4, examples_per_class: 60, ..GeneratorSpec::desk(seed) }
}

fn adpo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_adpo")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cli_generate_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let out = adpo(&["generate", "--out", path_str(&data), "--seed", "3", "--n", "400", "--dim", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("run");
    let out = adpo(&[
        "run", "--dataset", path_str(&data), "--algo", "uniform", "--algo", "adpo", "--budgets", "pow2:4:6",
        "--seeds", "0..2", "--out", path_str(&run_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = run_dir.join("results.csv");
    let rows = report::read_results(&results).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(run_dir.join("timings.csv").exists());

    let rep = dir.path().join("rep");
    let out = adpo(&["report", path_str(&results), "--out", path_str(&rep)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for m in report::METRICS {
        let svg = std::fs::read_to_string(rep.join(format!("{m}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
    assert!(std::fs::read_to_string(rep.join("summary.txt")).unwrap().contains("max_logit_error"));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    assert!(adpo(&["generate", "--out", path_str(&data), "--n", "100", "--dim", "3"]).status.success());
    let run = |extra: &[&str]| {
        let mut args = vec!["run", "--dataset", path_str(&data), "--seeds", "0", "--out", path_str(dir.path())];
        args.extend_from_slice(extra);
        adpo(&args).status.code()
    };
    assert_eq!(run(&["--budgets", "200"]), Some(2));
    assert_eq!(run(&["--algo", "nope", "--budgets", "8"]), Some(2));
    assert_eq!(run(&["--beta", "-1", "--budgets", "8"]), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, format!("{RESULTS_SCHEMA}\n{RESULTS_HEADER}\nuniform,0,8,x,1,0,true,ab\n")).unwrap();
    let out = adpo(&["report", path_str(&bad), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));
}

#[test]
fn generate_is_byte_identical_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(7);
    let mut bytes = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("g{k}.jsonl"));
        let (ds, truth) = datagen::generate(&spec, FeatureSource::Gaussian).unwrap();
        dataset_file::write_dataset(&path, &ds, &DatasetMeta::new(&spec, &truth, None)).unwrap();
        bytes.push((std::fs::read(&path).unwrap(), std::fs::read(dataset_file::meta_path(&path)).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);

    let (ds, meta) = dataset_file::load(&dir.path().join("g0.jsonl")).unwrap();
    let star = meta.theta_star();
    let r = metrics::evaluate(&ds, &star, &star, meta.beta, ds.len()).unwrap();
    assert_eq!((r.max_logit_error, r.mean_logit_error, r.error_rate), (0.0, 0.0, 0.0));
}

#[test]
fn uniform_on_all_points_recovers_optimal_policy() {
    let spec = small_spec(2);
    let (ds, truth) = datagen::generate(&spec, FeatureSource::Gaussian).unwrap();
    let meta = DatasetMeta::new(&spec, &truth, None);
    let exp = Experiment::new(vec![Algorithm::Uniform], vec![ds.len()], vec![0, 1]);
    for row in runner::run(&ds, &meta, &exp).unwrap() {
        assert!(row.metrics.max_logit_error <= 1e-4, "{}", row.metrics.max_logit_error);
        assert_eq!(row.metrics.error_rate, 0.0);
    }
}

#[test]
fn online_purity() {
    let spec = small_spec(5);
    let (ds, truth) = datagen::generate(&spec, FeatureSource::Gaussian).unwrap();
    let meta = DatasetMeta::new(&spec, &truth, None);
    let exp = Experiment::new(Algorithm::ALL.to_vec(), vec![16, 64, 128], vec![4]);
    for cell in runner::run_cells(&ds, &meta, &exp).unwrap() {
        if cell.algorithm.is_online() {
            assert_eq!(cell.query_log.len(), 128);
            assert_eq!(cell.query_log, cell.trace.chosen);
            let mut ids = cell.query_log.clone();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 128);
        } else {
            assert!(cell.query_log.is_empty());
        }
    }
}

#[test]
fn run_is_deterministic_across_thread_counts() {
    let spec = small_spec(9);
    let (ds, truth) = datagen::generate(&spec, FeatureSource::Gaussian).unwrap();
    let meta = DatasetMeta::new(&spec, &truth, None);
    let exp = Experiment::new(Algorithm::ALL.to_vec(), vec![8, 32, 64], vec![0, 1, 2]);
    let parallel = runner::results_csv(&runner::run(&ds, &meta, &exp).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| runner::results_csv(&runner::run(&ds, &meta, &exp).unwrap()));
    assert_eq!(parallel, serial);
}

fn write_csv(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("r.csv");
    std::fs::write(&path, format!("{RESULTS_SCHEMA}\n{RESULTS_HEADER}\n{body}")).unwrap();
    path
}

#[test]
fn report_of_single_row_equals_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "adpo,3,64,1.5,0.25,0.125,true,abcd\n");
    let agg = report::aggregate(&report::read_results(&path).unwrap());
    let band = agg[&("max_logit_error".to_owned(), "adpo".to_owned(), 64)];
    assert_eq!((band.count, band.median, band.q25, band.q75), (1, 1.5, 1.5, 1.5));
    assert_eq!(agg[&("error_rate".to_owned(), "adpo".to_owned(), 64)].median, 0.125);
    let files = report::write_report(&path, &dir.path().join("out")).unwrap();
    assert_eq!(files.charts.len(), 3);
    for chart in &files.charts {
        roxmltree::Document::parse(&std::fs::read_to_string(chart).unwrap()).unwrap();
    }
}

#[test]
fn report_of_constant_rows_has_zero_band() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = (0..5).map(|s| format!("uniform,{s},32,2,1,0.5,true,ab\n")).collect();
    let path = write_csv(dir.path(), &body);
    let agg = report::aggregate(&report::read_results(&path).unwrap());
    for band in agg.values() {
        assert_eq!(band.count, 5);
        assert_eq!(band.q75 - band.q25, 0.0);
    }
}

#[test]
fn report_cites_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "uniform,0,32,2,1,0.5,true,ab\nuniform,1,32,2,1\n");
    match report::read_results(&path) {
        Err(adpo::HarnessError::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn embedding_import_paths() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb.jsonl");
    let mut text = String::new();
    for i in 0..90 {
        let label = i % 3;
        let x = [label as f64 + 0.1 * (i as f64).sin(), (i as f64 * 0.7).cos(), 0.3 * label as f64];
        text += &format!("{{\"phi\":[{},{},{}],\"label\":{label}}}\n", x[0], x[1], x[2]);
    }
    std::fs::write(&emb, text).unwrap();
    let data = dir.path().join("d.jsonl");
    let out = adpo(&["generate", "--out", path_str(&data), "--embeddings", path_str(&emb), "--n", "200", "--positive-label", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (ds, meta) = dataset_file::load(&data).unwrap();
    assert_eq!((ds.len(), ds.dim()), (200, 3));
    assert_eq!(meta.generator.mode, "class_features");
}

#[test]
fn paper_scale_generation_completes() {
    let spec = GeneratorSpec { n_points: 1 << 16, dim: 384, ..GeneratorSpec::desk(0) };
    let (ds, _) = datagen::generate(&spec, FeatureSource::Gaussian).unwrap();
    assert_eq!((ds.len(), ds.dim()), (1 << 16, 384));
}
