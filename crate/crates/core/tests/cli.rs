mod common;

use std::fs;

use common::{path, relation_fixture, relemb, stdout, FAST};
use relemb::dataset::{
    write_analogy, write_classification, write_relation_data, AnalogyQuestion, LabeledPair, Split, WordPair,
};
use relemb::embedding::EmbeddingStore;
use relemb::evaluation::{EvalReport, EvalResult};
use relemb::synthetic::separable_classes;
use relemb::training::RunMetadata;

fn pair(h: &str, t: &str) -> WordPair {
    WordPair::new(h, t).unwrap()
}

#[test]
fn train_writes_all_four_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rel.jsonl");
    write_relation_data(&data, &relation_fixture(2, 10, 1)).unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--data", path(&data), "--out", path(&out)];
    args.extend_from_slice(FAST);
    let o = relemb(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "model/params.bin",
        "model/vocab.txt",
        "prompt.json",
        "head.json",
        "run.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let meta = RunMetadata::from_json(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta.scalar, "f32");
    assert_eq!(meta.seed, 0);
    assert_ne!(meta.report.initial_hash, meta.report.final_hash);
    // Only the output directory was created.
    let entries: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(entries.len(), 2);
}

#[test]
fn exclusion_is_recorded_in_the_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rel.jsonl");
    let mut records = relation_fixture(3, 10, 3);
    for r in records.iter_mut().filter(|r| r.category_id == "cat2") {
        r.category_id = "Class Inclusion".into();
    }
    write_relation_data(&data, &records).unwrap();
    let out = dir.path().join("run");
    let mut args = vec![
        "train",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "--exclude-category",
        "Class Inclusion",
    ];
    args.extend_from_slice(FAST);
    let o = relemb(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = RunMetadata::from_json(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta.excluded_categories, ["Class Inclusion"]);
    assert_eq!(meta.excluded_relations, ["rel2"]);
}

#[test]
fn validation_failures_exit_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = relemb(&[
        "train",
        "--data",
        path(&dir.path().join("missing.jsonl")),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let data = dir.path().join("rel.jsonl");
    write_relation_data(&data, &relation_fixture(2, 10, 1)).unwrap();
    let o = relemb(&[
        "train",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "--exclude-category",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = relemb(&[
        "train",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "--learning-rate",
        "-1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = relemb(&["train", "--data", path(&data), "--out", path(&out), "--prompt", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);

    fs::write(&data, "{\"relation_id\": \"r\"}\n").unwrap();
    let o = relemb(&["train", "--data", path(&data), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rel.jsonl:1"));
    assert!(!out.exists());
}

#[test]
fn embed_then_neighbors_lists_k_descending() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.txt");
    let lines: Vec<String> = (0..10).map(|i| format!("w{i}\tw{}", i + 20)).collect();
    fs::write(&pairs, lines.join("\n")).unwrap();
    let store = dir.path().join("store.txt");
    let o = relemb(&["embed", "--data", path(&pairs), "--out", path(&store)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = EmbeddingStore::<f64>::read(&store).unwrap();
    assert_eq!(s.len(), 10);

    let o = relemb(&[
        "neighbors",
        "--embeddings",
        path(&store),
        "--head",
        "w0",
        "--tail",
        "w20",
        "-k",
        "3",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    let cos: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(cos.windows(2).all(|w| w[0] >= w[1]));
    assert!(rows.iter().all(|r| r[0] != "w0"));

    let o = relemb(&[
        "neighbors",
        "--embeddings",
        path(&store),
        "--head",
        "zz",
        "--tail",
        "yy",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_analogy_gold_duplicating_the_stem_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("q.jsonl");
    let q = AnalogyQuestion {
        stem: pair("w1", "w2"),
        choices: vec![pair("w3", "w4"), pair("w1", "w2"), pair("w5", "w6")],
        answer: 1,
    };
    write_analogy(&data, &[q]).unwrap();
    let report = dir.path().join("report.json");
    let o = relemb(&[
        "eval-analogy",
        "--data",
        path(&data),
        "--out",
        path(&report),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = EvalReport::from_json(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.seed, 3);
    assert!(matches!(r.result, EvalResult::Analogy { accuracy, .. } if accuracy == 1.0));
    assert_eq!(r.config["method"], "relemb");
}

#[test]
fn eval_analogy_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("q.jsonl");
    let q = AnalogyQuestion {
        stem: pair("a", "b"),
        choices: vec![pair("c", "d"), pair("e", "f")],
        answer: 1,
    };
    write_analogy(&data, &[q]).unwrap();
    let vectors = dir.path().join("vec.txt");
    fs::write(&vectors, "a 0 0\nb 1 0\nc 0 0\nd 0 1\ne 1 1\nf 2 1\n").unwrap();
    let o = relemb(&[
        "eval-analogy",
        "--data",
        path(&data),
        "--static-vectors",
        path(&vectors),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("accuracy: 1.0000"));
    let corpus = dir.path().join("corpus.txt");
    fs::write(&corpus, "e x f\nc\nd\n").unwrap();
    let o = relemb(&["eval-analogy", "--data", path(&data), "--pmi-corpus", path(&corpus)]);
    assert!(stdout(&o).contains("accuracy: 1.0000"));
    let o = relemb(&[
        "eval-analogy",
        "--data",
        path(&data),
        "--static-vectors",
        path(&vectors),
        "--compose",
        "sum",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_rc_on_separable_store() {
    let dir = tempfile::tempdir().unwrap();
    let parts = separable_classes::<f64>(3, 60, 8, 11);
    let mut store = EmbeddingStore::new(8);
    let mut labeled = Vec::new();
    for (k, (part, split)) in parts
        .iter()
        .zip([Split::Train, Split::Validation, Split::Test])
        .enumerate()
    {
        for (i, label) in part.labels.iter().enumerate() {
            let p = pair(&format!("p{k}x{i}"), "q");
            store.insert(p.clone(), part.vectors.row(i).to_vec()).unwrap();
            labeled.push(LabeledPair {
                pair: p,
                label: label.clone(),
                split,
            });
        }
    }
    let store_path = dir.path().join("store.txt");
    store.write(&store_path).unwrap();
    let before = fs::read(&store_path).unwrap();
    let data = dir.path().join("rc.jsonl");
    write_classification(&data, &labeled).unwrap();
    let report = dir.path().join("rc.json");
    let o = relemb(&[
        "eval-rc",
        "--data",
        path(&data),
        "--embeddings",
        path(&store_path),
        "--out",
        path(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = EvalReport::from_json(&fs::read_to_string(&report).unwrap()).unwrap();
    let EvalResult::RelationClassification { test, grid, .. } = r.result else {
        panic!("wrong report kind")
    };
    assert!(test.macro_f1 >= 0.95, "macro F1 {}", test.macro_f1);
    assert_eq!(test.micro_f1, test.accuracy);
    assert_eq!(grid.len(), 9);
    // Inputs are never modified.
    assert_eq!(fs::read(&store_path).unwrap(), before);
}
