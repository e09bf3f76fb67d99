//! The `stairward` binary end to end on a synthetic corpus.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{build, mock_scorer, run, run_env, s, Corpus};
use stairward::scorer::{jaccard, tokens};

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn mos(c: &Corpus) -> std::path::PathBuf {
    let out = c.path("mos.csv");
    let r = run(&["mos", "--ratings", s(&c.ratings), "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out
}

/// Copy of the manifest with every caption replaced by the prompt.
fn captions_equal_prompts(c: &Corpus) -> std::path::PathBuf {
    let rows = read_csv(&c.manifest);
    let out = c.path("manifest_exact.csv");
    let mut w = csv::Writer::from_path(&out).unwrap();
    let headers: Vec<&String> = rows[0].keys().collect();
    w.write_record(&headers).unwrap();
    for row in &rows {
        let rec: Vec<&str> = headers
            .iter()
            .map(|h| if h.as_str() == "caption" { row["prompt"].as_str() } else { row[h.as_str()].as_str() })
            .collect();
        w.write_record(rec).unwrap();
    }
    w.flush().unwrap();
    out
}

#[test]
fn mos_writes_table_and_lists_rejections() {
    let c = build(60, 12, 6, 1);
    let out = mos(&c);
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 120);
    assert!(rows.iter().all(|r| r["n_raters"] == "6"));
    let r = run(&["mos", "--ratings", s(&c.ratings), "--out", s(&out), "--outlier-threshold", "0.0"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("rejected raters: none"), "{}", r.stdout);
}

#[test]
fn out_of_range_rating_fails_with_row() {
    let c = build(10, 5, 3, 2);
    let mut text = fs::read_to_string(&c.ratings).unwrap();
    text.push_str("img0000,r99,0,alignment,7.3\n");
    fs::write(&c.ratings, &text).unwrap();
    let rows = text.lines().count();
    let r = run(&["mos", "--ratings", s(&c.ratings), "--out", s(&c.path("m.csv"))]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("score out of range"), "{}", r.stderr);
    assert!(r.stderr.contains(&format!("row {rows}")), "{}", r.stderr);
    assert!(!c.path("m.csv").exists());
}

#[test]
fn constant_scorer_gives_twice_the_constant() {
    let c = build(5, 5, 3, 3);
    let out = c.path("scores.csv");
    let r = run(&["score", "--manifest", s(&c.manifest), "--scorer", "constant:0.25", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&out);
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row["metric_name"], "stairreward:none");
        assert_eq!(row["value"], "0.5");
    }
}

#[test]
fn mode_all_doubles_whole_scores() {
    let c = build(12, 4, 3, 4);
    let out = c.path("scores.csv");
    let r = run(&[
        "score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--mode", "all", "--out", s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for (row, (p, cap)) in read_csv(&out).iter().zip(c.prompts.iter().zip(&c.captions)) {
        assert_eq!(row["metric_name"], "stairreward:all");
        let v: f64 = row["value"].parse().unwrap();
        assert_eq!(v, 2.0 * jaccard(&tokens(p), &tokens(cap)));
    }

    let exact = captions_equal_prompts(&c);
    let r = run(&["score", "--manifest", s(&exact), "--scorer", "lexical", "--mode", "all", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(read_csv(&out).iter().all(|row| row["value"] == "2"));
}

#[test]
fn breakdown_lists_every_morpheme() {
    let c = build(8, 4, 3, 5);
    let (out, details) = (c.path("s.csv"), c.path("b.csv"));
    let r = run(&[
        "score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--breakdown", s(&details), "--out", s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&details);
    let first: Vec<&BTreeMap<String, String>> = rows.iter().filter(|r| r["image_id"] == "img0000").collect();
    assert_eq!(first[0]["k"], "0");
    let weights: f64 = first[1..].iter().map(|r| r["weight"].parse::<f64>().unwrap()).sum();
    assert!((weights - 1.0).abs() < 1e-12);
    assert_eq!(first.last().unwrap()["box_length"], "1");
}

#[test]
fn bench_of_mos_itself_is_perfect() {
    let c = build(120, 20, 5, 6);
    let mos_path = mos(&c);
    let scores = c.path("oracle.csv");
    let mut w = csv::Writer::from_path(&scores).unwrap();
    w.write_record(["image_id", "metric_name", "value"]).unwrap();
    for row in read_csv(&mos_path).iter().filter(|r| r["dimension"] == "alignment") {
        w.write_record([row["image_id"].as_str(), "oracle", row["mos"].as_str()]).unwrap();
    }
    w.flush().unwrap();
    let out = c.path("report.csv");
    let r = run(&[
        "bench", "--scores", s(&scores), "--mos", s(&mos_path), "--manifest", s(&c.manifest), "--subsets",
        "all,model_group", "--reps", "3", "--out", s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&out);
    let subsets: Vec<&str> = rows.iter().map(|r| r["subset"].as_str()).collect();
    assert_eq!(subsets, ["all", "model_group=bad", "model_group=medium", "model_group=good"]);
    for row in &rows {
        for k in ["srocc", "krocc"] {
            assert_eq!(row[k], "1", "{row:?}");
        }
        assert!((row["plcc"].parse::<f64>().unwrap() - 1.0).abs() < 1e-9, "{row:?}");
    }
    assert!(c.path("report.txt").exists());
    assert!(r.stdout.contains("[model_group]"));
}

fn score_and_bench(c: &Corpus, mos_path: &Path, tag: &str, scatter: Option<&Path>) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let scores = c.path(&format!("scores_{tag}.csv"));
    let report = c.path(&format!("report_{tag}.csv"));
    let r = run(&["score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--out", s(&scores)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut args = vec![
        "bench", "--scores", s(&scores), "--mos", s(mos_path), "--manifest", s(&c.manifest), "--subsets",
        "all,model_group,prompt_length,style", "--reps", "4", "--seed", "11", "--out", s(&report),
    ];
    if let Some(d) = scatter {
        args.extend(["--scatter-dir", s(d)]);
    }
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (
        fs::read(&scores).unwrap(),
        fs::read(&report).unwrap(),
        fs::read(report.with_extension("txt")).unwrap(),
    )
}

#[test]
fn score_and_bench_are_byte_reproducible() {
    let c = build(150, 25, 5, 7);
    let mos_path = mos(&c);
    let scatter = c.path("scatter");
    fs::create_dir(&scatter).unwrap();
    let a = score_and_bench(&c, &mos_path, "a", Some(&scatter));
    let b = score_and_bench(&c, &mos_path, "b", None);
    assert_eq!(a, b);
    let files: Vec<String> = fs::read_dir(&scatter)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(files.contains(&"scatter_all__stairreward_none.csv".to_string()), "{files:?}");
}

#[test]
fn parallel_bench_matches_serial() {
    let c = build(100, 20, 4, 8);
    let mos_path = mos(&c);
    let scores = c.path("s.csv");
    assert_eq!(run(&["score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--out", s(&scores)]).code, 0);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = c.path(&format!("r{jobs}.csv"));
        let r = run(&[
            "bench", "--scores", s(&scores), "--mos", s(&mos_path), "--manifest", s(&c.manifest), "--reps", "6",
            "--jobs", jobs, "--out", s(&out),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bench_join_failure_names_ids() {
    let c = build(30, 6, 3, 9);
    let mos_path = mos(&c);
    let scores = c.path("s.csv");
    fs::write(&scores, "image_id,metric_name,value\nimg0000,m,0.5\nimg0001,m,0.7\n").unwrap();
    let r = run(&[
        "bench", "--scores", s(&scores), "--mos", s(&mos_path), "--manifest", s(&c.manifest), "--out",
        s(&c.path("r.csv")),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("img0002"), "{}", r.stderr);
}

#[test]
fn ablate_rows_and_rank_equivalence() {
    let c = build(80, 16, 4, 10);
    let mos_path = mos(&c);
    let out = c.path("ablation.csv");
    let r = run(&[
        "ablate", "--manifest", s(&c.manifest), "--scorer", "lexical", "--mos", s(&mos_path), "--reps", "3",
        "--seed", "5", "--out", s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = read_csv(&out);
    let modes: Vec<&str> = rows.iter().map(|r| r["mode"].as_str()).collect();
    assert_eq!(modes, ["none", "word", "image", "all"]);
    let first = fs::read(&out).unwrap();

    // bare scorer, benchmarked on its own with the same split
    let bare = c.path("bare.csv");
    let mut w = csv::Writer::from_path(&bare).unwrap();
    w.write_record(["image_id", "metric_name", "value"]).unwrap();
    for (i, id) in c.ids.iter().enumerate() {
        let v = jaccard(&tokens(&c.prompts[i]), &tokens(&c.captions[i]));
        w.write_record([id.as_str(), "bare", &v.to_string()]).unwrap();
    }
    w.flush().unwrap();
    let report = c.path("bare_report.csv");
    let r = run(&[
        "bench", "--scores", s(&bare), "--mos", s(&mos_path), "--manifest", s(&c.manifest), "--reps", "3",
        "--seed", "5", "--out", s(&report),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let bare_srocc = &read_csv(&report)[0]["srocc"];
    assert_eq!(&rows[3]["srocc"], bare_srocc);

    let r = run(&[
        "ablate", "--manifest", s(&c.manifest), "--scorer", "lexical", "--mos", s(&mos_path), "--reps", "3",
        "--seed", "5", "--out", s(&out),
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(fs::read(&out).unwrap(), first);
}

#[test]
fn report_subcommand_renders_saved_csv() {
    let c = build(60, 12, 3, 11);
    let mos_path = mos(&c);
    let scores = c.path("s.csv");
    assert_eq!(run(&["score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--out", s(&scores)]).code, 0);
    let report = c.path("r.csv");
    let r = run(&[
        "bench", "--scores", s(&scores), "--mos", s(&mos_path), "--manifest", s(&c.manifest), "--subsets",
        "model_group", "--reps", "2", "--out", s(&report),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r2 = run(&["report", "--input", s(&report)]);
    assert_eq!(r2.code, 0, "{}", r2.stderr);
    assert_eq!(r2.stdout, fs::read_to_string(report.with_extension("txt")).unwrap());
}

#[test]
fn external_scorer_through_config_and_override() {
    let c = build(6, 3, 3, 12);
    let config = c.path("scorer.toml");
    fs::write(
        &config,
        format!(
            "name = \"mock\"\nkind = \"external_process\"\ncommand = [\"python3\", {:?}, \"--constant\", \"0.25\"]\nimage_mode = \"inline\"\n",
            s(&mock_scorer())
        ),
    )
    .unwrap();
    let out = c.path("s.csv");
    let r = run(&["score", "--manifest", s(&c.manifest), "--scorer", s(&config), "--jobs", "2", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(read_csv(&out).iter().all(|row| row["value"] == "0.5"));

    let crash = format!("python3 '{}' --crash-after 3", s(&mock_scorer()));
    let r = run_env(
        &["score", "--manifest", s(&c.manifest), "--scorer", s(&config), "--out", s(&out)],
        &[("STAIRWARD_SCORER_CMD", crash.as_str())],
    );
    assert_eq!(r.code, 3, "{}", r.stderr);

    let bad_version = format!("python3 '{}' --version 99", s(&mock_scorer()));
    let r = run_env(
        &["score", "--manifest", s(&c.manifest), "--scorer", s(&config), "--out", s(&out)],
        &[("STAIRWARD_SCORER_CMD", bad_version.as_str())],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn invocation_errors_are_config_errors() {
    let c = build(4, 2, 3, 13);
    let out = c.path("o.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["score", "--manifest", "/nonexistent.csv", "--scorer", "lexical", "--out", s(&out)],
        vec!["score", "--manifest", s(&c.manifest), "--scorer", "constant:x", "--out", s(&out)],
        vec!["score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--mode", "half", "--out", s(&out)],
        vec!["score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--out", "/nonexistent/dir/o.csv"],
        vec!["score", "--manifest", s(&c.manifest), "--scorer", "lexical", "--bogus", "--out", s(&out)],
        vec!["mos", "--ratings", s(&c.ratings), "--out", s(&out), "--outlier-threshold", "3"],
    ];
    for args in cases {
        let r = run(&args);
        assert_eq!(r.code, 2, "{args:?}: {}", r.stderr);
    }
    assert!(!out.exists());
}

#[test]
fn help_enumerates_flags() {
    let r = run(&["score", "--help"]);
    assert_eq!(r.code, 0);
    for flag in ["--manifest", "--root", "--mapping", "--scorer", "--rules", "--jobs", "--mode", "--breakdown", "--out"] {
        assert!(r.stdout.contains(flag), "{flag}");
    }
}
