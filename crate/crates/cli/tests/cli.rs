use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn citewin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_citewin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn write_corpus(dir: &Path, researchers: &str, publications: &str, citations: &str) -> [PathBuf; 3] {
    let files = [
        dir.join("researchers.csv"),
        dir.join("publications.csv"),
        dir.join("citations.csv"),
    ];
    for (f, body) in files.iter().zip([researchers, publications, citations]) {
        fs::write(f, body).unwrap();
    }
    files
}

/// SDS X/01: ten researchers, seven of them publish. SDS Y/01: twelve
/// researchers, five publish (share 5/12, below the 0.5 threshold). One
/// publication is shared between x0 and y0.
fn toy_corpus(dir: &Path) -> [PathBuf; 3] {
    let mut researchers = String::from("researcher_id,sds_code,uda_code,university_id\n");
    for i in 0..10 {
        researchers += &format!("x{i},X/01,X,u{}\n", i % 3);
    }
    for i in 0..12 {
        researchers += &format!("y{i},Y/01,Y,u{}\n", 3 + i % 2);
    }
    let mut publications = String::from("pub_id,pub_year,author_ids,categories\n");
    let mut citations = String::from("pub_id,observation_year,cumulative_citations\n");
    let mut add = |id: &str, year: i32, authors: &str, cats: &str, base: u64| {
        publications += &format!("{id},{year},{authors},{cats}\n");
        for (k, obs) in (2004..=2008).enumerate() {
            citations += &format!("{id},{obs},{}\n", base * (k as u64 + 1));
        }
    };
    for i in 0..7 {
        add(&format!("xp{i}"), 2001 + i % 3, &format!("x{i}"), "GEOM", i as u64 + 1);
    }
    add("xy0", 2002, "x0;y0", "GEOM:0.5;PHYS:0.5", 3);
    for i in 0..5 {
        add(&format!("yp{i}"), 2003, &format!("y{i}"), "PHYS", 2 * i as u64);
    }
    write_corpus(dir, &researchers, &publications, &citations)
}

fn analyze_args<'a>(files: &'a [PathBuf; 3], out: &'a Path) -> Vec<&'a str> {
    vec![
        "analyze",
        "--researchers",
        path(&files[0]),
        "--publications",
        path(&files[1]),
        "--citations",
        path(&files[2]),
        "--out",
        path(out),
    ]
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn simulate_is_deterministic_and_feeds_analyze() {
    let tmp = TempDir::new().unwrap();
    let default = citewin(&["simulate", "--print-default-config"]);
    assert!(default.status.success());
    let config = tmp.path().join("synth.conf");
    fs::write(&config, &default.stdout).unwrap();

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let run = citewin(&["simulate", "--config", path(&config), "--out", path(out)]);
        assert!(run.status.success(), "{}", stderr(&run));
    }
    assert_eq!(tree(&a), tree(&b));
    assert!(a.join("ground_truth.json").exists());

    let files = [
        a.join("researchers.csv"),
        a.join("publications.csv"),
        a.join("citations.csv"),
    ];
    let reports = tmp.path().join("reports");
    let run = citewin(&analyze_args(&files, &reports));
    assert!(run.status.success(), "{}", stderr(&run));
    for name in citewin_core::pipeline::REPORT_FILES {
        assert!(reports.join(name).exists(), "{name} missing");
    }
}

#[test]
fn bad_aging_tau_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("bad.conf");
    fs::write(
        &config,
        "seed = 1\nsds.A/01.uda_code = A\nsds.A/01.n_members = 20\nsds.A/01.aging_tau = 0\n",
    )
    .unwrap();
    let run = citewin(&[
        "simulate",
        "--config",
        path(&config),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("aging_tau"), "{}", stderr(&run));
}

#[test]
fn analyze_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let files = toy_corpus(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let run = citewin(&analyze_args(&files, out));
        assert!(run.status.success(), "{}", stderr(&run));
    }
    let strip = |t: Vec<(String, Vec<u8>)>| t.into_iter().filter(|(n, _)| n != "timings.json").collect::<Vec<_>>();
    assert_eq!(strip(tree(&a)), strip(tree(&b)));
}

#[test]
fn manifest_matches_hand_count() {
    let tmp = TempDir::new().unwrap();
    let files = toy_corpus(tmp.path());
    let out = tmp.path().join("reports");
    let run = citewin(&analyze_args(&files, &out));
    assert!(run.status.success(), "{}", stderr(&run));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();

    // 22 researchers, 7 + 1 + 5 publications, 2 SDSs, universities u0..u4
    assert_eq!(manifest["loaded"]["researchers"], 22);
    assert_eq!(manifest["loaded"]["publications"], 13);
    assert_eq!(manifest["loaded"]["sds"], 2);
    assert_eq!(manifest["loaded"]["universities"], 5);
    // Y/01 drops out; the shared publication stays with x0 as sole author
    assert_eq!(manifest["analyzed"]["researchers"], 10);
    assert_eq!(manifest["analyzed"]["publications"], 8);
    assert_eq!(manifest["analyzed"]["sds"], 1);
    assert_eq!(manifest["analyzed"]["universities"], 3);
    assert_eq!(manifest["filter"]["removed"][0]["sds_code"], "Y/01");

    // recount from the input files
    let researchers = fs::read_to_string(&files[0]).unwrap();
    let kept: Vec<&str> = researchers
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("X/01"))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let publications = fs::read_to_string(&files[1]).unwrap();
    let kept_pubs = publications
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2).unwrap().split(';').any(|a| kept.contains(&a)))
        .count();
    assert_eq!(manifest["analyzed"]["researchers"], kept.len());
    assert_eq!(manifest["analyzed"]["publications"], kept_pubs);
}

#[test]
fn benchmark_only_leaves_stability_empty() {
    let tmp = TempDir::new().unwrap();
    let files = toy_corpus(tmp.path());
    let out = tmp.path().join("reports");
    let mut args = analyze_args(&files, &out);
    args.extend(["--observe", "2004"]);
    let run = citewin(&args);
    assert!(run.status.success(), "{}", stderr(&run));
    for name in ["stats.csv", "transitions.csv", "histogram.csv", "probit.csv"] {
        let body = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(body.lines().count(), 1, "{name} should hold only its header");
    }
    let rankings = fs::read_to_string(out.join("rankings.csv")).unwrap();
    assert_eq!(rankings.lines().count(), 1 + 10);
}

#[test]
fn benchmark_flag_truncates_observation_years() {
    let tmp = TempDir::new().unwrap();
    let files = toy_corpus(tmp.path());
    let out = tmp.path().join("reports");
    let mut args = analyze_args(&files, &out);
    args.extend(["--benchmark", "2006"]);
    let run = citewin(&args);
    assert!(run.status.success(), "{}", stderr(&run));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"benchmark_year\": 2006"), "{manifest}");

    let mut args = analyze_args(&files, &out);
    args.extend(["--benchmark", "2010"]);
    assert_eq!(citewin(&args).status.code(), Some(2));
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let mut files = toy_corpus(tmp.path());
    files[2] = tmp.path().join("nowhere.csv");
    let run = citewin(&analyze_args(&files, &tmp.path().join("o")));
    assert_eq!(run.status.code(), Some(2));
    let err = stderr(&run);
    assert!(err.contains("nowhere.csv"), "{err}");
    let line: serde_json::Value = serde_json::from_str(err.trim()).expect("single JSON error line");
    assert_eq!(line["status"], "error");
}

#[test]
fn validate_accepts_a_clean_corpus() {
    let tmp = TempDir::new().unwrap();
    toy_corpus(tmp.path());
    let run = citewin(&["validate", path(tmp.path())]);
    assert!(run.status.success(), "{}", stderr(&run));
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["researchers"], 22);
    assert_eq!(report["publications"], 13);
}

#[test]
fn validate_reports_decreasing_path_with_pub_id() {
    let tmp = TempDir::new().unwrap();
    let files = write_corpus(
        tmp.path(),
        "researcher_id,sds_code,uda_code,university_id\nr1,S/01,S,u1\n",
        "pub_id,pub_year,author_ids,categories\npA,2002,r1,GEOM\n",
        "pub_id,observation_year,cumulative_citations\npA,2004,5\npA,2005,4\n",
    );
    let run = citewin(&["validate", path(&files[0]), path(&files[1]), path(&files[2])]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("pA"), "{}", stderr(&run));
}

#[test]
fn validate_reports_unknown_author_with_row() {
    let tmp = TempDir::new().unwrap();
    write_corpus(
        tmp.path(),
        "researcher_id,sds_code,uda_code,university_id\nr1,S/01,S,u1\n",
        "pub_id,pub_year,author_ids,categories\npA,2002,r1,GEOM\npB,2003,r1;ghost,GEOM\n",
        "pub_id,observation_year,cumulative_citations\npA,2004,1\npB,2004,1\n",
    );
    let run = citewin(&["validate", path(tmp.path())]);
    assert_eq!(run.status.code(), Some(1));
    let err = stderr(&run);
    assert!(err.contains("publications.csv:3") && err.contains("ghost"), "{err}");
}
