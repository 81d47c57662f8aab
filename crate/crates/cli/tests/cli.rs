use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use reinpaint_core::desk::write_desk_corpus;
use reinpaint_core::image::{load_image, load_mask, save_image, save_mask, ImageBuffer};
use reinpaint_core::maskgen::mask_ratio;
use reinpaint_core::pipeline::{read_records, synth_summary, SynthReport};
use reinpaint_core::report::{from_json, RunReport};
use reinpaint_core::BinaryMask;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_reinpaint"));
    c.env_remove("RUST_LOG").env_remove("REINPAINT_HTTP_TIMEOUT_MS");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert_eq!(
        code(&out),
        0,
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_report(path: &Path) -> RunReport {
    from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

const CONFIG: &str = r#"
corpus = "corpus"
k = 2
metric = "mse"
objectives = ["first_second", "orig_first"]
run_seed = 3

[[first]]
kind = "mean_fill"

[[first]]
kind = "diffusion"
"#;

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_desk_corpus(&dir.path().join("corpus"), 3, 40, 32, 2).unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn gen_masks_patch_ratio_zero_is_all_keep_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-masks", "--kind", "patch", "--ratio", "0", "--count", "3", "--size", "24x16"];
    ok(&[&args[..], &["--out", "a"]].concat(), dir.path());
    ok(&[&args[..], &["--out", "b"]].concat(), dir.path());
    for i in 0..3 {
        let name = format!("mask_{i:04}.png");
        let m = load_mask(dir.path().join("a").join(&name)).unwrap();
        assert_eq!(m, BinaryMask::all_keep(24, 16).unwrap());
        assert_eq!(
            fs::read(dir.path().join("a").join(&name)).unwrap(),
            fs::read(dir.path().join("b").join(&name)).unwrap()
        );
    }
    assert_eq!(
        fs::read(dir.path().join("a/index.json")).unwrap(),
        fs::read(dir.path().join("b/index.json")).unwrap()
    );
}

#[test]
fn gen_masks_index_matches_reloaded_masks() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, extra) in [
        ("normal", ["--ratio-band", "0.1,0.3"]),
        ("patch", ["--ratio", "0.5"]),
    ] {
        let out = format!("m_{kind}");
        ok(
            &[
                &["gen-masks", "--kind", kind, "--count", "4", "--size", "64x48", "--seed", "9"][..],
                &extra[..],
                &["--out", &out][..],
            ]
            .concat(),
            dir.path(),
        );
        let index: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(&out).join("index.json")).unwrap())
                .unwrap();
        let masks = index["masks"].as_array().unwrap();
        assert_eq!(masks.len(), 4);
        for m in masks {
            let mask = load_mask(dir.path().join(&out).join(m["file"].as_str().unwrap())).unwrap();
            assert_eq!(m["ratio"].as_f64().unwrap(), mask_ratio(&mask));
            if kind == "normal" {
                assert!((0.1..=0.3).contains(&mask_ratio(&mask)));
            }
        }
    }
}

#[test]
fn gen_masks_rejects_mixed_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["gen-masks", "--kind", "patch", "--ratio-band", "0.1,0.2", "--size", "8x8", "--out", "x"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    let out = run(
        &["gen-masks", "--kind", "normal", "--size", "8x8", "--out", "x", "--ratio-band", "0.5,0.2"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_writes_records_manifest_and_reports() {
    let dir = fixture();
    let stdout = ok(&["evaluate", "--config", "run.toml", "--out", "out", "--workers", "2"], dir.path());
    assert!(stdout.contains("diffusion") && stdout.contains("mean_fill"), "{stdout}");
    let out = dir.path().join("out");
    for f in ["manifest.json", "records.jsonl", "report.json", "report.csv", "report.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 0);
    assert!(manifest["finished_at"].is_string());
    assert_eq!(
        manifest["config"]["corpus"].as_str().map(PathBuf::from),
        Some(dir.path().join("corpus"))
    );
    let report = read_report(&out.join("report.json"));
    assert_eq!((report.records, report.failed, report.images), (6, 0, 3));
    assert_eq!(report.config, Some(manifest["config"].clone()));

    // the report command rebuilds the same aggregate
    ok(&["report", "--records", "out/records.jsonl", "--out", "again"], dir.path());
    assert_eq!(
        fs::read(out.join("report.json")).unwrap(),
        fs::read(dir.path().join("again/report.json")).unwrap()
    );
    assert_eq!(
        fs::read(out.join("report.csv")).unwrap(),
        fs::read(dir.path().join("again/report.csv")).unwrap()
    );
}

#[test]
fn flags_override_config_keys() {
    let dir = fixture();
    ok(
        &[
            "evaluate", "--config", "run.toml", "--out", "o", "--k", "1", "--seed", "5",
            "--objective", "first-second", "--metric", "psnr", "--format", "json",
        ],
        dir.path(),
    );
    let (records, _) = read_records(&dir.path().join("o/records.jsonl")).unwrap();
    assert!(records.iter().all(|r| r.distances.len() == 1 && r.objectives.len() == 1));
    assert!(dir.path().join("o/report.json").is_file());
    assert!(!dir.path().join("o/report.csv").exists());
    let report = read_report(&dir.path().join("o/report.json"));
    assert_eq!(report.config.unwrap()["run_seed"], 5);
}

#[test]
fn resume_leaves_the_record_count_unchanged() {
    let dir = fixture();
    ok(&["evaluate", "--config", "run.toml", "--out", "out"], dir.path());
    let path = dir.path().join("out/records.jsonl");
    let first = fs::read_to_string(&path).unwrap();
    ok(&["evaluate", "--config", "run.toml", "--out", "out", "--resume"], dir.path());
    assert_eq!(fs::read_to_string(&path).unwrap(), first);

    // drop a record: resume recomputes exactly that one
    let kept: Vec<&str> = first.lines().skip(1).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    ok(&["-v", "evaluate", "--config", "run.toml", "--out", "out", "--resume"], dir.path());
    assert_eq!(fs::read_to_string(&path).unwrap(), first);
}

#[test]
fn first_second_runs_without_originals() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("model");
    fs::create_dir_all(&pre).unwrap();
    let img = ImageBuffer::from_fn(32, 32, |x, y| [x as f32 / 31.0, y as f32 / 31.0, 0.5]).unwrap();
    let mask = BinaryMask::from_fn(32, 32, |x, y| !(8..20).contains(&x) || !(10..24).contains(&y)).unwrap();
    for id in ["a", "b"] {
        save_image(&img, pre.join(format!("{id}.png"))).unwrap();
        save_mask(&mask, pre.join(format!("{id}.mask.png"))).unwrap();
    }
    fs::write(
        dir.path().join("pre.json"),
        r#"{"precomputed": [{"name": "model", "dir": "model"}], "k": 2, "metric": "mse"}"#,
    )
    .unwrap();
    ok(
        &["evaluate", "--config", "pre.json", "--out", "o", "--objective", "first-second"],
        dir.path(),
    );
    let report = read_report(&dir.path().join("o/report.json"));
    assert_eq!((report.records, report.failed), (2, 0));

    let out = run(
        &["evaluate", "--config", "pre.json", "--out", "o2", "--objective", "orig-first"],
        dir.path(),
    );
    assert_ne!(code(&out), 0);
}

#[test]
fn matrix_expands_into_runs() {
    let dir = fixture();
    let cfg = format!("{CONFIG}\n[matrix]\n\"second_mask.ratio\" = [0.2, 0.6]\nk = [1, 2]\n");
    fs::write(dir.path().join("grid.toml"), cfg).unwrap();
    ok(&["evaluate", "--config", "grid.toml", "--out", "grid", "--format", "json"], dir.path());
    let index: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("grid/matrix.json")).unwrap()).unwrap();
    let runs = index.as_array().unwrap();
    assert_eq!(runs.len(), 4);
    for (i, r) in runs.iter().enumerate() {
        let name = format!("run_{i:03}");
        assert_eq!(r["run"], name.as_str());
        let report = read_report(&dir.path().join("grid").join(&name).join("report.json"));
        let cfg = report.config.unwrap();
        assert_eq!(cfg["k"], r["overrides"]["k"]);
        assert_eq!(cfg["second_mask"]["ratio"], r["overrides"]["second_mask.ratio"]);
    }
}

#[test]
fn unreachable_second_backend_exits_3() {
    let dir = fixture();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = format!(
        "{CONFIG}\n[second]\nkind = \"http\"\nurl = \"http://127.0.0.1:{port}\"\nretries = 0\n"
    );
    fs::write(dir.path().join("down.toml"), cfg).unwrap();
    let out = run(&["evaluate", "--config", "down.toml", "--out", "o"], dir.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let (records, _) = read_records(&dir.path().join("o/records.jsonl")).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r.error.as_ref().unwrap().kind == "BackendFailure"));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_code"], 3);
}

#[test]
fn config_and_io_errors_have_distinct_codes() {
    let dir = fixture();
    assert_eq!(code(&run(&["evaluate", "--config", "missing.toml"], dir.path())), 4);
    fs::write(dir.path().join("bad.toml"), "k = 0\n").unwrap();
    assert_eq!(code(&run(&["evaluate", "--config", "bad.toml"], dir.path())), 2);
    fs::write(dir.path().join("typo.toml"), "kk = 1\n").unwrap();
    assert_eq!(code(&run(&["evaluate", "--config", "typo.toml"], dir.path())), 2);
    let out = bin()
        .args(["evaluate", "--config", "run.toml"])
        .env("REINPAINT_HTTP_TIMEOUT_MS", "soon")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn report_skips_corrupt_lines_and_rejects_empty_files() {
    let dir = fixture();
    ok(&["evaluate", "--config", "run.toml", "--out", "out", "--format", "json"], dir.path());
    let path = dir.path().join("out/records.jsonl");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{\"image_id\": \n");
    fs::write(&path, text).unwrap();
    let out = run(&["report", "--records", "out/records.jsonl", "--out", "r"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 1"));
    let report = read_report(&dir.path().join("r/report.json"));
    assert_eq!((report.records, report.skipped_lines), (6, 1));

    fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    assert_eq!(code(&run(&["report", "--records", "empty.jsonl"], dir.path())), 2);
    assert_eq!(code(&run(&["report", "--records", "nothing.jsonl"], dir.path())), 4);
}

#[test]
fn validate_synth_verdict_matches_its_records() {
    let dir = fixture();
    let stdout = ok(
        &[
            "validate-synth", "--corpus", "corpus", "--k", "2", "--metric", "mse", "--out", "s",
            "--donor-seed", "4", "--sigma", "0.4",
        ],
        dir.path(),
    );
    assert!(stdout.lines().any(|l| l.starts_with("verdict: ")), "{stdout}");
    for v in ["NATURAL", "BLEND", "NOISE"] {
        assert!(stdout.contains(v));
    }
    let written: SynthReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/synth.json")).unwrap()).unwrap();
    let (records, _) = read_records(&dir.path().join("s/records.jsonl")).unwrap();
    assert_eq!(records.len(), 9);
    assert_eq!(written, synth_summary(&records, written.metric).unwrap());
    assert!(stdout.contains(&written.verdict()));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["donor_seed"], 4);
    assert_eq!(manifest["config"]["first"][2]["sigma"], 0.4);
}

fn inpaint_fixture(dir: &Path) {
    let img = ImageBuffer::from_fn(20, 16, |x, y| [(x as f32 / 19.0).powi(2), 0.3, y as f32 / 15.0]).unwrap();
    save_image(&img, dir.join("img.png")).unwrap();
    let donor = ImageBuffer::filled(20, 16, [0.9, 0.1, 0.1]).unwrap();
    save_image(&donor, dir.join("donor.png")).unwrap();
    let mask = BinaryMask::from_fn(20, 16, |x, y| !(5..12).contains(&x) || !(4..10).contains(&y)).unwrap();
    save_mask(&mask, dir.join("mask.png")).unwrap();
}

#[test]
fn inpaint_builtins() {
    let dir = tempfile::tempdir().unwrap();
    inpaint_fixture(dir.path());
    let base = ["inpaint", "--image", "img.png", "--mask", "mask.png"];
    ok(&[&base[..], &["--backend", "oracle", "--out", "oracle.png"]].concat(), dir.path());
    ok(
        &[&base[..], &["--backend", r#"{"kind":"noise","sigma":0}"#, "--out", "quiet.png"]].concat(),
        dir.path(),
    );
    // zero-sigma noise is the oracle
    let oracle = fs::read(dir.path().join("oracle.png")).unwrap();
    assert_eq!(oracle, fs::read(dir.path().join("quiet.png")).unwrap());
    assert_eq!(oracle, fs::read(dir.path().join("img.png")).unwrap());

    ok(&[&base[..], &["--backend", "diffusion", "--out", "sub/d.png"]].concat(), dir.path());
    let d = load_image(dir.path().join("sub/d.png")).unwrap();
    let img = load_image(dir.path().join("img.png")).unwrap();
    assert_eq!(d.pixel(0, 0), img.pixel(0, 0));
    assert!(d != img, "diffusion left the hole untouched");

    ok(
        &[&base[..], &["--backend", "blend", "--donor", "donor.png", "--out", "b.png"]].concat(),
        dir.path(),
    );
    let b = load_image(dir.path().join("b.png")).unwrap();
    assert_eq!(b.to_rgb8()[(5 * 20 + 6) * 3..][..3], [230, 26, 26]);
    let out = run(&[&base[..], &["--backend", "blend", "--out", "x.png"]].concat(), dir.path());
    assert_eq!(code(&out), 2);
    let out = run(&[&base[..], &["--backend", "nope", "--out", "x.png"]].concat(), dir.path());
    assert_eq!(code(&out), 2);
}

/// Answers every request with the image it received.
fn echo_server() -> (String, thread::JoinHandle<()>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let handle = thread::spawn(move || {
        if let Ok(mut req) = server.recv() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let v: Value = serde_json::from_str(&body).unwrap();
            let reply = serde_json::json!({ "image": v["image"] }).to_string();
            req.respond(tiny_http::Response::from_string(reply)).unwrap();
        }
    });
    (url, handle)
}

#[test]
fn inpaint_over_http_keeps_the_keep_region() {
    let dir = tempfile::tempdir().unwrap();
    inpaint_fixture(dir.path());
    let (url, handle) = echo_server();
    ok(
        &["inpaint", "--image", "img.png", "--mask", "mask.png", "--backend", &url, "--out", "h.png"],
        dir.path(),
    );
    handle.join().unwrap();
    let img = load_image(dir.path().join("img.png")).unwrap().to_rgb8();
    let out = load_image(dir.path().join("h.png")).unwrap().to_rgb8();
    let mask = load_mask(dir.path().join("mask.png")).unwrap();
    for (i, keep) in mask.keep_flags().iter().enumerate() {
        let px = &out[i * 3..i * 3 + 3];
        if *keep {
            assert_eq!(px, &img[i * 3..i * 3 + 3]);
        } else {
            assert_eq!(px, [0, 0, 0]);
        }
    }
}
