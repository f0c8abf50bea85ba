//! The `gensss` binary: exit codes, outputs and agreement with the library.

mod common;

use gensss_core::factor::FactoredBssrdf;
use gensss_core::ga::factored_fitness;
use gensss_core::material::load_material_archive;
use gensss_core::render::read_pfm;
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn gensss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gensss")).args(args).env_remove("GENSSS_MATERIAL_DIR").env_remove("GENSSS_BIND").output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

/// The last stderr line is `error: {json}`.
fn error_line(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with("error: ")).unwrap_or_else(|| panic!("no error line in {text}"));
    serde_json::from_str(&line["error: ".len()..]).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(format!("{name}.gpss"));
    let mut args = vec!["synth", "--n", "16", "--name", name, "--out", p(&out)];
    if !extra.contains(&"--pattern") {
        args.extend(["--pattern", "chessboard4"]);
    }
    args.extend_from_slice(extra);
    let o = gensss(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn compress_reports_the_error_of_the_written_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "cb", &[]);
    let ga = dir.path().join("ga.toml");
    std::fs::write(&ga, "population_size = 8\nmax_generations = 4\nseed = 3\n").unwrap();
    let out = dir.path().join("cb.gpsf");
    let history = dir.path().join("history.csv");
    let o = gensss(&["compress", "--in", p(&input), "--k", "5", "--ga-config", p(&ga), "--out", p(&out), "--history", p(&history)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);

    let f = FactoredBssrdf::load(&out).unwrap();
    assert_eq!(f.k(), 5);
    assert_eq!(report["bytes"].as_u64().unwrap(), std::fs::metadata(&out).unwrap().len());
    assert_eq!(report["bytes"].as_u64().unwrap(), f.storage_bytes());
    let archive = load_material_archive(&input).unwrap();
    let recomputed = factored_fitness(&archive.transport, &f);
    assert_eq!(report["rmse"].as_f64().unwrap(), recomputed.rmse);
    assert_eq!(report["clamped_entry_count"].as_u64().unwrap(), recomputed.clamped_entry_count as u64);

    let lines = std::fs::read_to_string(&history).unwrap().lines().count();
    assert_eq!(lines, 1 + report["generations"].as_u64().unwrap() as usize);
}

#[test]
fn compress_rejects_bad_ranks_and_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "cb", &[]);
    let out = dir.path().join("x.gpsf");

    let o = gensss(&["compress", "--in", p(&input), "--k", "7", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["kind"], "usage");
    assert!(!out.exists());

    let homo = synth(dir.path(), "flat", &["--type", "Homogeneous", "--k", "1"]);
    let o = gensss(&["compress", "--in", p(&homo), "--k", "5", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = gensss(&["compress", "--in", p(&dir.path().join("missing.gpss")), "--k", "5", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["kind"], "failure");
    assert!(error_line(&o)["message"].as_str().unwrap().contains("missing.gpss"));

    let garbage = dir.path().join("garbage.gpss");
    std::fs::write(&garbage, b"GPSS\x01\x00\xff\xff\xff\xff").unwrap();
    let o = gensss(&["compress", "--in", p(&garbage), "--k", "1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));

    let o = gensss(&["synth", "--pattern", "uniform", "--n", "16", "--name", "x", "--type", "Homogeneous", "--k", "5", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = gensss(&["compress", "--in", p(&input), "--k", "3", "--allow-any-k", "--out", p(&out)]);
    assert!(o.status.success());
    assert_eq!(FactoredBssrdf::load(&out).unwrap().k(), 3);
}

#[test]
fn preview_render_is_reproducible_and_honours_k() {
    let root = tempfile::tempdir().unwrap();
    let materials = common::material_dir(root.path(), 16);
    let (_, config) = common::quick_config(root.path(), &materials);

    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["render", "--config", p(&config), "--out", p(out)];
        args.extend_from_slice(extra);
        let o = gensss(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout_json(&o)
    };
    let a = root.path().join("a");
    let report = run(&a, &["--preview", "Jade", "--type", "Heterogeneous", "--seed", "9"]);
    assert_eq!(report["k_used"], 10);
    for ext in ["png", "pfm", "json"] {
        assert!(root.path().join(format!("a.{ext}")).exists());
    }
    let b = root.path().join("b");
    run(&b, &["--preview", "Jade", "--type", "Heterogeneous", "--seed", "9", "--threads", "3"]);
    assert_eq!(read_pfm(root.path().join("a.pfm")).unwrap(), read_pfm(root.path().join("b.pfm")).unwrap());
    assert_eq!(std::fs::read(root.path().join("a.png")).unwrap(), std::fs::read(root.path().join("b.png")).unwrap());

    let k1 = run(&root.path().join("c"), &["--preview", "Jade", "--type", "Heterogeneous", "--seed", "9", "--k", "1"]);
    assert_eq!(k1["k_used"], 1);
    assert_eq!(report["bssrdf_eval_count"].as_u64().unwrap(), 10 * k1["bssrdf_eval_count"].as_u64().unwrap());

    let dipole = run(&root.path().join("d"), &["--preview", "Marble", "--width", "12"]);
    assert_eq!((dipole["k_used"].as_u64(), dipole["width"].as_u64()), (Some(1), Some(12)));

    let o = gensss(&["render", "--config", p(&config), "--preview", "Jade", "--out", p(&root.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2), "ambiguous type");
    let o = gensss(&["render", "--config", p(&config), "--preview", "Jade", "--type", "Homogeneous", "--k", "5", "--out", p(&root.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = gensss(&["render", "--config", p(&config), "--preview", "Nope", "--out", p(&root.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!root.path().join("e.png").exists());
}

#[test]
fn scene_file_render() {
    let root = tempfile::tempdir().unwrap();
    let materials = common::material_dir(root.path(), 16);
    let (_, config) = common::quick_config(root.path(), &materials);
    let scene = root.path().join("scene.json");
    std::fs::write(
        &scene,
        r#"{
          "mesh": { "kind": "standin", "scale": 0.005 },
          "camera": { "position": [0, 0, 0.03], "look_at": [0, 0, 0], "vfov_deg": 40, "width": 10, "height": 8 },
          "light": { "position": [0.02, 0.02, 0.02], "direction": [-1, -1, -1], "cone_angle_deg": 40, "intensity": [0.001, 0.001, 0.001] },
          "material": "Marble",
          "projection": "Planar"
        }"#,
    )
    .unwrap();
    let out = root.path().join("s");
    let o = gensss(&["render", "--config", p(&config), "--scene", p(&scene), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = read_pfm(root.path().join("s.pfm")).unwrap();
    assert_eq!((img.width, img.height), (10, 8));

    std::fs::write(&scene, "{}").unwrap();
    let o = gensss(&["render", "--config", p(&config), "--scene", p(&scene), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

fn strip_wall_time(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].contains("wall_time")).collect();
    let mut out = String::new();
    for line in std::iter::once(header.join(",").as_str()).chain(lines) {
        let fields: Vec<&str> = line.split(',').collect();
        let kept: Vec<&str> = keep.iter().map(|&i| fields[i]).collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}

#[test]
fn bench_writes_charts_and_reruns_match() {
    let root = tempfile::tempdir().unwrap();
    let materials = root.path().join("few");
    std::fs::create_dir_all(&materials).unwrap();
    synth(&materials, "het", &[]);
    synth(&materials, "hom", &["--type", "Homogeneous", "--k", "1", "--pattern", "uniform"]);
    std::fs::write(materials.join("marble.json"), common::DIPOLE_JSON).unwrap();
    let (_, config) = common::quick_config(root.path(), &materials);

    let outs = ["o1", "o2"].map(|d| root.path().join(d));
    for out in &outs {
        let o = gensss(&["bench", "--materials", p(&materials), "--out", p(out), "--config", p(&config), "--images"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["succeeded"], 3);
        assert_eq!(std::fs::read_dir(out.join("images")).unwrap().count(), 3);
    }
    for f in ["times_by_material.csv", "storage_by_material.csv", "aggregates.csv"] {
        let a = strip_wall_time(&outs[0].join(f));
        assert_eq!(a, strip_wall_time(&outs[1].join(f)), "{f}");
        assert!(a.lines().count() >= 3);
    }

    let empty = root.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let o = gensss(&["bench", "--materials", p(&empty), "--out", p(&root.path().join("o3")), "--config", p(&config)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_line(&o)["kind"], "bench_failed");
    let header = std::fs::read_to_string(root.path().join("o3/aggregates.csv")).unwrap();
    assert_eq!(header.lines().count(), 1);
}

#[test]
fn synth_suite_writes_sixteen_archives() {
    let dir = tempfile::tempdir().unwrap();
    let o = gensss(&["synth-suite", "--out", p(dir.path()), "--n", "16"]);
    assert!(o.status.success());
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 16);
    let o = gensss(&["synth-suite", "--out", p(dir.path()), "--n", "15"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "workers = 0\n").unwrap();
    let o = gensss(&["bench", "--materials", p(dir.path()), "--out", p(&dir.path().join("o")), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("workers"));
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = gensss(&["bench", "--materials", p(dir.path()), "--out", p(&dir.path().join("o")), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let o = gensss(&["render", "--preview", "x", "--scene", "y", "--out", "z"]);
    assert_eq!(o.status.code(), Some(2));
}
