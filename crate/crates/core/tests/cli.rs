use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equisr::config::RunConfig;
use equisr::data::read_image;
use equisr::group::Image;

fn equisr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equisr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

/// A small model and corpus so each command runs in well under a second.
const SMALL: &str = r#"{
  "model": {"t": 4, "encoder": {"blocks": 1, "n": 2, "p": 3}, "inr": {"widths": [2, 8], "eps": 0.0}},
  "data": {"kind": "shapes", "count": 3, "size": 16, "scale_min": 1.0, "scale_max": 2.0},
  "train": {"steps": 3, "batch": 1, "patch": 6, "lr": 0.001},
  "eval": {"angles_deg": [90, 180], "scales": [2.0], "resolutions": [8], "seeds": 2}
}"#;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn defaults_round_trip_and_help_lists_them() {
    let out = equisr(&["defaults"]);
    assert_eq!(code(&out), 0);
    let cfg = RunConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, RunConfig::default());
    for cmd in [
        vec!["--help"],
        vec!["gen-data", "--help"],
        vec!["eval-equiv", "--help"],
        vec!["train", "--help"],
    ] {
        let out = equisr(&cmd);
        assert_eq!(code(&out), 0, "{cmd:?}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(
            text.contains("\"angles_deg\"") && text.contains("Exit codes"),
            "{cmd:?}"
        );
    }
    for cmd in ["sr", "gradcheck", "defaults"] {
        assert_eq!(code(&equisr(&[cmd, "--help"])), 0, "{cmd}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&equisr(&["frobnicate"])), 1);
    assert_eq!(code(&equisr(&["gen-data"])), 1);
    assert_eq!(code(&equisr(&["gradcheck", "--module", "bogus"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.json", r#"{"model": {"colour": 1}}"#);
    let out = equisr(&[
        "gen-data",
        "--config",
        p(&unknown),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));
    let empty = write_config(dir.path(), "e.json", r#"{"eval": {"angles_deg": []}}"#);
    let out = equisr(&[
        "eval-equiv",
        "--config",
        p(&empty),
        "--out",
        p(&dir.path().join("r.csv")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gen_data_writes_images_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(
            code(&equisr(&["gen-data", "--config", p(&cfg), "--out", p(out)])),
            0
        );
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "img_0000.ppm",
            "img_0001.ppm",
            "img_0002.ppm",
            "manifest.csv"
        ]
    );
    for n in &names {
        assert_eq!(
            std::fs::read(a.join(n)).unwrap(),
            std::fs::read(b.join(n)).unwrap(),
            "{n}"
        );
    }
    let img = read_image(a.join("img_0001.ppm")).unwrap();
    assert_eq!((img.h, img.w, img.c), (16, 16, 3));
    assert!(std::fs::read(a.join("img_0001.ppm"))
        .unwrap()
        .starts_with(b"P6"));
    let manifest = std::fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("# equisr "));
    assert_eq!(manifest.lines().count(), 2 + 3);
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_config(dir.path(), "plain-file", "x");
    let out = equisr(&["gen-data", "--out", p(&file.join("sub"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn eval_equiv_contrasts_variants_and_writes_error_maps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let csv = dir.path().join("eq.csv");
    let maps = dir.path().join("maps");
    let out = equisr(&[
        "eval-equiv",
        "--config",
        p(&cfg),
        "--out",
        p(&csv),
        "--error-maps",
        p(&maps),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let nmse = csv_column(&csv, "nmse_mean");
    assert_eq!(nmse.len(), 2);
    assert!(nmse.iter().all(|&v| v <= 1e-6), "{nmse:?}");
    let scales = std::fs::read_to_string(maps.join("scales.csv")).unwrap();
    assert_eq!(scales.lines().count(), 2 + 4);
    let pgms = std::fs::read_dir(&maps).unwrap().filter(|e| {
        e.as_ref()
            .unwrap()
            .path()
            .extension()
            .is_some_and(|x| x == "pgm")
    });
    assert_eq!(pgms.count(), 4);

    let plain = SMALL.replace(r#""t": 4,"#, r#""variant": "plain", "t": 4,"#);
    let cfg = write_config(dir.path(), "plain.json", &plain);
    let csv = dir.path().join("plain.csv");
    assert_eq!(
        code(&equisr(&[
            "eval-equiv",
            "--config",
            p(&cfg),
            "--out",
            p(&csv)
        ])),
        0
    );
    let nmse = csv_column(&csv, "nmse_mean");
    assert!(nmse.iter().all(|&v| v >= 0.3), "{nmse:?}");
}

#[test]
fn trained_checkpoint_stays_exact_and_serves_sr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let run = dir.path().join("run");
    let out = equisr(&["train", "--config", p(&cfg), "--out", p(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["model.json", "model.bin", "loss.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(csv_column(&run.join("loss.csv"), "loss").len(), 3);
    let ckpt = run.join("model.json");
    let csv = dir.path().join("r.csv");
    let out = equisr(&[
        "eval-equiv",
        "--config",
        p(&cfg),
        "--ckpt",
        p(&ckpt),
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(csv_column(&csv, "nmse_mean").iter().all(|&v| v <= 1e-6));

    let input = dir.path().join("in.ppm");
    let img = Image::from_fn(20, 20, 3, |i, j, c| {
        ((i * 13 + j * 7 + c * 5) % 256) as f64 / 255.0
    });
    equisr::data::write_image(&input, &img).unwrap();
    let sr = dir.path().join("out.ppm");
    let out = equisr(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--in",
        p(&input),
        "--scale",
        "2.5",
        "--out",
        p(&sr),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let y = read_image(&sr).unwrap();
    assert_eq!((y.h, y.w, y.c), (50, 50, 3));
    let out = equisr(&[
        "sr",
        "--ckpt",
        p(&ckpt),
        "--in",
        p(&input),
        "--scale",
        "0.5",
        "--out",
        p(&sr),
    ]);
    assert_eq!(code(&out), 1);

    let text = std::fs::read_to_string(&ckpt).unwrap();
    std::fs::write(
        &ckpt,
        text.replacen("\"dtype\": \"f64-le\"", "\"dtype\": \"f16\"", 1),
    )
    .unwrap();
    let out = equisr(&[
        "eval-equiv",
        "--config",
        p(&cfg),
        "--ckpt",
        p(&ckpt),
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("params[0].dtype"), "{}", stderr(&out));
    let out = equisr(&[
        "sr",
        "--ckpt",
        p(&dir.path().join("missing.json")),
        "--in",
        p(&input),
        "--scale",
        "2",
        "--out",
        p(&sr),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gradcheck_module_passes() {
    let out = equisr(&["gradcheck", "--module", "filter"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| !l.starts_with("FAIL")));
}
