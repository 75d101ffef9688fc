use std::path::Path;
use std::process::{Command, Output};

use liplab::netpbm::write_mask;
use liplab_core::BinaryMask;

fn liplab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liplab"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gradcheck_toy_passes_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = liplab(
        &["gradcheck", "--spec", "toy", "--out", "report.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = stderr(&o);
    assert!(
        log.contains("enc1.w") && log.contains("out.b") && log.contains("passed"),
        "{log}"
    );
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.starts_with("param,max_rel_error"));
    assert!(report.lines().count() > 40);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = liplab(&["segment-everything"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    let o = liplab(
        &["maskgen", "--landmarks", "x.csv", "--out", "m.pgm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = liplab(&["gradcheck", "--spec", "full"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = liplab(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn eval_dimension_mismatch_exits_2_naming_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    let a = BinaryMask::from_fn(8, 8, |r, c| r > 2 && c > 2);
    write_mask(&gt.join("a.pgm"), &a).unwrap();
    write_mask(&pred.join("a.pgm"), &a).unwrap();
    write_mask(&gt.join("b.pgm"), &BinaryMask::new(8, 8)).unwrap();
    write_mask(&pred.join("b.pgm"), &BinaryMask::new(8, 9)).unwrap();
    let o = liplab(
        &[
            "eval",
            "--gt-dir",
            "gt",
            "--pred-dir",
            "pred",
            "--out",
            "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let log = stderr(&o);
    assert!(
        log.contains("gt/b.pgm") && log.contains("pred/b.pgm"),
        "{log}"
    );
    assert!(!dir.path().join("r.csv").exists());

    std::fs::remove_file(pred.join("b.pgm")).unwrap();
    let o = liplab(
        &[
            "eval",
            "--gt-dir",
            "gt",
            "--pred-dir",
            "pred",
            "--out",
            "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(
        csv.starts_with("image,dice,hd,iou,pa,pa_c,voe\na.pgm,1"),
        "{csv}"
    );
}

#[test]
fn bad_input_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lm.csv"), "ch_l,1,2\nch_l,3,4\n").unwrap();
    let o = liplab(
        &[
            "maskgen",
            "--landmarks",
            "lm.csv",
            "--size",
            "8x8",
            "--out",
            "m.pgm",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    std::fs::write(dir.path().join("x.ppm"), b"P6 2 2 65535\n").unwrap();
    let o = liplab(
        &["texture", "--input", "x.ppm", "--out", "t.bin"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported maxval"));
    std::fs::write(dir.path().join("c.txt"), "epochs = 3\nlearning_rate = 1\n").unwrap();
    let o = liplab(&["train", "--config", "c.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key learning_rate"));
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = liplab(
        &["synth", "--n", "2", "--out-dir", "data", "--size", "32"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    std::fs::write(
        dir.path().join("c.txt"),
        "input_size = 32\nwidths = 2 3 4 5\nepochs = 20\nlr = 1e30\n",
    )
    .unwrap();
    let o = liplab(&["train", "--config", "c.txt"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn commands_are_idempotent_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config =
        "input_size = 32\nwidths = 2 4 6 8\nepochs = 3\nlr = 0.01\nseed = 5\ndata_dir = data\n";
    std::fs::write(d.join("c.txt"), config).unwrap();
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = format!("out_{run}");
        let steps: Vec<Vec<String>> = vec![
            vec![
                "synth",
                "--n",
                "3",
                "--out-dir",
                "data",
                "--size",
                "32",
                "--seed",
                "9",
                "--augment",
                "hflip,bright1.1",
            ],
            vec![
                "texture",
                "--input",
                "data/sample_0001.ppm",
                "--out",
                "OUT/t.bin",
                "--lbp-pgm",
                "OUT/lbp.pgm",
                "--glbp-pgm",
                "OUT/glbp.pgm",
            ],
            vec![
                "maskgen",
                "--landmarks",
                "data/sample_0001.csv",
                "--image",
                "data/sample_0001.ppm",
                "--out",
                "OUT/m.pgm",
                "--contour",
                "OUT/c.csv",
            ],
            vec!["train", "--config", "c.txt", "--out-dir", "OUT/run"],
            vec![
                "infer",
                "--model",
                "OUT/run",
                "--input",
                "data/sample_0002.ppm",
                "--out",
                "OUT/pred/sample_0002.pgm",
                "--prob",
                "OUT/p.bin",
            ],
        ]
        .into_iter()
        .map(|s| s.into_iter().map(|a| a.replace("OUT", &out)).collect())
        .collect();
        std::fs::create_dir_all(d.join(&out).join("pred")).unwrap();
        for step in &steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            let o = liplab(&args, d);
            assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        }
        let resolved = std::fs::read_to_string(d.join(&out).join("run/config.txt")).unwrap();
        assert!(
            resolved.contains("seed = 5") && resolved.contains("stage2_epochs = 1"),
            "{resolved}"
        );
        let mut files = tree(&d.join(&out));
        for f in &mut files {
            f.1 = String::from_utf8_lossy(&f.1)
                .replace(&out, "OUT")
                .into_bytes();
        }
        snapshots.push((files, tree(&d.join("data"))));
    }
    assert_eq!(snapshots[0], snapshots[1]);
    assert!(snapshots[0]
        .0
        .iter()
        .any(|(n, _)| n.ends_with("stage2/out.b.tensor")));
}
