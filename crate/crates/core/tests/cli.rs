use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use irt_rank::model::{load_sequence, save_sequence, AxisKind, Frame, Mask, Sequence};

fn irt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irt-rank"))
        .args(args)
        .env_remove("IRT_RANK_WORKERS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"{
  "phantom": {"width": 32, "height": 32, "duration": 2.0, "frame_rate": 30.0,
              "defects": [{"rect": {"x0": 10, "y0": 10, "w": 12, "h": 12}, "depth": 0.000135}]},
  "rea_tve": {"nos_set": 40, "stride": 3}
}"#;

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.json");
    fs::write(&path, SMALL).unwrap();
    path
}

#[test]
fn simulate_is_reproducible_and_clean_preset_has_no_defects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for out in ["a", "b"] {
        let o = irt(&["simulate", "--config", p(&cfg), "--seed", "5", "--out", p(&dir.path().join(out))]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["stack/data.raw", "stack/header.json", "defect.pgm", "reference.pgm", "defect_contrast.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let eff = fs::read_to_string(dir.path().join("a/effective_config.json")).unwrap();
    assert!(eff.contains("\"seed\": 5") && eff.contains("\"nos_set\": 40"));

    let clean = dir.path().join("clean");
    let o = irt(&["simulate", "--preset", "clean", "--out", p(&clean)]);
    assert!(o.status.success());
    assert_eq!(Mask::read_pgm(&clean.join("defect.pgm")).unwrap().count(), 0);
}

#[test]
fn rank_reruns_bit_identically_from_effective_config_and_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let o = irt(&["rank", "--config", p(&cfg), "--workers", "1", "--keep-frames", "1:40,45:59", "--out", p(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = dir.path().join("b");
    let o = irt(&["rank", "--config", p(&a.join("effective_config.json")), "--workers", "4", "--out", p(&b)]);
    assert!(o.status.success());
    for f in ["hi.csv", "tve.csv", "rea.csv", "snr.csv", "tc.csv", "report.json", "report.txt", "overlay.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("hi.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 55);
    assert!(rows[0].starts_with("1,") && rows[40].starts_with("45,"));
}

#[test]
fn constant_stack_reports_zero_tve_without_masks() {
    let dir = tempfile::tempdir().unwrap();
    let frames = (0..30).map(|_| Frame::constant(20, 20, 300.0).unwrap()).collect();
    let seq = Sequence::new(frames, AxisKind::Time, (1..=30).map(|i| i as f64 / 30.0).collect()).unwrap();
    let stack = dir.path().join("stack");
    save_sequence(&seq, &stack).unwrap();
    let out = dir.path().join("out");
    let o = irt(&["rank", p(&stack), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("no masks given"));
    assert!(!out.join("snr.csv").exists());
    let tve = fs::read_to_string(out.join("tve.csv")).unwrap();
    assert!(tve.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")));
}

#[test]
fn ppt_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let sim = dir.path().join("sim");
    assert!(irt(&["simulate", "--config", p(&cfg), "--out", p(&sim)]).status.success());
    let ppt = dir.path().join("ppt");
    let o = irt(&["ppt", p(&sim.join("stack")), "--out", p(&ppt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let amp = load_sequence(&ppt.join("amplitude")).unwrap();
    assert_eq!(amp.axis_kind(), AxisKind::Frequency);
    assert_eq!(amp.len(), 31);

    // a frequency stack is not a valid PPT input
    let o = irt(&["ppt", p(&ppt.join("amplitude")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));

    let rank = dir.path().join("rank");
    let o = irt(&["rank", p(&sim.join("stack")), "--config", p(&cfg), "--roi", "0,0,32,32", "--roi", "4,4,24,24", "--out", p(&rank)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rank.join("roi_1/report.json").exists() && rank.join("roi_2/report.json").exists());
    let rep = dir.path().join("rep");
    let o = irt(&["report", p(&rank), "--out", p(&rep)]);
    assert!(o.status.success());
    assert!(rep.join("report_roi_1.svg").exists() && rep.join("report_roi_2.csv").exists());

    // two curves give one overlay
    let two = dir.path().join("two");
    fs::create_dir_all(&two).unwrap();
    for f in ["hi.csv", "tve.csv"] {
        fs::copy(rank.join("roi_1").join(f), two.join(f)).unwrap();
    }
    let o = irt(&["report", p(&two)]);
    assert!(o.status.success());
    let svg = fs::read_to_string(two.join("report.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"rea_tve\": {\"phii\": 3}\n}").unwrap();
    let o = irt(&["rank", "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(irt(&["rank", "--preset", "single", "--phi", "1"]).status.code(), Some(2));
    assert_eq!(irt(&["rank", "--roi", "1,2,3"]).status.code(), Some(2));
    assert_eq!(irt(&["rank", "--out", p(&dir.path().join("o"))]).status.code(), Some(2));
    assert_eq!(irt(&["rank", p(&dir.path().join("missing"))]).status.code(), Some(3));
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(irt(&["report", p(&empty)]).status.code(), Some(3));
}
