use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use evkit_cli::commands::{
    cmd_augment, cmd_convert, cmd_evaluate, cmd_plan, cmd_stats, AugmentMode, AUGMENT_LOG_FILE,
};
use evkit_cli::index::{parse_index, ANNOTATIONS_FILE, INDEX_FILE};
use evkit_cli::{Overrides, PipelineConfig, Preset};
use evkit_core::codec::{encode_evs, write_annotations};
use evkit_core::event::validate_stream;
use evkit_core::frame::read_evf_header;
use evkit_core::{AnnotatedBox, Event, SensorGeometry};
use sha2::{Digest, Sha256};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn small_config() -> PipelineConfig {
    PipelineConfig::resolve(Some("[representation]\nn_bins = 2\n"), Overrides::default()).unwrap()
}

fn write_evs(path: &Path, width: u32, height: u32, events: Vec<Event>) {
    let stream = validate_stream(events, SensorGeometry::new(width, height).unwrap()).unwrap();
    fs::write(path, encode_evs(&stream)).unwrap();
}

fn dir_digest(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let hash = Sha256::digest(fs::read(e.path()).unwrap());
            let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
            (e.file_name().to_string_lossy().into_owned(), hex)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn sixty_seconds_make_1200_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = tmp.path().join("long.evs");
    let events = (0..6000u64).map(|i| Event::new(i * 10_000 + 7, (i % 8) as u16, (i % 5) as u16, (i % 2) as u8)).collect();
    write_evs(&rec, 8, 5, events);
    let out = tmp.path().join("frames");
    let summary = cmd_convert(&rec, None, &out, &small_config()).unwrap();
    assert_eq!(summary.frames, 1200);
    assert_eq!(summary.events, 6000);
    let index = parse_index(&fs::read_to_string(out.join(INDEX_FILE)).unwrap()).unwrap();
    assert_eq!(index.len(), 1200);
    assert!(index.iter().all(|e| e.events == 5 && e.t1 - e.t0 == 50_000));
    assert!(out.join("frame_001199.evf").exists());
    assert!(summary.to_string().contains("events_per_s="));
}

#[test]
fn gen4_preset_writes_384_by_640_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = tmp.path().join("g4.evs");
    write_evs(&rec, 1280, 720, vec![Event::new(10, 1279, 719, 1), Event::new(20, 0, 0, 0)]);
    let out = tmp.path().join("frames");
    let cfg = PipelineConfig::preset(Preset::Gen4Like);
    cmd_convert(&rec, None, &out, &cfg).unwrap();
    let header = read_evf_header(&fs::read(out.join("frame_000000.evf")).unwrap()).unwrap();
    assert_eq!((header.channels, header.height, header.width), (20, 384, 640));
}

#[test]
fn convert_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for threads in [1, 3] {
        let out = tmp.path().join(format!("t{threads}"));
        let mut cfg = PipelineConfig::preset(Preset::Gen1Like);
        cfg.threads = Some(threads);
        cmd_convert(&fixture("recording.dat"), Some(&fixture("ground_truth.txt")), &out, &cfg).unwrap();
        digests.push(dir_digest(&out));
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn annotations_attach_to_the_preceding_window() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = tmp.path().join("r.evs");
    write_evs(&rec, 8, 8, vec![Event::new(0, 0, 0, 0), Event::new(120_000, 1, 1, 1)]);
    let ann = tmp.path().join("a.txt");
    let boxes = [0, 1, 50_000, 50_001, 150_000, 150_001].map(|t| AnnotatedBox::new(t, 1.0, 1.0, 2.0, 2.0, 0));
    let mut text = Vec::new();
    write_annotations(&mut text, &boxes).unwrap();
    fs::write(&ann, text).unwrap();
    let out = tmp.path().join("o");
    let s = cmd_convert(&rec, Some(&ann), &out, &small_config()).unwrap();
    assert_eq!((s.annotations_kept, s.annotations_dropped), (4, 2));
    let index = parse_index(&fs::read_to_string(out.join(INDEX_FILE)).unwrap()).unwrap();
    let ids: Vec<Vec<usize>> = index.iter().map(|e| e.annotations.clone()).collect();
    assert_eq!(ids, vec![vec![0, 1], vec![2], vec![3]]);
    assert!(index[2].partial && !index[0].partial);
}

#[test]
fn stats_counts_match_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.evs");
    write_evs(&empty, 4, 4, Vec::new());
    let s = cmd_stats(&empty, &small_config()).unwrap();
    assert_eq!((s.events, s.positive, s.negative, s.max_pixel_count, s.duration_us()), (0, 0, 0, 0, 0));

    let rec = tmp.path().join("r.evs");
    let events: Vec<Event> = (0..1000u64).map(|i| Event::new(i * 3, (i % 4) as u16, 0, (i % 3 == 0) as u8)).collect();
    write_evs(&rec, 4, 4, events);
    let s = cmd_stats(&rec, &small_config()).unwrap();
    assert_eq!(s.events, 1000);
    assert_eq!(s.positive, 334);
    assert_eq!(s.positive + s.negative, s.events);
    assert_eq!(s.max_pixel_count, 250);
    assert_eq!(s.duration_us(), 2997);
}

#[test]
fn identity_augment_copies_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let conv = tmp.path().join("conv");
    let cfg = PipelineConfig::preset(Preset::Gen1Like);
    cmd_convert(&fixture("recording.dat"), Some(&fixture("ground_truth.txt")), &conv, &cfg).unwrap();
    let mut identity = cfg.clone();
    identity.augment.set_all_probabilities(0.0);
    for mode in [AugmentMode::Frame, AugmentMode::Video] {
        let out = tmp.path().join(format!("{mode:?}"));
        cmd_augment(&conv, &out, mode, &identity).unwrap();
        for (name, hash) in dir_digest(&conv) {
            let copied = dir_digest(&out).into_iter().find(|(n, _)| *n == name).unwrap();
            assert_eq!(copied.1, hash, "{name}");
        }
    }
}

#[test]
fn video_mode_logs_one_geometric_record_per_clip() {
    let tmp = tempfile::tempdir().unwrap();
    let conv = tmp.path().join("conv");
    let mut cfg = PipelineConfig::preset(Preset::Gen1Like);
    cmd_convert(&fixture("recording.dat"), Some(&fixture("ground_truth.txt")), &conv, &cfg).unwrap();
    cfg.sampler.clip_len = 2;
    cfg.augment.set_all_probabilities(1.0);
    let out = tmp.path().join("aug");
    let summary = cmd_augment(&conv, &out, AugmentMode::Video, &cfg).unwrap();
    assert_eq!((summary.frames, summary.clips), (5, 3));
    let log = fs::read_to_string(out.join(AUGMENT_LOG_FILE)).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("clip=")).count(), 3);
    assert_eq!(log.lines().filter(|l| l.starts_with("frame=")).count(), 5);
    assert!(log.lines().next().unwrap().starts_with("clip=0 first=0 last=1 hflip=1 rotate="));

    let again = tmp.path().join("aug2");
    cmd_augment(&conv, &again, AugmentMode::Video, &cfg).unwrap();
    assert_eq!(dir_digest(&out), dir_digest(&again));
    let index = parse_index(&fs::read_to_string(out.join(INDEX_FILE)).unwrap()).unwrap();
    let n_ids: usize = index.iter().map(|e| e.annotations.len()).sum();
    let n_boxes = fs::read_to_string(out.join(ANNOTATIONS_FILE)).unwrap().lines().count();
    assert_eq!(n_ids, n_boxes);
}

#[test]
fn evaluate_perfect_and_shifted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let gt = fixture("ground_truth.txt");
    let r = cmd_evaluate(&gt, &gt, &cfg).unwrap();
    assert_eq!((r.map, r.map50, r.map75), (1.0, 1.0, 1.0));

    let shifted: String = fs::read_to_string(&gt)
        .unwrap()
        .lines()
        .map(|l| l.replacen(" x=", " x=1000", 1) + "\n")
        .collect();
    let path = tmp.path().join("shifted.txt");
    fs::write(&path, shifted).unwrap();
    assert_eq!(cmd_evaluate(&path, &gt, &cfg).unwrap().map, 0.0);

    let r = cmd_evaluate(&fixture("predictions.txt"), &gt, &cfg).unwrap();
    assert!(r.map50 >= r.map && r.map > 0.0);
}

#[test]
fn plan_is_seeded_and_reshuffles_per_epoch() {
    let cfg = PipelineConfig::preset(Preset::Gen1Like);
    let a = cmd_plan(&fixture("sequences.txt"), 0, &cfg).unwrap();
    assert_eq!(a, cmd_plan(&fixture("sequences.txt"), 0, &cfg).unwrap());
    assert_ne!(a, cmd_plan(&fixture("sequences.txt"), 1, &cfg).unwrap());
    assert!(a.lines().all(|l| l.starts_with("batch=")));
}

fn evkit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_evkit")).args(args).output().unwrap()
}

#[test]
fn binary_reports_single_line_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let cases: [(&[&str], &str); 4] = [
        (&["plan", empty.to_str().unwrap()], "EMPTY_DATASET"),
        (&["stats", "/definitely/missing.dat"], "IO_ERROR"),
        (&["--preset", "gen9", "stats", "x"], "USAGE_ERROR"),
        (&["evaluate", "--predictions", empty.to_str().unwrap(), "--ground-truth", empty.to_str().unwrap()], "NO_GROUND_TRUTH"),
    ];
    for (args, code) in cases {
        let out = evkit(args);
        assert!(!out.status.success());
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("error code={code} msg=\"")), "{err}");
    }

    let bad = tmp.path().join("bad.dat");
    fs::write(&bad, b"% Width 10\n% Height 10\n\x00\x08\x01\x02\x03").unwrap();
    let err = String::from_utf8(evkit(&["stats", bad.to_str().unwrap()]).stderr).unwrap();
    assert!(err.starts_with("error code=TRUNCATED_FILE") && err.contains("bad.dat"), "{err}");
}

#[test]
fn binary_reads_config_flags_and_env() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[eval]\niou_thresholds = [0.5]\n").unwrap();
    let gt = fixture("ground_truth.txt");
    let preds = fixture("predictions.txt");
    let out = evkit(&[
        "--config",
        cfg.to_str().unwrap(),
        "evaluate",
        "--predictions",
        preds.to_str().unwrap(),
        "--ground-truth",
        gt.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0].replace("mAP=", ""), lines[1].replace("mAP50=", ""));

    let conv = tmp.path().join("conv");
    let out = Command::new(env!("CARGO_BIN_EXE_evkit"))
        .env("EVKIT_THREADS", "2")
        .args(["--preset", "gen1-like", "convert", fixture("recording.dat").to_str().unwrap(), "-o", conv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("events=4520 "));

    let bad = Command::new(env!("CARGO_BIN_EXE_evkit"))
        .env("EVKIT_THREADS", "0")
        .args(["stats", fixture("recording.dat").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(String::from_utf8(bad.stderr).unwrap().starts_with("error code=CONFIG_ERROR"));
}
