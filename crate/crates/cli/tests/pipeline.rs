use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn voxrisk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxrisk"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = voxrisk(args, cwd);
    assert!(
        out.status.success(),
        "voxrisk {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_segment_extract_evaluate_ablation() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        &[
            "synth",
            "--subjects",
            "6",
            "--f0-shift",
            "40",
            "--seed",
            "2",
            "--out",
            "c",
        ],
        tmp.path(),
    );
    let c = tmp.path().join("c");
    for f in [
        "run.toml",
        "metadata.csv",
        "synth_spec.json",
        "audio/S01/vowel_a.wav",
        "manifests/S06/text.json",
    ] {
        assert!(c.join(f).exists(), "{f}");
    }

    let table1 = ok(&["segment", "--config", "run.toml"], &c);
    assert!(table1.starts_with("Sample Type"), "{table1}");
    let run = c.join("run");
    assert_eq!(fs::read_to_string(run.join("schema_version")).unwrap(), "1\n");
    let csv = fs::read_to_string(run.join("stats/table1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(ok(&["stats", "--config", "run.toml"], &c), table1);

    let msg = ok(&["extract", "--config", "run.toml"], &c);
    // 5 vowels + 2 text + 2 picture utterances per subject
    assert_eq!(msg.trim(), "extracted features for 54 segments");
    assert!(run.join("features/S03/S03_vowel_e_00/compact_functionals.csv").exists());

    let out = ok(&["evaluate", "--config", "run.toml", "--scope", "vowels,all"], &c);
    assert_eq!(out.lines().count(), 2, "{out}");
    let reports: Vec<_> = fs::read_dir(run.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(reports.iter().any(|r| r == "speech_table.csv"), "{reports:?}");
    assert_eq!(reports.iter().filter(|r| r.ends_with(".runtime.txt")).count(), 2);

    let table2 = ok(&["ablation", "--config", "run.toml"], &c);
    assert_eq!(table2.lines().count(), 12, "{table2}");
    assert!(table2.lines().nth(2).unwrap().starts_with("Demographics (F1)"));
    let csv = fs::read_to_string(run.join("reports/table2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.lines().all(|l| l.split(',').count() == 6));
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    fs::write(dir.join("bad.toml"), "speling = 1\n").unwrap();
    assert_eq!(voxrisk(&["stats", "--config", "bad.toml"], dir).status.code(), Some(2));

    // audio_dir not configured
    fs::write(dir.join("empty.toml"), "").unwrap();
    assert_eq!(
        voxrisk(&["segment", "--config", "empty.toml"], dir).status.code(),
        Some(2)
    );

    assert_eq!(
        voxrisk(&["synth", "--subjects", "1", "--out", "s"], dir).status.code(),
        Some(2),
        "a one-subject cohort is an invalid spec"
    );

    fs::create_dir_all(dir.join("audio/S1")).unwrap();
    fs::write(dir.join("audio/S1/vowel_a.wav"), b"not a wav file").unwrap();
    fs::write(dir.join("meta.csv"), "subject_id\n").unwrap();
    fs::write(
        dir.join("data.toml"),
        "[paths]\naudio_dir = \"audio\"\nmetadata = \"meta.csv\"\nout_dir = \"out\"\n",
    )
    .unwrap();
    assert_eq!(
        voxrisk(&["evaluate", "--config", "data.toml"], dir).status.code(),
        Some(3)
    );
}
