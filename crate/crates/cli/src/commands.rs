use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use voxrisk::audio::{load_canonical, load_wav, write_wav, SampleFormat};
use voxrisk::cohort::load_cohort_with;
use voxrisk::evaluation::{
    ablation_ladder, loso_run, permutation_band, ExperimentConfig, ExperimentReport, FeatureSource, SpeechScope,
    SpeechTable, Table2,
};
use voxrisk::features::io::write_feature_csv;
use voxrisk::features::{extract_acoustic, FrameConfig, MelSpecConfig};
use voxrisk::segment::{
    energy_vad, index_from_csv, index_to_csv, ingest_manifest, segment_stats, slice, write_manifest, SegmentKind,
    SegmentManifest, SegmentRecord, StatsTable, VadConfig, Vowel,
};
use voxrisk::synth::{synth_cohort, SynthSpec};

use crate::{CliError, RunConfig};

/// Version of the output directory layout.
pub const SCHEMA_VERSION: &str = "1";

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Creates `out_dir` and its `schema_version` file, refusing a directory
/// written under another layout version.
fn prepare_out(out: &Path) -> Result<(), CliError> {
    let marker = out.join("schema_version");
    if marker.exists() {
        let found = read_file(&marker)?;
        if found.trim() != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{} uses layout version {}, expected {SCHEMA_VERSION}",
                out.display(),
                found.trim()
            )));
        }
        return Ok(());
    }
    write_file(&marker, format!("{SCHEMA_VERSION}\n"))
}

fn sorted_entries(dir: &Path, want_dir: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_, _>>()?;
    v.retain(|p| p.is_dir() == want_dir);
    v.sort();
    Ok(v)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Speech activity and vowel implied by a recording name, for recordings
/// segmented without a manifest.
fn kind_from_name(recording: &str) -> Option<(SegmentKind, Option<Vowel>)> {
    if let Some(v) = recording.strip_prefix("vowel_") {
        return v.parse().ok().map(|v| (SegmentKind::Vowel, Some(v)));
    }
    if recording.starts_with("text") || recording.starts_with("neutral") {
        return Some((SegmentKind::NeutralText, None));
    }
    if recording.starts_with("picture") {
        return Some((SegmentKind::PictureDescription, None));
    }
    None
}

fn segment_recording(
    subject: &str,
    wav: &Path,
    manifest_dir: Option<&Path>,
    out: &Path,
) -> Result<Vec<SegmentRecord>, CliError> {
    let recording = file_stem(wav);
    let buffer = load_canonical(wav)?;
    let manifest_path = manifest_dir.map(|d| d.join(subject).join(format!("{recording}.json")));
    let manifest = match manifest_path.filter(|p| p.is_file()) {
        Some(p) => {
            let m = ingest_manifest(&p)?;
            if m.subject_id != subject {
                return Err(CliError::Data(format!(
                    "{}: subject_id `{}` does not match directory `{subject}`",
                    p.display(),
                    m.subject_id
                )));
            }
            m.check_within(buffer.duration_s())?;
            SegmentManifest {
                duration_s: Some(buffer.duration_s()),
                ..m
            }
        }
        None => {
            let (kind, vowel) = kind_from_name(&recording).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: no manifest and the name does not name a speech activity",
                    wav.display()
                ))
            })?;
            let spans = energy_vad(&buffer, &VadConfig::default(), kind, vowel)?;
            if spans.is_empty() {
                log::warn!("{}: no speech found", wav.display());
            }
            SegmentManifest {
                recording_id: recording.clone(),
                subject_id: subject.to_string(),
                duration_s: Some(buffer.duration_s()),
                spans,
            }
        }
    };
    let mdir = out.join("manifests").join(subject);
    fs::create_dir_all(&mdir).map_err(|e| CliError::io(&mdir, e))?;
    write_manifest(mdir.join(format!("{recording}.json")), &manifest)?;
    let sdir = out.join("segments").join(subject);
    fs::create_dir_all(&sdir).map_err(|e| CliError::io(&sdir, e))?;
    let mut records = Vec::new();
    for (k, span) in manifest.spans.iter().enumerate() {
        let segment_id = format!("{subject}_{recording}_{k:02}");
        let seg = slice(&buffer, span)?;
        write_wav(sdir.join(format!("{segment_id}.wav")), &seg, SampleFormat::Float32)?;
        records.push(SegmentRecord {
            subject_id: subject.to_string(),
            recording_id: recording.clone(),
            segment_id,
            span: span.clone(),
        });
    }
    Ok(records)
}

/// Splits every recording into utterance segments.
///
/// Recordings with a manifest under `paths.manifest_dir` use it; others go
/// through the energy detector, with the speech activity taken from the
/// file name (`vowel_<v>`, `text*`, `picture*`). Failures are collected per
/// file; the remaining files are still processed.
pub fn cmd_segment(cfg: &RunConfig) -> Result<StatsTable, CliError> {
    let audio = cfg.require("audio_dir", &cfg.paths.audio_dir)?;
    let manifests = match &cfg.paths.manifest_dir {
        Some(_) => Some(cfg.require("manifest_dir", &cfg.paths.manifest_dir)?),
        None => None,
    };
    let out = &cfg.paths.out_dir;
    prepare_out(out)?;
    let mut jobs = Vec::new();
    for dir in sorted_entries(audio, true)? {
        let subject = file_stem(&dir);
        for wav in sorted_entries(&dir, false)? {
            if wav.extension().and_then(|e| e.to_str()) == Some("wav") {
                jobs.push((subject.clone(), wav));
            }
        }
    }
    let results: Vec<(PathBuf, Result<Vec<SegmentRecord>, CliError>)> = jobs
        .par_iter()
        .map(|(s, wav)| (wav.clone(), segment_recording(s, wav, manifests, out)))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (wav, r) in results {
        match r {
            Ok(v) => records.extend(v),
            Err(e) => {
                log::error!("{}: {e}", wav.display());
                failures.push(format!("{}: {e}", wav.display()));
            }
        }
    }
    records.sort_by(|a, b| (&a.subject_id, &a.segment_id).cmp(&(&b.subject_id, &b.segment_id)));
    write_file(&out.join("segments").join("index.csv"), index_to_csv(&records))?;
    let spans: Vec<_> = records.iter().map(|r| r.span.clone()).collect();
    let table = segment_stats(&spans, true);
    write_stats(out, &table)?;
    if !failures.is_empty() {
        return Err(CliError::Data(format!(
            "{} recording(s) failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(table)
}

fn write_stats(out: &Path, table: &StatsTable) -> Result<(), CliError> {
    write_file(&out.join("stats").join("table1.csv"), table.to_csv())?;
    write_file(&out.join("stats").join("table1.txt"), table.to_text())
}

/// Recomputes the duration table from `segments/index.csv`.
pub fn cmd_stats(cfg: &RunConfig) -> Result<StatsTable, CliError> {
    let out = &cfg.paths.out_dir;
    let records = index_from_csv(&read_file(&out.join("segments").join("index.csv"))?)?;
    let spans: Vec<_> = records.into_iter().map(|r| r.span).collect();
    let table = segment_stats(&spans, true);
    write_stats(out, &table)?;
    Ok(table)
}

/// Writes one feature file per segment and configured source.
pub fn cmd_extract(cfg: &RunConfig) -> Result<usize, CliError> {
    let out = &cfg.paths.out_dir;
    prepare_out(out)?;
    if cfg.extract_sources.is_empty() {
        return Err(CliError::Config("`extract_sources` is empty".into()));
    }
    let records = index_from_csv(&read_file(&out.join("segments").join("index.csv"))?)?;
    let frames = FrameConfig::default();
    let mel = MelSpecConfig::default();
    let features = out.join("features");
    let results: Vec<Result<(), CliError>> = records
        .par_iter()
        .map(|r| {
            let wav = out
                .join("segments")
                .join(&r.subject_id)
                .join(format!("{}.wav", r.segment_id));
            let buffer = load_wav(&wav)?;
            let dir = features.join(&r.subject_id).join(&r.segment_id);
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            for &source in &cfg.extract_sources {
                let v = extract_acoustic(&buffer, source, &frames, &mel)
                    .map_err(|e| CliError::Data(format!("{}: {source}: {e}", r.segment_id)))?;
                write_feature_csv(dir.join(format!("{source}.csv")), &v)?;
            }
            Ok(())
        })
        .collect();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in records.into_iter().zip(results) {
        match res {
            Ok(()) => done.push(r),
            Err(e) => {
                log::error!("{}: {e}", r.segment_id);
                failures.push(format!("{}: {e}", r.segment_id));
            }
        }
    }
    write_file(&features.join("index.csv"), index_to_csv(&done))?;
    let failed_path = features.join("failed.txt");
    if failures.is_empty() {
        if failed_path.exists() {
            fs::remove_file(&failed_path).map_err(|e| CliError::io(&failed_path, e))?;
        }
        Ok(done.len())
    } else {
        write_file(&failed_path, failures.join("\n") + "\n")?;
        Err(CliError::Data(format!(
            "{} segment(s) failed; see {}",
            failures.len(),
            failed_path.display()
        )))
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<voxrisk::cohort::CohortDataset, CliError> {
    let metadata = cfg.require("metadata", &cfg.paths.metadata)?;
    let embeddings = match &cfg.paths.embeddings_dir {
        Some(_) => Some(cfg.require("embeddings_dir", &cfg.paths.embeddings_dir)?),
        None => None,
    };
    Ok(load_cohort_with(
        metadata,
        &cfg.paths.out_dir.join("features"),
        embeddings,
    )?)
}

fn write_report(reports: &Path, report: &ExperimentReport) -> Result<PathBuf, CliError> {
    let stem = report.config.file_stem();
    let path = reports.join(format!("{stem}.json"));
    write_file(&path, report.to_json())?;
    write_file(
        &reports.join(format!("{stem}.runtime.txt")),
        format!("{:.3}\n", report.runtime_s),
    )?;
    Ok(path)
}

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub reports: Vec<ExperimentReport>,
    pub paths: Vec<PathBuf>,
}

/// Runs LOSO for every requested source and scope combination. With more
/// than one combination, a source-by-scope summary table is written too.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    sources: &[FeatureSource],
    scopes: &[SpeechScope],
) -> Result<EvaluateOutcome, CliError> {
    let ds = load_dataset(cfg)?;
    let reports_dir = cfg.paths.out_dir.join("reports");
    let sources = if sources.is_empty() {
        vec![cfg.experiment.feature_source.clone()]
    } else {
        sources.to_vec()
    };
    let scopes = if scopes.is_empty() {
        vec![cfg.experiment.speech_scope]
    } else {
        scopes.to_vec()
    };
    let mut reports = Vec::new();
    let mut paths = Vec::new();
    for source in &sources {
        for &scope in &scopes {
            let config = ExperimentConfig {
                feature_source: source.clone(),
                speech_scope: scope,
                ..cfg.experiment.clone()
            };
            let report = loso_run(&ds, &config)?;
            log::info!(
                "{source} / {scope}: segment BA {:.4}, subject BA {:.4}",
                report.balanced_accuracy_segment,
                report.balanced_accuracy_subject
            );
            paths.push(write_report(&reports_dir, &report)?);
            if cfg.permutations > 0 {
                let band = permutation_band(&ds, &config, cfg.permutations, config.seed)?;
                let text = serde_json::to_string_pretty(&band).expect("band serializes") + "\n";
                write_file(
                    &reports_dir.join(format!("{}.permutation.json", config.file_stem())),
                    text,
                )?;
            }
            reports.push(report);
        }
    }
    if reports.len() > 1 {
        let table = SpeechTable::from_reports(&reports, cfg.experiment.aggregation);
        write_file(&reports_dir.join("speech_table.csv"), table.to_csv())?;
        write_file(&reports_dir.join("speech_table.txt"), table.to_text())?;
    }
    Ok(EvaluateOutcome { reports, paths })
}

/// Runs the metadata fusion ladder and writes its report and tables.
pub fn cmd_ablation(cfg: &RunConfig) -> Result<Table2, CliError> {
    let ds = load_dataset(cfg)?;
    let start = Instant::now();
    let result = ablation_ladder(&ds, &cfg.experiment)?;
    let reports = cfg.paths.out_dir.join("reports");
    let stem = format!("ablation-{}", cfg.experiment.file_stem());
    write_file(&reports.join(format!("{stem}.json")), result.to_json())?;
    write_file(
        &reports.join(format!("{stem}.runtime.txt")),
        format!("{:.3}\n", start.elapsed().as_secs_f64()),
    )?;
    let table = Table2::from_ablation(&result, cfg.experiment.aggregation);
    write_file(&reports.join("table2.csv"), table.to_csv())?;
    write_file(&reports.join("table2.txt"), table.to_text())?;
    Ok(table)
}

/// Generates a synthetic cohort plus a `run.toml` pointing at it.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<(), CliError> {
    synth_cohort(spec, out)?;
    let cfg = RunConfig {
        paths: crate::Paths {
            audio_dir: Some("audio".into()),
            manifest_dir: Some("manifests".into()),
            metadata: Some("metadata.csv".into()),
            embeddings_dir: None,
            out_dir: "run".into(),
        },
        ..RunConfig::default()
    };
    write_file(&out.join("run.toml"), cfg.to_toml())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recording_names() {
        assert_eq!(kind_from_name("vowel_a"), Some((SegmentKind::Vowel, Some(Vowel::A))));
        assert_eq!(kind_from_name("text"), Some((SegmentKind::NeutralText, None)));
        assert_eq!(
            kind_from_name("picture_2"),
            Some((SegmentKind::PictureDescription, None))
        );
        assert_eq!(kind_from_name("vowel_x"), None);
        assert_eq!(kind_from_name("interview"), None);
    }

    #[test]
    fn schema_version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        prepare_out(dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("schema_version")).unwrap(), "1\n");
        prepare_out(dir.path()).unwrap();
        fs::write(dir.path().join("schema_version"), "0\n").unwrap();
        assert!(matches!(prepare_out(dir.path()), Err(CliError::Config(_))));
    }
}
