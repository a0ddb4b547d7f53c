//! Artifact output: trace CSVs, a JSON summary and PGM images, named
//! `{experiment}_{solver}.{ext}`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::solvers::{CsvTraceSink, TraceSink};

use super::{Image, RunReport};

/// Binary PGM (P5, maxval 255); values are clamped to `[0, 1]`.
pub fn write_pgm<W: Write>(mut out: W, image: &Image) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", image.width, image.height)?;
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Writes every artifact of `report` into `out_dir` (created if missing) and
/// returns the written paths, summary last.
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for run in &report.runs {
        let path = out_dir.join(format!("{}_{}.csv", report.experiment, run.solver));
        let mut sink = CsvTraceSink::new(BufWriter::new(File::create(&path)?))?;
        for rec in &run.trace {
            sink.record(rec)?;
        }
        sink.finish()?.flush()?;
        paths.push(path);
    }
    for image in &report.images {
        let path = out_dir.join(format!("{}_{}.pgm", report.experiment, image.name));
        write_pgm(BufWriter::new(File::create(&path)?), image)?;
        paths.push(path);
    }
    let summary_path = out_dir.join(format!("{}_summary.json", report.experiment));
    paths.push(summary_path.clone());
    let mut summary = report.clone();
    summary.artifact_paths = paths
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let mut w = BufWriter::new(File::create(&summary_path)?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush()?;
    Ok(paths)
}
