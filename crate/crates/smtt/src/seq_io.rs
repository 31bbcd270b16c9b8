//! On-disk sequence layout: frame images plus box files.
//!
//! Boxes are one line per frame, "x,y,w,h" in the top-left corner
//! convention, ASCII decimals with two fractional digits, LF endings, no
//! trailing blank line. Frames are 8-bit grayscale PGM (P5) or PNG named
//! frame_000001.pgm and so on, lexicographically ordered.

use std::io::Write;
use std::path::Path;

use crate::error::{Result, SmttError};
use crate::image::GrayImage;
use crate::particles::TargetBox;

pub fn format_box_line(b: &TargetBox) -> String {
    let (x, y, w, h) = b.to_corner();
    format!("{x:.2},{y:.2},{w:.2},{h:.2}")
}

pub fn write_boxes(path: &Path, boxes: &[TargetBox]) -> Result<()> {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format_box_line(b));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn parse_box_line(line: &str, lineno: usize) -> Result<TargetBox> {
    let parts: Vec<&str> = line.trim().split(',').collect();
    if parts.len() != 4 {
        return Err(SmttError::Parse(format!(
            "line {lineno}: expected 4 comma-separated values, got {}",
            parts.len()
        )));
    }
    let mut vals = [0.0f64; 4];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p
            .trim()
            .parse()
            .map_err(|_| SmttError::Parse(format!("line {lineno}: bad number {p:?}")))?;
        if !vals[i].is_finite() {
            return Err(SmttError::Parse(format!("line {lineno}: non-finite value")));
        }
    }
    if vals[2] <= 0.0 || vals[3] <= 0.0 {
        return Err(SmttError::Parse(format!(
            "line {lineno}: box size must be positive"
        )));
    }
    Ok(TargetBox::from_corner(vals[0], vals[1], vals[2], vals[3]))
}

pub fn read_boxes(path: &Path) -> Result<Vec<TargetBox>> {
    let text = std::fs::read_to_string(path)?;
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        boxes.push(parse_box_line(line, i + 1)?);
    }
    if boxes.is_empty() {
        return Err(SmttError::Parse(format!("{}: no boxes", path.display())));
    }
    Ok(boxes)
}

/// Load all frames from a sequence directory, in lexicographic order.
pub fn read_frames(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if name.starts_with("frame_") && (ext == "pgm" || ext == "png") {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(SmttError::Parse(format!(
            "{}: no frame_*.pgm or frame_*.png files",
            dir.display()
        )));
    }
    paths.sort();
    paths.iter().map(|p| GrayImage::read(p)).collect()
}

/// Write frames (frame_000001.pgm, 1-indexed) and groundtruth.txt.
pub fn write_sequence(dir: &Path, frames: &[GrayImage], truth: &[TargetBox]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.write_pgm(&dir.join(format!("frame_{:06}.pgm", i + 1)))?;
    }
    write_boxes(&dir.join("groundtruth.txt"), truth)?;
    Ok(())
}

/// Write the precision/success curves as CSV.
pub fn write_curves_csv(path: &Path, report: &crate::metrics::EvalReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "kind,threshold,value")?;
    for (theta, v) in report.precision_curve.iter().enumerate() {
        writeln!(f, "precision,{theta},{v:.6}")?;
    }
    for (i, v) in report.success_curve.iter().enumerate() {
        writeln!(f, "success,{:.2},{v:.6}", i as f64 / 100.0)?;
    }
    Ok(())
}
