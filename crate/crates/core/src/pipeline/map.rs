//! Classification maps as binary PGM images with a CSV color legend.
//!
//! The gray level of a pixel is its class id (0 = unlabeled), so maps are
//! limited to classes below 256. The legend sidecar lists `class,r,g,b`.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ClassId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    /// Sorted by class id.
    pub entries: Vec<(ClassId, [u8; 3])>,
}

impl Palette {
    /// Evenly spaced hues for classes `1..=classes`, plus black for 0.
    pub fn default_for(classes: ClassId) -> Self {
        let mut entries = vec![(0, [0, 0, 0])];
        for c in 1..=classes {
            let hue = (c - 1) as f64 / classes.max(1) as f64;
            entries.push((c, hsv_to_rgb(hue, 0.85, 0.95)));
        }
        Self { entries }
    }

    pub fn color(&self, class: ClassId) -> Option<[u8; 3]> {
        self.entries
            .binary_search_by_key(&class, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// Path of the legend written next to `map`.
pub fn legend_path(map: &Path) -> PathBuf {
    map.with_extension("legend.csv")
}

/// Writes `pred` (raster order) as a PGM plus its legend.
pub fn emit_map(pred: &[ClassId], height: usize, width: usize, palette: &Palette, path: &Path) -> Result<()> {
    if pred.len() != height * width || pred.is_empty() {
        return Err(Error::dims(format!("{} labels for a {height}x{width} map", pred.len())));
    }
    let mut used: Vec<ClassId> = pred.to_vec();
    used.sort_unstable();
    used.dedup();
    for &c in &used {
        if c > u8::MAX as ClassId {
            return Err(Error::InvalidConfig(format!("class {c} does not fit an 8-bit map")));
        }
        if palette.color(c).is_none() {
            return Err(Error::InvalidConfig(format!("palette has no color for class {c}")));
        }
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(pred.iter().map(|&c| c as u8));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let legend = legend_path(path);
    let mut out = Vec::new();
    writeln!(out, "class,r,g,b").expect("write to Vec");
    for &c in &used {
        let [r, g, b] = palette.color(c).expect("checked above");
        writeln!(out, "{c},{r},{g},{b}").expect("write to Vec");
    }
    std::fs::write(&legend, out).map_err(|e| Error::io(legend, e))
}

/// Reads a map written by [`emit_map`]: `(height, width, labels)`.
pub fn read_map(path: &Path) -> Result<(usize, usize, Vec<ClassId>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if tokens[0] != "P5" || tokens[3] != "255" {
        return Err(Error::MalformedHeader("expected an 8-bit P5 image".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::MalformedHeader(format!("bad PGM extent {s:?}")));
    let (width, height) = (num(&tokens[1])?, num(&tokens[2])?);
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != width * height {
        return Err(Error::PayloadSize {
            expected: width * height,
            found: raster.len(),
        });
    }
    Ok((height, width, raster.iter().map(|&b| b as ClassId).collect()))
}
