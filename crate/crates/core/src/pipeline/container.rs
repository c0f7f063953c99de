//! Self-describing raster container.
//!
//! A file is a text header followed by a raw little-endian payload:
//!
//! ```text
//! TENSORALIGN-RASTER 1
//! kind=cube
//! height=32
//! width=32
//! bands=8
//! dtype=f32
//! endian=little
//! interleave=bip
//! sha256=<hex digest of the payload>
//! end
//! <payload>
//! ```
//!
//! Cubes are stored as `f32` band-interleaved-by-pixel, ground-truth grids
//! as `u16` (0 = unlabeled) and superpixel maps as `u32`, all in raster
//! order.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::superpixel::{HsiCube, SuperpixelMap};
use crate::ClassId;

const MAGIC: &str = "TENSORALIGN-RASTER 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Cube,
    Labels,
    Segments,
}

impl RasterKind {
    fn name(self) -> &'static str {
        match self {
            RasterKind::Cube => "cube",
            RasterKind::Labels => "labels",
            RasterKind::Segments => "segments",
        }
    }

    fn dtype(self) -> &'static str {
        match self {
            RasterKind::Cube => "f32",
            RasterKind::Labels => "u16",
            RasterKind::Segments => "u32",
        }
    }

    fn item_size(self) -> usize {
        match self {
            RasterKind::Labels => 2,
            _ => 4,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "cube" => Ok(RasterKind::Cube),
            "labels" => Ok(RasterKind::Labels),
            "segments" => Ok(RasterKind::Segments),
            other => Err(Error::MalformedHeader(format!("unknown raster kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterHeader {
    pub kind: RasterKind,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub sha256: String,
}

impl RasterHeader {
    pub fn payload_len(&self) -> usize {
        self.height * self.width * self.bands * self.kind.item_size()
    }

    fn render(&self) -> String {
        format!(
            "{MAGIC}\nkind={}\nheight={}\nwidth={}\nbands={}\ndtype={}\nendian=little\ninterleave=bip\nsha256={}\nend\n",
            self.kind.name(),
            self.height,
            self.width,
            self.bands,
            self.kind.dtype(),
            self.sha256
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes a raster; `payload` must already be little-endian.
pub fn encode_raster(kind: RasterKind, height: usize, width: usize, bands: usize, payload: &[u8]) -> Vec<u8> {
    let header = RasterHeader {
        kind,
        height,
        width,
        bands,
        sha256: sha256_hex(payload),
    };
    let mut out = header.render().into_bytes();
    out.extend_from_slice(payload);
    out
}

/// Parses and validates a raster, returning the header and payload bytes.
pub fn decode_raster(bytes: &[u8]) -> Result<(RasterHeader, &[u8])> {
    let mut rest = bytes;
    let mut next_line = || -> Result<&str> {
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::MalformedHeader("header is not terminated".into()))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;
        rest = &rest[end + 1..];
        Ok(line)
    };
    if next_line()? != MAGIC {
        return Err(Error::MalformedHeader("missing magic line".into()));
    }
    let mut fields = std::collections::BTreeMap::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::MalformedHeader(format!("bad header line {line:?}")))?;
        if fields.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::MalformedHeader(format!("duplicate key {k:?}")));
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::MalformedHeader(format!("missing key {k:?}")))
    };
    let dim = |k: &str| -> Result<usize> {
        get(k)?
            .parse::<usize>()
            .map_err(|_| Error::MalformedHeader(format!("{k} is not an integer")))
    };
    let kind = RasterKind::parse(get("kind")?)?;
    if get("dtype")? != kind.dtype() {
        return Err(Error::MalformedHeader(format!("{} rasters must use dtype {}", kind.name(), kind.dtype())));
    }
    if get("endian")? != "little" {
        return Err(Error::MalformedHeader("only little-endian payloads are supported".into()));
    }
    if get("interleave")? != "bip" {
        return Err(Error::MalformedHeader("only band-interleaved-by-pixel payloads are supported".into()));
    }
    let header = RasterHeader {
        kind,
        height: dim("height")?,
        width: dim("width")?,
        bands: dim("bands")?,
        sha256: get("sha256")?.to_string(),
    };
    if header.height == 0 || header.width == 0 || header.bands == 0 {
        return Err(Error::MalformedHeader("extents must be positive".into()));
    }
    if kind != RasterKind::Cube && header.bands != 1 {
        return Err(Error::MalformedHeader(format!("{} rasters have one band", kind.name())));
    }
    let expected = header.payload_len();
    if rest.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: rest.len(),
        });
    }
    let actual = sha256_hex(rest);
    if actual != header.sha256 {
        return Err(Error::Checksum {
            expected: header.sha256,
            actual,
        });
    }
    Ok((header, rest))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn expect_kind(header: &RasterHeader, kind: RasterKind) -> Result<()> {
    if header.kind != kind {
        return Err(Error::MalformedHeader(format!(
            "expected a {} raster, found {}",
            kind.name(),
            header.kind.name()
        )));
    }
    Ok(())
}

/// Cube values are narrowed to `f32`.
pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let payload: Vec<u8> = cube.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    encode_raster(RasterKind::Cube, cube.height(), cube.width(), cube.bands(), &payload)
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    let (h, payload) = decode_raster(bytes)?;
    expect_kind(&h, RasterKind::Cube)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    HsiCube::new(h.height, h.width, h.bands, data)
}

pub fn encode_labels(height: usize, width: usize, labels: &[ClassId]) -> Result<Vec<u8>> {
    if labels.len() != height * width {
        return Err(Error::dims(format!("{} labels for a {height}x{width} grid", labels.len())));
    }
    let payload: Vec<u8> = labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    Ok(encode_raster(RasterKind::Labels, height, width, 1, &payload))
}

pub fn decode_labels(bytes: &[u8]) -> Result<(usize, usize, Vec<ClassId>)> {
    let (h, payload) = decode_raster(bytes)?;
    expect_kind(&h, RasterKind::Labels)?;
    let labels = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok((h.height, h.width, labels))
}

pub fn encode_segments(seg: &SuperpixelMap) -> Vec<u8> {
    let payload: Vec<u8> = seg.labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    encode_raster(RasterKind::Segments, seg.height, seg.width, 1, &payload)
}

pub fn decode_segments(bytes: &[u8]) -> Result<SuperpixelMap> {
    let (h, payload) = decode_raster(bytes)?;
    expect_kind(&h, RasterKind::Segments)?;
    let labels = payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    SuperpixelMap::new(h.height, h.width, labels)
}

pub fn save_cube(path: &Path, cube: &HsiCube) -> Result<()> {
    write_file(path, &encode_cube(cube))
}

/// Loads a cube and, when given, its ground-truth grid.
pub fn load_cube(path: &Path, ground_truth: Option<&Path>) -> Result<HsiCube> {
    let cube = decode_cube(&read_file(path)?)?;
    match ground_truth {
        Some(gt) => {
            let (h, w, labels) = load_labels(gt)?;
            if (h, w) != (cube.height(), cube.width()) {
                return Err(Error::dims(format!(
                    "ground truth is {h}x{w}, cube is {}x{}",
                    cube.height(),
                    cube.width()
                )));
            }
            cube.with_ground_truth(labels)
        }
        None => Ok(cube),
    }
}

pub fn save_labels(path: &Path, height: usize, width: usize, labels: &[ClassId]) -> Result<()> {
    write_file(path, &encode_labels(height, width, labels)?)
}

pub fn load_labels(path: &Path) -> Result<(usize, usize, Vec<ClassId>)> {
    decode_labels(&read_file(path)?)
}

pub fn save_segments(path: &Path, seg: &SuperpixelMap) -> Result<()> {
    write_file(path, &encode_segments(seg))
}

pub fn load_segments(path: &Path) -> Result<SuperpixelMap> {
    decode_segments(&read_file(path)?)
}

/// Checksum declared in a raster file's header, after full validation.
pub fn declared_checksum(path: &Path) -> Result<String> {
    let bytes = read_file(path)?;
    Ok(decode_raster(&bytes)?.0.sha256)
}

/// Sample type of a foreign raw raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawDtype {
    U8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl RawDtype {
    fn size(self) -> usize {
        match self {
            RawDtype::U8 => 1,
            RawDtype::U16 | RawDtype::I16 => 2,
            RawDtype::U32 | RawDtype::I32 | RawDtype::F32 => 4,
            RawDtype::F64 => 8,
        }
    }
}

impl std::str::FromStr for RawDtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "u8" => RawDtype::U8,
            "u16" => RawDtype::U16,
            "i16" => RawDtype::I16,
            "u32" => RawDtype::U32,
            "i32" => RawDtype::I32,
            "f32" => RawDtype::F32,
            "f64" => RawDtype::F64,
            other => return Err(Error::InvalidConfig(format!("unknown dtype {other:?}"))),
        })
    }
}

/// Band layout of a foreign raw raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    /// Band interleaved by pixel.
    Bip,
    /// Band interleaved by line.
    Bil,
    /// Band sequential.
    Bsq,
}

impl std::str::FromStr for Interleave {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bip" => Ok(Interleave::Bip),
            "bil" => Ok(Interleave::Bil),
            "bsq" => Ok(Interleave::Bsq),
            other => Err(Error::InvalidConfig(format!("unknown interleave {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawLayout {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: RawDtype,
    pub big_endian: bool,
    pub interleave: Interleave,
}

/// Decodes a headerless raster into values in band-interleaved-by-pixel order.
pub fn decode_raw(bytes: &[u8], layout: &RawLayout) -> Result<Vec<f64>> {
    let RawLayout {
        height: h,
        width: w,
        bands: b,
        dtype,
        big_endian,
        interleave,
    } = *layout;
    let n = h * w * b;
    if n == 0 {
        return Err(Error::InvalidConfig("raster extents must be positive".into()));
    }
    let size = dtype.size();
    if bytes.len() != n * size {
        return Err(Error::PayloadSize {
            expected: n * size,
            found: bytes.len(),
        });
    }
    let value = |i: usize| -> f64 {
        let mut raw = [0u8; 8];
        raw[..size].copy_from_slice(&bytes[i * size..(i + 1) * size]);
        if big_endian {
            raw[..size].reverse();
        }
        match dtype {
            RawDtype::U8 => raw[0] as f64,
            RawDtype::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            RawDtype::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            RawDtype::U32 => u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
            RawDtype::I32 => i32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
            RawDtype::F32 => f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]) as f64,
            RawDtype::F64 => f64::from_le_bytes(raw),
        }
    };
    let mut out = vec![0.0; n];
    for r in 0..h {
        for c in 0..w {
            for k in 0..b {
                let src = match interleave {
                    Interleave::Bip => (r * w + c) * b + k,
                    Interleave::Bil => (r * b + k) * w + c,
                    Interleave::Bsq => (k * h + r) * w + c,
                };
                out[(r * w + c) * b + k] = value(src);
            }
        }
    }
    Ok(out)
}

/// Converts a single-band raw raster of integral class ids to labels.
pub fn decode_raw_labels(bytes: &[u8], layout: &RawLayout) -> Result<Vec<ClassId>> {
    if layout.bands != 1 {
        return Err(Error::InvalidConfig("label rasters have one band".into()));
    }
    decode_raw(bytes, layout)?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && (0.0..=ClassId::MAX as f64).contains(&v) {
                Ok(v as ClassId)
            } else {
                Err(Error::InvalidConfig(format!("label value {v} is not a class id")))
            }
        })
        .collect()
}
