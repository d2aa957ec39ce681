//! Uncompressed single-file MetaImage (`.mha`) I/O.
//!
//! Only a strict subset is handled: 3D, one channel, little-endian,
//! `ElementDataFile = LOCAL`, identity orientation, and the element types
//! `MET_UCHAR`, `MET_SHORT`, `MET_USHORT`, `MET_FLOAT`. Anything else is
//! rejected instead of being reinterpreted.
//!
//! Headers are written in this fixed order, one `Key = Value` per line,
//! `\n` terminated, reals rounded to 9 significant digits:
//!
//! ```text
//! ObjectType = Image
//! NDims = 3
//! BinaryData = True
//! BinaryDataByteOrderMSB = False
//! CompressedData = False
//! TransformMatrix = 1 0 0 0 1 0 0 0 1
//! Offset = ox oy oz
//! ElementSpacing = sx sy sz
//! DimSize = nx ny nz
//! ElementType = MET_FLOAT
//! ElementDataFile = LOCAL
//! ```

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use super::{ElementKind, Geometry, Volume, VolumeError, VoxelData};
use crate::fsutil::atomic_write;
use crate::numfmt::sig_digits;

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

#[derive(Debug, Error)]
pub enum MhaError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("missing required header key {0}")]
    MissingKey(&'static str),
    #[error("payload length {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub fn read_mha(path: impl AsRef<Path>) -> Result<Volume, MhaError> {
    let bytes = std::fs::read(path)?;
    decode_mha(&bytes)
}

pub fn write_mha(volume: &Volume, path: impl AsRef<Path>) -> Result<(), MhaError> {
    atomic_write(path.as_ref(), &encode_mha(volume))?;
    Ok(())
}

/// Serializes a volume to the canonical header plus raw little-endian payload.
pub fn encode_mha(volume: &Volume) -> Vec<u8> {
    let g = volume.geometry();
    let reals = |v: &[f64; 3]| {
        v.iter()
            .map(|x| sig_digits(*x, 9))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let header = format!(
        "ObjectType = Image\n\
         NDims = 3\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         TransformMatrix = 1 0 0 0 1 0 0 0 1\n\
         Offset = {}\n\
         ElementSpacing = {}\n\
         DimSize = {} {} {}\n\
         ElementType = {}\n\
         ElementDataFile = LOCAL\n",
        reals(&g.origin),
        reals(&g.spacing),
        g.dims[0],
        g.dims[1],
        g.dims[2],
        volume.kind().met_name(),
    );
    let mut out = header.into_bytes();
    out.reserve(volume.len() * volume.kind().byte_size());
    match volume.data() {
        VoxelData::U8(v) => out.extend_from_slice(v),
        VoxelData::I16(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        VoxelData::U16(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        VoxelData::F32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

#[derive(Default)]
struct Header {
    dims: Option<[usize; 3]>,
    spacing: Option<[f64; 3]>,
    origin: Option<[f64; 3]>,
    kind: Option<ElementKind>,
    ndims_seen: bool,
}

pub fn decode_mha(bytes: &[u8]) -> Result<Volume, MhaError> {
    let mut header = Header::default();
    let mut seen = HashSet::new();
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let payload_start = loop {
        line_no += 1;
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(MhaError::MissingKey("ElementDataFile"));
        };
        let raw = &bytes[pos..pos + nl];
        pos += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| malformed(line_no, "header is not ASCII"))?
            .trim_end_matches('\r');
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(line_no, "expected `Key = Value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(malformed(line_no, "empty key"));
        }
        if !seen.insert(canonical_key(key).to_string()) {
            return Err(malformed(line_no, &format!("duplicate key {key}")));
        }
        if key == "ElementDataFile" {
            if value != "LOCAL" {
                return Err(MhaError::Unsupported(format!(
                    "ElementDataFile = {value} (only LOCAL)"
                )));
            }
            break pos;
        }
        apply_key(&mut header, key, value, line_no)?;
    };

    if !header.ndims_seen {
        return Err(MhaError::MissingKey("NDims"));
    }
    let dims = header.dims.ok_or(MhaError::MissingKey("DimSize"))?;
    let kind = header.kind.ok_or(MhaError::MissingKey("ElementType"))?;
    let geometry = Geometry::new(
        dims,
        header.spacing.unwrap_or([1.0; 3]),
        header.origin.unwrap_or([0.0; 3]),
    )?;

    let payload = &bytes[payload_start..];
    let n = geometry.num_voxels();
    let expected = n
        .checked_mul(kind.byte_size())
        .ok_or_else(|| MhaError::Unsupported("volume too large".into()))?;
    if payload.len() != expected {
        return Err(MhaError::PayloadLength {
            expected,
            actual: payload.len(),
        });
    }
    let data = match kind {
        ElementKind::U8 => VoxelData::U8(payload.to_vec()),
        ElementKind::I16 => VoxelData::I16(
            payload
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        ElementKind::U16 => VoxelData::U16(
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
        ElementKind::F32 => VoxelData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    Ok(Volume::new(geometry, data)?)
}

// Aliases that name the same header field.
fn canonical_key(key: &str) -> &str {
    match key {
        "Origin" | "Position" => "Offset",
        "Rotation" | "Orientation" => "TransformMatrix",
        "ElementByteOrderMSB" => "BinaryDataByteOrderMSB",
        other => other,
    }
}

fn apply_key(h: &mut Header, key: &str, value: &str, line: usize) -> Result<(), MhaError> {
    match canonical_key(key) {
        "ObjectType" => expect_value(key, value, "Image"),
        "NDims" => {
            if value != "3" {
                return Err(MhaError::Unsupported(format!("NDims = {value} (only 3)")));
            }
            h.ndims_seen = true;
            Ok(())
        }
        "BinaryData" => expect_value(key, value, "True"),
        "BinaryDataByteOrderMSB" => expect_value(key, value, "False"),
        "CompressedData" => match value {
            "False" => Ok(()),
            "True" => Err(MhaError::Unsupported("compressed data".into())),
            _ => Err(malformed(line, &format!("CompressedData = {value}"))),
        },
        "TransformMatrix" => {
            let m: Vec<f64> = parse_list(value, line)?;
            if m.len() != 9 {
                return Err(malformed(line, "TransformMatrix needs 9 values"));
            }
            if m != IDENTITY {
                return Err(MhaError::Unsupported(format!(
                    "non-identity TransformMatrix {value}"
                )));
            }
            Ok(())
        }
        "Offset" => {
            h.origin = Some(parse3(value, line)?);
            Ok(())
        }
        "ElementSpacing" => {
            h.spacing = Some(parse3(value, line)?);
            Ok(())
        }
        "DimSize" => {
            h.dims = Some(parse3(value, line)?);
            Ok(())
        }
        "ElementType" => {
            let kind = ElementKind::from_met_name(value)
                .ok_or_else(|| MhaError::Unsupported(format!("ElementType = {value}")))?;
            h.kind = Some(kind);
            Ok(())
        }
        "ElementNumberOfChannels" => expect_value(key, value, "1"),
        // Informational only; geometry is carried by Offset/ElementSpacing.
        "CenterOfRotation" => parse3::<f64>(value, line).map(|_| ()),
        "AnatomicalOrientation" => Ok(()),
        _ => Err(MhaError::Unsupported(format!("header key {key}"))),
    }
}

fn expect_value(key: &str, value: &str, want: &str) -> Result<(), MhaError> {
    if value == want {
        Ok(())
    } else {
        Err(MhaError::Unsupported(format!(
            "{key} = {value} (only {want})"
        )))
    }
}

fn malformed(line: usize, reason: &str) -> MhaError {
    MhaError::Malformed {
        line,
        reason: reason.to_string(),
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, line: usize) -> Result<Vec<T>, MhaError> {
    value
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| malformed(line, &format!("cannot parse `{t}`")))
        })
        .collect()
}

fn parse3<T: std::str::FromStr + Copy>(value: &str, line: usize) -> Result<[T; 3], MhaError> {
    let v = parse_list::<T>(value, line)?;
    <[T; 3]>::try_from(v.as_slice()).map_err(|_| malformed(line, "expected 3 values"))
}
