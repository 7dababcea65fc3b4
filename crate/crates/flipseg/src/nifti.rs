//! Single-file NIfTI-1 volumes (`.nii`, `.nii.gz`).
//!
//! Only the fields the pipeline needs are interpreted: dimensions, datatype,
//! voxel spacing, intensity scaling and the data offset. Everything else,
//! including orientation and any header extensions, is carried through
//! unchanged when a loaded header is used as a template for writing.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};
use flipseg_core::{Grid, LabelMap, Volume3D, Voxel};

use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DEFAULT_OFFSET: usize = 352;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    F32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::F32 => 16,
        }
    }

    fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Datatype::U8),
            4 => Some(Datatype::I16),
            16 => Some(Datatype::F32),
            _ => None,
        }
    }

    fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 => 2,
            Datatype::F32 => 4,
        }
    }
}

/// A NIfTI-1 header: the raw 348 bytes plus any extension bytes before the
/// voxel data.
#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    raw: [u8; HEADER_SIZE],
    extension: Vec<u8>,
    big_endian: bool,
}

macro_rules! field {
    ($self:ident, $read:ident, $at:expr) => {
        if $self.big_endian {
            BigEndian::$read(&$self.raw[$at..])
        } else {
            LittleEndian::$read(&$self.raw[$at..])
        }
    };
}

macro_rules! set_field {
    ($self:ident, $write:ident, $at:expr, $v:expr) => {
        if $self.big_endian {
            BigEndian::$write(&mut $self.raw[$at..], $v)
        } else {
            LittleEndian::$write(&mut $self.raw[$at..], $v)
        }
    };
}

impl NiftiHeader {
    /// A minimal little-endian header for a volume with no orientation.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], datatype: Datatype) -> Self {
        let mut h = Self {
            raw: [0; HEADER_SIZE],
            extension: vec![0; DEFAULT_OFFSET - HEADER_SIZE],
            big_endian: false,
        };
        set_field!(h, write_i32, 0, HEADER_SIZE as i32);
        h.raw[344..348].copy_from_slice(b"n+1\0");
        // mm and seconds
        h.raw[123] = 2 | 8;
        set_field!(h, write_f32, 76, 1.0);
        h.set_geometry(dims, spacing, datatype);
        h
    }

    fn set_geometry(&mut self, dims: [usize; 3], spacing: [f64; 3], datatype: Datatype) {
        set_field!(self, write_i16, 40, 3);
        for (i, &d) in dims.iter().enumerate() {
            set_field!(self, write_i16, 42 + 2 * i, d as i16);
        }
        for i in 3..7 {
            set_field!(self, write_i16, 42 + 2 * i, 1);
        }
        set_field!(self, write_i16, 70, datatype.code());
        set_field!(self, write_i16, 72, 8 * datatype.bytes() as i16);
        for (i, &s) in spacing.iter().enumerate() {
            set_field!(self, write_f32, 80 + 4 * i, s as f32);
        }
        set_field!(self, write_f32, 108, (HEADER_SIZE + self.extension.len()) as f32);
        set_field!(self, write_f32, 112, 0.0);
        set_field!(self, write_f32, 116, 0.0);
    }

    pub fn dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| {
            let d: i16 = field!(self, read_i16, 42 + 2 * i);
            d.max(0) as usize
        })
    }

    pub fn spacing(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| {
            let s: f32 = field!(self, read_f32, 80 + 4 * i);
            s.abs() as f64
        })
    }

    pub fn datatype_code(&self) -> i16 {
        field!(self, read_i16, 70)
    }

    pub fn scl_slope(&self) -> f32 {
        field!(self, read_f32, 112)
    }

    pub fn scl_inter(&self) -> f32 {
        field!(self, read_f32, 116)
    }

    pub fn vox_offset(&self) -> usize {
        HEADER_SIZE + self.extension.len()
    }

    /// Map a raw stored value to its physical value.
    fn scale(&self, raw: f64) -> f64 {
        let slope = self.scl_slope();
        if slope != 0.0 && slope.is_finite() {
            raw * slope as f64 + self.scl_inter() as f64
        } else {
            raw
        }
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(path, format!("truncated header ({} bytes)", bytes.len())));
    }
    let big_endian = if LittleEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        false
    } else if BigEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        true
    } else {
        return Err(Error::format(path, "not a NIfTI-1 file (bad sizeof_hdr)"));
    };
    if &bytes[344..347] != b"n+1" {
        return Err(Error::format(path, "only single-file NIfTI-1 (magic n+1) is supported"));
    }
    let mut raw = [0u8; HEADER_SIZE];
    raw.copy_from_slice(&bytes[..HEADER_SIZE]);
    let probe = NiftiHeader {
        raw,
        extension: Vec::new(),
        big_endian,
    };
    let offset: f32 = field!(probe, read_f32, 108);
    if !(offset.is_finite() && offset >= HEADER_SIZE as f32 && offset.fract() == 0.0) {
        return Err(Error::format(path, format!("invalid vox_offset {offset}")));
    }
    let offset = offset as usize;
    if bytes.len() < offset {
        return Err(Error::format(path, "truncated header extension"));
    }
    Ok(NiftiHeader {
        extension: bytes[HEADER_SIZE..offset].to_vec(),
        ..probe
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Raw stored values (before scaling) and the header.
fn read_raw(path: &Path) -> Result<(Vec<f64>, NiftiHeader)> {
    let bytes = read_bytes(path)?;
    let header = parse_header(&bytes, path)?;
    let ndim: i16 = field!(header, read_i16, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::format(path, format!("invalid dim[0] = {ndim}")));
    }
    for i in 4..=ndim as usize {
        let d: i16 = field!(header, read_i16, 40 + 2 * i);
        if d > 1 {
            return Err(Error::format(path, format!("only 3-D volumes are supported (dim[{i}] = {d})")));
        }
    }
    let dims = header.dims();
    if dims.contains(&0) {
        return Err(Error::format(path, format!("non-positive dimension in {dims:?}")));
    }
    let code = header.datatype_code();
    let datatype = Datatype::from_code(code).ok_or_else(|| {
        Error::format(path, format!("unsupported datatype code {code} (need uint8, int16 or float32)"))
    })?;
    let n = dims[0] * dims[1] * dims[2];
    let start = header.vox_offset();
    let end = start + n * datatype.bytes();
    if bytes.len() < end {
        return Err(Error::format(
            path,
            format!("truncated data: expected {} bytes, found {}", end, bytes.len()),
        ));
    }
    let body = &bytes[start..end];
    let be = header.big_endian;
    let values = match datatype {
        Datatype::U8 => body.iter().map(|&b| b as f64).collect(),
        Datatype::I16 => body
            .chunks_exact(2)
            .map(|c| if be { BigEndian::read_i16(c) } else { LittleEndian::read_i16(c) } as f64)
            .collect(),
        Datatype::F32 => body
            .chunks_exact(4)
            .map(|c| if be { BigEndian::read_f32(c) } else { LittleEndian::read_f32(c) } as f64)
            .collect(),
    };
    Ok((values, header))
}

/// Read a volume, applying `scl_slope` / `scl_inter`.
pub fn read_volume(path: impl AsRef<Path>) -> Result<(Volume3D, NiftiHeader)> {
    let path = path.as_ref();
    let (raw, header) = read_raw(path)?;
    let data: Vec<f64> = raw.into_iter().map(|v| header.scale(v)).collect();
    let volume = Volume3D::from_parts(header.dims(), header.spacing(), data)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok((volume, header))
}

/// Read an integer label volume whose values must all be in `allowed`.
pub fn read_labels(path: impl AsRef<Path>, allowed: &[u8]) -> Result<(LabelMap, NiftiHeader)> {
    let path = path.as_ref();
    let (v, header) = read_volume(path)?;
    let mut data = Vec::with_capacity(v.len());
    for (i, &x) in v.data().iter().enumerate() {
        if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) || !allowed.contains(&(x as u8)) {
            return Err(Error::format(
                path,
                format!("voxel {i} has value {x}, expected one of {allowed:?}"),
            ));
        }
        data.push(x as u8);
    }
    let labels = LabelMap::from_parts(v.dims(), v.spacing(), data)?;
    Ok((labels, header))
}

fn header_for(dims: [usize; 3], spacing: [f64; 3], datatype: Datatype, template: Option<&NiftiHeader>) -> NiftiHeader {
    match template {
        Some(t) => {
            let mut h = t.clone();
            h.set_geometry(dims, spacing, datatype);
            h
        }
        None => NiftiHeader::new(dims, spacing, datatype),
    }
}

fn write_encoded(path: &Path, header: &NiftiHeader, body: &[u8]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let mut sink: Box<dyn Write> = if gz {
        // mtime 0 and no file name keep the output byte-identical across runs
        Box::new(GzBuilder::new().mtime(0).write(BufWriter::new(file), Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    };
    sink.write_all(&header.raw).map_err(io)?;
    sink.write_all(&header.extension).map_err(io)?;
    sink.write_all(body).map_err(io)?;
    sink.flush().map_err(io)?;
    Ok(())
}

/// Write a volume as float32 (gzip-compressed when the path ends in `.gz`).
/// The template's orientation and other fields are preserved.
pub fn write_volume(path: impl AsRef<Path>, v: &Volume3D, template: Option<&NiftiHeader>) -> Result<()> {
    let header = header_for(v.dims(), v.spacing(), Datatype::F32, template);
    let mut body = vec![0u8; 4 * v.len()];
    for (c, &x) in body.chunks_exact_mut(4).zip(v.data()) {
        if header.big_endian {
            BigEndian::write_f32(c, x as f32)
        } else {
            LittleEndian::write_f32(c, x as f32)
        }
    }
    write_encoded(path.as_ref(), &header, &body)
}

/// Write any `u8` grid (label maps, integer certainty maps) as uint8.
pub fn write_u8<T: Voxel>(path: impl AsRef<Path>, g: &Grid<T>, template: Option<&NiftiHeader>, to_u8: impl Fn(&T) -> u8) -> Result<()> {
    let header = header_for(g.dims(), g.spacing(), Datatype::U8, template);
    let body: Vec<u8> = g.data().iter().map(to_u8).collect();
    write_encoded(path.as_ref(), &header, &body)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelMap, template: Option<&NiftiHeader>) -> Result<()> {
    write_u8(path, labels, template, |&v| v)
}

/// Write int16 data with intensity scaling, the usual storage of raw scans.
pub fn write_i16(
    path: impl AsRef<Path>,
    dims: [usize; 3],
    spacing: [f64; 3],
    raw: &[i16],
    scl_slope: f32,
    scl_inter: f32,
) -> Result<()> {
    let mut header = NiftiHeader::new(dims, spacing, Datatype::I16);
    set_field!(header, write_f32, 112, scl_slope);
    set_field!(header, write_f32, 116, scl_inter);
    let mut body = vec![0u8; 2 * raw.len()];
    for (c, &x) in body.chunks_exact_mut(2).zip(raw) {
        LittleEndian::write_i16(c, x);
    }
    write_encoded(path.as_ref(), &header, &body)
}
