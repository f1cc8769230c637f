use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Adu, AduKind, Layout};
use crate::error::{Error, Result};

/// Small JSON header that sits next to a raw payload file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AduDescriptor {
    pub kind: AduKind,
    pub dims: Vec<usize>,
    pub layout: Layout,
    /// Payload file, relative to the descriptor's directory.
    pub data: String,
}

pub fn load_adu(descriptor: &Path) -> Result<Adu> {
    let text = fs::read_to_string(descriptor)?;
    let desc: AduDescriptor =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", descriptor.display())))?;
    let dir = descriptor.parent().unwrap_or_else(|| Path::new("."));
    let payload = fs::read(dir.join(&desc.data))?;
    Adu::new(desc.kind, desc.dims, desc.layout, payload)
}

/// Writes `<stem>.bin` and the descriptor at `descriptor`.
pub fn save_adu(adu: &Adu, descriptor: &Path) -> Result<PathBuf> {
    let data_path = descriptor.with_extension("bin");
    let data_name = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Format(format!("bad output path {}", descriptor.display())))?;
    fs::write(&data_path, adu.payload())?;
    let desc = AduDescriptor { kind: adu.kind(), dims: adu.dims().to_vec(), layout: adu.layout(), data: data_name };
    let json = serde_json::to_string_pretty(&desc).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(descriptor, json)?;
    Ok(data_path)
}

pub fn read_text(path: &Path) -> Result<Adu> {
    let bytes = fs::read(path)?;
    std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Adu::text(bytes)
}

/// Dispatches on extension: `.ppm`/`.pgm` images, `.json` descriptors,
/// anything else is read as UTF-8 text.
pub fn load_input(path: &Path) -> Result<Adu> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") | Some("pgm") | Some("pnm") => read_pnm(&fs::read(path)?),
        Some("json") => load_adu(path),
        _ => read_text(path),
    }
}

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        loop {
            match self.rest.first() {
                Some(b) if b.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self.rest.iter().position(|&b| b == b'\n').unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space();
        let len = self.rest.iter().take_while(|b| b.is_ascii_digit()).count();
        if len == 0 {
            return Err(Error::Format("PNM header: expected a number".into()));
        }
        let s = std::str::from_utf8(&self.rest[..len]).expect("ascii digits");
        self.rest = &self.rest[len..];
        s.parse().map_err(|_| Error::Format(format!("PNM header: bad number {s}")))
    }
}

/// Parses binary PGM (P5) and PPM (P6) with maxval ≤ 255.
pub fn read_pnm(bytes: &[u8]) -> Result<Adu> {
    if bytes.len() < 2 {
        return Err(Error::Format("truncated PNM".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        m => return Err(Error::Format(format!("unsupported PNM magic {:?}", String::from_utf8_lossy(m)))),
    };
    let mut hdr = Header { rest: &bytes[2..] };
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PNM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match hdr.rest.first() {
        Some(b) if b.is_ascii_whitespace() => hdr.rest = &hdr.rest[1..],
        _ => return Err(Error::Format("PNM header not terminated".into())),
    }
    let need = width * height * channels;
    if hdr.rest.len() < need {
        return Err(Error::Format(format!("PNM raster has {} bytes, need {need}", hdr.rest.len())));
    }
    Adu::image(height, width, channels, hdr.rest[..need].to_vec())
}

pub fn write_pnm(image: &Adu) -> Result<Vec<u8>> {
    let (h, w, c) = image.image_dims()?;
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Format(format!("PNM cannot hold {c} channels"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(image.payload());
    Ok(out)
}
