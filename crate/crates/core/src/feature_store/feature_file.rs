//! Binary per-stream feature matrices.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "FUSEAU01" (version 1: elements are IEEE-754 f32 LE)
//! 8       4     u32 stream-name length n
//! 12      n     stream name, UTF-8
//! 12+n    8     u64 frame_count
//! 20+n    8     u64 dim
//! 28+n    4·frame_count·dim  frame-major f32 data
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FUSEAU01";
const MAX_NAME_LEN: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureHeader {
    pub stream: String,
    pub frame_count: usize,
    pub dim: usize,
}

/// A `frame_count × dim` matrix of `f32` rows for one stream of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub header: FeatureHeader,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(stream: impl Into<String>, frame_count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frame_count * dim {
            return Err(Error::dim("feature matrix data", frame_count * dim, data.len()));
        }
        Ok(FeatureMatrix {
            header: FeatureHeader {
                stream: stream.into(),
                frame_count,
                dim,
            },
            data,
        })
    }

    pub fn zeros(stream: impl Into<String>, frame_count: usize, dim: usize) -> Self {
        FeatureMatrix {
            header: FeatureHeader {
                stream: stream.into(),
                frame_count,
                dim,
            },
            data: vec![0.0; frame_count * dim],
        }
    }

    pub fn frame_count(&self) -> usize {
        self.header.frame_count
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        let d = self.header.dim;
        &self.data[frame * d..(frame + 1) * d]
    }

    pub fn row_f64(&self, frame: usize) -> Vec<f64> {
        self.row(frame).iter().map(|&v| v as f64).collect()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let name = self.header.stream.as_bytes();
        let mut buf = Vec::with_capacity(28 + name.len() + 4 * self.data.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(self.header.frame_count as u64).to_le_bytes());
        buf.extend_from_slice(&(self.header.dim as u64).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let header = read_header_from(&mut r, path)?;
        let n = header.frame_count * header.dim;
        let mut bytes = Vec::with_capacity(n * 4);
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != n * 4 {
            return Err(Error::Header {
                path: path.into(),
                message: format!(
                    "payload is {} bytes, header implies {} ({} frames x {} dims)",
                    bytes.len(),
                    n * 4,
                    header.frame_count,
                    header.dim
                ),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(FeatureMatrix { header, data })
    }
}

/// Reads only the header; the payload length is checked against the file size.
pub fn read_header(path: &Path) -> Result<FeatureHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let size = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);
    let header = read_header_from(&mut r, path)?;
    let header_len = 28 + header.stream.len() as u64;
    let expected = header_len + 4 * (header.frame_count as u64) * (header.dim as u64);
    if size != expected {
        return Err(Error::Header {
            path: path.into(),
            message: format!("file is {size} bytes, header implies {expected}"),
        });
    }
    Ok(header)
}

fn read_header_from(r: &mut impl Read, path: &Path) -> Result<FeatureHeader> {
    let malformed = |message: String| Error::Header {
        path: path.into(),
        message,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| malformed("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(malformed(format!("bad magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| malformed("truncated stream-name length".into()))?;
    let name_len = u32::from_le_bytes(u32buf);
    if name_len > MAX_NAME_LEN {
        return Err(malformed(format!("stream-name length {name_len} too large")));
    }
    let mut name = vec![0u8; name_len as usize];
    r.read_exact(&mut name)
        .map_err(|_| malformed("truncated stream name".into()))?;
    let stream = String::from_utf8(name).map_err(|_| malformed("stream name is not UTF-8".into()))?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)
        .map_err(|_| malformed("truncated frame_count".into()))?;
    let frame_count = u64::from_le_bytes(u64buf);
    r.read_exact(&mut u64buf)
        .map_err(|_| malformed("truncated dim".into()))?;
    let dim = u64::from_le_bytes(u64buf);
    if dim == 0 {
        return Err(malformed("dim is zero".into()));
    }
    Ok(FeatureHeader {
        stream,
        frame_count: usize::try_from(frame_count).map_err(|_| malformed("frame_count overflow".into()))?,
        dim: usize::try_from(dim).map_err(|_| malformed("dim overflow".into()))?,
    })
}
