//! Binary frame container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field                                             |
//! |-------|---------------------------------------------------|
//! | 6     | magic `ISACB1`                                    |
//! | 4     | `n_rows` (u32)                                    |
//! | 4     | `n_cols` (u32)                                    |
//! | 4     | `n_channels` (u32)                                |
//! | 4     | dtype: 0 = complex64 (interleaved f32), 1 = f32   |
//! | ...   | payload, channel after channel, row-major inside  |
//!
//! A JSON sidecar named `<file>.json` carries the metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{NormalizedPath, RawConfig};
use crate::{CMat, Complex64, RMat};

pub const MAGIC: &[u8; 6] = b"ISACB1";
pub const HEADER_LEN: usize = 6 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    Complex64,
    Float32,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::Complex64 => 0,
            DType::Float32 => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(DType::Complex64),
            1 => Ok(DType::Float32),
            c => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }

    /// Bytes per element.
    pub fn size(self) -> usize {
        match self {
            DType::Complex64 => 8,
            DType::Float32 => 4,
        }
    }

    fn floats(self) -> usize {
        self.size() / 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameContainer {
    pub n_rows: u32,
    pub n_cols: u32,
    pub n_channels: u32,
    pub dtype: DType,
    /// Raw f32 payload in file order.
    pub data: Vec<f32>,
}

fn dim(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} exceeds u32")))
}

impl FrameContainer {
    fn check_shapes(shapes: impl Iterator<Item = (usize, usize)>) -> Result<(usize, usize, usize)> {
        let mut count = 0;
        let mut shape = None;
        for s in shapes {
            match shape {
                None => shape = Some(s),
                Some(t) if t != s => return Err(Error::Dimension(format!("channel shapes {t:?} and {s:?} differ"))),
                _ => {}
            }
            count += 1;
        }
        let (r, c) = shape.ok_or_else(|| Error::Format("container needs at least one channel".into()))?;
        Ok((r, c, count))
    }

    pub fn from_complex(channels: &[&CMat]) -> Result<Self> {
        let (rows, cols, n) = Self::check_shapes(channels.iter().map(|m| m.shape()))?;
        let mut data = Vec::with_capacity(rows * cols * n * 2);
        for m in channels {
            for r in 0..rows {
                for c in 0..cols {
                    let z = m[(r, c)];
                    data.push(z.re as f32);
                    data.push(z.im as f32);
                }
            }
        }
        Ok(Self {
            n_rows: dim(rows, "rows")?,
            n_cols: dim(cols, "columns")?,
            n_channels: dim(n, "channels")?,
            dtype: DType::Complex64,
            data,
        })
    }

    pub fn from_real(channels: &[&RMat]) -> Result<Self> {
        let (rows, cols, n) = Self::check_shapes(channels.iter().map(|m| m.shape()))?;
        let mut data = Vec::with_capacity(rows * cols * n);
        for m in channels {
            for r in 0..rows {
                for c in 0..cols {
                    data.push(m[(r, c)] as f32);
                }
            }
        }
        Ok(Self {
            n_rows: dim(rows, "rows")?,
            n_cols: dim(cols, "columns")?,
            n_channels: dim(n, "channels")?,
            dtype: DType::Float32,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows as usize, self.n_cols as usize)
    }

    fn channel_slice(&self, i: usize, want: DType) -> Result<&[f32]> {
        if self.dtype != want {
            return Err(Error::Format(format!("container holds {:?}, not {want:?}", self.dtype)));
        }
        if i >= self.n_channels as usize {
            return Err(Error::Format(format!("channel {i} of {}", self.n_channels)));
        }
        let len = self.n_rows as usize * self.n_cols as usize * self.dtype.floats();
        Ok(&self.data[i * len..(i + 1) * len])
    }

    pub fn complex_channel(&self, i: usize) -> Result<CMat> {
        let s = self.channel_slice(i, DType::Complex64)?;
        let cols = self.n_cols as usize;
        Ok(CMat::from_fn(self.n_rows as usize, cols, |r, c| {
            let k = 2 * (r * cols + c);
            Complex64::new(s[k] as f64, s[k + 1] as f64)
        }))
    }

    pub fn real_channel(&self, i: usize) -> Result<RMat> {
        let s = self.channel_slice(i, DType::Float32)?;
        let cols = self.n_cols as usize;
        Ok(RMat::from_fn(self.n_rows as usize, cols, |r, c| s[r * cols + c] as f64))
    }

    fn expected_floats(rows: u32, cols: u32, ch: u32, dtype: DType) -> Result<usize> {
        (rows as usize)
            .checked_mul(cols as usize)
            .and_then(|x| x.checked_mul(ch as usize))
            .and_then(|x| x.checked_mul(dtype.floats()))
            .ok_or_else(|| Error::Format("payload size overflows".into()))
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.data.len() * 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        for v in [self.n_rows, self.n_cols, self.n_channels, self.dtype.code()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for f in &self.data {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..6] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().expect("4 bytes"));
        let (n_rows, n_cols, n_channels) = (word(0), word(1), word(2));
        let dtype = DType::from_code(word(3))?;
        let floats = Self::expected_floats(n_rows, n_cols, n_channels, dtype)?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != floats * 4 {
            return Err(Error::Format(format!("payload has {} bytes, header implies {}", payload.len(), floats * 4)));
        }
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok(Self { n_rows, n_cols, n_channels, dtype, data })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Metadata stored next to a container.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sidecar {
    pub frame_id: String,
    /// `frame`, `rv_maps`, `sample` or `confidence`.
    pub kind: String,
    pub channels: Vec<String>,
    pub config: Option<RawConfig>,
    /// Ground-truth paths in normalized units.
    pub paths: Vec<NormalizedPath>,
    pub dcf_offsets: Vec<f64>,
    pub focal_angles_deg: Vec<f64>,
    pub seed: Option<u64>,
    pub provenance: BTreeMap<String, String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Sidecar {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_for(&self, container: &Path) -> Result<()> {
        fs::write(sidecar_path(container), self.to_json()?)?;
        Ok(())
    }

    pub fn read_for(container: &Path) -> Result<Self> {
        let text = fs::read_to_string(sidecar_path(container))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse { field: e.path().to_string(), msg: e.inner().to_string() })
    }

    /// The sidecar when present, `None` when the file does not exist.
    pub fn try_read_for(container: &Path) -> Result<Option<Self>> {
        if sidecar_path(container).exists() {
            Self::read_for(container).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }
}

/// Fails when the filesystem holding `dir` has fewer than `needed` bytes free.
#[cfg(unix)]
pub fn ensure_free_space(dir: &Path, needed: u64) -> Result<()> {
    use std::ffi::CString;
    use std::os::unix::ffi::OsStrExt;

    let c = CString::new(dir.as_os_str().as_bytes())
        .map_err(|_| Error::Config(format!("path {} contains a NUL byte", dir.display())))?;
    // SAFETY: `c` is a valid NUL-terminated path and `st` is a properly
    // sized, writable statvfs buffer that outlives the call.
    let mut st: libc::statvfs = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::statvfs(c.as_ptr(), &mut st) };
    if rc != 0 {
        return Err(Error::Io(std::io::Error::last_os_error()));
    }
    let free = st.f_bavail as u64 * st.f_frsize as u64;
    if free < needed {
        return Err(Error::Io(std::io::Error::other(format!(
            "{} needs {needed} bytes but only {free} are free",
            dir.display()
        ))));
    }
    Ok(())
}

#[cfg(not(unix))]
pub fn ensure_free_space(_dir: &Path, _needed: u64) -> Result<()> {
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let m = RMat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = FrameContainer::from_real(&[&m]).unwrap();
        let b = c.to_bytes();
        assert_eq!(&b[..6], b"ISACB1");
        assert_eq!(&b[6..10], &2u32.to_le_bytes());
        assert_eq!(&b[10..14], &3u32.to_le_bytes());
        assert_eq!(&b[14..18], &1u32.to_le_bytes());
        assert_eq!(&b[18..22], &1u32.to_le_bytes());
        // Row-major payload: second value is row 0, column 1.
        assert_eq!(&b[26..30], &2.0f32.to_le_bytes());
        assert_eq!(b.len(), 22 + 6 * 4);
    }

    #[test]
    fn complex_interleaving() {
        let m = CMat::from_row_slice(1, 2, &[Complex64::new(1.0, -1.0), Complex64::new(2.5, 3.0)]);
        let c = FrameContainer::from_complex(&[&m, &m]).unwrap();
        assert_eq!(c.data[..4], [1.0, -1.0, 2.5, 3.0]);
        assert_eq!(c.byte_len(), 22 + 2 * 2 * 8);
        assert_eq!(c.complex_channel(1).unwrap(), m);
        assert!(c.real_channel(0).is_err());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let m = RMat::zeros(2, 2);
        let mut b = FrameContainer::from_real(&[&m]).unwrap().to_bytes();
        assert!(FrameContainer::from_bytes(&b[..10]).is_err());
        b.push(0);
        assert!(FrameContainer::from_bytes(&b).is_err());
        b.pop();
        b[0] = b'X';
        assert!(FrameContainer::from_bytes(&b).is_err());
        b[0] = b'I';
        b[18] = 7;
        assert!(FrameContainer::from_bytes(&b).is_err());
        assert!(FrameContainer::from_real(&[&m, &RMat::zeros(3, 2)]).is_err());
        assert!(FrameContainer::from_real(&[]).is_err());
    }

    #[test]
    fn file_and_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let m = RMat::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.25);
        let c = FrameContainer::from_real(&[&m]).unwrap();
        c.write(&p).unwrap();
        assert_eq!(FrameContainer::read(&p).unwrap(), c);
        let s = Sidecar {
            frame_id: "x".into(),
            kind: "confidence".into(),
            channels: vec!["conf".into()],
            ..Sidecar::default()
        };
        s.write_for(&p).unwrap();
        assert!(sidecar_path(&p).ends_with("f.bin.json"));
        assert_eq!(Sidecar::read_for(&p).unwrap(), s);
        std::fs::write(sidecar_path(&p), "{\"frame_id\": 3}").unwrap();
        match Sidecar::read_for(&p) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "frame_id"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_space_check() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ensure_free_space(dir.path(), 1).is_ok());
        assert!(ensure_free_space(dir.path(), u64::MAX).is_err());
    }

    proptest! {
        #[test]
        fn bytes_roundtrip_bit_identical(
            rows in 1usize..6, cols in 1usize..6, ch in 1usize..4, complex in any::<bool>(),
            seed in any::<u32>()
        ) {
            let mut x = seed as f32;
            let floats = rows * cols * ch * if complex { 2 } else { 1 };
            let data: Vec<f32> = (0..floats).map(|i| { x = (x * 1.37 + i as f32).sin() * 1e3; x }).collect();
            let c = FrameContainer {
                n_rows: rows as u32, n_cols: cols as u32, n_channels: ch as u32,
                dtype: if complex { DType::Complex64 } else { DType::Float32 }, data,
            };
            let b = c.to_bytes();
            let back = FrameContainer::from_bytes(&b).unwrap();
            prop_assert_eq!(back.to_bytes(), b);
        }
    }
}
