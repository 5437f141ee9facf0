//! IQ sample files.
//!
//! Layout: 16-byte header (`b"SXIQ"`, format version as u32 LE, sample rate
//! in Hz as u64 LE) followed by interleaved f32 LE pairs (I, Q).

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::num_complex::Complex32;
use crate::signal::IqBuffer;

pub const MAGIC: [u8; 4] = *b"SXIQ";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 16;

fn header(sample_rate: f64) -> Result<[u8; 16]> {
    if !(sample_rate > 0.0) || sample_rate.fract() != 0.0 || sample_rate > u64::MAX as f64 {
        return Err(Error::invalid(format!(
            "sample rate {sample_rate} must be a positive whole number of Hz"
        )));
    }
    let mut h = [0u8; 16];
    h[..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&VERSION.to_le_bytes());
    h[8..].copy_from_slice(&(sample_rate as u64).to_le_bytes());
    Ok(h)
}

fn parse_header(h: &[u8; 16]) -> Result<f64> {
    if h[..4] != MAGIC {
        return Err(Error::format("bad magic, not an SXIQ file"));
    }
    let version = u32::from_le_bytes(h[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let rate = u64::from_le_bytes(h[8..].try_into().expect("8 bytes"));
    if rate == 0 {
        return Err(Error::format("zero sample rate"));
    }
    Ok(rate as f64)
}

fn encode(samples: &[Complex32], out: &mut Vec<u8>) {
    out.clear();
    out.reserve(samples.len() * 8);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
}

pub fn save_iq(buffer: &IqBuffer, path: impl AsRef<Path>) -> Result<()> {
    let mut w = IqWriter::create(path, buffer.sample_rate)?;
    w.write(&buffer.samples)?;
    w.finish()
}

/// Loads a whole file. `start_time` is not stored and reads back as 0.
pub fn load_iq(path: impl AsRef<Path>) -> Result<IqBuffer> {
    let mut r = IqReader::open(path)?;
    let n = r.len();
    let samples = r.read_chunk(n)?;
    IqBuffer::new(samples, r.sample_rate(), 0.0)
}

/// Streaming writer.
pub struct IqWriter {
    out: BufWriter<File>,
    scratch: Vec<u8>,
}

impl IqWriter {
    pub fn create(path: impl AsRef<Path>, sample_rate: f64) -> Result<Self> {
        let h = header(sample_rate)?;
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&h)?;
        Ok(IqWriter {
            out,
            scratch: Vec::new(),
        })
    }

    pub fn write(&mut self, samples: &[Complex32]) -> Result<()> {
        encode(samples, &mut self.scratch);
        self.out.write_all(&self.scratch)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Streaming reader over consecutive chunks.
pub struct IqReader {
    input: BufReader<File>,
    sample_rate: f64,
    len: usize,
    position: usize,
    scratch: Vec<u8>,
}

impl IqReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = File::open(path)?;
        let size = f.metadata()?.len();
        let mut h = [0u8; 16];
        match f.read_exact(&mut h) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                return Err(Error::format("file shorter than the 16-byte header"))
            }
            Err(e) => return Err(e.into()),
        }
        let sample_rate = parse_header(&h)?;
        let body = size - HEADER_LEN;
        if body % 8 != 0 {
            return Err(Error::format(format!(
                "truncated sample data ({body} bytes is not a whole number of samples)"
            )));
        }
        f.seek(SeekFrom::Start(HEADER_LEN))?;
        Ok(IqReader {
            input: BufReader::with_capacity(1 << 20, f),
            sample_rate,
            len: (body / 8) as usize,
            position: 0,
            scratch: Vec::new(),
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Total samples in the file.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of the next sample to be read.
    pub fn position(&self) -> usize {
        self.position
    }

    /// Reads up to `n` samples (fewer at end of file).
    pub fn read_chunk(&mut self, n: usize) -> Result<Vec<Complex32>> {
        let n = n.min(self.len - self.position);
        self.scratch.resize(n * 8, 0);
        self.input.read_exact(&mut self.scratch)?;
        self.position += n;
        Ok(self
            .scratch
            .chunks_exact(8)
            .map(|b| {
                Complex32::new(
                    f32::from_le_bytes(b[..4].try_into().expect("4 bytes")),
                    f32::from_le_bytes(b[4..].try_into().expect("4 bytes")),
                )
            })
            .collect())
    }

    /// Moves to sample index `index`.
    pub fn seek(&mut self, index: usize) -> Result<()> {
        if index > self.len {
            return Err(Error::invalid(format!("seek past end ({index} > {})", self.len)));
        }
        self.input
            .seek(SeekFrom::Start(HEADER_LEN + index as u64 * 8))?;
        self.position = index;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buffer(n: usize) -> IqBuffer {
        let s = (0..n)
            .map(|i| Complex32::new(i as f32 * 0.5 - 3.0, -(i as f32).sqrt()))
            .collect();
        IqBuffer::new(s, 10e6, 0.0).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.iq");
        let b = buffer(1000);
        save_iq(&b, &p).unwrap();
        let l = load_iq(&p).unwrap();
        assert_eq!(l.sample_rate, 10e6);
        assert_eq!(l.samples.len(), 1000);
        for (x, y) in b.samples.iter().zip(&l.samples) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 16 + 8000);
    }

    #[test]
    fn empty_buffer_keeps_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.iq");
        save_iq(&IqBuffer::new(vec![], 4_092_000.0, 0.0).unwrap(), &p).unwrap();
        let l = load_iq(&p).unwrap();
        assert!(l.is_empty());
        assert_eq!(l.sample_rate, 4_092_000.0);
    }

    #[test]
    fn truncated_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.iq");
        save_iq(&buffer(10), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_iq(&p), Err(Error::Format(_))));
        std::fs::write(&p, &bytes[..10]).unwrap();
        assert!(matches!(load_iq(&p), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(load_iq(&p), Err(Error::Format(_))));
        assert!(matches!(load_iq(dir.path().join("missing")), Err(Error::Io(_))));
    }

    #[test]
    fn chunked_reads_and_seek() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.iq");
        let b = buffer(100);
        let mut w = IqWriter::create(&p, b.sample_rate).unwrap();
        w.write(&b.samples[..40]).unwrap();
        w.write(&b.samples[40..]).unwrap();
        w.finish().unwrap();
        let mut r = IqReader::open(&p).unwrap();
        assert_eq!(r.len(), 100);
        let a = r.read_chunk(30).unwrap();
        let c = r.read_chunk(100).unwrap();
        assert_eq!(a.len() + c.len(), 100);
        assert_eq!(c[0], b.samples[30]);
        r.seek(95).unwrap();
        assert_eq!(r.read_chunk(10).unwrap(), b.samples[95..].to_vec());
        assert!(r.seek(101).is_err());
    }

    #[test]
    fn rejects_fractional_rate() {
        let dir = tempfile::tempdir().unwrap();
        let b = IqBuffer::new(vec![], 2.5e6 + 0.5, 0.0).unwrap();
        assert!(save_iq(&b, dir.path().join("f")).is_err());
    }
}
