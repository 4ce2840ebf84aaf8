//! Little-endian cursor helpers shared by the binary file formats.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("format error at byte offset {offset}: {message}")]
pub struct FormatError {
    pub offset: usize,
    pub message: String,
}

pub(crate) struct ReadCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ReadCursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ReadCursor { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn fail(&self, message: impl Into<String>) -> FormatError {
        FormatError { offset: self.pos, message: message.into() }
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < len {
            return Err(self.fail(format!(
                "truncated: needed {len} bytes, {} remain",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<(), FormatError> {
        let got = self.take(magic.len())?;
        if got != magic {
            return Err(FormatError {
                offset: 0,
                message: format!(
                    "bad magic: expected {:?}, got {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(got)
                ),
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn done(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(self.fail(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) struct WriteBuf {
    pub buf: Vec<u8>,
}

impl WriteBuf {
    pub fn new(magic: &[u8]) -> Self {
        WriteBuf { buf: magic.to_vec() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }
}
