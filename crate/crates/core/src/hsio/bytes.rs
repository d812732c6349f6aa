use super::HsioError;

/// Bounds-checked cursor over a borrowed byte slice.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8], big_endian: bool) -> Self {
        ByteReader { buf, pos: 0, big_endian }
    }

    pub(crate) fn at(buf: &'a [u8], pos: usize, big_endian: bool) -> Self {
        ByteReader { buf, pos, big_endian }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len().saturating_sub(self.pos)
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], HsioError> {
        if n > self.remaining() {
            return Err(HsioError::TruncatedPayload { offset: self.pos, needed: n, available: self.remaining() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn skip(&mut self, n: usize) -> Result<(), HsioError> {
        self.take(n).map(|_| ())
    }

    pub(crate) fn u8(&mut self) -> Result<u8, HsioError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, HsioError> {
        let b: [u8; 4] = self.take(4)?.try_into().expect("length checked");
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    pub(crate) fn f64(&mut self) -> Result<f64, HsioError> {
        let b: [u8; 8] = self.take(8)?.try_into().expect("length checked");
        Ok(if self.big_endian { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) })
    }
}
