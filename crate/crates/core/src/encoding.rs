//! Canonical byte encoding shared by keys, ciphertexts, envelopes, proofs and
//! ledger payloads.
//!
//! Every variable-length field is a `u32` big-endian length followed by the
//! bytes. Unsigned integers are minimal big-endian (zero is a single `0x00`
//! byte); fixed-width integers are left-padded to an exact byte count. The
//! reader rejects non-minimal encodings and trailing bytes, so each value has
//! exactly one encoding.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input while reading {0}")]
    Truncated(&'static str),
    #[error("{0} bytes of trailing data")]
    TrailingBytes(usize),
    #[error("non-canonical integer encoding")]
    NonCanonicalInteger,
    #[error("field has length {found}, expected {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("invalid tag {tag} for {what}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("invalid utf-8 in string field")]
    InvalidUtf8,
    #[error("invalid value: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Raw bytes with no length prefix. Only for fixed-size fields.
    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
        self.u32(len);
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn biguint(&mut self, v: &BigUint) -> &mut Self {
        self.bytes(&v.to_bytes_be())
    }

    /// Length-prefixed, left-padded to exactly `width` bytes.
    pub fn biguint_fixed(&mut self, v: &BigUint, width: usize) -> &mut Self {
        self.bytes(&to_fixed_be(v, width))
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub fn to_fixed_be(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= width, "integer wider than {width} bytes");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(DecodeError::Truncated(what))?;
        if end > self.data.len() {
            return Err(DecodeError::Truncated(what));
        }
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1, "u8")?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4, "u32")?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8, "u64")?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        self.take(n, "fixed field")
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N, "fixed field")?.try_into().unwrap())
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len, "length-prefixed field")
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| DecodeError::InvalidUtf8)
    }

    pub fn biguint(&mut self) -> Result<BigUint, DecodeError> {
        let b = self.bytes()?;
        if b.is_empty() || (b.len() > 1 && b[0] == 0) {
            return Err(DecodeError::NonCanonicalInteger);
        }
        Ok(BigUint::from_bytes_be(b))
    }

    pub fn biguint_fixed(&mut self, width: usize) -> Result<BigUint, DecodeError> {
        let b = self.bytes()?;
        if b.len() != width {
            return Err(DecodeError::WrongLength {
                expected: width,
                found: b.len(),
            });
        }
        Ok(BigUint::from_bytes_be(b))
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_minimal() {
        let mut w = Writer::new();
        w.biguint(&BigUint::from(0u8))
            .biguint(&BigUint::from(258u32));
        let bytes = w.finish();
        assert_eq!(bytes, [0, 0, 0, 1, 0, 0, 0, 0, 2, 1, 2]);
        let mut r = Reader::new(&bytes);
        assert_eq!(r.biguint().unwrap(), BigUint::from(0u8));
        assert_eq!(r.biguint().unwrap(), BigUint::from(258u32));
        r.finish().unwrap();
    }

    #[test]
    fn leading_zero_rejected() {
        let bytes = [0, 0, 0, 2, 0, 5];
        assert_eq!(
            Reader::new(&bytes).biguint(),
            Err(DecodeError::NonCanonicalInteger)
        );
    }

    #[test]
    fn truncated_and_trailing() {
        assert!(Reader::new(&[0, 0, 0, 9, 1]).bytes().is_err());
        let r = Reader::new(&[1]);
        assert_eq!(r.finish(), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn fixed_width_padding() {
        let mut w = Writer::new();
        w.biguint_fixed(&BigUint::from(7u8), 4);
        let bytes = w.finish();
        assert_eq!(bytes, [0, 0, 0, 4, 0, 0, 0, 7]);
        assert_eq!(
            Reader::new(&bytes).biguint_fixed(4).unwrap(),
            BigUint::from(7u8)
        );
        assert!(matches!(
            Reader::new(&bytes).biguint_fixed(5),
            Err(DecodeError::WrongLength { .. })
        ));
    }
}
