//! `FBNK` feature banks.
//!
//! ```text
//! "FBNK" | u16 version | kind (u32 len + UTF-8) | u32 dim | u64 count
//! count x ( id (u32 len + UTF-8) | dim x f32 LE )
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const FBNK_MAGIC: &[u8; 4] = b"FBNK";
pub const FBNK_VERSION: u16 = 1;

// Ids and kind names longer than this are treated as corruption.
const MAX_STRING: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    kind: String,
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureBank {
    pub fn new(kind: &str, dim: usize) -> Self {
        Self {
            kind: kind.to_string(),
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: &str, values: &[f32]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::shape("bank entry", self.dim, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("bank entry `{id}`")));
        }
        if self.index.contains_key(id) {
            return Err(Error::Format(format!("duplicate bank id `{id}`")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.entry(i).1)
    }

    pub fn entry(&self, i: usize) -> (&str, &[f32]) {
        (&self.ids[i], &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        (0..self.len()).map(|i| self.entry(i))
    }
}

fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_bank(bank: &FeatureBank, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(FBNK_MAGIC)?;
    w.write_all(&FBNK_VERSION.to_le_bytes())?;
    put_str(&mut w, &bank.kind)?;
    w.write_all(&(bank.dim as u32).to_le_bytes())?;
    w.write_all(&(bank.len() as u64).to_le_bytes())?;
    for (id, values) in bank.iter() {
        put_str(&mut w, id)?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated FBNK file".into())
    } else {
        Error::Io(e)
    }
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b)
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let len = u32::from_le_bytes(get(r)?);
    if len > MAX_STRING {
        return Err(Error::Format(format!("FBNK string length {len} too large")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Format("FBNK string is not UTF-8".into()))
}

pub fn read_bank(r: impl Read) -> Result<FeatureBank> {
    let mut r = BufReader::new(r);
    if &get::<4>(&mut r)? != FBNK_MAGIC {
        return Err(Error::Format("bad FBNK magic".into()));
    }
    let version = u16::from_le_bytes(get(&mut r)?);
    if version != FBNK_VERSION {
        return Err(Error::Format(format!("unsupported FBNK version {version}")));
    }
    let kind = get_str(&mut r)?;
    let dim = u32::from_le_bytes(get(&mut r)?) as usize;
    let count = u64::from_le_bytes(get(&mut r)?);
    dim.checked_mul(4)
        .ok_or_else(|| Error::Format(format!("FBNK dim {dim} overflows")))?;
    let mut bank = FeatureBank::new(&kind, dim);
    // Grown as bytes arrive so a corrupt header cannot force a huge allocation.
    let mut values = Vec::with_capacity(dim.min(1 << 16));
    for _ in 0..count {
        let id = get_str(&mut r)?;
        values.clear();
        for _ in 0..dim {
            values.push(f32::from_le_bytes(get(&mut r)?));
        }
        bank.insert(&id, &values).map_err(|e| Error::Format(e.to_string()))?;
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after FBNK entries".into()));
    }
    Ok(bank)
}

pub fn save_bank(bank: &FeatureBank, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    write_bank(bank, fs::File::create(&tmp)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_bank(path: &Path) -> Result<FeatureBank> {
    read_bank(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn bytes(bank: &FeatureBank) -> Vec<u8> {
        let mut out = Vec::new();
        write_bank(bank, &mut out).unwrap();
        out
    }

    #[test]
    fn empty_bank_roundtrips() {
        let b = FeatureBank::new("lbp", 4640);
        let raw = bytes(&b);
        assert_eq!(raw.len(), 4 + 2 + 4 + 3 + 4 + 8);
        assert_eq!(read_bank(raw.as_slice()).unwrap(), b);
    }

    #[test]
    fn random_entries_roundtrip_bit_exactly() {
        let mut rng = SeededRng::new(0);
        let mut b = FeatureBank::new("fv", 7);
        for i in 0..1000 {
            let v: Vec<f32> = (0..7)
                .map(|_| loop {
                    let x = f32::from_bits(rng.next_u64() as u32);
                    if x.is_finite() {
                        break x;
                    }
                })
                .collect();
            b.insert(&format!("img{i:05}"), &v).unwrap();
        }
        let raw = bytes(&b);
        let back = read_bank(raw.as_slice()).unwrap();
        assert_eq!(bytes(&back), raw);
        for ((ia, va), (ib, vb)) in b.iter().zip(back.iter()) {
            assert_eq!(ia, ib);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(va), bits(vb));
        }
    }

    #[test]
    fn corruption_is_rejected() {
        let mut b = FeatureBank::new("cnn", 2);
        b.insert("a", &[1.0, 2.0]).unwrap();
        let raw = bytes(&b);
        let mut bad = raw.clone();
        bad[0] = b'X';
        assert!(matches!(read_bank(bad.as_slice()), Err(Error::Format(_))));
        for cut in [3, 10, raw.len() - 1] {
            assert!(matches!(read_bank(&raw[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut long = raw.clone();
        long.push(7);
        assert!(read_bank(long.as_slice()).is_err());
        // Huge dim with a tiny body is a truncation, not an allocation.
        let mut huge = raw[..4 + 2 + 4 + 3].to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&1u64.to_le_bytes());
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.push(b'a');
        assert!(read_bank(huge.as_slice()).is_err());
    }

    #[test]
    fn insert_checks() {
        let mut b = FeatureBank::new("k", 2);
        assert!(b.insert("a", &[1.0]).is_err());
        assert!(b.insert("a", &[f32::NAN, 1.0]).is_err());
        b.insert("a", &[1.0, 2.0]).unwrap();
        assert!(b.insert("a", &[1.0, 2.0]).is_err());
        assert_eq!(b.get("a"), Some(&[1.0f32, 2.0][..]));
        assert_eq!(b.get("b"), None);
    }
}
