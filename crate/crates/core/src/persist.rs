//! Self-describing binary envelope shared by every saved model.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   identifies the artifact kind
//! version      u32       FORMAT_VERSION
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON
//! payload      rest of file
//! ```

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) const CLASSIFIER_MAGIC: &[u8; 8] = b"HMNYCLF\0";
pub(crate) const HARMONY_MAGIC: &[u8; 8] = b"HMNYHRM\0";
pub(crate) const ENSEMBLE_MAGIC: &[u8; 8] = b"HMNYENS\0";

pub(crate) fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header).map_err(|e| Error::Format(format!("cannot encode header: {e}")))?;
    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    Ok(out)
}

pub(crate) fn decode<'a, H: DeserializeOwned>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 20 {
        return Err(Error::Format("file too short for header".into()));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "wrong magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header =
        serde_json::from_slice(&bytes[20..header_end]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    Ok((header, &bytes[header_end..]))
}

pub(crate) fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Reads `n` little-endian f64 values from the front of `bytes`.
pub(crate) fn take_f64s(bytes: &[u8], n: usize) -> Result<(Vec<f64>, &[u8])> {
    let len = n
        .checked_mul(8)
        .filter(|&l| l <= bytes.len())
        .ok_or_else(|| Error::Format(format!("truncated payload: need {n} values")))?;
    let values = bytes[..len]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((values, &bytes[len..]))
}

/// Splits concatenated sub-files by their recorded lengths.
pub(crate) fn split_sections<'a>(mut bytes: &'a [u8], lengths: &[u64]) -> Result<Vec<&'a [u8]>> {
    let mut out = Vec::with_capacity(lengths.len());
    for &len in lengths {
        let len = usize::try_from(len).map_err(|_| Error::Format("section too large".into()))?;
        if len > bytes.len() {
            return Err(Error::Format("truncated section".into()));
        }
        let (head, rest) = bytes.split_at(len);
        out.push(head);
        bytes = rest;
    }
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len())));
    }
    Ok(out)
}

/// Writes through a temporary file in the same directory, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let bytes = encode(CLASSIFIER_MAGIC, &vec![1, 2, 3], &[9, 8]).unwrap();
        let (h, payload): (Vec<i32>, _) = decode(CLASSIFIER_MAGIC, &bytes).unwrap();
        assert_eq!(h, vec![1, 2, 3]);
        assert_eq!(payload, &[9, 8]);
    }

    #[test]
    fn wrong_magic_and_version() {
        let bytes = encode(CLASSIFIER_MAGIC, &0, &[]).unwrap();
        assert!(decode::<i32>(HARMONY_MAGIC, &bytes).is_err());
        let mut bumped = bytes.clone();
        bumped[8] = 99;
        let err = decode::<i32>(CLASSIFIER_MAGIC, &bumped).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert!(decode::<i32>(CLASSIFIER_MAGIC, &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn f64_blobs() {
        let mut out = Vec::new();
        push_f64s(&mut out, &[1.5, -0.0, f64::MIN_POSITIVE]);
        let (v, rest) = take_f64s(&out, 3).unwrap();
        assert_eq!(v, vec![1.5, -0.0, f64::MIN_POSITIVE]);
        assert!(rest.is_empty());
        assert!(take_f64s(&out, 4).is_err());
    }
}
