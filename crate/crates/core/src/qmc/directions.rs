//! Bundled Sobol' direction-number table, verified against its embedded
//! SHA-256 checksum on first use.

use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const TABLE_TEXT: &str = include_str!("../../data/joe_kuo_1024.txt");
const SUPPORTED_FORMAT: u32 = 1;

/// Maximum number of dimensions the bundled table supports.
pub const MAX_DIM: usize = 1024;

/// Primitive-polynomial data for one Sobol' dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionEntry {
    pub dim: usize,
    /// Degree of the primitive polynomial.
    pub degree: u32,
    /// Interior polynomial coefficients packed as bits.
    pub coeffs: u32,
    /// Initial odd direction integers `m_1 .. m_degree`.
    pub m: Vec<u64>,
}

/// Parse and verify a direction-number table in the bundled text layout.
pub fn parse_table(text: &str) -> Result<Vec<DirectionEntry>> {
    let bad = |msg: String| Error::DirectionTable(msg);
    let mut format = None;
    let mut checksum = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("format:") {
                format = Some(v.trim().parse::<u32>().map_err(|e| bad(format!("format: {e}")))?);
            } else if let Some(v) = comment.strip_prefix("sha256:") {
                checksum = Some(v.trim().to_ascii_lowercase());
            }
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }
    match format {
        Some(SUPPORTED_FORMAT) => {}
        Some(other) => return Err(bad(format!("unsupported format version {other}"))),
        None => return Err(bad("missing format version".into())),
    }
    let expected = checksum.ok_or_else(|| bad("missing checksum".into()))?;
    let actual: String = Sha256::digest(body.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    if actual != expected {
        return Err(bad(format!("checksum mismatch: expected {expected}, got {actual}")));
    }

    let mut entries = Vec::new();
    for (idx, line) in body.lines().enumerate().skip(1) {
        let fields: Vec<u64> = line
            .split_whitespace()
            .map(|f| f.parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", idx + 1)))?;
        if fields.len() < 4 {
            return Err(bad(format!("row {} is too short", idx + 1)));
        }
        let degree = fields[1] as u32;
        let m = fields[3..].to_vec();
        if m.len() != degree as usize || m.iter().enumerate().any(|(k, &mk)| mk % 2 == 0 || mk >> (k + 1) != 0) {
            return Err(bad(format!("row {} has invalid direction integers", idx + 1)));
        }
        entries.push(DirectionEntry { dim: fields[0] as usize, degree, coeffs: fields[2] as u32, m });
    }
    for (k, e) in entries.iter().enumerate() {
        if e.dim != k + 2 {
            return Err(bad(format!("dimensions out of sequence at {}", e.dim)));
        }
    }
    Ok(entries)
}

fn table() -> Result<&'static [DirectionEntry]> {
    static TABLE: OnceLock<Result<Vec<DirectionEntry>>> = OnceLock::new();
    match TABLE.get_or_init(|| parse_table(TABLE_TEXT)) {
        Ok(v) => Ok(v.as_slice()),
        Err(e) => Err(e.clone()),
    }
}

/// 64-bit direction words `v_1 .. v_64` for dimensions `0 .. d`.
pub fn direction_words(d: usize) -> Result<Vec<[u64; 64]>> {
    if d > MAX_DIM {
        return Err(Error::UnsupportedDimension { requested: d, available: MAX_DIM });
    }
    let table = table()?;
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let mut v = [0u64; 64];
        if k == 0 {
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = 1u64 << (63 - j);
            }
        } else {
            let e = &table[k - 1];
            let s = e.degree as usize;
            for (j, vj) in v.iter_mut().enumerate().take(s) {
                *vj = e.m[j] << (63 - j);
            }
            for j in s..64 {
                let mut w = v[j - s] ^ (v[j - s] >> s);
                for i in 1..s {
                    if (e.coeffs >> (s - 1 - i)) & 1 == 1 {
                        w ^= v[j - i];
                    }
                }
                v[j] = w;
            }
        }
        out.push(v);
    }
    Ok(out)
}
