//! `.fmtlckpt` files: an 8-byte magic, a little-endian `u64` header length,
//! a UTF-8 JSON header carrying the layout, then the parameter values as
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Layout, SegmentedParams};
use crate::error::{FmtlError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FMTLCKPT";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    count: usize,
    layout: Layout,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &SegmentedParams) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        format_version: 1,
        count: params.len(),
        layout: params.layout().clone(),
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<SegmentedParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(FmtlError::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let header_len = u64::from_le_bytes(len) as usize;
    if header_len > 1 << 24 {
        return Err(FmtlError::Format(format!("header of {header_len} bytes")));
    }
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.format_version != 1 {
        return Err(FmtlError::Format(format!(
            "unsupported version {}",
            header.format_version
        )));
    }
    if header.count != header.layout.total_len() {
        return Err(FmtlError::Format(format!(
            "count {} disagrees with layout length {}",
            header.count,
            header.layout.total_len()
        )));
    }
    let mut values = Vec::with_capacity(header.count);
    let mut buf = [0u8; 8];
    for _ in 0..header.count {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(FmtlError::Format("trailing bytes after values".into()));
    }
    SegmentedParams::new(header.layout, values)
}

pub fn save_checkpoint(path: &Path, params: &SegmentedParams) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params)
}

pub fn load_checkpoint(path: &Path) -> Result<SegmentedParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_preserves_bits(vals in proptest::collection::vec(proptest::num::f64::ANY, 1..40), split in 0usize..40) {
            let split = split.min(vals.len());
            let layout = Layout::from_lengths([("encoder", split), ("decoder:shared", vals.len() - split)]).unwrap();
            let p = SegmentedParams::new(layout, vals).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &p).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(back.layout(), p.layout());
            let a: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = p.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let p = SegmentedParams::new(
            Layout::from_lengths([("encoder", 3)]).unwrap(),
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(read_checkpoint(buf.as_slice()).is_err());
        assert!(read_checkpoint(&b"NOTACKPT"[..]).is_err());
    }
}
