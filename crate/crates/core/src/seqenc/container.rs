//! Binary batch container: `ASEQ1`, C and L as u32, the vocabulary hash as
//! u64, then the index grid as u32, all little-endian.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::TokenSequenceBatch;

pub const ASEQ_MAGIC: &[u8; 5] = b"ASEQ1";

pub fn write_batch<W: Write>(batch: &TokenSequenceBatch, mut w: W) -> Result<()> {
    w.write_all(ASEQ_MAGIC)?;
    w.write_all(&(batch.channels as u32).to_le_bytes())?;
    w.write_all(&(batch.seq_len as u32).to_le_bytes())?;
    w.write_all(&batch.vocab_hash.to_le_bytes())?;
    let mut buf = Vec::with_capacity(batch.tokens.len() * 4);
    for t in &batch.tokens {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_batch<R: Read>(mut r: R) -> Result<TokenSequenceBatch> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Input(format!("sequence container: {m}"));
    if bytes.len() < 21 || &bytes[..5] != ASEQ_MAGIC {
        return Err(bad("missing ASEQ1 header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let channels = u32_at(5) as usize;
    let seq_len = u32_at(9) as usize;
    let vocab_hash = u64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
    let body = &bytes[21..];
    let row = channels * seq_len * 4;
    if row == 0 || body.len() % row != 0 {
        return Err(bad("grid size is not a multiple of C * L"));
    }
    let tokens = body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(TokenSequenceBatch { channels, seq_len, vocab_hash, tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let b = TokenSequenceBatch { channels: 2, seq_len: 3, vocab_hash: 99, tokens: (0..12).collect() };
        let mut buf = Vec::new();
        write_batch(&b, &mut buf).unwrap();
        assert_eq!(read_batch(&buf[..]).unwrap(), b);
        assert!(read_batch(&buf[..buf.len() - 2]).is_err());
        assert!(read_batch(&b"ASEQ2"[..]).is_err());
    }
}
