use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Reads keys as raw little-endian u64 or, with `text`, one decimal per line.
pub fn read_keys(path: &Path, text: bool) -> Result<Vec<u64>> {
    let file = File::open(path).with_context(|| format!("opening key file {}", path.display()))?;
    let mut reader = BufReader::new(file);
    if text {
        let mut keys = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let x = t
                .parse::<u64>()
                .with_context(|| format!("{}:{}: not an unsigned 64-bit integer", path.display(), i + 1))?;
            keys.push(x);
        }
        Ok(keys)
    } else {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            bail!("{}: length {} is not a multiple of 8 bytes", path.display(), bytes.len());
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn write_keys<I: IntoIterator<Item = u64>>(path: &Path, keys: I, text: bool) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in keys {
        if text {
            writeln!(w, "{x}")?;
        } else {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}
