//! On-disk layout:
//!
//! ```text
//! <dir>/meta.json
//! <dir>/clients/<split>/<id>.feat   f32 little-endian, row-major rows x dim
//! <dir>/clients/<split>/<id>.lab    i32 little-endian, one per row
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{assign_sample_weights, ClientDataset, DataError, FederatedDataset, SynthConfig};

const FORMAT_VERSION: u32 = 1;
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u32,
    config: SynthConfig,
    train: Vec<ClientEntry>,
    val: Vec<ClientEntry>,
    test: Vec<ClientEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientEntry {
    id: u32,
    rows: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, offset: u64, message: impl Into<String>) -> DataError {
    DataError::Parse { path: path.display().to_string(), offset, message: message.into() }
}

fn client_path(dir: &Path, split: &str, id: u32, ext: &str) -> PathBuf {
    dir.join("clients").join(split).join(format!("{id}.{ext}"))
}

pub fn save(dataset: &FederatedDataset, dir: &Path) -> Result<(), DataError> {
    let entries = |clients: &[ClientDataset]| {
        clients.iter().map(|c| ClientEntry { id: c.id, rows: c.rows() }).collect::<Vec<_>>()
    };
    let meta = Meta {
        format_version: FORMAT_VERSION,
        config: dataset.config.clone(),
        train: entries(&dataset.train),
        val: entries(&dataset.val),
        test: entries(&dataset.test),
    };
    for (split, clients) in dataset.splits() {
        let split_dir = dir.join("clients").join(split);
        fs::create_dir_all(&split_dir).map_err(io_err(&split_dir))?;
        for c in clients {
            let feat: Vec<u8> = c.features.iter().flat_map(|v| v.to_le_bytes()).collect();
            let lab: Vec<u8> = c.labels.iter().flat_map(|&y| (y as i32).to_le_bytes()).collect();
            let p = client_path(dir, split, c.id, "feat");
            fs::write(&p, feat).map_err(io_err(&p))?;
            let p = client_path(dir, split, c.id, "lab");
            fs::write(&p, lab).map_err(io_err(&p))?;
        }
    }
    let p = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&p, json).map_err(io_err(&p))
}

/// Byte offset of a 1-based (line, column) position reported by serde_json.
fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)) as u64
}

fn read_words(path: &Path, expected: usize) -> Result<Vec<[u8; 4]>, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 4 != 0 {
        return Err(parse_err(path, (bytes.len() - bytes.len() % 4) as u64, "truncated 4-byte value"));
    }
    if bytes.len() != expected * 4 {
        let offset = bytes.len().min(expected * 4) as u64;
        return Err(parse_err(path, offset, format!("expected {expected} values, found {}", bytes.len() / 4)));
    }
    Ok(bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect())
}

fn load_client(dir: &Path, split: &str, entry: &ClientEntry, cfg: &SynthConfig) -> Result<ClientDataset, DataError> {
    let dim = cfg.input_dim;
    let p = client_path(dir, split, entry.id, "feat");
    let features: Vec<f32> = read_words(&p, entry.rows * dim)?.into_iter().map(f32::from_le_bytes).collect();
    let p = client_path(dir, split, entry.id, "lab");
    let labels = read_words(&p, entry.rows)?
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let y = i32::from_le_bytes(w);
            if y < 0 || y as usize >= cfg.n_classes {
                Err(parse_err(&p, 4 * i as u64, format!("label {y} outside [0, {})", cfg.n_classes)))
            } else {
                Ok(y as u32)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(ClientDataset { id: entry.id, dim, features, labels, weight: 0.0 })
}

pub fn load(dir: &Path) -> Result<FederatedDataset, DataError> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Meta = serde_json::from_str(&text)
        .map_err(|e| parse_err(&meta_path, byte_offset(&text, e.line(), e.column()), e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(parse_err(&meta_path, 0, format!("unsupported format_version {}", meta.format_version)));
    }
    meta.config.validate()?;
    let mut splits = Vec::with_capacity(3);
    for (split, entries) in SPLITS.iter().zip([&meta.train, &meta.val, &meta.test]) {
        let mut clients =
            entries.iter().map(|e| load_client(dir, split, e, &meta.config)).collect::<Result<Vec<_>, _>>()?;
        if !clients.is_empty() {
            assign_sample_weights(&mut clients);
        }
        splits.push(clients);
    }
    let test = splits.pop().unwrap_or_default();
    let val = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(FederatedDataset { config: meta.config, train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_from_line_column() {
        let text = "{\n  \"a\": 1,\n  x\n}";
        assert_eq!(byte_offset(text, 1, 1), 0);
        assert_eq!(byte_offset(text, 3, 3), 14);
        assert_eq!(&text[14..15], "x");
    }
}
