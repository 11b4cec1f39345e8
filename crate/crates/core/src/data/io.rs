//! JSON-lines ingestion of raw comparisons.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::RawPreferencePair;
use crate::error::{Error, Result};

pub fn read_pairs_jsonl(reader: impl BufRead) -> Result<Vec<RawPreferencePair>> {
    let mut out = Vec::new();
    for (record, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: RawPreferencePair = serde_json::from_str(&line).map_err(|e| Error::Ingest {
            record,
            reason: e.to_string(),
        })?;
        if pair.chosen.len() != pair.rejected.len() {
            return Err(Error::Ingest {
                record,
                reason: format!(
                    "chosen has {} features, rejected has {}",
                    pair.chosen.len(),
                    pair.rejected.len()
                ),
            });
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<RawPreferencePair>> {
    let file = std::fs::File::open(path)?;
    read_pairs_jsonl(std::io::BufReader::new(file))
}

pub fn write_pairs_jsonl(mut writer: impl Write, pairs: &[RawPreferencePair]) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_record() {
        let text = r#"{"prompt":[0.5,1.0],"chosen":[1.0],"rejected":[0.0],"worker":"w7","prompt_id":"q1"}

{"prompt":[],"chosen":[2.0],"rejected":[3.0],"domain":"askscience","prompt_id":"q2"}
"#;
        let pairs = read_pairs_jsonl(text.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].worker.as_deref(), Some("w7"));
        assert_eq!(pairs[1].domain.as_deref(), Some("askscience"));

        let mut buf = Vec::new();
        write_pairs_jsonl(&mut buf, &pairs).unwrap();
        assert_eq!(read_pairs_jsonl(buf.as_slice()).unwrap(), pairs);
    }

    #[test]
    fn bad_record_is_located() {
        let text = "{\"prompt\":[],\"chosen\":[1],\"rejected\":[0],\"prompt_id\":\"a\"}\n{\"prompt\":[]}\n";
        match read_pairs_jsonl(text.as_bytes()) {
            Err(Error::Ingest { record, .. }) => assert_eq!(record, 1),
            other => panic!("{other:?}"),
        }
        let text = "{\"prompt\":[],\"chosen\":[1,2],\"rejected\":[0],\"prompt_id\":\"a\"}\n";
        assert!(matches!(read_pairs_jsonl(text.as_bytes()), Err(Error::Ingest { record: 0, .. })));
    }
}
