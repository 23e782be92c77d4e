//! Similarity-score CSV. Required columns `frame_index,score`; a
//! `raw_score` column is accepted and ignored. Scores are clamped to
//! `[0, 1]` on ingestion.

use std::fmt::Write as _;
use std::path::Path;

use endofuse_core::refine::SimilarityScore;

use crate::{read_bytes, write_bytes, IoError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRecord {
    /// Index of the later frame of the pair.
    pub frame_index: usize,
    pub score: SimilarityScore,
}

pub fn parse(path: &Path, text: &str) -> Result<Vec<ScoreRecord>, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| IoError::format(path, "empty scores file"))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    for c in &cols {
        if !matches!(*c, "frame_index" | "score" | "raw_score") {
            return Err(IoError::format(path, format!("unknown column {c:?}")));
        }
    }
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| IoError::format(path, format!("missing column {name:?}")))
    };
    let (fi, si) = (find("frame_index")?, find("score")?);
    let mut out: Vec<ScoreRecord> = Vec::new();
    for (n, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |m: String| IoError::format(path, format!("line {}: {m}", n + 1));
        if cells.len() != cols.len() {
            return Err(err(format!("{} cells, expected {}", cells.len(), cols.len())));
        }
        let frame_index = cells[fi]
            .parse()
            .map_err(|_| err(format!("bad frame index {:?}", cells[fi])))?;
        let score: f64 = cells[si]
            .parse()
            .map_err(|_| err(format!("bad score {:?}", cells[si])))?;
        if out.last().is_some_and(|r| r.frame_index >= frame_index) {
            return Err(err("frame indices must increase".into()));
        }
        out.push(ScoreRecord {
            frame_index,
            score: SimilarityScore::new(score),
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<ScoreRecord>, IoError> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|_| IoError::format(path, "not UTF-8 text"))?;
    parse(path, &text)
}

pub fn write(path: &Path, records: &[ScoreRecord]) -> Result<(), IoError> {
    let mut s = String::from("frame_index,score\n");
    for r in records {
        writeln!(s, "{},{:.9}", r.frame_index, r.score.value()).expect("write to String");
    }
    write_bytes(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_clamps() {
        let p = Path::new("s.csv");
        let r = parse(p, "frame_index,raw_score,score\n1,1.7,1.7\n2,0.2,0.2\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].score.value(), 1.0);
        assert_eq!(r[1].frame_index, 2);
    }

    #[test]
    fn errors() {
        let p = Path::new("s.csv");
        assert!(parse(p, "frame,score\n")
            .unwrap_err()
            .to_string()
            .contains("unknown column"));
        assert!(parse(p, "frame_index\n1\n").unwrap_err().to_string().contains("score"));
        assert!(parse(p, "frame_index,score\n2,0.1\n1,0.1\n").is_err());
        assert!(parse(p, "frame_index,score\n1,x\n")
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let r = vec![ScoreRecord {
            frame_index: 1,
            score: SimilarityScore::new(0.25),
        }];
        write(&p, &r).unwrap();
        assert_eq!(read(&p).unwrap(), r);
    }
}
