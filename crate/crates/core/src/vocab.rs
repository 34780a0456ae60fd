//! Token vocabulary and detokenization.
//!
//! File format: UTF-8 text with one `<id>\t<piece>` line per token and a
//! header line `#eos <id>` declaring the end-of-sequence token. A piece may
//! spell the boundary marker either literally or as the escape `▁`. An
//! optional `#marker <str>` header overrides the default marker.

use std::collections::BTreeMap;
use std::io::Read;

use thiserror::Error;

pub const DEFAULT_MARKER: &str = "\u{2581}";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("vocabulary integrity: {0}")]
    Integrity(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pieces: Vec<String>,
    marker: String,
    eos_id: u32,
}

impl Vocabulary {
    /// Build from raw pieces; ids are assigned positionally.
    pub fn from_pieces<S: AsRef<str>>(pieces: &[S], eos_id: u32) -> Result<Self, VocabError> {
        let vocab = Vocabulary {
            pieces: pieces.iter().map(|p| p.as_ref().to_string()).collect(),
            marker: DEFAULT_MARKER.to_string(),
            eos_id,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self, VocabError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut entries: BTreeMap<u32, String> = BTreeMap::new();
        let mut eos_id = None;
        let mut marker = DEFAULT_MARKER.to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let fmt = |message: String| VocabError::Format { line, message };
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix("#eos") {
                eos_id = Some(
                    rest.trim()
                        .parse::<u32>()
                        .map_err(|_| fmt("malformed #eos header".into()))?,
                );
                continue;
            }
            if let Some(rest) = raw.strip_prefix("#marker") {
                marker = rest.trim().to_string();
                continue;
            }
            if raw.starts_with('#') {
                continue;
            }
            let (id, piece) = raw
                .split_once('\t')
                .ok_or_else(|| fmt("expected <id>\\t<piece>".into()))?;
            let id: u32 = id
                .trim()
                .parse()
                .map_err(|_| fmt("token id is not a non-negative integer".into()))?;
            let piece = piece.replace("\\u2581", DEFAULT_MARKER);
            if entries.insert(id, piece).is_some() {
                return Err(fmt(format!("duplicate token id {id}")));
            }
        }
        let eos_id =
            eos_id.ok_or_else(|| VocabError::Integrity("missing #eos header".into()))?;
        let mut pieces = Vec::with_capacity(entries.len());
        for (expected, (id, piece)) in entries.into_iter().enumerate() {
            if id as usize != expected {
                return Err(VocabError::Integrity(format!(
                    "token ids must be contiguous from 0; missing id {expected}"
                )));
            }
            pieces.push(piece);
        }
        let vocab = Vocabulary {
            pieces,
            marker,
            eos_id,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    fn validate(&self) -> Result<(), VocabError> {
        if self.pieces.is_empty() {
            return Err(VocabError::Integrity("empty vocabulary".into()));
        }
        if self.eos_id as usize >= self.pieces.len() {
            return Err(VocabError::Integrity(format!(
                "eos id {} is not a token",
                self.eos_id
            )));
        }
        if !self.detokenize_piece(self.eos_id).is_empty() {
            return Err(VocabError::Integrity(
                "eos must detokenize to the empty string".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.pieces.len()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    /// Surface text of one token: every boundary marker becomes a space.
    pub fn detokenize_piece(&self, id: u32) -> String {
        let piece = self.piece(id).unwrap_or("");
        if self.marker.is_empty() {
            piece.to_string()
        } else {
            piece.replace(&self.marker, " ")
        }
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter().map(|&id| self.detokenize_piece(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_format() {
        let text = "#eos 0\n0\t\n1\t\u{2581}select\n2\t\\u2581id\n3\t,\n";
        let vocab = Vocabulary::from_text(text).unwrap();
        assert_eq!(vocab.len(), 4);
        assert_eq!(vocab.eos_id(), 0);
        assert_eq!(vocab.detokenize_piece(1), " select");
        assert_eq!(vocab.detokenize_piece(2), " id");
        assert_eq!(vocab.detokenize(&[1, 2, 3, 0]), " select id,");
    }

    #[test]
    fn eos_must_be_empty() {
        let text = "#eos 1\n0\tx\n1\ty\n";
        assert!(matches!(
            Vocabulary::from_text(text),
            Err(VocabError::Integrity(_))
        ));
    }

    #[test]
    fn ids_must_be_contiguous() {
        let text = "#eos 0\n0\t\n2\tx\n";
        assert!(Vocabulary::from_text(text).is_err());
    }

    #[test]
    fn missing_eos_header() {
        assert!(Vocabulary::from_text("0\tx\n").is_err());
    }

    #[test]
    fn custom_marker() {
        let text = "#eos 0\n#marker @\n0\t\n1\t@from\n";
        let vocab = Vocabulary::from_text(text).unwrap();
        assert_eq!(vocab.detokenize_piece(1), " from");
    }

    #[test]
    fn from_pieces_builder() {
        let vocab = Vocabulary::from_pieces(&["", "\u{2581}select", "\u{2581}*"], 0).unwrap();
        assert_eq!(vocab.detokenize(&[1, 2]), " select *");
    }
}
