//! Stopword lists: one UTF-8 word per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Self {
        Stoplist {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn read<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut words = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() {
                words.insert(w.to_string());
            }
        }
        Ok(Stoplist { words })
    }

    pub fn read_file(path: &Path) -> std::io::Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
