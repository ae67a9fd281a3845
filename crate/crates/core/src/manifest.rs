//! Tab-separated dataset manifest, one row per converted image.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::pipeline::PipelineError;
use crate::sampler::SampleRng;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_COLUMNS: [&str; 12] = [
    "source", "output", "label", "height", "width", "seed", "strategy", "faces", "sampler",
    "points", "checksum", "split",
];
/// Fraction of each class assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Input path relative to the dataset root.
    pub source: String,
    /// Output path relative to the manifest's directory.
    pub output: String,
    pub label: String,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub strategy: String,
    pub faces: String,
    pub sampler: String,
    pub points: usize,
    pub checksum: String,
    pub split: Split,
}

impl ManifestEntry {
    fn to_row(&self) -> String {
        [
            self.source.clone(),
            self.output.clone(),
            self.label.clone(),
            self.height.to_string(),
            self.width.to_string(),
            self.seed.to_string(),
            self.strategy.clone(),
            self.faces.clone(),
            self.sampler.clone(),
            self.points.to_string(),
            self.checksum.clone(),
            self.split.to_string(),
        ]
        .join("\t")
    }

    fn from_row(row: &str) -> Result<Self, String> {
        let f: Vec<&str> = row.split('\t').collect();
        if f.len() != MANIFEST_COLUMNS.len() {
            return Err(format!(
                "expected {} fields, found {}",
                MANIFEST_COLUMNS.len(),
                f.len()
            ));
        }
        fn num<T: FromStr>(name: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad {name} {v:?}"))
        }
        Ok(Self {
            source: f[0].to_string(),
            output: f[1].to_string(),
            label: f[2].to_string(),
            height: num("height", f[3])?,
            width: num("width", f[4])?,
            seed: num("seed", f[5])?,
            strategy: f[6].to_string(),
            faces: f[7].to_string(),
            sampler: f[8].to_string(),
            points: num("points", f[9])?,
            checksum: f[10].to_string(),
            split: f[11].parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ManifestTotals {
    pub images: usize,
    pub points: usize,
    /// Image count per class label.
    pub per_class: BTreeMap<String, usize>,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_tsv(&self) -> String {
        let mut out = MANIFEST_COLUMNS.join("\t");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.to_row());
            out.push('\n');
        }
        out
    }

    /// Parses manifest text; errors carry 1-based line numbers.
    pub fn parse_tsv(text: &str) -> Result<Self, (usize, String)> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.split('\t').eq(MANIFEST_COLUMNS.iter().copied()) => {}
            _ => return Err((1, "missing or malformed header".into())),
        }
        let entries = lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(k, l)| ManifestEntry::from_row(l).map_err(|r| (k + 1, r)))
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_tsv(&text).map_err(|(line, reason)| PipelineError::Manifest {
            path: path.to_path_buf(),
            line,
            reason,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn totals(&self) -> ManifestTotals {
        let mut per_class = BTreeMap::new();
        for e in &self.entries {
            *per_class.entry(e.label.clone()).or_insert(0) += 1;
        }
        let train = self
            .entries
            .iter()
            .filter(|e| e.split == Split::Train)
            .count();
        ManifestTotals {
            images: self.entries.len(),
            points: self.entries.iter().map(|e| e.points).sum(),
            per_class,
            train,
            test: self.entries.len() - train,
        }
    }

    /// Seeded per-class shuffle; the first `floor(0.8 n)` of each class train,
    /// but always at least one.
    pub fn assign_splits(&mut self, seed: u64) {
        let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (k, e) in self.entries.iter().enumerate() {
            by_class.entry(e.label.clone()).or_default().push(k);
        }
        let mut rng = SampleRng::new(seed);
        for ids in by_class.values_mut() {
            for a in (1..ids.len()).rev() {
                let b = ((rng.next_f64() * (a + 1) as f64) as usize).min(a);
                ids.swap(a, b);
            }
            let train = ((TRAIN_FRACTION * ids.len() as f64).floor() as usize).max(1);
            for (rank, &k) in ids.iter().enumerate() {
                self.entries[k].split = if rank < train {
                    Split::Train
                } else {
                    Split::Test
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(source: &str, label: &str) -> ManifestEntry {
        ManifestEntry {
            source: source.into(),
            output: source.replace(".png", ".off"),
            label: label.into(),
            height: 4,
            width: 5,
            seed: 42,
            strategy: "rgb-mean".into(),
            faces: "triangle".into(),
            sampler: "monte-carlo".into(),
            points: 16,
            checksum: "ab".repeat(32),
            split: Split::Train,
        }
    }

    #[test]
    fn round_trip() {
        let m = DatasetManifest {
            entries: vec![entry("a/x.png", "a"), entry("b/y.png", "b")],
        };
        let text = m.to_tsv();
        assert!(text.starts_with("source\toutput\tlabel\t"));
        assert_eq!(DatasetManifest::parse_tsv(&text).unwrap(), m);
    }

    #[test]
    fn bad_rows_report_line() {
        let text = format!("{}\nonly\ttwo\n", MANIFEST_COLUMNS.join("\t"));
        assert_eq!(DatasetManifest::parse_tsv(&text).unwrap_err().0, 2);
        assert_eq!(DatasetManifest::parse_tsv("nope\n").unwrap_err().0, 1);
    }

    #[test]
    fn splits_are_per_class_and_seeded() {
        let mut m = DatasetManifest {
            entries: (0..10)
                .map(|k| entry(&format!("a/{k}.png"), "a"))
                .chain((0..5).map(|k| entry(&format!("b/{k}.png"), "b")))
                .collect(),
        };
        m.assign_splits(9);
        let t = m.totals();
        let test_b = m.entries[10..]
            .iter()
            .filter(|e| e.split == Split::Test)
            .count();
        assert_eq!(test_b, 1);
        assert_eq!((t.images, t.train, t.test, t.points), (15, 12, 3, 240));
        assert_eq!(t.per_class["a"], 10);
        assert_eq!(t.per_class["b"], 5);
        let mut again = m.clone();
        again.assign_splits(9);
        assert_eq!(again, m);
    }
}
