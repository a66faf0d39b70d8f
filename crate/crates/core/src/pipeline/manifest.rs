use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Rng};

pub const MANIFEST_HEADER: [&str; 5] =
    ["path", "label", "subject_id", "sequence_id", "frame_index"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub subject_id: String,
    pub sequence_id: String,
    pub frame_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut seq_labels: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(&e.path) {
                return Err(Error::invalid(format!(
                    "entry {i}: duplicate path {}",
                    e.path.display()
                )));
            }
            if let Some(prev) = seq_labels.insert(&e.sequence_id, &e.label) {
                if prev != e.label {
                    return Err(Error::invalid(format!(
                        "entry {i}: sequence {} has labels {prev:?} and {:?}",
                        e.sequence_id, e.label
                    )));
                }
            }
        }
        Ok(Manifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct labels, sorted.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.entries.iter().map(|e| e.label.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    /// CSV text with the standard header; paths are written as stored.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER).expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                &e.label,
                &e.subject_id,
                &e.sequence_id,
                &e.frame_index.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Reads a manifest CSV; relative image paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&text, path, base)
}

pub fn parse_manifest(bytes: &[u8], origin: &Path, base: &Path) -> Result<Manifest> {
    let err = |line: u64, message: String| Error::Manifest {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    match records.next() {
        None => return Err(err(1, "empty file: missing header".into())),
        Some(Err(e)) => return Err(err(1, e.to_string())),
        Some(Ok(h)) => {
            if h.iter().ne(MANIFEST_HEADER.iter().copied()) {
                return Err(err(
                    1,
                    format!(
                        "unexpected header {:?}, expected \"{}\"",
                        h.iter().collect::<Vec<_>>().join(","),
                        MANIFEST_HEADER.join(",")
                    ),
                ));
            }
        }
    }

    let mut entries = Vec::new();
    let mut seen: BTreeMap<PathBuf, u64> = BTreeMap::new();
    let mut seq_labels: BTreeMap<String, (String, u64)> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(err(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let frame_index: u32 = rec[4]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("unparseable frame_index {:?}", &rec[4])))?;
        if rec[0].is_empty() || rec[1].is_empty() || rec[3].is_empty() {
            return Err(err(
                line,
                "path, label and sequence_id must be non-empty".into(),
            ));
        }
        if rec[1].contains('\n') {
            return Err(err(line, "labels must not contain newlines".into()));
        }
        let raw = Path::new(&rec[0]);
        let path = if raw.is_absolute() {
            raw.to_path_buf()
        } else {
            base.join(raw)
        };
        if let Some(first) = seen.insert(path.clone(), line) {
            return Err(err(
                line,
                format!("duplicate path {} (first on line {first})", rec[0].trim()),
            ));
        }
        let label = rec[1].to_string();
        let sequence_id = rec[3].to_string();
        if let Some((prev, at)) = seq_labels.get(&sequence_id) {
            if *prev != label {
                return Err(err(
                    line,
                    format!("sequence {sequence_id} labelled {label:?} but {prev:?} on line {at}"),
                ));
            }
        } else {
            seq_labels.insert(sequence_id.clone(), (label.clone(), line));
        }
        entries.push(ManifestEntry {
            path,
            label,
            subject_id: rec[2].to_string(),
            sequence_id,
            frame_index,
        });
    }
    Ok(Manifest { entries })
}

/// Keeps the `n` highest-`frame_index` entries of every sequence, in
/// manifest order.
pub fn select_peaks(m: &Manifest, n: usize) -> Manifest {
    let mut by_seq: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in m.entries.iter().enumerate() {
        by_seq.entry(&e.sequence_id).or_default().push(i);
    }
    let mut keep = vec![false; m.entries.len()];
    for idx in by_seq.values_mut() {
        idx.sort_by_key(|&i| (std::cmp::Reverse(m.entries[i].frame_index), i));
        for &i in idx.iter().take(n) {
            keep[i] = true;
        }
    }
    Manifest {
        entries: m
            .entries
            .iter()
            .zip(keep)
            .filter(|&(_, k)| k)
            .map(|(e, _)| e.clone())
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Manifest,
    pub test: Manifest,
    pub warnings: Vec<String>,
}

/// Number of a label's sequences that go to training.
pub fn train_count(fraction: f64, sequences: usize) -> usize {
    // Numbers like 0.7·10 land a hair above the integer in floating point.
    (((fraction * sequences as f64) - 1e-9).ceil() as usize).clamp(1, sequences)
}

/// Sequence-level stratified split: for every label its sequences are
/// shuffled (seeded per label) and the first `⌈fraction · count⌉` go to
/// training. A sequence never straddles the split.
pub fn split(m: &Manifest, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut per_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &m.entries {
        let seqs = per_label.entry(&e.label).or_default();
        if !seqs.contains(&e.sequence_id.as_str()) {
            seqs.push(&e.sequence_id);
        }
    }
    let mut train_seqs = HashSet::new();
    let mut warnings = Vec::new();
    for (li, (label, seqs)) in per_label.iter_mut().enumerate() {
        seqs.sort_unstable();
        if seqs.len() == 1 {
            warnings.push(format!(
                "label {label:?} has a single sequence; it goes to training only"
            ));
        }
        Rng::new(derive_seed(seed, &[li as u64])).shuffle(seqs);
        for s in seqs.iter().take(train_count(fraction, seqs.len())) {
            train_seqs.insert(*s);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (train, test): (Vec<_>, Vec<_>) = m
        .entries
        .iter()
        .cloned()
        .partition(|e| train_seqs.contains(e.sequence_id.as_str()));
    Ok(Split {
        train: Manifest { entries: train },
        test: Manifest { entries: test },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(seq: &str, label: &str, frame: u32) -> ManifestEntry {
        ManifestEntry {
            path: PathBuf::from(format!("{seq}_{frame}.pgm")),
            label: label.into(),
            subject_id: "s".into(),
            sequence_id: seq.into(),
            frame_index: frame,
        }
    }

    fn parse(text: &str) -> Result<Manifest> {
        parse_manifest(text.as_bytes(), Path::new("m.csv"), Path::new("/data"))
    }

    #[test]
    fn parses_valid_file() {
        let m = parse(
            "path,label,subject_id,sequence_id,frame_index\r\n\
             a.pgm,happy,s1,q1,0\r\n\
             b.pgm,happy,s1,q1,1\r\n\
             /abs/c.pgm,sad,s2,q2,4\r\n",
        )
        .unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.entries[0].path, PathBuf::from("/data/a.pgm"));
        assert_eq!(m.entries[2].path, PathBuf::from("/abs/c.pgm"));
        assert_eq!(m.entries[2].frame_index, 4);
    }

    #[test]
    fn rejects_duplicates_with_line() {
        let err = parse(
            "path,label,subject_id,sequence_id,frame_index\n\
             a.pgm,happy,s1,q1,0\n\
             a.pgm,happy,s1,q1,1\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains(":3:") && msg.contains("duplicate path"),
            "{msg}"
        );
    }

    #[test]
    fn rejects_header_typo() {
        let err = parse("path,lable,subject_id,sequence_id,frame_index\n").unwrap_err();
        assert!(err.to_string().contains("unexpected header"), "{err}");
    }

    #[test]
    fn rejects_bad_frame_index() {
        let err =
            parse("path,label,subject_id,sequence_id,frame_index\na.pgm,x,s,q,-1\n").unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(err.to_string().contains("frame_index"), "{err}");
    }

    #[test]
    fn peaks() {
        let mut entries: Vec<_> = (0..8).map(|f| entry("q1", "a", f)).collect();
        entries.extend((0..3).map(|f| entry("q2", "b", f)));
        let m = Manifest::new(entries).unwrap();
        let five = select_peaks(&m, 5);
        let q1: Vec<u32> = five
            .entries
            .iter()
            .filter(|e| e.sequence_id == "q1")
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(q1, vec![3, 4, 5, 6, 7]);
        assert_eq!(
            five.entries
                .iter()
                .filter(|e| e.sequence_id == "q2")
                .count(),
            3
        );
        let one = select_peaks(&m, 1);
        assert_eq!(
            one.entries
                .iter()
                .map(|e| e.frame_index)
                .collect::<Vec<_>>(),
            vec![7, 2]
        );
    }

    fn sequences(per_label: usize, labels: &[&str]) -> Manifest {
        let mut entries = Vec::new();
        for l in labels {
            for s in 0..per_label {
                for f in 0..2 {
                    entries.push(entry(&format!("{l}{s}"), l, f));
                }
            }
        }
        Manifest::new(entries).unwrap()
    }

    fn seq_count(m: &Manifest, label: &str) -> usize {
        let mut s: Vec<_> = m
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.sequence_id.clone())
            .collect();
        s.sort();
        s.dedup();
        s.len()
    }

    #[test]
    fn eighty_twenty() {
        let m = sequences(10, &["a", "b", "c"]);
        let s = split(&m, 0.8, 1).unwrap();
        for l in ["a", "b", "c"] {
            assert_eq!(seq_count(&s.train, l), 8);
            assert_eq!(seq_count(&s.test, l), 2);
        }
        let again = split(&m, 0.8, 1).unwrap();
        assert_eq!(s.train, again.train);
        assert_eq!(s.test, again.test);
    }

    #[test]
    fn ceiling_rule_and_single_sequence() {
        let m = sequences(3, &["a"]);
        let s = split(&m, 0.5, 0).unwrap();
        assert_eq!(seq_count(&s.train, "a"), 2);
        assert_eq!(seq_count(&s.test, "a"), 1);

        let single = sequences(1, &["z"]);
        let s = split(&single, 0.8, 0).unwrap();
        assert_eq!(seq_count(&s.train, "z"), 1);
        assert!(s.test.is_empty());
        assert_eq!(s.warnings.len(), 1);
        assert!(split(&single, 1.0, 0).is_err());
    }

    #[test]
    fn rounding_guard() {
        assert_eq!(train_count(0.7, 10), 7);
        assert_eq!(train_count(0.8, 10), 8);
        assert_eq!(train_count(0.81, 10), 9);
    }

    #[test]
    fn csv_round_trip() {
        let m = sequences(2, &["a", "b,c"]);
        let back = parse_manifest(m.to_csv().as_bytes(), Path::new("m"), Path::new("")).unwrap();
        assert_eq!(back, m);
    }
}
