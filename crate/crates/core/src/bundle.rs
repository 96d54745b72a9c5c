//! Dataset bundle directory layout.
//!
//! ```text
//! train.txt      head<TAB>relation<TAB>tail
//! valid.txt      head<TAB>relation<TAB>tail<TAB>label      label in {1,-1,0}
//! test.txt       same as valid.txt
//! labels.meta    head<TAB>relation<TAB>tail<TAB>label<TAB>provenance<TAB>confidence|-
//! paths.meta     JSON lines, see `pathmeta`
//! stats.report   key=value lines and [hist.*] blocks
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::curate::{stats, CurateError, DatasetBundle, Label, LabeledTriple, Provenance};
use crate::kg::{parse_record, write_triples, Triple, Vocabulary};
use crate::pathmeta::{read_path_meta, write_path_meta, PathMetaError};

pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const LABELS_META_FILE: &str = "labels.meta";
pub const PATHS_FILE: &str = "paths.meta";
pub const STATS_FILE: &str = "stats.report";

fn format_err(file: &str, line: usize, message: impl Into<String>) -> CurateError {
    CurateError::Format { file: file.to_owned(), line, message: message.into() }
}

fn path_meta_err(file: &str, e: PathMetaError) -> CurateError {
    match e {
        PathMetaError::Format { line, message } => format_err(file, line, message),
        PathMetaError::Io(e) => CurateError::Io(e),
    }
}

pub fn write_labeled<W: Write>(split: &[LabeledTriple], vocab: &Vocabulary, mut w: W) -> std::io::Result<()> {
    for l in split {
        writeln!(w, "{}\t{}", vocab.display(&l.triple), l.label)?;
    }
    Ok(())
}

/// Reads `head relation tail label` rows; `name` is used in error messages.
pub fn read_labeled<R: BufRead>(
    reader: R,
    vocab: &mut Vocabulary,
    name: &str,
) -> Result<Vec<(Triple, Label)>, CurateError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((triple, label)) = line.rsplit_once('\t') else {
            return Err(format_err(name, i + 1, "expected 4 tab-separated fields"));
        };
        let [h, r, t] = parse_record(triple).map_err(|m| format_err(name, i + 1, m))?;
        let label: Label = label.parse().map_err(|m: String| format_err(name, i + 1, m))?;
        out.push((vocab.intern_triple(h, r, t), label));
    }
    Ok(out)
}

fn write_labels_meta<W: Write>(bundle: &DatasetBundle, mut w: W) -> std::io::Result<()> {
    for l in bundle.labeled() {
        let confidence = l.confidence.map_or_else(|| "-".to_owned(), |c| c.to_string());
        writeln!(w, "{}\t{}\t{}\t{}", bundle.vocab.display(&l.triple), l.label, l.provenance, confidence)?;
    }
    Ok(())
}

type LabelMeta = HashMap<Triple, (Provenance, Option<f64>)>;

fn read_labels_meta<R: BufRead>(reader: R, vocab: &mut Vocabulary) -> Result<LabelMeta, CurateError> {
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [h, r, t, _, provenance, confidence] = fields.as_slice() else {
            return Err(format_err(LABELS_META_FILE, i + 1, "expected 6 tab-separated fields"));
        };
        let provenance: Provenance =
            provenance.parse().map_err(|m: String| format_err(LABELS_META_FILE, i + 1, m))?;
        let confidence = match *confidence {
            "-" => None,
            c => Some(c.parse::<f64>().map_err(|e| format_err(LABELS_META_FILE, i + 1, e.to_string()))?),
        };
        out.insert(vocab.intern_triple(h, r, t), (provenance, confidence));
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes every bundle file into `dir`, creating it if needed.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<(), CurateError> {
    fs::create_dir_all(dir)?;
    let vocab = &bundle.vocab;
    let mut w = create(dir, TRAIN_FILE)?;
    write_triples(&mut w, vocab, bundle.train.iter())?;
    w.flush()?;
    for (name, split) in [(VALID_FILE, &bundle.valid), (TEST_FILE, &bundle.test)] {
        let mut w = create(dir, name)?;
        write_labeled(split, vocab, &mut w)?;
        w.flush()?;
    }
    let mut w = create(dir, LABELS_META_FILE)?;
    write_labels_meta(bundle, &mut w)?;
    w.flush()?;
    let mut w = create(dir, PATHS_FILE)?;
    write_path_meta(&bundle.paths, vocab, &mut w).map_err(|e| path_meta_err(PATHS_FILE, e))?;
    w.flush()?;
    fs::write(dir.join(STATS_FILE), stats(bundle).to_string())?;
    Ok(())
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>, CurateError> {
    File::open(dir.join(name))
        .map(BufReader::new)
        .map_err(|e| CurateError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.join(name).display()))))
}

/// Reads a bundle directory, interning labels into `vocab`. Without
/// `labels.meta`, positives are taken as kg-auto and the rest as human.
pub fn read_bundle(dir: &Path, mut vocab: Vocabulary) -> Result<DatasetBundle, CurateError> {
    let mut train = BTreeSet::new();
    for (i, line) in open(dir, TRAIN_FILE)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let [h, r, t] = parse_record(&line).map_err(|m| format_err(TRAIN_FILE, i + 1, m))?;
        train.insert(vocab.intern_triple(h, r, t));
    }
    let valid = read_labeled(open(dir, VALID_FILE)?, &mut vocab, VALID_FILE)?;
    let test = read_labeled(open(dir, TEST_FILE)?, &mut vocab, TEST_FILE)?;
    let meta = if dir.join(LABELS_META_FILE).exists() {
        read_labels_meta(open(dir, LABELS_META_FILE)?, &mut vocab)?
    } else {
        HashMap::new()
    };
    let paths = if dir.join(PATHS_FILE).exists() {
        read_path_meta(open(dir, PATHS_FILE)?, &mut vocab).map_err(|e| path_meta_err(PATHS_FILE, e))?
    } else {
        Default::default()
    };
    let attach = |rows: Vec<(Triple, Label)>| -> Vec<LabeledTriple> {
        rows.into_iter()
            .map(|(triple, label)| {
                let (provenance, confidence) = meta.get(&triple).copied().unwrap_or(match label {
                    Label::Positive => (Provenance::KgAuto, None),
                    _ => (Provenance::Human, None),
                });
                LabeledTriple { triple, label, provenance, confidence }
            })
            .collect()
    };
    Ok(DatasetBundle { vocab: Arc::new(vocab), train, valid: attach(valid), test: attach(test), paths })
}
