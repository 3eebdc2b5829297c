//! Dataset files.
//!
//! The native format is newline-delimited JSON. Line 1 is a header object:
//!
//! ```text
//! {"format":"mmirror-dataset","version":1,"num_classes":..,"audio_dim":..,
//!  "visual_dim":..,"train_len":..,"test_len":..,"spec":{..},
//!  "audio_centers":[[..]..],"visual_centers":[[..]..]}
//! ```
//!
//! followed by `train_len + test_len` records, train first:
//! `{"split":"train"|"test","label":k,"audio":[..],"visual":[..]}`.
//! Floats are written in shortest round-trip form, so a read-back dataset is
//! bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{DatasetSpec, MultimodalDataset, Sample};
use crate::error::{Error, Result};

const FORMAT: &str = "mmirror-dataset";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    num_classes: usize,
    audio_dim: usize,
    visual_dim: usize,
    train_len: usize,
    test_len: usize,
    spec: DatasetSpec,
    audio_centers: Vec<Vec<f64>>,
    visual_centers: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    split: Split,
    label: usize,
    audio: Vec<f64>,
    visual: Vec<f64>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum Split {
    Train,
    Test,
}

fn json_line<T: Serialize, W: Write>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

pub fn write_dataset_to<W: Write>(ds: &MultimodalDataset, mut w: W) -> std::io::Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        num_classes: ds.spec.num_classes,
        audio_dim: ds.spec.audio_dim,
        visual_dim: ds.spec.visual_dim,
        train_len: ds.train.len(),
        test_len: ds.test.len(),
        spec: ds.spec.clone(),
        audio_centers: ds.audio_centers.clone(),
        visual_centers: ds.visual_centers.clone(),
    };
    json_line(&mut w, &header)?;
    for (split, samples) in [(Split::Train, &ds.train), (Split::Test, &ds.test)] {
        for s in samples {
            json_line(
                &mut w,
                &Record {
                    split,
                    label: s.label,
                    audio: s.audio.clone(),
                    visual: s.visual.clone(),
                },
            )?;
        }
    }
    w.flush()
}

pub fn write_dataset(ds: &MultimodalDataset, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(ds, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_from<R: BufRead>(r: R) -> Result<MultimodalDataset> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("missing header line".into()))?
        .map_err(|e| Error::Format(e.to_string()))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format {} v{}",
            header.format, header.version
        )));
    }
    let mut train = Vec::with_capacity(header.train_len);
    let mut test = Vec::with_capacity(header.test_len);
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Format(format!("record {n}: {e}")))?;
        if rec.audio.len() != header.audio_dim
            || rec.visual.len() != header.visual_dim
            || rec.label >= header.num_classes
        {
            return Err(Error::Format(format!("record {n} does not match header dimensions")));
        }
        let sample = Sample {
            audio: rec.audio,
            visual: rec.visual,
            label: rec.label,
        };
        match rec.split {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    if train.len() != header.train_len || test.len() != header.test_len {
        return Err(Error::Format(format!(
            "header declares {}/{} samples, file holds {}/{}",
            header.train_len,
            header.test_len,
            train.len(),
            test.len()
        )));
    }
    Ok(MultimodalDataset {
        spec: header.spec,
        audio_centers: header.audio_centers,
        visual_centers: header.visual_centers,
        train,
        test,
    })
}

pub fn read_dataset(path: &Path) -> Result<MultimodalDataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(BufReader::new(f))
}

/// Flat CSV for inspection: `split,label,a0..,v0..`.
pub fn write_dataset_csv(ds: &MultimodalDataset, path: &Path) -> Result<()> {
    let to_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    let mut header = vec!["split".to_string(), "label".to_string()];
    header.extend((0..ds.spec.audio_dim).map(|i| format!("a{i}")));
    header.extend((0..ds.spec.visual_dim).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(to_err)?;
    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
        for s in samples {
            let mut row = vec![split.to_string(), s.label.to_string()];
            row.extend(s.audio.iter().chain(&s.visual).map(|v| v.to_string()));
            w.write_record(&row).map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_dataset;

    #[test]
    fn round_trip_is_exact() {
        let spec = DatasetSpec {
            samples_per_class: 20,
            ..DatasetSpec::default()
        };
        let ds = generate_dataset(&spec).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        let back = read_dataset_from(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let mut again = Vec::new();
        write_dataset_to(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds = generate_dataset(&DatasetSpec {
            samples_per_class: 10,
            ..DatasetSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_dataset_from(cut.as_bytes()), Err(Error::Format(_))));
    }
}
