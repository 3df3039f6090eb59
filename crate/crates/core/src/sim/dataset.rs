//! Channel dumps exported by external channel generators.
//!
//! One record per (scene, user): `scene_id`, the user position `x`, `y`, and
//! the channel as `h_real`, `h_imag` arrays of the array size. Two encodings
//! are accepted:
//!
//! * newline-delimited JSON, one object per line with those five keys;
//! * CSV with a header `scene_id,x,y,h_real_0,...,h_real_{N-1},h_imag_0,...`.
//!
//! Files ending in `.csv` are read as CSV; anything else is read as JSON
//! lines. All-zero channels (users without a propagation path) are dropped
//! and counted.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;

use crate::channel::{optimal_beam, ArrayGeometry, ChannelVector, Codebook};
use crate::error::{Error, Result};
use crate::prior::{LocationKey, TrainingSample};

/// Share of scenes, taken in ascending scene id, used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub scene_id: u64,
    pub x: f64,
    pub y: f64,
    pub h: ChannelVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub records: Vec<ChannelRecord>,
    /// All-zero channels skipped while loading.
    pub dropped_zero: usize,
    pub train_scenes: BTreeSet<u64>,
    pub eval_scenes: BTreeSet<u64>,
}

#[derive(Deserialize)]
struct JsonRecord {
    scene_id: u64,
    x: f64,
    y: f64,
    h_real: Vec<f64>,
    h_imag: Vec<f64>,
}

fn build_channel(path: &Path, line: usize, n: usize, re: &[f64], im: &[f64]) -> Result<ChannelVector> {
    if re.len() != n || im.len() != n {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line,
            reason: format!("expected {n} channel taps, found {} real and {} imaginary", re.len(), im.len()),
        });
    }
    let coeffs = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    ChannelVector::new(coeffs).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        line,
        reason: e.to_string(),
    })
}

fn read_ndjson(path: &Path, n: usize) -> Result<Vec<ChannelRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(ChannelRecord {
            scene_id: rec.scene_id,
            x: rec.x,
            y: rec.y,
            h: build_channel(path, i + 1, n, &rec.h_real, &rec.h_imag)?,
        });
    }
    Ok(out)
}

fn read_csv(path: &Path, n: usize) -> Result<Vec<ChannelRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(sc), Some(xc), Some(yc)) = (col("scene_id"), col("x"), col("y")) else {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line: 1,
            reason: "header needs scene_id, x and y".into(),
        });
    };
    let re_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("h_real")).collect();
    let im_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("h_imag")).collect();
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let num = |c: usize| -> Result<f64> {
            row.get(c).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Record {
                path: path.to_path_buf(),
                line,
                reason: format!("column {} is not a number", header.get(c).unwrap_or("?")),
            })
        };
        let scene = row.get(sc).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Record {
            path: path.to_path_buf(),
            line,
            reason: "scene_id is not an integer".into(),
        })?;
        let re = re_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        let im = im_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        out.push(ChannelRecord {
            scene_id: scene,
            x: num(xc)?,
            y: num(yc)?,
            h: build_channel(path, line, n, &re, &im)?,
        });
    }
    Ok(out)
}

/// Loads a channel dump for `geometry`, dropping all-zero channels and
/// splitting scenes into training and evaluation sets.
pub fn load_channel_dataset(path: &Path, geometry: &ArrayGeometry) -> Result<ChannelDataset> {
    geometry.validate()?;
    let n = geometry.n_elements;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let all = if is_csv { read_csv(path, n)? } else { read_ndjson(path, n)? };
    let before = all.len();
    let records: Vec<ChannelRecord> = all.into_iter().filter(|r| !r.h.is_zero()).collect();
    let dropped_zero = before - records.len();

    let scenes: Vec<u64> = records
        .iter()
        .map(|r| r.scene_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n_train = ((scenes.len() as f64 * TRAIN_FRACTION).floor() as usize).max(1).min(scenes.len());
    Ok(ChannelDataset {
        train_scenes: scenes[..n_train].iter().copied().collect(),
        eval_scenes: scenes[n_train..].iter().copied().collect(),
        records,
        dropped_zero,
    })
}

impl ChannelDataset {
    fn in_split(&self, r: &ChannelRecord, split: Split) -> bool {
        match split {
            Split::Train => self.train_scenes.contains(&r.scene_id),
            Split::Eval => self.eval_scenes.contains(&r.scene_id),
        }
    }

    /// Records of one split grouped by user location.
    pub fn by_location(&self, split: Split) -> BTreeMap<LocationKey, Vec<&ChannelRecord>> {
        let mut map: BTreeMap<LocationKey, Vec<&ChannelRecord>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| self.in_split(r, split)) {
            map.entry(LocationKey::of(r.x, r.y)).or_default().push(r);
        }
        map
    }

    /// Labels every training-split channel with its optimal codeword.
    pub fn training_samples(&self, codebook: &Codebook) -> Result<Vec<TrainingSample>> {
        self.records
            .iter()
            .filter(|r| self.in_split(r, Split::Train))
            .map(|r| {
                Ok(TrainingSample {
                    scene_id: r.scene_id,
                    x: r.x,
                    y: r.y,
                    optimal_index: optimal_beam(&r.h, codebook)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dft_codebook;
    use std::io::Write;

    fn ndjson_line(scene: u64, x: f64, re: &[f64]) -> String {
        serde_json::json!({
            "scene_id": scene, "x": x, "y": 0.0,
            "h_real": re, "h_imag": vec![0.0; re.len()],
        })
        .to_string()
    }

    #[test]
    fn two_scene_toy_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ndjson");
        let mut f = std::fs::File::create(&path).unwrap();
        for scene in [1, 2] {
            for user in 0..3 {
                writeln!(f, "{}", ndjson_line(scene, user as f64, &[1.0, 0.5, 0.0, 0.0])).unwrap();
            }
        }
        writeln!(f, "{}", ndjson_line(2, 9.0, &[0.0; 4])).unwrap();
        drop(f);

        let ds = load_channel_dataset(&path, &ArrayGeometry::ula(4).unwrap()).unwrap();
        assert_eq!(ds.records.len(), 6);
        assert_eq!(ds.dropped_zero, 1);
        let mut all = ds.by_location(Split::Train);
        for (k, v) in ds.by_location(Split::Eval) {
            all.entry(k).or_default().extend(v);
        }
        assert_eq!(all.len(), 3);
        assert!(all.values().all(|v| v.len() == 2));
    }

    #[test]
    fn split_is_by_scene_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("many.ndjson");
        let mut f = std::fs::File::create(&path).unwrap();
        for scene in (0..100).rev() {
            writeln!(f, "{}", ndjson_line(scene, 0.0, &[1.0, 0.0])).unwrap();
        }
        drop(f);
        let ds = load_channel_dataset(&path, &ArrayGeometry::ula(2).unwrap()).unwrap();
        assert_eq!(ds.train_scenes.len(), 80);
        assert_eq!(ds.eval_scenes.len(), 20);
        assert_eq!(*ds.train_scenes.iter().max().unwrap(), 79);
    }

    #[test]
    fn csv_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let geom = ArrayGeometry::ula(2).unwrap();
        let cb = dft_codebook(&geom).unwrap();
        let f0 = cb.codeword(1);
        let text = format!(
            "scene_id,x,y,h_real_0,h_real_1,h_imag_0,h_imag_1\n1,0.5,2.0,{},{},{},{}\n",
            f0[0].re, f0[1].re, f0[0].im, f0[1].im
        );
        std::fs::write(&path, text).unwrap();
        let ds = load_channel_dataset(&path, &geom).unwrap();
        let samples = ds.training_samples(&cb).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].optimal_index, 1);
    }

    #[test]
    fn malformed_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ndjson");
        std::fs::write(&path, ndjson_line(1, 0.0, &[1.0, 0.0, 0.0]) + "\n").unwrap();
        let err = load_channel_dataset(&path, &ArrayGeometry::ula(4).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Record { line: 1, .. }));
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(load_channel_dataset(&path, &ArrayGeometry::ula(4).unwrap()).is_err());
    }
}
