//! Dataset directories.
//!
//! ```text
//! manifest.toml   format version, feature dimension and clue count per modality
//! tracks.csv      track_id,identity            (identity -1 when unknown)
//! face.txt        clue_id track_id identity f_1 ... f_O
//! body.txt        same layout
//! voice.txt       same layout
//! ```
//!
//! A modality without clues has no feature file. Floats are written in their
//! shortest round-trip decimal form, so a reload is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use relclust_core::{Clue, ClueId, Dataset, Identity, Modality, Track, TrackId};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";
pub const TRACKS: &str = "tracks.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub tracks: usize,
    pub modalities: BTreeMap<String, ModalityEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEntry {
    pub dim: usize,
    pub clues: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    track_id: u64,
    identity: i64,
}

pub fn feature_file(m: Modality) -> String {
    format!("{m}.txt")
}

fn identity_field(id: Option<Identity>) -> i64 {
    id.map_or(-1, |i| i.0 as i64)
}

fn parse_identity(v: i64) -> Option<Identity> {
    (v >= 0).then_some(Identity(v as u64))
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut modalities = BTreeMap::new();
    for m in Modality::ALL {
        let path = dir.join(feature_file(m));
        let mut clues: Vec<&Clue> = dataset.tracks().iter().flat_map(|t| t.clues(m)).collect();
        if clues.is_empty() {
            if path.exists() {
                fs::remove_file(&path).map_err(Error::io(&path))?;
            }
            continue;
        }
        clues.sort_by_key(|c| c.id);
        let mut text = String::new();
        for c in &clues {
            write!(
                text,
                "{} {} {}",
                c.id.0,
                c.track.0,
                identity_field(c.identity)
            )
            .unwrap();
            for v in c.feature() {
                write!(text, " {v}").unwrap();
            }
            text.push('\n');
        }
        fs::write(&path, text).map_err(Error::io(&path))?;
        modalities.insert(
            m.to_string(),
            ModalityEntry {
                dim: clues[0].dim(),
                clues: clues.len(),
            },
        );
    }

    let path = dir.join(TRACKS);
    let mut w = csv::Writer::from_path(&path).map_err(Error::csv(&path))?;
    for t in dataset.tracks() {
        w.serialize(TrackRow {
            track_id: t.id.0,
            identity: identity_field(t.identity),
        })
        .map_err(Error::csv(&path))?;
    }
    w.flush().map_err(Error::io(&path))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tracks: dataset.len(),
        modalities,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, toml::to_string(&manifest).expect("serializable"))
        .map_err(Error::io(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::format(&path, 0, e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            0,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    for name in manifest.modalities.keys() {
        if Modality::from_name(name).is_none() {
            return Err(Error::format(
                &path,
                0,
                format!("unknown modality {name:?}"),
            ));
        }
    }
    Ok(manifest)
}

fn read_features(dir: &Path, m: Modality, entry: ModalityEntry) -> Result<Vec<Clue>> {
    let path = dir.join(feature_file(m));
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let mut out = Vec::with_capacity(entry.clues);
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(&path, line_no, msg);
        let mut fields = line.split_ascii_whitespace();
        let mut int = |name: &str| -> Result<i64> {
            let f = fields
                .next()
                .ok_or_else(|| bad(format!("missing {name}")))?;
            f.parse().map_err(|_| bad(format!("bad {name} {f:?}")))
        };
        let clue_id = int("clue_id")?;
        let track_id = int("track_id")?;
        let identity = int("identity")?;
        if clue_id < 0 || track_id < 0 {
            return Err(bad("negative id".into()));
        }
        let feature = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| bad(format!("bad feature value {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if feature.len() != entry.dim {
            return Err(bad(format!(
                "expected {} feature values, got {}",
                entry.dim,
                feature.len()
            )));
        }
        let clue = Clue::new(
            ClueId(clue_id as u64),
            TrackId(track_id as u64),
            m,
            &feature,
            parse_identity(identity),
        )
        .map_err(|e| bad(e.to_string()))?;
        out.push(clue);
    }
    if out.len() != entry.clues {
        return Err(Error::format(
            &path,
            0,
            format!(
                "manifest lists {} clues, file has {}",
                entry.clues,
                out.len()
            ),
        ));
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(TRACKS);
    let mut reader = csv::Reader::from_path(&path).map_err(Error::csv(&path))?;
    let mut tracks: BTreeMap<u64, (Option<Identity>, Vec<Clue>)> = BTreeMap::new();
    for row in reader.deserialize::<TrackRow>() {
        let row = row.map_err(Error::csv(&path))?;
        if tracks
            .insert(row.track_id, (parse_identity(row.identity), Vec::new()))
            .is_some()
        {
            return Err(Error::format(
                &path,
                0,
                format!("duplicate track {}", row.track_id),
            ));
        }
    }
    if tracks.len() != manifest.tracks {
        return Err(Error::format(
            &path,
            0,
            format!(
                "manifest lists {} tracks, file has {}",
                manifest.tracks,
                tracks.len()
            ),
        ));
    }
    for (name, &entry) in &manifest.modalities {
        let m = Modality::from_name(name).expect("checked in read_manifest");
        for clue in read_features(dir, m, entry)? {
            let file = dir.join(feature_file(m));
            let slot = tracks.get_mut(&clue.track.0).ok_or_else(|| {
                Error::format(
                    &file,
                    0,
                    format!("clue {} names unknown track {}", clue.id.0, clue.track),
                )
            })?;
            slot.1.push(clue);
        }
    }
    let tracks = tracks
        .into_iter()
        .map(|(id, (identity, clues))| Track::new(TrackId(id), clues, identity))
        .collect::<relclust_core::Result<Vec<_>>>()?;
    Ok(Dataset::new(tracks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use relclust_core::synth::{self, SynthConfig};

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth::generate(&SynthConfig {
            identities: 3,
            tracks_per_identity: 3,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let manifest = write_dataset(dir.path(), &d).unwrap();
        assert_eq!(manifest.tracks, 9);
        assert_eq!(read_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn missing_modality_has_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth::generate(&SynthConfig {
            identities: 2,
            tracks_per_identity: 2,
            presence: [1.0, 0.0, 0.0],
            ..Default::default()
        })
        .unwrap();
        write_dataset(dir.path(), &d).unwrap();
        assert!(dir.path().join("face.txt").exists());
        assert!(!dir.path().join("voice.txt").exists());
        assert_eq!(read_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn malformed_lines_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth::generate(&SynthConfig {
            identities: 2,
            tracks_per_identity: 2,
            presence: [1.0, 0.0, 0.0],
            ..Default::default()
        })
        .unwrap();
        write_dataset(dir.path(), &d).unwrap();
        let path = dir.path().join("face.txt");
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = lines[1].rsplit_once(' ').unwrap().0.to_string();
        fs::write(&path, lines.join("\n")).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("face.txt:2"), "{err}");
    }
}
