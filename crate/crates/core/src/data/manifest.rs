use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_bag, FeatureBag, SurvivalLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub patient_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub bag_path: PathBuf,
    pub label: SurvivalLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    patient_id: String,
    bag_path: String,
    time: f64,
    event: u8,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.patient_id.as_str()) {
                return Err(Error::Data(format!(
                    "duplicate patient_id `{}` in manifest",
                    e.patient_id
                )));
            }
        }
        Ok(Self { entries })
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["patient_id", "bag_path", "time", "event"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Data(format!(
            "{}: manifest header must be `patient_id,bag_path,time,event`",
            path.display()
        )));
    }
    let mut entries = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row =
            row.map_err(|e| Error::Data(format!("{} row {}: {e}", path.display(), line + 1)))?;
        let event = match row.event {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Data(format!(
                    "patient `{}`: event must be 0 or 1, got {other}",
                    row.patient_id
                )))
            }
        };
        let label = SurvivalLabel::new(row.time, event)
            .map_err(|e| Error::Data(format!("patient `{}`: {e}", row.patient_id)))?;
        entries.push(ManifestEntry {
            patient_id: row.patient_id,
            bag_path: PathBuf::from(row.bag_path),
            label,
        });
    }
    Manifest::new(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for e in &manifest.entries {
        writer
            .serialize(Row {
                patient_id: e.patient_id.clone(),
                bag_path: e.bag_path.to_string_lossy().into_owned(),
                time: e.label.time,
                event: e.label.event as u8,
            })
            .map_err(|err| csv_io(path, err))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Loads every bag listed in the manifest at `path`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Vec<FeatureBag>, Vec<SurvivalLabel>)> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut bags = Vec::with_capacity(manifest.entries.len());
    let mut labels = Vec::with_capacity(manifest.entries.len());
    for entry in manifest.entries {
        let bag_path = if entry.bag_path.is_absolute() {
            entry.bag_path.clone()
        } else {
            base.join(&entry.bag_path)
        };
        if !bag_path.exists() {
            return Err(Error::Data(format!(
                "patient `{}`: bag file {} not found",
                entry.patient_id,
                bag_path.display()
            )));
        }
        let bag = read_bag(&bag_path)
            .map_err(|e| e.context(format!("patient `{}`", entry.patient_id)))?;
        let bag = FeatureBag::new(entry.patient_id, bag.features().clone())?;
        bags.push(bag);
        labels.push(entry.label);
    }
    if let Some(d) = bags.first().map(FeatureBag::dim) {
        if let Some(bad) = bags.iter().find(|b| b.dim() != d) {
            return Err(Error::Data(format!(
                "patient `{}` has {} features, expected {d}",
                bad.patient_id(),
                bad.dim()
            )));
        }
    }
    Ok((bags, labels))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_bag;
    use ndarray::array;

    fn entry(id: &str, time: f64, event: bool) -> ManifestEntry {
        ManifestEntry {
            patient_id: id.into(),
            bag_path: PathBuf::from(format!("{id}.bag")),
            label: SurvivalLabel::new(time, event).unwrap(),
        }
    }

    #[test]
    fn round_trip_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest::new(vec![entry("a", 1.5, true), entry("b", 2.0, false)]).unwrap();
        for id in ["a", "b"] {
            let bag = FeatureBag::new(id, array![[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
            write_bag(&bag, dir.path().join(format!("{id}.bag"))).unwrap();
        }
        let mpath = dir.path().join("manifest.csv");
        write_manifest(&mpath, &manifest).unwrap();
        let text = std::fs::read_to_string(&mpath).unwrap();
        assert!(text.starts_with("patient_id,bag_path,time,event\n"));
        assert_eq!(read_manifest(&mpath).unwrap(), manifest);

        let (bags, labels) = load_dataset(&mpath).unwrap();
        assert_eq!(bags[1].patient_id(), "b");
        assert!(!labels[1].event);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Manifest::new(vec![entry("a", 1.0, true), entry("a", 2.0, true)]).is_err());
    }

    #[test]
    fn missing_bag_names_patient() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("manifest.csv");
        write_manifest(
            &mpath,
            &Manifest::new(vec![entry("ghost", 1.0, true)]).unwrap(),
        )
        .unwrap();
        let err = load_dataset(&mpath).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn bad_event_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("manifest.csv");
        std::fs::write(&mpath, "patient_id,bag_path,time,event\na,a.bag,1.0,2\n").unwrap();
        assert!(read_manifest(&mpath).is_err());
        std::fs::write(&mpath, "id,path,time,event\na,a.bag,1.0,1\n").unwrap();
        assert!(read_manifest(&mpath).is_err());
    }
}
