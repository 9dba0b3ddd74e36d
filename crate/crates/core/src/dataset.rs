//! Paired partial/complete clouds and the `manifest.csv` layout.
//!
//! A manifest has the header `category,complete_path,partial_path`; relative
//! paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geom::{crop_partial, generate_synthetic, load_xyz, to_xyz_string, PointCloud, ShapeKind};
use crate::util::write_atomic;
use crate::{seed, Error, Result};

pub const MANIFEST_HEADER: &str = "category,complete_path,partial_path";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub category: String,
    pub partial: PointCloud,
    pub complete: PointCloud,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct categories in first-seen order.
    pub fn categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.category.as_str()) {
                out.push(&s.category);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub category: String,
    pub complete_path: PathBuf,
    pub partial_path: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != MANIFEST_HEADER {
        return Err(parse_err(1, format!("expected header {MANIFEST_HEADER:?}, found {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<ManifestRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads every pair listed in a manifest.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let samples = read_manifest(path)?
        .into_iter()
        .map(|r| {
            Ok(Sample {
                complete: load_xyz(resolve(&r.complete_path))?.with_label(&r.category),
                partial: load_xyz(resolve(&r.partial_path))?.with_label(&r.category),
                category: r.category,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { samples })
}

pub fn manifest_csv(rows: &[ManifestRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes each pair as XYZ files plus `manifest.csv` into `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let complete = PathBuf::from(format!("{i:04}_{}_complete.xyz", s.category));
        let partial = PathBuf::from(format!("{i:04}_{}_partial.xyz", s.category));
        write_atomic(&dir.join(&complete), to_xyz_string(&s.complete).as_bytes())?;
        write_atomic(&dir.join(&partial), to_xyz_string(&s.partial).as_bytes())?;
        rows.push(ManifestRow {
            category: s.category.clone(),
            complete_path: complete,
            partial_path: partial,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_atomic(&manifest, manifest_csv(&rows)?.as_bytes())?;
    Ok(manifest)
}

/// Parameters of a synthetic dataset; shapes cycle through `kinds`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kinds: Vec<ShapeKind>,
    pub count: usize,
    pub points: usize,
    pub crop: f64,
    pub seed: u64,
}

pub fn synthesize(spec: &SynthSpec) -> Result<Dataset> {
    if spec.kinds.is_empty() {
        return Err(Error::InvalidArgument("no shape kinds given".into()));
    }
    let samples = (0..spec.count)
        .map(|i| {
            let kind = spec.kinds[i % spec.kinds.len()];
            let shape_seed = seed::derive(spec.seed, &[seed::tag::SYNTH_SHAPE, i as u64]);
            let crop_seed = seed::derive(spec.seed, &[seed::tag::SYNTH_CROP, i as u64]);
            let complete = generate_synthetic(kind, spec.points, shape_seed)?;
            let partial = crop_partial(&complete, crop_seed, spec.crop)?;
            Ok(Sample {
                category: kind.name().to_string(),
                partial,
                complete,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(count: usize) -> SynthSpec {
        SynthSpec {
            kinds: ShapeKind::ALL.to_vec(),
            count,
            points: 64,
            crop: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn synthesis_cycles_kinds() {
        let ds = synthesize(&spec(5)).unwrap();
        let cats: Vec<&str> = ds.samples.iter().map(|s| s.category.as_str()).collect();
        assert_eq!(cats, ["sphere", "box", "cylinder", "sphere", "box"]);
        assert_eq!(ds.categories(), ["sphere", "box", "cylinder"]);
        assert!(ds.samples.iter().all(|s| s.partial.len() == 32 && s.complete.len() == 64));
        assert_eq!(ds, synthesize(&spec(5)).unwrap());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthesize(&spec(4)).unwrap();
        let m = write_dataset(&ds, dir.path()).unwrap();
        let text = std::fs::read_to_string(&m).unwrap();
        assert!(text.starts_with("category,complete_path,partial_path\nsphere,0000_sphere_complete.xyz,"));
        assert_eq!(text.lines().count(), 5);
        assert!(!text.contains('\r'));
        let back = load_manifest(&m).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            assert_eq!(a.complete.points(), b.complete.points());
            assert_eq!(a.partial.points(), b.partial.points());
            assert_eq!(a.category, b.category);
        }
    }

    #[test]
    fn bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "a,b\nx,y\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Parse { line: 1, .. })));
        std::fs::write(&p, "category,complete_path,partial_path\nbox,missing.xyz,missing.xyz\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Io { .. })));
        assert!(matches!(read_manifest(&dir.path().join("none.csv")), Err(Error::Io { .. })));
    }
}
