//! Dataset directory layout and round-trip IO:
//! `images/{id}.png`, `heads/{id}.png`, `annotations.jsonl`, `spec.json`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gop_core::records::{from_jsonl, to_jsonl, ImageRecord};
use image::RgbImage;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::{generate_sample, SceneSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("{0}")]
    Annotations(#[from] gop_core::CoreError),

    #[error("bad spec.json: {0}")]
    SpecJson(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes bytes atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn encode_png(img: &RgbImage, path: &Path) -> Result<Vec<u8>, DataError> {
    let mut bytes = Vec::new();
    img.write_to(
        &mut std::io::Cursor::new(&mut bytes),
        image::ImageFormat::Png,
    )
    .map_err(|source| DataError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(bytes)
}

/// A dataset loaded into memory.
#[derive(Debug)]
pub struct Dataset {
    pub spec: SceneSpec,
    pub samples: Vec<LoadedSample>,
}

#[derive(Debug)]
pub struct LoadedSample {
    pub record: ImageRecord,
    pub scene: RgbImage,
    pub head: RgbImage,
}

/// Generates `count` samples and writes the dataset directory.
pub fn write_dataset(spec: &SceneSpec, count: u64, dir: &Path) -> Result<(), DataError> {
    spec.validate()?;
    fs::create_dir_all(dir.join("images")).map_err(io_err(dir))?;
    fs::create_dir_all(dir.join("heads")).map_err(io_err(dir))?;

    let mut records = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let sample = generate_sample(spec, idx)?;
        let img_path = dir.join("images").join(format!("{idx:05}.png"));
        write_atomic(&img_path, &encode_png(&sample.scene, &img_path)?)?;
        let head_path = dir.join("heads").join(format!("{idx:05}.png"));
        write_atomic(&head_path, &encode_png(&sample.head, &head_path)?)?;
        records.push(sample.record);
    }

    write_atomic(&dir.join("annotations.jsonl"), to_jsonl(&records).as_bytes())?;
    let spec_json =
        serde_json::to_string_pretty(spec).map_err(|e| DataError::SpecJson(e.to_string()))?;
    write_atomic(&dir.join("spec.json"), spec_json.as_bytes())?;
    Ok(())
}

fn load_rgb(path: &Path) -> Result<RgbImage, DataError> {
    let img = image::open(path).map_err(|source| DataError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

/// Reads a dataset directory. A directory without annotations yields an
/// empty dataset with a warning rather than an error.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let ann_path = dir.join("annotations.jsonl");
    if !ann_path.exists() {
        log::warn!("no annotations.jsonl under {}; empty dataset", dir.display());
        return Ok(Dataset {
            spec: SceneSpec::default(),
            samples: Vec::new(),
        });
    }
    let text = fs::read_to_string(&ann_path).map_err(io_err(&ann_path))?;
    let records = from_jsonl(&text)?;

    let spec_path = dir.join("spec.json");
    let spec: SceneSpec = if spec_path.exists() {
        let text = fs::read_to_string(&spec_path).map_err(io_err(&spec_path))?;
        serde_json::from_str(&text).map_err(|e| DataError::SpecJson(e.to_string()))?
    } else {
        SceneSpec::default()
    };

    let mut samples = Vec::with_capacity(records.len());
    for record in records {
        let scene = load_rgb(&dir.join("images").join(format!("{:05}.png", record.image_id)))?;
        let head = load_rgb(&dir.join("heads").join(format!("{:05}.png", record.image_id)))?;
        samples.push(LoadedSample {
            record,
            scene,
            head,
        });
    }
    Ok(Dataset { spec, samples })
}

/// SHA-256 over the spec, annotations, and image bytes, in a fixed order.
pub fn digest_dataset(dir: &Path) -> Result<String, DataError> {
    let mut hasher = Sha256::new();
    for name in ["spec.json", "annotations.jsonl"] {
        let path = dir.join(name);
        if path.exists() {
            hasher.update(fs::read(&path).map_err(io_err(&path))?);
        }
    }
    for sub in ["images", "heads"] {
        let sub_dir = dir.join(sub);
        if !sub_dir.exists() {
            continue;
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(&sub_dir)
            .map_err(io_err(&sub_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for path in entries {
            hasher.update(path.file_name().unwrap().as_encoded_bytes());
            hasher.update(fs::read(&path).map_err(io_err(&path))?);
        }
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_annotations_and_images() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec {
            grid: 4,
            seed: 11,
            ..SceneSpec::default()
        };
        write_dataset(&spec, 10, dir.path()).unwrap();
        let ds = read_dataset(dir.path()).unwrap();
        assert_eq!(ds.samples.len(), 10);
        assert_eq!(ds.spec, spec);
        for (idx, s) in ds.samples.iter().enumerate() {
            let generated = generate_sample(&spec, idx as u64).unwrap();
            assert_eq!(s.record, generated.record);
            assert_eq!(s.scene.as_raw(), generated.scene.as_raw());
            assert_eq!(s.head.as_raw(), generated.head.as_raw());
        }
    }

    #[test]
    fn digest_is_a_pure_function_of_spec_and_count() {
        let spec = SceneSpec {
            grid: 4,
            seed: 5,
            ..SceneSpec::default()
        };
        let d1 = {
            let dir = tempfile::tempdir().unwrap();
            write_dataset(&spec, 4, dir.path()).unwrap();
            digest_dataset(dir.path()).unwrap()
        };
        let d2 = {
            let dir = tempfile::tempdir().unwrap();
            write_dataset(&spec, 4, dir.path()).unwrap();
            digest_dataset(dir.path()).unwrap()
        };
        assert_eq!(d1, d2);
        let d3 = {
            let dir = tempfile::tempdir().unwrap();
            write_dataset(
                &SceneSpec {
                    seed: 6,
                    ..spec.clone()
                },
                4,
                dir.path(),
            )
            .unwrap();
            digest_dataset(dir.path()).unwrap()
        };
        assert_ne!(d1, d3);
    }

    #[test]
    fn truncated_annotation_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec {
            grid: 2,
            ..SceneSpec::default()
        };
        write_dataset(&spec, 2, dir.path()).unwrap();
        let ann = dir.path().join("annotations.jsonl");
        let mut text = fs::read_to_string(&ann).unwrap();
        text.push_str("{\"image_id\": 99, \"boxes\": [\n");
        fs::write(&ann, text).unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn missing_image_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec {
            grid: 2,
            ..SceneSpec::default()
        };
        write_dataset(&spec, 2, dir.path()).unwrap();
        fs::remove_file(dir.path().join("images/00001.png")).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DataError::Image { .. })
        ));
    }

    #[test]
    fn empty_directory_reads_as_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = read_dataset(dir.path()).unwrap();
        assert!(ds.samples.is_empty());
    }
}
