//! Dataset loading and synthesis: IDX-format files, deterministic
//! subsampling, and the Gaussian-blob datasets used by hermetic tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{CwError, Result};
use crate::rng::derive_rng;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Flattened images in [0,1] with integer labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// File paths or synthesis parameters, for run metadata.
    pub provenance: String,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: String,
    ) -> Result<LabeledDataset> {
        if !images.is_matrix() || images.rows() != labels.len() {
            return Err(CwError::Data(format!(
                "images shape {:?} does not match {} labels",
                images.shape(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(CwError::Data(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if images.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CwError::Data("image values outside [0,1]".into()));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    /// Deterministic content hash over images, labels and class count.
    pub fn content_hash(&self) -> u64 {
        let mut h = self.images.content_hash();
        for &l in &self.labels {
            h ^= l as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^ self.num_classes as u64
    }

    /// Subset by sample index, keeping class count and provenance.
    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            images: self.images.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }
}

fn read_u32_be(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|_| CwError::Format {
        path: path.display().to_string(),
        detail: "truncated header".into(),
    })?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image file: u32-be magic 0x00000803, then n, rows, cols,
/// then n·rows·cols unsigned bytes.
pub fn read_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize)> {
    let mut f = fs::File::open(path)?;
    let magic = read_u32_be(&mut f, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(CwError::Format {
            path: path.display().to_string(),
            detail: format!("bad image magic {magic:#010x}"),
        });
    }
    let n = read_u32_be(&mut f, path)? as usize;
    let rows = read_u32_be(&mut f, path)? as usize;
    let cols = read_u32_be(&mut f, path)? as usize;
    let mut data = vec![0u8; n * rows * cols];
    f.read_exact(&mut data).map_err(|_| CwError::Format {
        path: path.display().to_string(),
        detail: format!("truncated image data, expected {} bytes", n * rows * cols),
    })?;
    let mut trailing = [0u8; 1];
    if f.read(&mut trailing)? != 0 {
        return Err(CwError::Format {
            path: path.display().to_string(),
            detail: "trailing bytes after image data".into(),
        });
    }
    Ok((data, n, rows, cols))
}

/// Parse an IDX label file: u32-be magic 0x00000801, then n, then n bytes.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut f = fs::File::open(path)?;
    let magic = read_u32_be(&mut f, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(CwError::Format {
            path: path.display().to_string(),
            detail: format!("bad label magic {magic:#010x}"),
        });
    }
    let n = read_u32_be(&mut f, path)? as usize;
    let mut data = vec![0u8; n];
    f.read_exact(&mut data).map_err(|_| CwError::Format {
        path: path.display().to_string(),
        detail: format!("truncated label data, expected {n} bytes"),
    })?;
    let mut trailing = [0u8; 1];
    if f.read(&mut trailing)? != 0 {
        return Err(CwError::Format {
            path: path.display().to_string(),
            detail: "trailing bytes after label data".into(),
        });
    }
    Ok(data)
}

pub fn write_idx_images(
    path: &Path,
    data: &[u8],
    n: usize,
    rows: usize,
    cols: usize,
) -> Result<()> {
    debug_assert_eq!(data.len(), n * rows * cols);
    let mut f = fs::File::create(path)?;
    f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(n as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    f.write_all(data)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

/// Byte pixel to [0,1].
pub fn normalize(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| b as f64 / 255.0).collect()
}

/// Load a paired (images, labels) IDX set, flattening images to one row
/// per sample and normalizing to [0,1].
pub fn load_idx_pair(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (raw, n, rows, cols) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(CwError::Data(format!(
            "{} images but {} labels ({} / {})",
            n,
            labels.len(),
            images_path.display(),
            labels_path.display()
        )));
    }
    let images = Tensor::new(vec![n, rows * cols], normalize(&raw))?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(
        images,
        labels,
        num_classes.max(1),
        format!("idx:{}+{}", images_path.display(), labels_path.display()),
    )
}

/// Deterministic choice of exactly k samples per class, order shuffled.
pub fn subsample_per_class(ds: &LabeledDataset, k: usize, seed: u64) -> Result<LabeledDataset> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = derive_rng(seed, "subsample-per-class");
    let mut chosen = Vec::with_capacity(k * ds.num_classes);
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < k {
            return Err(CwError::Data(format!(
                "class {class} has {} samples, need {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..k]);
    }
    chosen.shuffle(&mut rng);
    Ok(ds.select(&chosen))
}

/// Isotropic Gaussian clusters at seeded random centers in [0,1]^dim,
/// samples clipped back into the unit box.
pub fn synthetic_blobs(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut rng = derive_rng(seed, "synthetic-blobs");
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let n = num_classes * per_class;
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &m in center {
                let v: f64 = m + spread * rng.sample::<f64, _>(StandardNormal);
                values.push(v.clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let images = Tensor::new(vec![n, dim], values)?;
    let ds = LabeledDataset::new(
        images,
        labels,
        num_classes,
        format!(
            "blobs:classes={num_classes},dim={dim},per_class={per_class},spread={spread},seed={seed}"
        ),
    )?;
    Ok(ds.select(&order))
}

/// Train/test blob pair sharing class centers: one blob draw split per
/// class into the first `train_per_class` and the remaining samples.
pub fn synthetic_blob_split(
    num_classes: usize,
    dim: usize,
    train_per_class: usize,
    test_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let all = synthetic_blobs(
        num_classes,
        dim,
        train_per_class + test_per_class,
        spread,
        seed,
    )?;
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut seen = vec![0usize; num_classes];
    for (i, &l) in all.labels.iter().enumerate() {
        if seen[l] < train_per_class {
            train_idx.push(i);
        } else {
            test_idx.push(i);
        }
        seen[l] += 1;
    }
    Ok((all.select(&train_idx), all.select(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn idx_round_trip() {
        let dir = tempdir().unwrap();
        let img_path = dir.path().join("img");
        let lbl_path = dir.path().join("lbl");
        let pixels: Vec<u8> = (0..3 * 4).map(|i| (i * 21) as u8).collect();
        write_idx_images(&img_path, &pixels, 3, 2, 2).unwrap();
        write_idx_labels(&lbl_path, &[0, 1, 2]).unwrap();

        let (back, n, r, c) = read_idx_images(&img_path).unwrap();
        assert_eq!((n, r, c), (3, 2, 2));
        assert_eq!(back, pixels);
        assert_eq!(read_idx_labels(&lbl_path).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn idx_bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad");
        fs::write(&p, 0x0000_0802u32.to_be_bytes()).unwrap();
        let err = read_idx_images(&p).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn idx_truncated_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("short");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]); // needs 8
        fs::write(&p, bytes).unwrap();
        let err = read_idx_images(&p).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn paired_load_count_mismatch() {
        let dir = tempdir().unwrap();
        let img_path = dir.path().join("img");
        let lbl_path = dir.path().join("lbl");
        write_idx_images(&img_path, &[0u8; 8], 2, 2, 2).unwrap();
        write_idx_labels(&lbl_path, &[0, 1, 0]).unwrap();
        assert!(load_idx_pair(&img_path, &lbl_path).is_err());
    }

    #[test]
    fn normalize_endpoints() {
        let v = normalize(&[0, 128, 255]);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 128.0 / 255.0).abs() < 1e-15);
        assert!((v[1] - 0.50196).abs() < 1e-5);
        assert_eq!(v[2], 1.0);
    }

    #[test]
    fn subsample_counts_and_determinism() {
        let ds = synthetic_blobs(10, 24, 20, 0.05, 3).unwrap();
        let a = subsample_per_class(&ds, 5, 11).unwrap();
        let b = subsample_per_class(&ds, 5, 11).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a.content_hash(), b.content_hash());
        for c in 0..10 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 5);
        }
        let other = subsample_per_class(&ds, 5, 12).unwrap();
        assert_ne!(a.content_hash(), other.content_hash());
    }

    #[test]
    fn subsample_full_class_is_permutation() {
        let ds = synthetic_blobs(3, 24, 8, 0.05, 4).unwrap();
        let sub = subsample_per_class(&ds, 8, 5).unwrap();
        assert_eq!(sub.len(), ds.len());
        let mut expect: Vec<u64> = (0..ds.len())
            .map(|i| ds.select(&[i]).content_hash())
            .collect();
        let mut got: Vec<u64> = (0..sub.len())
            .map(|i| sub.select(&[i]).content_hash())
            .collect();
        expect.sort_unstable();
        got.sort_unstable();
        assert_eq!(expect, got);
    }

    #[test]
    fn subsample_insufficient_names_class() {
        let ds = synthetic_blobs(4, 24, 6, 0.05, 6).unwrap();
        let err = subsample_per_class(&ds, 7, 0).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn blobs_counts_and_hash_stability() {
        let a = synthetic_blobs(10, 64, 64, 0.1, 42).unwrap();
        assert_eq!(a.len(), 640);
        assert_eq!(a.dim(), 64);
        let b = synthetic_blobs(10, 64, 64, 0.1, 42).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn tight_blobs_nearest_centroid_perfect() {
        let ds = synthetic_blobs(5, 32, 12, 1e-4, 9).unwrap();
        // recover centroids as per-class means, then 1-NN classify
        let mut centroids = vec![vec![0.0f64; 32]; 5];
        let mut counts = [0usize; 5];
        for (i, &l) in ds.labels.iter().enumerate() {
            for (k, v) in ds.images.row(i).iter().enumerate() {
                centroids[l][k] += v;
            }
            counts[l] += 1;
        }
        for (c, cent) in centroids.iter_mut().enumerate() {
            for v in cent.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        for (i, &l) in ds.labels.iter().enumerate() {
            let row = ds.images.row(i);
            let dist = |c: usize| -> f64 {
                row.iter()
                    .zip(&centroids[c])
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum()
            };
            let best = (0..5)
                .min_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap())
                .unwrap();
            assert_eq!(best, l, "sample {i}");
        }
    }

    #[test]
    fn blob_split_shares_centers_and_is_disjoint() {
        let (train, test) = synthetic_blob_split(4, 24, 10, 4, 0.05, 13).unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!(test.len(), 16);
        for c in 0..4 {
            assert_eq!(train.labels.iter().filter(|&&l| l == c).count(), 10);
            assert_eq!(test.labels.iter().filter(|&&l| l == c).count(), 4);
        }
    }
}
