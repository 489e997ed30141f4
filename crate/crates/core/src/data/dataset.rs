use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, RgbImage};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::phantom::{generate_phantom, PhantomSpec, TripletSample};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
const WARP_MAGIC: &[u8; 8] = b"CCWARP01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// File names of one stored triplet, relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFiles {
    /// Generator index the sample was produced from.
    pub index: u64,
    pub m: String,
    pub c: String,
    pub s: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Directory holding `manifest.json`; reset to the actual location on load.
    pub root: PathBuf,
    pub spec: PhantomSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub train: Vec<SampleFiles>,
    pub test: Vec<SampleFiles>,
    /// SHA-256 over every listed file name and its bytes, in manifest order.
    pub checksum: String,
}

impl DatasetManifest {
    pub fn samples(&self, split: Split) -> &[SampleFiles] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self, split: Split) -> usize {
        self.samples(split).len()
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_test
    }

    pub fn path_of(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn encode_png_gray(plane: &Array2<u8>) -> Result<Vec<u8>> {
    let (h, w) = plane.dim();
    let img = GrayImage::from_raw(w as u32, h as u32, plane.iter().copied().collect())
        .expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::shape(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

fn encode_png_rgb(img: &Array3<f32>) -> Result<Vec<u8>> {
    let (_, h, w) = img.dim();
    let mut raw = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                raw.push(to_u8(img[[ch, y, x]]));
            }
        }
    }
    let rgb = RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    rgb.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::shape(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// Raw warp sidecar: magic `CCWARP01`, then little-endian u32 channels, height,
/// width, then channel-major little-endian f32 values.
pub fn write_warp_sidecar(path: &Path, field: &Array3<f32>) -> Result<()> {
    let (c, h, w) = field.dim();
    let mut bytes = Vec::with_capacity(20 + 4 * field.len());
    bytes.extend_from_slice(WARP_MAGIC);
    for d in [c, h, w] {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in field.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_warp_sidecar(path: &Path) -> Result<Array3<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != WARP_MAGIC {
        return Err(Error::dataset(path, "not a warp sidecar (bad magic)"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let body = &bytes[20..];
    if body.len() != 4 * c * h * w {
        return Err(Error::dataset(
            path,
            format!("warp sidecar body has {} bytes, header promises {}", body.len(), 4 * c * h * w),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Array3::from_shape_vec((c, h, w), values).expect("length checked"))
}

/// Writes one triplet as `<stem>_m.png`, `<stem>_c.png`, `<stem>_s.png` and `<stem>_warp.f32`
/// inside `dir`; returns the bare file names in that order.
pub fn write_triplet(dir: &Path, stem: &str, t: &TripletSample) -> Result<[String; 4]> {
    let names = [
        format!("{stem}_m.png"),
        format!("{stem}_c.png"),
        format!("{stem}_s.png"),
        format!("{stem}_warp.f32"),
    ];
    let m8 = t.m.index_axis(ndarray::Axis(0), 0).mapv(to_u8);
    write_atomic(&dir.join(&names[0]), &encode_png_gray(&m8)?)?;
    write_atomic(&dir.join(&names[1]), &encode_png_rgb(&t.c)?)?;
    write_atomic(&dir.join(&names[2]), &encode_png_gray(&t.labels)?)?;
    write_warp_sidecar(&dir.join(&names[3]), &t.deformation)?;
    Ok(names)
}

fn checksum_files(root: &Path, samples: &[&SampleFiles]) -> Result<String> {
    let mut hasher = Sha256::new();
    for s in samples {
        let mut names = vec![&s.m, &s.c, &s.s];
        if let Some(w) = &s.warp {
            names.push(w);
        }
        for name in names {
            let path = root.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hasher.update(name.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Generates `n_train + n_test` triplets under `root` and writes `manifest.json`.
///
/// Train sample `i` uses generator index `i`; test sample `i` uses `n_train + i`.
pub fn generate_dataset(
    spec: &PhantomSpec,
    n_train: usize,
    n_test: usize,
    root: &Path,
) -> Result<DatasetManifest> {
    spec.validate()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::config("dataset needs at least one train and one test sample"));
    }
    let mut listing = Vec::with_capacity(2);
    for (split, count, offset) in [(Split::Train, n_train, 0), (Split::Test, n_test, n_train)] {
        let dir = root.join(split.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let indices: Vec<usize> = (0..count).collect();
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count);
        let chunk = count.div_ceil(workers);
        let results: Vec<Result<Vec<SampleFiles>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = indices
                .chunks(chunk)
                .map(|part| {
                    let dir = &dir;
                    scope.spawn(move || {
                        part.iter()
                            .map(|&i| {
                                let index = (offset + i) as u64;
                                let t = generate_phantom(spec, index)?;
                                let names = write_triplet(dir, &i.to_string(), &t)?;
                                let rel = |n: &str| format!("{}/{n}", split.dir_name());
                                Ok(SampleFiles {
                                    index,
                                    m: rel(&names[0]),
                                    c: rel(&names[1]),
                                    s: rel(&names[2]),
                                    warp: Some(rel(&names[3])),
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
        });
        let mut files = Vec::with_capacity(count);
        for part in results {
            files.extend(part?);
        }
        listing.push(files);
    }
    let test = listing.pop().unwrap();
    let train = listing.pop().unwrap();
    let all: Vec<&SampleFiles> = train.iter().chain(test.iter()).collect();
    let checksum = checksum_files(root, &all)?;
    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        root: root.to_path_buf(),
        spec: spec.clone(),
        n_train,
        n_test,
        train,
        test,
        checksum,
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::dataset(root, format!("manifest serialisation failed: {e}")))?;
    write_atomic(&root.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

/// Reads `<root>/manifest.json` and checks that every listed file exists.
pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut manifest: DatasetManifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::dataset(&path, format!("invalid manifest: {e}")))?;
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        return Err(Error::dataset(
            &path,
            format!("unsupported manifest format version {}", manifest.format_version),
        ));
    }
    if manifest.train.len() != manifest.n_train || manifest.test.len() != manifest.n_test {
        return Err(Error::dataset(&path, "split sizes disagree with the file listing"));
    }
    manifest.root = root.to_path_buf();
    for s in manifest.train.iter().chain(manifest.test.iter()) {
        for name in [Some(&s.m), Some(&s.c), Some(&s.s), s.warp.as_ref()].into_iter().flatten() {
            let p = root.join(name);
            if !p.is_file() {
                return Err(Error::dataset(p, "listed file is missing"));
            }
        }
    }
    Ok(manifest)
}

fn read_png(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::dataset(path, format!("cannot decode image: {e}")))
}

/// Decodes sample `i` of `split` into unit-interval arrays.
pub fn load_triplet(manifest: &DatasetManifest, split: Split, i: usize) -> Result<TripletSample> {
    let samples = manifest.samples(split);
    let files = samples.get(i).ok_or_else(|| {
        Error::dataset(
            &manifest.root,
            format!("{} index {i} out of range (split has {})", split.dir_name(), samples.len()),
        )
    })?;
    let l = manifest.spec.num_classes;

    let m_path = manifest.path_of(&files.m);
    let m_img = match read_png(&m_path)? {
        image::DynamicImage::ImageLuma8(g) => g,
        other => return Err(Error::dataset(&m_path, format!("expected 8-bit grayscale, got {:?}", other.color()))),
    };
    let (w, h) = m_img.dimensions();
    let (w, h) = (w as usize, h as usize);

    let c_path = manifest.path_of(&files.c);
    let c_img = match read_png(&c_path)? {
        image::DynamicImage::ImageRgb8(c) => c,
        other => return Err(Error::dataset(&c_path, format!("expected 8-bit RGB, got {:?}", other.color()))),
    };
    let s_path = manifest.path_of(&files.s);
    let s_img = match read_png(&s_path)? {
        image::DynamicImage::ImageLuma8(g) => g,
        other => return Err(Error::dataset(&s_path, format!("expected 8-bit label map, got {:?}", other.color()))),
    };
    if c_img.dimensions() != m_img.dimensions() || s_img.dimensions() != m_img.dimensions() {
        return Err(Error::dataset(&c_path, "triplet images disagree in size"));
    }

    let m = Array3::from_shape_fn((1, h, w), |(_, y, x)| f32::from(m_img.get_pixel(x as u32, y as u32)[0]) / 255.0);
    let c = Array3::from_shape_fn((3, h, w), |(ch, y, x)| {
        f32::from(c_img.get_pixel(x as u32, y as u32)[ch]) / 255.0
    });
    let labels = Array2::from_shape_fn((h, w), |(y, x)| s_img.get_pixel(x as u32, y as u32)[0]);
    if let Some(&bad) = labels.iter().find(|&&k| k as usize >= l) {
        return Err(Error::dataset(
            &s_path,
            format!("label id {bad} is out of range for {l} classes"),
        ));
    }
    let deformation = match &files.warp {
        Some(name) => {
            let field = read_warp_sidecar(&manifest.path_of(name))?;
            if field.dim() != (2, h, w) {
                return Err(Error::dataset(manifest.path_of(name), "warp field size mismatch"));
            }
            field
        }
        None => Array3::zeros((2, h, w)),
    };
    Ok(TripletSample {
        m,
        c,
        labels,
        num_classes: l,
        deformation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PhantomSpec {
        PhantomSpec::new(32, 4, 1)
    }

    #[test]
    fn count_bookkeeping() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&spec(), 10, 2, dir.path()).unwrap();
        assert_eq!((m.n_train, m.n_test, m.total()), (10, 2, 12));
        assert_eq!(m.train.len() + m.test.len(), 12);
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(m.test[0].index, 10);
    }

    #[test]
    fn regeneration_has_identical_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_dataset(&spec(), 3, 1, dir.path()).unwrap();
        let b = generate_dataset(&spec(), 3, 1, dir.path()).unwrap();
        assert_eq!(a.checksum, b.checksum);
        let other = tempfile::tempdir().unwrap();
        let c = generate_dataset(&spec(), 3, 1, other.path()).unwrap();
        assert_eq!(a.checksum, c.checksum);
    }

    #[test]
    fn loads_generated_sample_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&spec(), 2, 1, dir.path()).unwrap();
        let t = load_triplet(&m, Split::Test, 0).unwrap();
        let orig = generate_phantom(&spec(), 2).unwrap();
        assert_eq!(t.labels, orig.labels);
        assert_eq!(t.deformation, orig.deformation);
        for (a, b) in t.m.iter().zip(orig.m.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn out_of_range_index_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&spec(), 2, 1, dir.path()).unwrap();
        assert!(matches!(load_triplet(&m, Split::Test, 1), Err(Error::Dataset { .. })));
        assert!(load_triplet(&m, Split::Train, 5).is_err());
    }

    #[test]
    fn corrupt_label_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&spec(), 1, 1, dir.path()).unwrap();
        let s_path = m.path_of(&m.train[0].s);
        let mut plane = Array2::<u8>::zeros((32, 32));
        plane[[3, 4]] = 4;
        fs::write(&s_path, encode_png_gray(&plane).unwrap()).unwrap();
        match load_triplet(&m, Split::Train, 0) {
            Err(Error::Dataset { path, reason }) => {
                assert_eq!(path, s_path);
                assert!(reason.contains("label id 4"));
            }
            other => panic!("expected dataset error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_detected_on_manifest_load() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&spec(), 1, 1, dir.path()).unwrap();
        fs::remove_file(m.path_of(&m.test[0].c)).unwrap();
        assert!(matches!(load_manifest(dir.path()), Err(Error::Dataset { .. })));
    }

    #[test]
    fn warp_sidecar_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x_warp.f32");
        fs::write(&p, b"NOTAWARP\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(read_warp_sidecar(&p).is_err());
    }
}
