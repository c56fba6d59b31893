//! Dataset ingestion: label files, Normal-vs-AMD filtering, image loading,
//! stratified splitting, synthetic corpora and batch samplers.

mod netpbm;
mod sampler;
mod synth;

pub use netpbm::{decode, encode, resize, RawImage};
pub use sampler::{make_sampler, Sampler, SamplerMode};
pub use synth::{synth_generate, synth_generate_with, SynthImageStyle};

use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// Class index of Normal in every binary tensor and metric.
pub const CLASS_NORMAL: usize = 0;
/// Class index of age-related macular degeneration; the positive class.
pub const CLASS_AMD: usize = 1;
pub const CLASS_NAMES: [&str; 2] = ["N", "A"];

pub const LABELS_FILE: &str = "labels.csv";
pub const IMAGES_DIR: &str = "images";
const LABELS_HEADER: &str = "id,filename,label";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("labels file must start with the header `{LABELS_HEADER}`")]
    MissingHeader,
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: expected 3 comma-separated fields")]
    MalformedRow { line: usize },
    #[error("image file not found: {0}")]
    MissingFile(PathBuf),
    #[error("dataset has no {0} samples after filtering")]
    EmptyAfterFilter(&'static str),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image header: {0}")]
    CorruptHeader(String),
    #[error("image data truncated: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("class {class} has {count} samples; the split would leave one side empty")]
    ClassTooSmall { class: &'static str, count: usize },
    #[error("batch size {0} is below the minimum of 2")]
    BatchTooSmall(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// The eight ODIR diagnosis codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelCode {
    Normal,
    Diabetes,
    Glaucoma,
    Cataract,
    Amd,
    Hypertension,
    Myopia,
    Other,
}

impl LabelCode {
    pub fn code(self) -> char {
        match self {
            Self::Normal => 'N',
            Self::Diabetes => 'D',
            Self::Glaucoma => 'G',
            Self::Cataract => 'C',
            Self::Amd => 'A',
            Self::Hypertension => 'H',
            Self::Myopia => 'M',
            Self::Other => 'O',
        }
    }

    /// Binary class index for N and A; `None` for the other diagnoses.
    pub fn class_index(self) -> Option<usize> {
        match self {
            Self::Normal => Some(CLASS_NORMAL),
            Self::Amd => Some(CLASS_AMD),
            _ => None,
        }
    }
}

impl FromStr for LabelCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "N" => Self::Normal,
            "D" => Self::Diabetes,
            "G" => Self::Glaucoma,
            "C" => Self::Cataract,
            "A" => Self::Amd,
            "H" => Self::Hypertension,
            "M" => Self::Myopia,
            "O" => Self::Other,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for LabelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub label: LabelCode,
}

/// Parses `id,filename,label` rows. Filenames resolve against the labels
/// file's directory, then against its `images/` subdirectory.
pub fn parse_labels(text: &str, base_dir: &Path) -> Result<Vec<SampleRecord>, DataError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == LABELS_HEADER => {}
        _ => return Err(DataError::MissingHeader),
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [id, filename, label] = fields[..] else {
            return Err(DataError::MalformedRow { line: line_no });
        };
        let label = label.parse().map_err(|()| DataError::UnknownLabel {
            line: line_no,
            label: label.to_string(),
        })?;
        if !seen.insert(id.to_string()) {
            return Err(DataError::DuplicateId {
                line: line_no,
                id: id.to_string(),
            });
        }
        let direct = base_dir.join(filename);
        let image_path = if direct.exists() {
            direct
        } else {
            let nested = base_dir.join(IMAGES_DIR).join(filename);
            if nested.exists() {
                nested
            } else {
                direct
            }
        };
        records.push(SampleRecord {
            id: id.to_string(),
            image_path,
            label,
        });
    }
    Ok(records)
}

pub fn parse_labels_csv(path: &Path) -> Result<Vec<SampleRecord>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_labels(&text, path.parent().unwrap_or(Path::new(".")))
}

/// N and A records only, with per-class counts indexed by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
    pub class_counts: [usize; 2],
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| r.label.class_index().expect("dataset holds only N and A"))
            .collect()
    }

    fn from_records(records: Vec<SampleRecord>) -> Self {
        let mut class_counts = [0; 2];
        for r in &records {
            if let Some(c) = r.label.class_index() {
                class_counts[c] += 1;
            }
        }
        Self {
            records,
            class_counts,
        }
    }

    /// Loads `labels.csv` from `dir` and keeps the N and A rows.
    pub fn open(dir: &Path) -> Result<Self, DataError> {
        filter_binary(parse_labels_csv(&dir.join(LABELS_FILE))?)
    }
}

pub fn filter_binary(records: Vec<SampleRecord>) -> Result<Dataset, DataError> {
    let kept: Vec<SampleRecord> = records
        .into_iter()
        .filter(|r| r.label.class_index().is_some())
        .collect();
    let ds = Dataset::from_records(kept);
    if ds.class_counts[CLASS_NORMAL] == 0 {
        return Err(DataError::EmptyAfterFilter("N"));
    }
    if ds.class_counts[CLASS_AMD] == 0 {
        return Err(DataError::EmptyAfterFilter("A"));
    }
    Ok(ds)
}

/// Decodes a record's image and resizes it to `target` (`[height, width]`).
pub fn load_image(record: &SampleRecord, target: [usize; 2]) -> Result<Tensor, DataError> {
    if target.contains(&0) {
        return Err(DataError::InvalidArgument("target size must be positive".into()));
    }
    let bytes = std::fs::read(&record.image_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(record.image_path.clone()),
        _ => DataError::io(&record.image_path, e),
    })?;
    let image = decode(&bytes)?.to_tensor();
    Ok(resize(&image, target[0], target[1]))
}

/// Stratified train/test split. Each class contributes
/// `round(count * test_fraction)` samples to the test side.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = dataset.labels();
    let mut in_test = vec![false; dataset.len()];
    for class in [CLASS_NORMAL, CLASS_AMD] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let count = members.len();
        let n_test = (count as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == count {
            return Err(DataError::ClassTooSmall {
                class: CLASS_NAMES[class],
                count,
            });
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_test] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .records
        .iter()
        .cloned()
        .zip(&in_test)
        .partition(|(_, &t)| t);
    Ok((
        Dataset::from_records(train.into_iter().map(|(r, _)| r).collect()),
        Dataset::from_records(test.into_iter().map(|(r, _)| r).collect()),
    ))
}

/// Images decoded into one `[N, C, H, W]` tensor with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub ids: Vec<String>,
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl ImageSet {
    /// Loads every record at `shape` (`[C, H, W]`). Grayscale images are
    /// replicated to three channels and color images averaged to one when
    /// the channel counts differ.
    pub fn load(dataset: &Dataset, shape: [usize; 3]) -> Result<Self, DataError> {
        if dataset.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let [c, h, w] = shape;
        let mut data = Vec::with_capacity(dataset.len() * c * h * w);
        for record in &dataset.records {
            let img = load_image(record, [h, w])?;
            let native = img.shape()[0];
            let plane = h * w;
            match (native, c) {
                (a, b) if a == b => data.extend_from_slice(img.data()),
                (1, _) => (0..c).for_each(|_| data.extend_from_slice(img.data())),
                (_, 1) => data.extend((0..plane).map(|p| {
                    (0..native).map(|ch| img.data()[ch * plane + p]).sum::<f64>() / native as f64
                })),
                _ => {
                    return Err(DataError::UnsupportedFormat(format!(
                        "{native}-channel image for a {c}-channel model"
                    )))
                }
            }
        }
        Ok(Self {
            ids: dataset.records.iter().map(|r| r.id.clone()).collect(),
            images: Tensor::from_vec(&[dataset.len(), c, h, w], data)
                .map_err(|e| DataError::InvalidArgument(e.to_string()))?,
            labels: dataset.labels(),
        })
    }

    pub fn from_parts(ids: Vec<String>, images: Tensor, labels: Vec<usize>) -> Result<Self, DataError> {
        if images.rank() != 4 || images.shape()[0] != labels.len() || ids.len() != labels.len() {
            return Err(DataError::InvalidArgument(
                "ids, images and labels must agree in length".into(),
            ));
        }
        Ok(Self { ids, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Gathers the listed samples into a batch tensor plus labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>), crate::tensor::TensorError> {
        let images = self.images.select_rows(indices)?;
        Ok((images, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}
