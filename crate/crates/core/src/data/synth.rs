use super::netpbm::{encode, RawImage};
use super::{filter_binary, DataError, Dataset, LabelCode, IMAGES_DIR, LABELS_FILE};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Geometry and intensities of synthetic fundus stand-ins. Radii are
/// fractions of the image side. Normal images carry a bright disk, AMD
/// images a bright ring.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImageStyle {
    pub disk_radius: f64,
    pub ring_outer: f64,
    pub ring_inner: f64,
    pub background: f64,
    pub foreground: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    /// Maximum center offset, as a fraction of the side.
    pub jitter: f64,
}

impl Default for SynthImageStyle {
    fn default() -> Self {
        Self {
            disk_radius: 0.25,
            ring_outer: 0.3,
            ring_inner: 0.2,
            background: 0.2,
            foreground: 0.7,
            noise: 0.1,
            jitter: 0.08,
        }
    }
}

impl SynthImageStyle {
    pub fn render(&self, label: LabelCode, size: usize, rng: &mut impl Rng) -> RawImage {
        let side = size as f64;
        let center = side / 2.0;
        let cx = center + rng.gen_range(-self.jitter..=self.jitter) * side;
        let cy = center + rng.gen_range(-self.jitter..=self.jitter) * side;
        let noise = Normal::new(0.0, self.noise).expect("noise deviation is finite");
        let mut pixels = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (dy, dx) = (i as f64 + 0.5 - cy, j as f64 + 0.5 - cx);
                let r = (dx * dx + dy * dy).sqrt() / side;
                let lit = match label {
                    LabelCode::Amd => r <= self.ring_outer && r >= self.ring_inner,
                    _ => r <= self.disk_radius,
                };
                let base = if lit { self.foreground } else { self.background };
                let v = (base + noise.sample(rng)).clamp(0.0, 1.0);
                pixels.push((v * 255.0).round() as u8);
            }
        }
        RawImage {
            channels: 1,
            width: size,
            height: size,
            pixels,
        }
    }
}

/// Writes `n` labeled grayscale images plus `labels.csv` into `out_dir`,
/// with exactly `round(n * minority_fraction)` AMD samples.
pub fn synth_generate(
    n: usize,
    minority_fraction: f64,
    image_size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Dataset, DataError> {
    synth_generate_with(n, minority_fraction, image_size, seed, out_dir, &SynthImageStyle::default())
}

pub fn synth_generate_with(
    n: usize,
    minority_fraction: f64,
    image_size: usize,
    seed: u64,
    out_dir: &Path,
    style: &SynthImageStyle,
) -> Result<Dataset, DataError> {
    if n < 10 {
        return Err(DataError::InvalidArgument(format!("n = {n}; need at least 10 samples")));
    }
    if !(minority_fraction > 0.0 && minority_fraction < 0.5) {
        return Err(DataError::InvalidArgument(format!(
            "minority fraction {minority_fraction} must lie in (0, 0.5)"
        )));
    }
    if image_size < 4 {
        return Err(DataError::InvalidArgument("image size must be at least 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_amd = (n as f64 * minority_fraction).round() as usize;
    let mut labels: Vec<LabelCode> = (0..n)
        .map(|i| if i < n_amd { LabelCode::Amd } else { LabelCode::Normal })
        .collect();
    labels.shuffle(&mut rng);

    let images = out_dir.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| DataError::io(&images, e))?;
    let width = n.to_string().len().max(4);
    let mut csv = String::from("id,filename,label\n");
    for (i, &label) in labels.iter().enumerate() {
        let id = format!("s{i:0width$}");
        let file = format!("{id}.pgm");
        let path = images.join(&file);
        let img = style.render(label, image_size, &mut rng);
        fs::write(&path, encode(&img)).map_err(|e| DataError::io(&path, e))?;
        let _ = writeln!(csv, "{id},{file},{label}");
    }
    let labels_path = out_dir.join(LABELS_FILE);
    fs::write(&labels_path, &csv).map_err(|e| DataError::io(&labels_path, e))?;
    filter_binary(super::parse_labels(&csv, out_dir)?)
}
