//! Image ingestion, preprocessing, label schemes, splitting and the
//! synthetic road-image generator.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ByteReader;
use crate::tensor::{SeededRng, Tensor};

/// Lateral snow coverage classes, in increasing order of coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FiveClassLabel {
    Bare,
    /// Under 25% coverage, "essentially bare".
    Lt25,
    P25to50,
    P50to75,
    /// Over 75%, fully snow covered.
    Gt75,
}

impl FiveClassLabel {
    pub const ALL: [FiveClassLabel; 5] = [
        FiveClassLabel::Bare,
        FiveClassLabel::Lt25,
        FiveClassLabel::P25to50,
        FiveClassLabel::P50to75,
        FiveClassLabel::Gt75,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FiveClassLabel::Bare => "bare",
            FiveClassLabel::Lt25 => "lt25",
            FiveClassLabel::P25to50 => "p25to50",
            FiveClassLabel::P50to75 => "p50to75",
            FiveClassLabel::Gt75 => "gt75",
        }
    }

    /// Coverage band `[lo, hi]` this label is drawn from by the generator.
    pub fn coverage_band(self) -> (f64, f64) {
        match self {
            FiveClassLabel::Bare => (0.0, 0.0),
            FiveClassLabel::Lt25 => (0.0, 0.25),
            FiveClassLabel::P25to50 => (0.25, 0.5),
            FiveClassLabel::P50to75 => (0.5, 0.75),
            FiveClassLabel::Gt75 => (0.75, 1.0),
        }
    }
}

impl fmt::Display for FiveClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FiveClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FiveClassLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown five-class label '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelScheme {
    Five,
    Three,
    Two,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 3] = [LabelScheme::Five, LabelScheme::Three, LabelScheme::Two];

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            LabelScheme::Five => &["bare", "lt25", "p25to50", "p50to75", "gt75"],
            LabelScheme::Three => &["bare", "partly_snow_covered", "fully_snow_covered"],
            LabelScheme::Two => &["bare", "with_snow_covered"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::Five => "five",
            LabelScheme::Three => "three",
            LabelScheme::Two => "two",
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "five" => Ok(LabelScheme::Five),
            "three" => Ok(LabelScheme::Three),
            "two" => Ok(LabelScheme::Two),
            other => Err(Error::Format(format!("unknown label scheme '{other}'"))),
        }
    }
}

/// Class index of `label` under `scheme`.
///
/// Three classes: bare / partly snow covered (`<25`, `25–50`, `50–75`) /
/// fully snow covered. Two classes: bare / with snow covered.
pub fn map_label(label: FiveClassLabel, scheme: LabelScheme) -> usize {
    use FiveClassLabel::*;
    match scheme {
        LabelScheme::Five => label.index(),
        LabelScheme::Three => match label {
            Bare => 0,
            Lt25 | P25to50 | P50to75 => 1,
            Gt75 => 2,
        },
        LabelScheme::Two => match label {
            Bare => 0,
            _ => 1,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub label: FiveClassLabel,
    /// `3×H×W`.
    pub image: Tensor,
}

/// Labeled images with unique ids and a shared image shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    items: Vec<Item>,
}

impl Dataset {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Format(format!("duplicate item id '{}'", item.id)));
            }
            if item.image.shape() != items[0].image.shape() {
                return Err(Error::Shape(format!(
                    "item '{}' has shape {:?}, expected {:?}",
                    item.id,
                    item.image.shape(),
                    items[0].image.shape()
                )));
            }
        }
        Ok(Dataset { items })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self, scheme: LabelScheme) -> Vec<usize> {
        self.items.iter().map(|i| map_label(i.label, scheme)).collect()
    }

    fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
        }
    }

    pub fn map_images(&self, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Dataset> {
        let items = self
            .items
            .iter()
            .map(|it| {
                Ok(Item {
                    id: it.id.clone(),
                    label: it.label,
                    image: f(&it.image)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(items)
    }
}

/// Seeded shuffle, then the first `round(train_fraction·N)` items train.
pub fn split_train_test(dataset: &Dataset, train_fraction: f64, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Range(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    let perm = rng.permutation(n);
    Ok((dataset.select(&perm[..n_train]), dataset.select(&perm[n_train..])))
}

/// Without-replacement draw of `round(fraction·N)` items.
pub fn bootstrap_subsample(train: &Dataset, fraction: f64, rng: &mut SeededRng) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Range(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let n = (fraction * train.len() as f64).round() as usize;
    let perm = rng.permutation(train.len());
    Ok(train.select(&perm[..n]))
}

/// Corner-aligned bilinear resampling of a `C×H×W` image.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = match img.shape() {
        &[c, h, w] => (c, h, w),
        s => return Err(Error::Shape(format!("expected C×H×W image, got {s:?}"))),
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("target size {out_h}x{out_w} has a zero extent")));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(img.clone());
    }
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let pos = if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        };
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for i in 0..out_h {
            let (y0, y1, fy) = coord(i, out_h, h);
            for j in 0..out_w {
                let (x0, x1, fx) = coord(j, out_w, w);
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

/// Resizes to `(height, width)` and subtracts each channel's own mean.
pub fn preprocess(img: &Tensor, size: (usize, usize)) -> Result<Tensor> {
    if img.shape().len() != 3 || img.shape()[0] != 3 {
        return Err(Error::Shape(format!(
            "preprocessing needs a 3-channel image, got {:?}",
            img.shape()
        )));
    }
    let mut out = resize_bilinear(img, size.0, size.1)?;
    let plane = size.0 * size.1;
    for chunk in out.data_mut().chunks_mut(plane) {
        let mean = chunk.iter().sum::<f64>() / plane as f64;
        chunk.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(out)
}

pub fn preprocess_dataset(dataset: &Dataset, size: (usize, usize)) -> Result<Dataset> {
    dataset.map_images(|img| preprocess(img, size))
}

/// Parses a binary PPM (P6, maxval 255) into a `3×H×W` tensor of 0–255 values.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("PPM header is truncated".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(Error::Format("not a binary PPM (magic must be P6)".into()));
    }
    let mut number = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::Format(format!("bad PPM {what}")))
    };
    let w = number("width")?;
    let h = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval} (only 255)")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data_start = pos + 1;
    let need = w * h * 3;
    if w == 0 || h == 0 || bytes.len() < data_start + need {
        return Err(Error::Format("PPM raster is truncated".into()));
    }
    let raster = &bytes[data_start..data_start + need];
    let mut out = vec![0.0; need];
    for (p, px) in raster.chunks_exact(3).enumerate() {
        for ch in 0..3 {
            out[ch * w * h + p] = px[ch] as f64;
        }
    }
    Tensor::new(&[3, h, w], out)
}

/// Encodes a `3×H×W` tensor as P6; values are rounded and clamped to 0–255.
pub fn encode_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match img.shape() {
        &[3, h, w] => (h, w),
        s => return Err(Error::Shape(format!("PPM needs a 3×H×W image, got {s:?}"))),
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let src = img.data();
    for p in 0..h * w {
        for ch in 0..3 {
            out.push(src[ch * h * w + p].round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

pub fn load_ppm(path: &Path) -> Result<Tensor> {
    decode_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_ppm(path: &Path, img: &Tensor) -> Result<()> {
    fs::write(path, encode_ppm(img)?).map_err(|e| Error::io(path, e))
}

pub const RAW_TENSOR_MAGIC: &[u8; 4] = b"RSCT";
pub const RAW_TENSOR_VERSION: u32 = 1;

/// Raw tensor file: magic `RSCT`, u32 version, u8 rank, u32 dims, f32 payload (all LE).
pub fn encode_raw_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * t.len());
    out.extend_from_slice(RAW_TENSOR_MAGIC);
    out.extend_from_slice(&RAW_TENSOR_VERSION.to_le_bytes());
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != RAW_TENSOR_MAGIC {
        return Err(Error::Format("not a raw tensor file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != RAW_TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported raw tensor version {version}")));
    }
    let ndim = r.u8()? as usize;
    let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    if ndim == 0 || r.remaining() != n * 4 {
        return Err(Error::Format("raw tensor payload does not match its shape".into()));
    }
    let data = (0..n).map(|_| r.f32().map(|v| v as f64)).collect::<Result<Vec<_>>>()?;
    Tensor::new(&shape, data)
}

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    path: String,
    five_class: String,
}

/// Reads `manifest.csv` (`id,path,five_class`) and the images it lists.
/// Paths are relative to `dir`; `.rsct` files are raw tensors, anything else PPM.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let manifest = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut items = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::Format(format!("{}: {e}", manifest.display())))?;
        let path: PathBuf = dir.join(&row.path);
        let image = if path.extension().is_some_and(|e| e == "rsct") {
            decode_raw_tensor(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?
        } else {
            load_ppm(&path)?
        };
        items.push(Item {
            id: row.id,
            label: row.five_class.parse()?,
            image,
        });
    }
    Dataset::new(items)
}

/// Writes every image as `<id>.ppm` plus the manifest.
pub fn save_dataset_dir(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    for item in dataset.items() {
        let file = format!("{}.ppm", item.id);
        save_ppm(&dir.join(&file), &item.image)?;
        writer
            .serialize(ManifestRow {
                id: item.id.clone(),
                path: file,
                five_class: item.label.to_string(),
            })
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    let manifest = dir.join(MANIFEST_FILE);
    fs::write(&manifest, bytes).map_err(|e| Error::io(&manifest, e))
}

/// Minimum value every channel must reach for a pixel to count as snow.
pub const NEAR_WHITE: f64 = 180.0;

/// Rendering parameters for synthetic road scenes.
///
/// All colors are RGB in 0–255. Each image also gets a random illumination
/// gain, horizon height, road offset and shoulder color, so the classes can
/// only be separated by looking at the road surface itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub size: usize,
    pub sky: [f64; 3],
    pub asphalt: [f64; 3],
    pub wheel_path: [f64; 3],
    pub snow: [f64; 3],
    /// Shoulder colors are blended between these two per image.
    pub shoulder_dark: [f64; 3],
    pub shoulder_light: [f64; 3],
    /// Half-width of the per-pixel uniform noise.
    pub noise: f64,
    /// Illumination gain is drawn from `[1 - gain_jitter, 1 + gain_jitter]`.
    pub gain_jitter: f64,
    /// Ragged snow edges: lateral jitter of the coverage boundary per row.
    pub edge_jitter: f64,
    /// Range of the horizon row, as a fraction of image height.
    pub horizon: (f64, f64),
    /// Range of the road's half-width at the bottom edge, as a fraction of image width.
    pub road_half_width: (f64, f64),
    pub seed: u64,
}

impl SyntheticConfig {
    /// Daylight highway scenes; the target task.
    pub fn road(size: usize, seed: u64) -> Self {
        SyntheticConfig {
            size,
            sky: [150.0, 175.0, 205.0],
            asphalt: [95.0, 95.0, 100.0],
            wheel_path: [65.0, 64.0, 68.0],
            snow: [238.0, 240.0, 246.0],
            shoulder_dark: [90.0, 80.0, 60.0],
            shoulder_light: [225.0, 228.0, 232.0],
            noise: 20.0,
            gain_jitter: 0.08,
            edge_jitter: 0.04,
            horizon: (0.20, 0.50),
            road_half_width: (0.25, 0.55),
            seed,
        }
    }

    /// Overcast gravel-road scenes with a different palette; used as the
    /// source task for surrogate pre-training.
    pub fn source(size: usize, seed: u64) -> Self {
        SyntheticConfig {
            size,
            sky: [185.0, 185.0, 190.0],
            asphalt: [120.0, 105.0, 85.0],
            wheel_path: [85.0, 72.0, 58.0],
            snow: [230.0, 236.0, 240.0],
            shoulder_dark: [60.0, 90.0, 50.0],
            shoulder_light: [210.0, 215.0, 220.0],
            noise: 20.0,
            gain_jitter: 0.08,
            edge_jitter: 0.04,
            horizon: (0.28, 0.40),
            road_half_width: (0.42, 0.52),
            seed,
        }
    }
}

const WHEEL_LEFT: (f64, f64) = (0.18, 0.32);
const WHEEL_RIGHT: (f64, f64) = (0.68, 0.82);

/// Order in which lateral road positions `u ∈ [0,1]` get covered as the
/// coverage fraction grows: both outer edges inward first, then the strip
/// between the wheel paths from its middle outward, then one wheel path,
/// then the other. Each region's share of the width equals its share of
/// the coverage range, so coverage `f` covers a fraction `f` of the road.
fn cover_priority(u: f64, first_wheel_left: bool) -> f64 {
    let edge = WHEEL_LEFT.0 + (1.0 - WHEEL_RIGHT.1); // 0.36
    let centre = WHEEL_RIGHT.0 - WHEEL_LEFT.1; // 0.36
    let path = WHEEL_LEFT.1 - WHEEL_LEFT.0; // 0.14
    if u < WHEEL_LEFT.0 {
        (WHEEL_LEFT.0 - u) / WHEEL_LEFT.0 * edge
    } else if u > WHEEL_RIGHT.1 {
        (u - WHEEL_RIGHT.1) / (1.0 - WHEEL_RIGHT.1) * edge
    } else if u > WHEEL_LEFT.1 && u < WHEEL_RIGHT.0 {
        edge + (u - 0.5).abs() / (centre / 2.0) * centre
    } else {
        let left = u <= WHEEL_LEFT.1;
        let (lo, _) = if left { WHEEL_LEFT } else { WHEEL_RIGHT };
        let within = (u - lo) / path * path;
        let order = if left == first_wheel_left { 0.0 } else { path };
        edge + centre + order + within
    }
}

fn is_wheel_path(u: f64) -> bool {
    (WHEEL_LEFT.0..=WHEEL_LEFT.1).contains(&u) || (WHEEL_RIGHT.0..=WHEEL_RIGHT.1).contains(&u)
}

/// A rendered scene plus the mask of pixels inside the road band.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: Tensor,
    pub road_mask: Vec<bool>,
}

/// Renders one road image with snow coverage fraction `coverage ∈ [0,1]`.
/// Pixel values are integers in 0–255.
pub fn render_scene(config: &SyntheticConfig, coverage: f64, rng: &mut SeededRng) -> Result<Scene> {
    let s = config.size;
    if s < 8 {
        return Err(Error::Range(format!("image size {s} is below the minimum of 8")));
    }
    let sf = s as f64;
    let gain = rng.uniform(1.0 - config.gain_jitter, 1.0 + config.gain_jitter + 1e-12);
    let horizon = sf * rng.uniform(config.horizon.0, config.horizon.1);
    let centre = sf * rng.uniform(0.42, 0.58);
    let top_half = sf * rng.uniform(0.05, 0.09);
    let bottom_half = sf * rng.uniform(config.road_half_width.0, config.road_half_width.1);
    let mix = rng.next_f64();
    let shoulder: Vec<f64> = (0..3)
        .map(|c| config.shoulder_dark[c] * (1.0 - mix) + config.shoulder_light[c] * mix)
        .collect();
    let first_wheel_left = rng.next_f64() < 0.5;

    let plane = s * s;
    let mut data = vec![0.0; 3 * plane];
    let mut road_mask = vec![false; plane];
    for y in 0..s {
        let yc = y as f64 + 0.5;
        // lateral offset of the coverage boundary on this row
        let jitter = if coverage > 0.0 && coverage < 1.0 {
            rng.uniform(-config.edge_jitter, config.edge_jitter + 1e-12)
        } else {
            0.0
        };
        for x in 0..s {
            let xc = x as f64 + 0.5;
            let mut rgb = if yc < horizon {
                config.sky
            } else {
                [shoulder[0], shoulder[1], shoulder[2]]
            };
            if yc >= horizon {
                let t = (yc - horizon) / (sf - horizon);
                let half = top_half + (bottom_half - top_half) * t;
                let u = (xc - centre) / (2.0 * half) + 0.5;
                if (0.0..=1.0).contains(&u) {
                    road_mask[y * s + x] = true;
                    let snowy = cover_priority(u, first_wheel_left) < (coverage + jitter).clamp(0.0, 1.0)
                        || coverage >= 1.0;
                    rgb = if snowy && coverage > 0.0 {
                        config.snow
                    } else if is_wheel_path(u) {
                        config.wheel_path
                    } else {
                        config.asphalt
                    };
                }
            }
            for c in 0..3 {
                let noisy = rgb[c] * gain + rng.uniform(-config.noise, config.noise + 1e-12);
                data[c * plane + y * s + x] = noisy.round().clamp(0.0, 255.0);
            }
        }
    }
    Ok(Scene {
        image: Tensor::new(&[3, s, s], data)?,
        road_mask,
    })
}

/// Coverage fraction for a label: 0 for bare, otherwise uniform in the
/// label's band (open at 0 for `<25`).
pub fn draw_coverage(label: FiveClassLabel, rng: &mut SeededRng) -> f64 {
    let (lo, hi) = label.coverage_band();
    match label {
        FiveClassLabel::Bare => 0.0,
        FiveClassLabel::Lt25 => {
            let f = rng.uniform(lo, hi);
            if f == 0.0 {
                hi / 2.0
            } else {
                f
            }
        }
        FiveClassLabel::Gt75 => lo + (hi - lo) * rng.next_f64().max(f64::MIN_POSITIVE),
        _ => rng.uniform(lo, hi),
    }
}

/// `n_per_class` scenes for each five-class label, ids `<label>_<index>`.
/// Every image uses its own derived random stream, so the output depends
/// only on `(config, n_per_class)`.
pub fn generate_synthetic(config: &SyntheticConfig, n_per_class: usize) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::Range("n_per_class must be at least 1".into()));
    }
    let mut items = Vec::with_capacity(5 * n_per_class);
    for label in FiveClassLabel::ALL {
        for i in 0..n_per_class {
            let stream = (label.index() * n_per_class + i) as u64;
            let mut rng = SeededRng::derive(config.seed, stream);
            let coverage = draw_coverage(label, &mut rng);
            let scene = render_scene(config, coverage, &mut rng)?;
            items.push(Item {
                id: format!("{}_{i:05}", label.as_str()),
                label,
                image: scene.image,
            });
        }
    }
    Dataset::new(items)
}
