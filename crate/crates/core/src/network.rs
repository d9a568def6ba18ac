//! VGG-style network assembly, block-granular freezing and weight archives.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::{self, parameter_count, LayerSpec, Params};
use crate::tensor::{SeededRng, Tensor};

/// Ordered block/layer plan of a network.
///
/// `num_classes == 0` (with an empty `fc_head`) describes a headless
/// convolutional base whose output is the flattened feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureProfile {
    pub name: String,
    /// `(channels, height, width)`.
    pub input: (usize, usize, usize),
    /// `(conv layer count, output channels)` per block; each block ends in a 2×2 pool.
    pub conv_blocks: Vec<(usize, usize)>,
    pub fc_head: Vec<usize>,
    pub num_classes: usize,
}

impl ArchitectureProfile {
    /// VGG16 convolutional blocks on 150×150 RGB input with a 512-256 head.
    pub fn vgg16_150(num_classes: usize) -> Self {
        ArchitectureProfile {
            name: "vgg16_150".into(),
            input: (3, 150, 150),
            conv_blocks: vec![(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)],
            fc_head: vec![512, 256],
            num_classes,
        }
    }

    /// Five single-conv blocks on 32×32 input; same block structure as
    /// VGG16 at a size that trains in seconds.
    pub fn mini_32(num_classes: usize) -> Self {
        ArchitectureProfile {
            name: "mini_32".into(),
            input: (3, 32, 32),
            conv_blocks: vec![(1, 8), (1, 16), (1, 32), (1, 32), (1, 32)],
            fc_head: vec![64, 32],
            num_classes,
        }
    }

    pub fn by_name(name: &str, num_classes: usize) -> Result<Self> {
        match name {
            "vgg16_150" => Ok(Self::vgg16_150(num_classes)),
            "mini_32" => Ok(Self::mini_32(num_classes)),
            other => Err(Error::Profile(format!("unknown profile '{other}'"))),
        }
    }

    pub fn is_headless(&self) -> bool {
        self.num_classes == 0
    }

    pub fn conv_base(&self) -> Self {
        ArchitectureProfile {
            fc_head: Vec::new(),
            num_classes: 0,
            ..self.clone()
        }
    }

    pub fn with_head(&self, fc_head: &[usize], num_classes: usize) -> Self {
        ArchitectureProfile {
            fc_head: fc_head.to_vec(),
            num_classes,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Profile(format!("input {:?} has a zero extent", self.input)));
        }
        if self.conv_blocks.is_empty() {
            return Err(Error::Profile("at least one conv block is required".into()));
        }
        if let Some(b) = self.conv_blocks.iter().position(|&(n, ch)| n == 0 || ch == 0) {
            return Err(Error::Profile(format!(
                "block {} has zero layers or channels",
                b + 1
            )));
        }
        let (mut sh, mut sw) = (h, w);
        for b in 0..self.conv_blocks.len() {
            if sh < 2 || sw < 2 {
                return Err(Error::Profile(format!(
                    "spatial size {sh}x{sw} too small to pool after block {}",
                    b + 1
                )));
            }
            sh /= 2;
            sw /= 2;
        }
        if self.fc_head.contains(&0) {
            return Err(Error::Profile("hidden widths must be positive".into()));
        }
        if self.num_classes == 0 && !self.fc_head.is_empty() {
            return Err(Error::Profile("a head needs a positive class count".into()));
        }
        Ok(())
    }

    /// Square-side spatial size entering each block, then after the last pool.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.input.1];
        for _ in &self.conv_blocks {
            let last = *trace.last().unwrap();
            trace.push(last / 2);
        }
        trace
    }

    pub fn final_spatial(&self) -> (usize, usize) {
        self.conv_blocks
            .iter()
            .fold((self.input.1, self.input.2), |(h, w), _| (h / 2, w / 2))
    }

    pub fn last_channels(&self) -> usize {
        self.conv_blocks.last().map_or(self.input.0, |&(_, ch)| ch)
    }

    pub fn flatten_width(&self) -> usize {
        let (h, w) = self.final_spatial();
        self.last_channels() * h * w
    }

    pub fn canonical_text(&self) -> String {
        let (c, h, w) = self.input;
        let blocks: Vec<String> = self
            .conv_blocks
            .iter()
            .map(|(n, ch)| format!("{n}x{ch}"))
            .collect();
        let head: Vec<String> = self.fc_head.iter().map(|w| w.to_string()).collect();
        format!(
            "profile={};input={c}x{h}x{w};blocks={};head={};classes={}",
            self.name,
            blocks.join(","),
            head.join(","),
            self.num_classes
        )
    }

    /// SHA-256 of [`Self::canonical_text`], hex encoded.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.canonical_text().as_bytes())
    }

    /// `(name, spec, block index)` for every layer, in order.
    pub fn layer_plan(&self) -> Vec<(String, LayerSpec, Option<usize>)> {
        let mut plan = base_plan(self);
        plan.extend(head_plan(self.flatten_width(), &self.fc_head, self.num_classes));
        plan
    }
}

fn base_plan(profile: &ArchitectureProfile) -> Vec<(String, LayerSpec, Option<usize>)> {
    let mut plan = Vec::new();
    let mut in_ch = profile.input.0;
    for (b, &(count, out_ch)) in profile.conv_blocks.iter().enumerate() {
        for i in 0..count {
            plan.push((
                format!("block{}_conv{}", b + 1, i + 1),
                LayerSpec::Conv2D { in_ch, out_ch },
                Some(b),
            ));
            plan.push((format!("block{}_relu{}", b + 1, i + 1), LayerSpec::ReLU, Some(b)));
            in_ch = out_ch;
        }
        plan.push((format!("block{}_pool", b + 1), LayerSpec::MaxPool2, Some(b)));
    }
    plan.push(("flatten".into(), LayerSpec::Flatten, None));
    plan
}

fn head_plan(input_width: usize, widths: &[usize], num_classes: usize) -> Vec<(String, LayerSpec, Option<usize>)> {
    let mut plan = Vec::new();
    if num_classes == 0 {
        return plan;
    }
    let mut in_units = input_width;
    for (i, &out_units) in widths.iter().enumerate() {
        plan.push((
            format!("fc{}", i + 1),
            LayerSpec::Dense {
                in_units,
                out_units,
            },
            None,
        ));
        plan.push((format!("fc{}_relu", i + 1), LayerSpec::ReLU, None));
        in_units = out_units;
    }
    plan.push((
        "predictions".into(),
        LayerSpec::Dense {
            in_units,
            out_units: num_classes,
        },
        None,
    ));
    plan.push(("softmax".into(), LayerSpec::Softmax, None));
    plan
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub params: Option<Params>,
    /// Conv block this layer belongs to; `None` for flatten and head layers.
    pub block: Option<usize>,
    /// Frozen layers are held bit-exactly constant by the optimizer.
    pub frozen: bool,
}

fn instantiate(plan: Vec<(String, LayerSpec, Option<usize>)>, rng: &mut SeededRng) -> Result<Vec<NetLayer>> {
    plan.into_iter()
        .map(|(name, spec, block)| {
            let params = if spec.has_params() {
                Some(Params::glorot(&spec, rng)?)
            } else {
                None
            };
            Ok(NetLayer {
                name,
                spec,
                params,
                block,
                frozen: false,
            })
        })
        .collect()
}

/// Runs `layers` forward from `x`, discarding the backward caches.
pub fn forward_layers(layers: &[NetLayer], x: &Tensor) -> Result<Tensor> {
    let mut act = x.clone();
    for layer in layers {
        act = layers::forward(&layer.spec, layer.params.as_ref(), &act)?.0;
    }
    Ok(act)
}

/// A classifier head (dense stack ending in softmax) trained apart from its base.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub layers: Vec<NetLayer>,
    pub input_width: usize,
    pub widths: Vec<usize>,
    pub num_classes: usize,
    /// Fingerprint of the base whose features the head was trained on.
    pub base_fingerprint: String,
    pub trained: bool,
}

impl Head {
    pub fn build(
        input_width: usize,
        widths: &[usize],
        num_classes: usize,
        base_fingerprint: &str,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if num_classes == 0 || widths.contains(&0) || input_width == 0 {
            return Err(Error::Profile(format!(
                "head {input_width}-{widths:?}-{num_classes} has a zero width"
            )));
        }
        Ok(Head {
            layers: instantiate(head_plan(input_width, widths, num_classes), rng)?,
            input_width,
            widths: widths.to_vec(),
            num_classes,
            base_fingerprint: base_fingerprint.to_string(),
            trained: false,
        })
    }

    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        forward_layers(&self.layers, features)
    }

    pub fn total_parameters(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params.as_ref().map(Params::len))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    profile: ArchitectureProfile,
    pub layers: Vec<NetLayer>,
    head_trained: bool,
}

impl Network {
    /// Glorot-uniform weights, zero biases, nothing frozen.
    pub fn build(profile: &ArchitectureProfile, rng: &mut SeededRng) -> Result<Self> {
        profile.validate()?;
        Ok(Network {
            profile: profile.clone(),
            layers: instantiate(profile.layer_plan(), rng)?,
            head_trained: false,
        })
    }

    pub fn profile(&self) -> &ArchitectureProfile {
        &self.profile
    }

    pub fn is_head_trained(&self) -> bool {
        self.head_trained
    }

    pub(crate) fn mark_head_trained(&mut self) {
        self.head_trained = !self.profile.is_headless();
    }

    pub fn freeze_mask(&self) -> Vec<bool> {
        self.layers.iter().map(|l| l.frozen).collect()
    }

    /// Index of the flatten layer; everything after it is the head.
    pub fn flatten_index(&self) -> usize {
        self.layers
            .iter()
            .position(|l| l.spec == LayerSpec::Flatten)
            .expect("every network has a flatten layer")
    }

    pub fn input_shape(&self) -> [usize; 3] {
        let (c, h, w) = self.profile.input;
        [c, h, w]
    }

    /// Class probabilities, or the flattened features for a headless base.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape(),
                x.shape()
            )));
        }
        forward_layers(&self.layers, x)
    }

    /// Freezes every layer of the first `frozen_blocks` conv blocks and
    /// unfreezes the rest, head included.
    pub fn set_freeze_by_blocks(&mut self, frozen_blocks: usize) -> Result<()> {
        let blocks = self.profile.conv_blocks.len();
        if frozen_blocks > blocks {
            return Err(Error::Range(format!(
                "cannot freeze {frozen_blocks} blocks of a {blocks}-block network"
            )));
        }
        for layer in &mut self.layers {
            layer.frozen = layer.block.is_some_and(|b| b < frozen_blocks);
        }
        Ok(())
    }

    /// `(conv layers, pool layers)` currently frozen.
    pub fn frozen_layer_counts(&self) -> (usize, usize) {
        let frozen = |kind: fn(&LayerSpec) -> bool| {
            self.layers
                .iter()
                .filter(|l| l.frozen && kind(&l.spec))
                .count()
        };
        (
            frozen(|s| matches!(s, LayerSpec::Conv2D { .. })),
            frozen(|s| matches!(s, LayerSpec::MaxPool2)),
        )
    }

    /// The conv blocks plus flatten, as a headless network.
    pub fn truncate_to_conv_base(&self) -> Network {
        let end = self.flatten_index() + 1;
        Network {
            profile: self.profile.conv_base(),
            layers: self.layers[..end].to_vec(),
            head_trained: false,
        }
    }

    /// Installs `head` on top of `base`. The result is marked head-trained
    /// only if the head was.
    pub fn assemble(base: &Network, head: Head) -> Result<Network> {
        let base = base.truncate_to_conv_base();
        if head.input_width != base.profile.flatten_width() {
            return Err(Error::Compatibility(format!(
                "head expects {} features, base produces {}",
                head.input_width,
                base.profile.flatten_width()
            )));
        }
        let fp = base.weights_fingerprint();
        if head.base_fingerprint != fp {
            return Err(Error::Compatibility(
                "head was trained on features from a different base".into(),
            ));
        }
        let profile = base.profile.with_head(&head.widths, head.num_classes);
        let mut layers = base.layers;
        layers.extend(head.layers);
        Ok(Network {
            profile,
            layers,
            head_trained: head.trained,
        })
    }

    pub fn total_parameters(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| parameter_count(&l.spec).ok())
            .sum()
    }

    pub fn trainable_parameters(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !l.frozen)
            .filter_map(|l| parameter_count(&l.spec).ok())
            .sum()
    }

    /// Hash of the profile text and every parameter's bit pattern.
    pub fn weights_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.profile.canonical_text().as_bytes());
        for layer in &self.layers {
            if let Some(p) = &layer.params {
                hasher.update(layer.name.as_bytes());
                for v in p.weights.data().iter().chain(p.bias.data()) {
                    hasher.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_archive(&self) -> WeightArchive {
        let mut records = Vec::new();
        for layer in &self.layers {
            if let Some(p) = &layer.params {
                for (suffix, t) in [("weight", &p.weights), ("bias", &p.bias)] {
                    records.push(Record {
                        name: format!("{}.{suffix}", layer.name),
                        shape: t.shape().to_vec(),
                        values: t.data().iter().map(|&v| v as f32).collect(),
                    });
                }
            }
        }
        WeightArchive {
            version: ARCHIVE_VERSION,
            fingerprint: self.profile.fingerprint(),
            records,
        }
    }

    /// Rebuilds a network of `profile` from an archive written for it.
    pub fn from_archive(archive: &WeightArchive, profile: &ArchitectureProfile) -> Result<Network> {
        profile.validate()?;
        if archive.fingerprint != profile.fingerprint() {
            return Err(Error::Compatibility(format!(
                "archive was written for a different architecture than {}",
                profile.canonical_text()
            )));
        }
        let mut records = archive.records.iter();
        let mut layers = Vec::new();
        for (name, spec, block) in profile.layer_plan() {
            let params = if spec.has_params() {
                let weights = take_record(&mut records, &format!("{name}.weight"), &spec.weight_shape().unwrap())?;
                let bias = take_record(&mut records, &format!("{name}.bias"), &[spec.bias_len().unwrap()])?;
                Some(Params { weights, bias })
            } else {
                None
            };
            layers.push(NetLayer {
                name,
                spec,
                params,
                block,
                frozen: false,
            });
        }
        if records.next().is_some() {
            return Err(Error::Format("archive has more records than the profile".into()));
        }
        Ok(Network {
            profile: profile.clone(),
            layers,
            head_trained: false,
        })
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_archive().to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_weights(path: &Path, profile: &ArchitectureProfile) -> Result<Network> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Network::from_archive(&WeightArchive::from_bytes(&bytes)?, profile)
    }

    /// Loads an archive whose head shape is not known up front.
    ///
    /// The dense records determine the head widths and class count, which
    /// together with `family` must reproduce the archive's fingerprint.
    pub fn load_inferring_head(path: &Path, family: &ArchitectureProfile) -> Result<Network> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let archive = WeightArchive::from_bytes(&bytes)?;
        let dense_outputs: Vec<usize> = archive
            .records
            .iter()
            .filter(|r| r.name.ends_with(".weight") && r.shape.len() == 2)
            .map(|r| r.shape[0])
            .collect();
        let profile = match dense_outputs.split_last() {
            Some((&classes, hidden)) => family.with_head(hidden, classes),
            None => family.conv_base(),
        };
        Network::from_archive(&archive, &profile)
    }
}

fn take_record<'a>(
    records: &mut impl Iterator<Item = &'a Record>,
    name: &str,
    shape: &[usize],
) -> Result<Tensor> {
    let rec = records
        .next()
        .ok_or_else(|| Error::Format(format!("archive ends before record '{name}'")))?;
    if rec.name != name || rec.shape != shape {
        return Err(Error::Format(format!(
            "expected record '{name}' {shape:?}, found '{}' {:?}",
            rec.name, rec.shape
        )));
    }
    Tensor::new(shape, rec.values.iter().map(|&v| v as f64).collect())
}

pub const ARCHIVE_MAGIC: &[u8; 4] = b"RSCW";
pub const ARCHIVE_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Binary weight file: magic `RSCW`, version, architecture fingerprint and
/// named little-endian f32 records, with no padding between fields.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightArchive {
    pub version: u32,
    pub fingerprint: String,
    pub records: Vec<Record>,
}

impl WeightArchive {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_str(&mut out, &self.fingerprint);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for rec in &self.records {
            put_str(&mut out, &rec.name);
            out.push(DTYPE_F32);
            out.push(rec.shape.len() as u8);
            for &d in &rec.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &rec.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != ARCHIVE_MAGIC {
            return Err(Error::Format("not a weight archive (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Format(format!("unsupported archive version {version}")));
        }
        let fingerprint = r.string()?;
        let count = r.u32()? as usize;
        let mut records = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::Format(format!("record '{name}' has unknown dtype {dtype}")));
            }
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::Format(format!("record '{name}' payload is truncated")))?;
            let values = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push(Record {
                name,
                shape,
                values,
            });
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last record",
                r.remaining()
            )));
        }
        Ok(WeightArchive {
            version,
            fingerprint,
            records,
        })
    }
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Little-endian cursor that reports running off the end as a format error.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Format(format!(
                "unexpected end of data at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg_profile_layout() {
        let p = ArchitectureProfile::vgg16_150(3);
        p.validate().unwrap();
        assert_eq!(p.spatial_trace(), vec![150, 75, 37, 18, 9, 4]);
        assert_eq!(p.flatten_width(), 8192);
        let plan = p.layer_plan();
        let count = |f: fn(&LayerSpec) -> bool| plan.iter().filter(|(_, s, _)| f(s)).count();
        assert_eq!(count(|s| matches!(s, LayerSpec::Conv2D { .. })), 13);
        assert_eq!(count(|s| matches!(s, LayerSpec::MaxPool2)), 5);
        assert_eq!(count(|s| matches!(s, LayerSpec::Dense { .. })), 3);
        assert_eq!(count(|s| matches!(s, LayerSpec::Softmax)), 1);
    }

    #[test]
    fn mini_profile_flattens_to_32() {
        let p = ArchitectureProfile::mini_32(3);
        assert_eq!(p.spatial_trace(), vec![32, 16, 8, 4, 2, 1]);
        assert_eq!(p.flatten_width(), 32);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let mut p = ArchitectureProfile::mini_32(3);
        p.fc_head = vec![64, 0];
        assert!(matches!(p.validate(), Err(Error::Profile(_))));
        let mut p = ArchitectureProfile::mini_32(3);
        p.conv_blocks[2] = (0, 32);
        assert!(matches!(p.validate(), Err(Error::Profile(_))));
        let mut p = ArchitectureProfile::mini_32(3);
        p.input = (3, 16, 16);
        assert!(matches!(p.validate(), Err(Error::Profile(_))));
        assert!(Network::build(&p, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn fingerprint_tracks_every_mutation() {
        let base = ArchitectureProfile::mini_32(3);
        let fp = base.fingerprint();
        let mut wider = base.clone();
        wider.fc_head[0] = 65;
        let fewer_blocks = ArchitectureProfile {
            conv_blocks: base.conv_blocks[..4].to_vec(),
            ..base.clone()
        };
        for other in [ArchitectureProfile::mini_32(5), wider, fewer_blocks] {
            assert_ne!(other.fingerprint(), fp);
        }
        assert_eq!(ArchitectureProfile::mini_32(3).fingerprint(), fp);
    }

    #[test]
    fn uniform_output_for_zero_weights() {
        let mut net = Network::build(&ArchitectureProfile::mini_32(3), &mut SeededRng::new(1)).unwrap();
        for layer in &mut net.layers {
            if let Some(p) = &mut layer.params {
                *p = Params::zeros(&layer.spec).unwrap();
            }
        }
        let y = net.forward(&Tensor::zeros(&[3, 32, 32]).unwrap()).unwrap();
        for &p in y.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_a_deterministic_distribution() {
        let net = Network::build(&ArchitectureProfile::mini_32(3), &mut SeededRng::new(4)).unwrap();
        let x = Tensor::uniform_init(&[3, 32, 32], -50.0, 50.0, &mut SeededRng::new(5)).unwrap();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!((a.sum() - 1.0).abs() < 1e-12);
        assert!(a.data().iter().all(|&p| p > 0.0 && p < 1.0));
        let wrong = Tensor::zeros(&[3, 16, 16]).unwrap();
        assert!(matches!(net.forward(&wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn freeze_by_blocks() {
        let mut net = Network::build(&ArchitectureProfile::mini_32(3), &mut SeededRng::new(0)).unwrap();
        net.set_freeze_by_blocks(2).unwrap();
        assert_eq!(net.frozen_layer_counts(), (2, 2));
        net.set_freeze_by_blocks(0).unwrap();
        assert!(net.freeze_mask().iter().all(|f| !f));
        net.set_freeze_by_blocks(5).unwrap();
        let head_start = net.flatten_index();
        assert!(net.layers[..head_start].iter().all(|l| l.frozen));
        assert!(net.layers[head_start..].iter().all(|l| !l.frozen));
        assert!(matches!(net.set_freeze_by_blocks(6), Err(Error::Range(_))));
    }

    #[test]
    fn truncation_is_idempotent() {
        let net = Network::build(&ArchitectureProfile::mini_32(3), &mut SeededRng::new(0)).unwrap();
        let base = net.truncate_to_conv_base();
        assert_eq!(base.truncate_to_conv_base(), base);
        let out = base.forward(&Tensor::zeros(&[3, 32, 32]).unwrap()).unwrap();
        assert_eq!(out.shape(), &[32]);
    }

    #[test]
    fn equal_seeds_build_identical_networks() {
        let p = ArchitectureProfile::mini_32(3);
        let a = Network::build(&p, &mut SeededRng::new(77)).unwrap();
        let b = Network::build(&p, &mut SeededRng::new(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights_fingerprint(), b.weights_fingerprint());
    }

    #[test]
    fn glorot_bounds_hold() {
        let net = Network::build(&ArchitectureProfile::mini_32(3), &mut SeededRng::new(3)).unwrap();
        for layer in &net.layers {
            if let Some(p) = &layer.params {
                let (fi, fo) = match layer.spec {
                    LayerSpec::Conv2D { in_ch, out_ch } => (in_ch * 9, out_ch * 9),
                    LayerSpec::Dense { in_units, out_units } => (in_units, out_units),
                    _ => unreachable!(),
                };
                let limit = (6.0 / (fi + fo) as f64).sqrt();
                assert!(p.weights.data().iter().all(|w| w.abs() <= limit));
                assert!(p.bias.data().iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn archive_round_trip_and_mismatch() {
        let p = ArchitectureProfile::mini_32(3);
        let net = Network::build(&p, &mut SeededRng::new(8)).unwrap();
        let bytes = net.to_archive().to_bytes();
        assert_eq!(&bytes[..4], b"RSCW");
        let loaded = Network::from_archive(&WeightArchive::from_bytes(&bytes).unwrap(), &p).unwrap();
        for (a, b) in net.layers.iter().zip(&loaded.layers) {
            if let (Some(pa), Some(pb)) = (&a.params, &b.params) {
                for (x, y) in pa.weights.data().iter().zip(pb.weights.data()) {
                    assert_eq!(*x as f32, *y as f32);
                }
            }
        }
        let archive = WeightArchive::from_bytes(&bytes).unwrap();
        assert!(matches!(
            Network::from_archive(&archive, &ArchitectureProfile::mini_32(5)),
            Err(Error::Compatibility(_))
        ));
        assert!(matches!(
            WeightArchive::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
    }
}
