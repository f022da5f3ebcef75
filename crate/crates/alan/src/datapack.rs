//! On-disk data model: binary feature blobs, a JSON manifest, and a synthetic
//! paired-corpus generator.
//!
//! A pack directory holds `manifest.json` plus one `.varf` blob per stored
//! feature sequence. Blob layout (integers little-endian u32, values
//! little-endian f32):
//!
//! ```text
//! magic "VARF" | version = 1 | T | d_in | T * d_in values
//! ```
//!
//! Text queries are stored inline in the manifest (token ids, caption,
//! phrase spans); audio queries get a blob like the video streams do.
//! Feature data is kept as `f32` in memory so a write/read round trip is the
//! identity bit for bit.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{indexed_stream, stream};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"VARF";
const VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Which pathway a feature sequence feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Object,
    Motion,
    Audio,
    Token,
}

/// A length-T sequence of d_in-wide feature vectors for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub item_id: String,
    pub stream: Stream,
    /// T x d_in, finite.
    pub data: Array2<f32>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// The numeric core computes in f64; convert at the boundary.
    pub fn data_f64(&self) -> Array2<f64> {
        self.data.mapv(|v| v as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.data.nrows() == 0 || self.data.ncols() == 0 {
            return Err(Error::Validation(format!(
                "feature sequence {} has empty shape {:?}",
                self.item_id,
                self.data.dim()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature sequence {} contains non-finite entries",
                self.item_id
            )));
        }
        Ok(())
    }
}

/// Phrase categories eligible for masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseKind {
    NounPhrase,
    VerbPhrase,
}

/// Half-open token span `[start, end)` of one phrase in a caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub start: usize,
    pub end: usize,
    pub kind: PhraseKind,
}

impl PhraseSpan {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// The cross-modal query side of a pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Text { tokens: Vec<usize>, caption: String },
    Audio { features: FeatureSequence },
}

impl Query {
    pub fn modality(&self) -> QueryModality {
        match self {
            Query::Text { .. } => QueryModality::Text,
            Query::Audio { .. } => QueryModality::Audio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryModality {
    Text,
    Audio,
}

/// One (video, query) pair with its weak video-level label.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedItem {
    pub item_id: String,
    pub object: FeatureSequence,
    pub motion: FeatureSequence,
    pub query: Query,
    /// 1 = the video contains an anomaly.
    pub label: u8,
    pub phrase_spans: Vec<PhraseSpan>,
    /// Per-clip ground truth (synthetic data only; used to validate the
    /// detector, never to train it).
    pub truth_anomaly_mask: Option<Vec<bool>>,
}

impl PairedItem {
    pub fn t(&self) -> usize {
        self.object.len()
    }

    pub fn n_tokens(&self) -> Option<usize> {
        match &self.query {
            Query::Text { tokens, .. } => Some(tokens.len()),
            Query::Audio { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// A full corpus: items plus the shared token vocabulary (index = token id).
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub split: Split,
    pub items: Vec<PairedItem>,
    pub vocabulary: Vec<String>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Check every documented invariant; violations are hard errors.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(Error::Validation(format!("duplicate item id {}", item.item_id)));
            }
            item.object.validate()?;
            item.motion.validate()?;
            if item.object.len() != item.motion.len() {
                return Err(Error::Validation(format!(
                    "item {}: object stream has {} clips but motion has {}",
                    item.item_id,
                    item.object.len(),
                    item.motion.len()
                )));
            }
            if item.label > 1 {
                return Err(Error::Validation(format!(
                    "item {}: label {} is not binary",
                    item.item_id, item.label
                )));
            }
            if let Some(mask) = &item.truth_anomaly_mask {
                if mask.len() != item.t() {
                    return Err(Error::Validation(format!(
                        "item {}: truth mask length {} != T {}",
                        item.item_id,
                        mask.len(),
                        item.t()
                    )));
                }
            }
            match &item.query {
                Query::Text { tokens, .. } => {
                    if tokens.is_empty() {
                        return Err(Error::Validation(format!(
                            "item {}: empty token sequence",
                            item.item_id
                        )));
                    }
                    for &tok in tokens {
                        if tok >= self.vocabulary.len() {
                            return Err(Error::Validation(format!(
                                "item {}: token id {tok} outside vocabulary of {}",
                                item.item_id,
                                self.vocabulary.len()
                            )));
                        }
                    }
                    validate_spans(&item.phrase_spans, tokens.len(), &item.item_id)?;
                }
                Query::Audio { features } => {
                    features.validate()?;
                    if !item.phrase_spans.is_empty() {
                        return Err(Error::Validation(format!(
                            "item {}: audio query cannot carry phrase spans",
                            item.item_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_spans(spans: &[PhraseSpan], n_tokens: usize, item_id: &str) -> Result<()> {
    for span in spans {
        if span.is_empty() {
            return Err(Error::Validation(format!(
                "item {item_id}: empty phrase span at {}..{}",
                span.start, span.end
            )));
        }
        if span.end > n_tokens {
            return Err(Error::Validation(format!(
                "item {item_id}: phrase span {}..{} exceeds {} tokens",
                span.start, span.end, n_tokens
            )));
        }
    }
    let mut sorted: Vec<&PhraseSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| s.start);
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::Validation(format!(
                "item {item_id}: overlapping phrase spans {}..{} and {}..{}",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary blobs
// ---------------------------------------------------------------------------

pub fn write_blob(path: &Path, data: &Array2<f32>) -> Result<()> {
    let (t, d) = data.dim();
    if t > u32::MAX as usize || d > u32::MAX as usize {
        return Err(Error::Validation(format!("blob dimensions {t}x{d} overflow the header")));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    for &v in data.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_blob(path: &Path) -> Result<Array2<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
    }
    let t = read_u32(&mut r, path)? as usize;
    let d = read_u32(&mut r, path)? as usize;
    let n = t.checked_mul(d).ok_or_else(|| {
        Error::Format(format!("{}: dimensions {t}x{d} overflow", path.display()))
    })?;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(|_| {
        Error::Format(format!(
            "{}: expected {t}x{d} values but the blob is shorter",
            path.display()
        ))
    })?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes after data", path.display())));
    }
    let values: Vec<f32> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((t, d), values)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_u32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    Ok(u32::from_le_bytes(buf))
}

// ---------------------------------------------------------------------------
// Manifest serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    split: Split,
    vocabulary: Vec<String>,
    items: Vec<ManifestItem>,
}

#[derive(Serialize, Deserialize)]
struct ManifestItem {
    item_id: String,
    label: u8,
    object_blob: String,
    motion_blob: String,
    query: ManifestQuery,
    #[serde(default)]
    phrase_spans: Vec<PhraseSpan>,
    #[serde(default)]
    truth_anomaly_mask: Option<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "snake_case")]
enum ManifestQuery {
    Text { caption: String, tokens: Vec<usize> },
    Audio { blob: String },
}

fn blob_name(item_id: &str, stream: Stream) -> String {
    let suffix = match stream {
        Stream::Object => "object",
        Stream::Motion => "motion",
        Stream::Audio => "audio",
        Stream::Token => "token",
    };
    format!("{item_id}.{suffix}.varf")
}

fn check_id_is_filename_safe(id: &str) -> Result<()> {
    if id.is_empty()
        || id.contains(['/', '\\', '\0'])
        || id == "."
        || id == ".."
    {
        return Err(Error::Validation(format!("item id {id:?} is not filename-safe")));
    }
    Ok(())
}

/// Write a validated corpus to `directory` (created if missing): one JSON
/// index plus one blob per stored feature sequence.
pub fn write_pack(manifest: &CorpusManifest, directory: &Path) -> Result<()> {
    manifest.validate()?;
    std::fs::create_dir_all(directory)?;
    let mut items = Vec::with_capacity(manifest.items.len());
    for item in &manifest.items {
        check_id_is_filename_safe(&item.item_id)?;
        let object_blob = blob_name(&item.item_id, Stream::Object);
        let motion_blob = blob_name(&item.item_id, Stream::Motion);
        write_blob(&directory.join(&object_blob), &item.object.data)?;
        write_blob(&directory.join(&motion_blob), &item.motion.data)?;
        let query = match &item.query {
            Query::Text { tokens, caption } => {
                ManifestQuery::Text { caption: caption.clone(), tokens: tokens.clone() }
            }
            Query::Audio { features } => {
                let blob = blob_name(&item.item_id, Stream::Audio);
                write_blob(&directory.join(&blob), &features.data)?;
                ManifestQuery::Audio { blob }
            }
        };
        items.push(ManifestItem {
            item_id: item.item_id.clone(),
            label: item.label,
            object_blob,
            motion_blob,
            query,
            phrase_spans: item.phrase_spans.clone(),
            truth_anomaly_mask: item
                .truth_anomaly_mask
                .as_ref()
                .map(|m| m.iter().map(|&b| b as u8).collect()),
        });
    }
    let file = ManifestFile {
        split: manifest.split,
        vocabulary: manifest.vocabulary.clone(),
        items,
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(directory.join(MANIFEST_NAME), json)?;
    Ok(())
}

/// Load a pack and verify every invariant of the loaded types.
pub fn read_pack(directory: &Path) -> Result<CorpusManifest> {
    let manifest_path = directory.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::Format(format!("{}: {e}", manifest_path.display()))
    })?;
    let file: ManifestFile = serde_json::from_str(&text)?;
    let mut items = Vec::with_capacity(file.items.len());
    for rec in file.items {
        let object = FeatureSequence {
            item_id: rec.item_id.clone(),
            stream: Stream::Object,
            data: read_blob(&directory.join(&rec.object_blob))?,
        };
        let motion = FeatureSequence {
            item_id: rec.item_id.clone(),
            stream: Stream::Motion,
            data: read_blob(&directory.join(&rec.motion_blob))?,
        };
        let query = match rec.query {
            ManifestQuery::Text { caption, tokens } => Query::Text { tokens, caption },
            ManifestQuery::Audio { blob } => Query::Audio {
                features: FeatureSequence {
                    item_id: rec.item_id.clone(),
                    stream: Stream::Audio,
                    data: read_blob(&directory.join(&blob))?,
                },
            },
        };
        let truth_anomaly_mask = match rec.truth_anomaly_mask {
            Some(mask) => {
                for &m in &mask {
                    if m > 1 {
                        return Err(Error::Validation(format!(
                            "item {}: truth mask entry {m} is not binary",
                            rec.item_id
                        )));
                    }
                }
                Some(mask.into_iter().map(|m| m == 1).collect())
            }
            None => None,
        };
        items.push(PairedItem {
            item_id: rec.item_id,
            object,
            motion,
            query,
            label: rec.label,
            phrase_spans: rec.phrase_spans,
            truth_anomaly_mask,
        });
    }
    let manifest = CorpusManifest { split: file.split, items, vocabulary: file.vocabulary };
    manifest.validate()?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Synthetic corpus generation
// ---------------------------------------------------------------------------

/// Configuration for the synthetic paired-corpus generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_pairs: usize,
    /// Clips per video.
    pub t: usize,
    /// Raw feature width of the video (and audio) streams.
    pub d_in: usize,
    /// Vocabulary capacity; must cover the reserved words plus two
    /// distinctive tokens per pair.
    pub vocab_size: usize,
    /// Fraction of items carrying an anomaly (label 1).
    pub anomaly_ratio: f64,
    pub seed: u64,
    pub split: Split,
    pub query_modality: QueryModality,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_pairs: 32,
            t: 32,
            d_in: 8,
            vocab_size: 128,
            anomaly_ratio: 0.5,
            seed: 0,
            split: Split::Train,
            query_modality: QueryModality::Text,
        }
    }
}

const FILLER_WORDS: [&str; 10] =
    ["the", "a", "person", "scene", "camera", "footage", "shows", "near", "while", "then"];

/// Token id of the classifier slot prepended by the text encoder.
pub const CLS_TOKEN: usize = 0;

fn reserved_words() -> Vec<String> {
    let mut v = vec!["[cls]".to_string()];
    v.extend(FILLER_WORDS.iter().map(|w| w.to_string()));
    v
}

/// Background noise level of synthetic features.
const NOISE_STD: f64 = 0.3;
/// Strength of the per-pair latent code.
const CODE_AMP: f64 = 1.0;
/// Strength of the shared anomaly direction inside anomalous windows.
const ANOMALY_AMP: f64 = 1.5;

/// Build a deterministic synthetic corpus of (video, query) pairs.
///
/// Each pair gets a latent unit code: for abnormal items it is injected into
/// the clips of a contiguous anomalous window (10-50% of T) together with a
/// corpus-wide anomaly direction; for normal items it is spread across all
/// clips. Text queries mention two pair-specific tokens wrapped in noun/verb
/// phrase spans; audio queries carry the code directly in their features.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<CorpusManifest> {
    if config.n_pairs == 0 || config.t == 0 || config.d_in == 0 {
        return Err(Error::Config("n_pairs, t and d_in must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.anomaly_ratio) {
        return Err(Error::Config(format!(
            "anomaly_ratio {} outside [0, 1]",
            config.anomaly_ratio
        )));
    }
    let reserved = reserved_words();
    let needed = reserved.len() + 2 * config.n_pairs;
    if config.vocab_size < needed {
        return Err(Error::Config(format!(
            "vocab_size {} cannot hold {} reserved words plus 2 tokens for each of {} pairs \
             (need at least {needed})",
            config.vocab_size,
            reserved.len(),
            config.n_pairs
        )));
    }

    // Vocabulary: reserved words, then (noun, verb) per pair, padded to size.
    let mut vocabulary = reserved.clone();
    for i in 0..config.n_pairs {
        vocabulary.push(format!("object{i}"));
        vocabulary.push(format!("action{i}"));
    }
    while vocabulary.len() < config.vocab_size {
        vocabulary.push(format!("word{}", vocabulary.len()));
    }

    let split_tag = match config.split {
        Split::Train => "train",
        Split::Test => "test",
    };

    // The anomaly direction is corpus-wide and split-independent, so a train
    // split and a test split generated from the same seed agree on what
    // "anomalous" looks like.
    let anomaly_dir = unit_vector(config.d_in, &mut stream(config.seed, "anomaly-direction"));

    // Label assignment: exactly round(ratio * n) abnormal items, shuffled.
    let n_abnormal = (config.anomaly_ratio * config.n_pairs as f64).round() as usize;
    let mut labels = vec![1u8; n_abnormal.min(config.n_pairs)];
    labels.resize(config.n_pairs, 0);
    labels.shuffle(&mut stream(config.seed, &format!("{split_tag}-labels")));

    let mut items = Vec::with_capacity(config.n_pairs);
    for i in 0..config.n_pairs {
        let tag = |name: &str| format!("{split_tag}-{name}");
        let mut item_rng = indexed_stream(config.seed, &tag("item"), i as u64);
        let code = unit_vector(config.d_in, &mut item_rng);
        // The motion stream carries the same identity rotated by one lane, so
        // the two streams are distinct but equally informative.
        let mut motion_code = code.clone();
        motion_code.rotate_right(1);

        let label = labels[i];
        let (window, mask) = if label == 1 {
            let min_w = ((0.1 * config.t as f64).ceil() as usize).max(1);
            let max_w = ((0.5 * config.t as f64).floor() as usize).max(min_w);
            let w = item_rng.random_range(min_w..=max_w);
            let start = item_rng.random_range(0..=config.t - w);
            let mut mask = vec![false; config.t];
            for m in mask.iter_mut().skip(start).take(w) {
                *m = true;
            }
            (Some((start, w)), mask)
        } else {
            (None, vec![false; config.t])
        };

        let object = synth_stream(config, i, Stream::Object, &code, window, &anomaly_dir, &mut item_rng);
        let motion =
            synth_stream(config, i, Stream::Motion, &motion_code, window, &anomaly_dir, &mut item_rng);

        let item_id = format!("pair-{i:04}");
        let (query, phrase_spans) = match config.query_modality {
            QueryModality::Text => {
                let noun_id = reserved.len() + 2 * i;
                let verb_id = noun_id + 1;
                let (tokens, spans) = synth_caption(
                    noun_id,
                    verb_id,
                    &mut indexed_stream(config.seed, &tag("caption"), i as u64),
                );
                let caption =
                    tokens.iter().map(|&t| vocabulary[t].as_str()).collect::<Vec<_>>().join(" ");
                (Query::Text { tokens, caption }, spans)
            }
            QueryModality::Audio => {
                let audio = synth_stream(
                    config,
                    i,
                    Stream::Audio,
                    &code,
                    window,
                    &anomaly_dir,
                    &mut indexed_stream(config.seed, &tag("audio"), i as u64),
                );
                (Query::Audio { features: audio }, Vec::new())
            }
        };

        items.push(PairedItem {
            item_id,
            object,
            motion,
            query,
            label,
            phrase_spans,
            truth_anomaly_mask: Some(mask),
        });
    }

    let manifest = CorpusManifest { split: config.split, items, vocabulary };
    manifest.validate()?;
    Ok(manifest)
}

fn unit_vector(d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v: Vec<f64> = (0..d).map(|_| rand_distr::Distribution::sample(&normal, rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn synth_stream(
    config: &SyntheticConfig,
    pair_index: usize,
    stream_kind: Stream,
    code: &[f64],
    window: Option<(usize, usize)>,
    anomaly_dir: &[f64],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> FeatureSequence {
    let normal = rand_distr::Normal::new(0.0, NOISE_STD).expect("valid normal");
    let mut data = Array2::from_shape_fn((config.t, config.d_in), |_| {
        rand_distr::Distribution::sample(&normal, rng) as f32
    });
    match window {
        Some((start, w)) => {
            // Abnormal: identity code + anomaly direction, window only.
            for t in start..start + w {
                for j in 0..config.d_in {
                    data[[t, j]] +=
                        (CODE_AMP * code[j] + ANOMALY_AMP * anomaly_dir[j]) as f32;
                }
            }
        }
        None => {
            // Normal: identity code spread across every clip.
            for t in 0..config.t {
                for j in 0..config.d_in {
                    data[[t, j]] += (CODE_AMP * code[j]) as f32;
                }
            }
        }
    }
    FeatureSequence { item_id: format!("pair-{pair_index:04}"), stream: stream_kind, data }
}

/// Caption = filler prefix, noun phrase, filler bridge, verb phrase, filler
/// suffix; the noun/verb tokens are unique to the pair.
fn synth_caption(
    noun_id: usize,
    verb_id: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<usize>, Vec<PhraseSpan>) {
    let filler = |rng: &mut rand_chacha::ChaCha8Rng| 1 + rng.random_range(0..FILLER_WORDS.len());
    let mut tokens = Vec::new();
    for _ in 0..rng.random_range(1..=2) {
        tokens.push(filler(rng));
    }
    let noun_start = tokens.len();
    tokens.push(noun_id);
    let noun_span = PhraseSpan { start: noun_start, end: tokens.len(), kind: PhraseKind::NounPhrase };
    for _ in 0..rng.random_range(0..=1) {
        tokens.push(filler(rng));
    }
    let verb_start = tokens.len();
    tokens.push(verb_id);
    let verb_span = PhraseSpan { start: verb_start, end: tokens.len(), kind: PhraseKind::VerbPhrase };
    for _ in 0..rng.random_range(0..=1) {
        tokens.push(filler(rng));
    }
    (tokens, vec![noun_span, verb_span])
}

/// Convenience: generate and immediately write a pack.
pub fn generate_pack(config: &SyntheticConfig, directory: &Path) -> Result<PathBuf> {
    let manifest = generate_synthetic(config)?;
    write_pack(&manifest, directory)?;
    Ok(directory.join(MANIFEST_NAME))
}
