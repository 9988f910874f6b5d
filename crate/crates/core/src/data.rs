//! Synthetic multilingual task families and JSONL ingestion.
//!
//! A family shares one latent problem across languages. Each language is an
//! orthogonal transform of the latent space: rotations by per-plane angles in
//! the fixed coordinate planes `(0,1), (2,3), …`, optionally followed by a
//! coordinate permutation. Token families use a vocabulary permutation
//! instead. Labels live in latent space, so they are language invariant and
//! the same latent id rendered in two languages is an exact translation pair.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::example::{Example, Input, Label};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LanguageRole {
    HighResource,
    Auxiliary,
    Target,
    Outlier,
}

/// One language of a family: its transform and a similarity-group tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub code: String,
    pub role: LanguageRole,
    /// Rotation angle (radians) for each coordinate plane `(2p, 2p+1)`.
    pub angles: Vec<f64>,
    /// Coordinate permutation (feature families) or vocabulary permutation
    /// (token families): output position `i` takes input `perm[i]`.
    pub permutation: Option<Vec<usize>>,
    pub group: String,
}

impl LanguageSpec {
    pub fn identity(code: impl Into<String>, planes: usize) -> Self {
        LanguageSpec {
            code: code.into(),
            role: LanguageRole::HighResource,
            angles: vec![0.0; planes],
            permutation: None,
            group: "identity".into(),
        }
    }

    /// Overall rotation magnitude: Euclidean norm of the per-plane angles.
    pub fn angle(&self) -> f64 {
        self.angles.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    fn rotate(&self, z: &[f64], sign: f64) -> Vec<f64> {
        let mut x = z.to_vec();
        for (p, &phi) in self.angles.iter().enumerate() {
            let (i, j) = (2 * p, 2 * p + 1);
            if j >= x.len() {
                break;
            }
            let (s, c) = (sign * phi).sin_cos();
            let (a, b) = (x[i], x[j]);
            x[i] = c * a - s * b;
            x[j] = s * a + c * b;
        }
        x
    }

    /// Applies this language's transform to latent features.
    pub fn transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z.len())?;
        let x = self.rotate(z, 1.0);
        Ok(match &self.permutation {
            Some(perm) => perm.iter().map(|&k| x[k]).collect(),
            None => x,
        })
    }

    /// Inverse of [`LanguageSpec::transform`].
    pub fn inverse_transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let unperm = match &self.permutation {
            Some(perm) => {
                let mut out = vec![0.0; x.len()];
                for (i, &k) in perm.iter().enumerate() {
                    out[k] = x[i];
                }
                out
            }
            None => x.to_vec(),
        };
        // undo plane rotations in reverse order
        let mut z = unperm;
        for (p, &phi) in self.angles.iter().enumerate().rev() {
            let (i, j) = (2 * p, 2 * p + 1);
            if j >= z.len() {
                continue;
            }
            let (s, c) = (-phi).sin_cos();
            let (a, b) = (z[i], z[j]);
            z[i] = c * a - s * b;
            z[j] = s * a + c * b;
        }
        Ok(z)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        let need = 2 * self.angles.len();
        if n < need || self.permutation.as_ref().is_some_and(|p| p.len() != n) {
            return Err(Error::InvalidInput(format!(
                "language `{}` transform does not fit a {n}-dim input",
                self.code
            )));
        }
        Ok(())
    }

    fn map_token(&self, t: usize) -> usize {
        self.permutation.as_ref().map_or(t, |p| p[t])
    }
}

/// Which latent problem a family renders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FamilyTask {
    /// Gaussian-mixture classification in `dim` latent dimensions.
    Classification { dim: usize, classes: usize, components: usize, radius: f64, noise: f64 },
    /// Marker-delimited answer spans in token sequences.
    Span { vocab: usize, length: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub task: FamilyTask,
    pub high_resource: String,
    pub auxiliary: Vec<String>,
    pub targets: Vec<String>,
    /// Angle scale in radians; 0 makes every language identical.
    pub spread: f64,
    pub outlier: Option<String>,
    /// Outlier magnitude as a multiple of the median in-family magnitude.
    pub outlier_factor: f64,
    /// 1: all languages rotate along one shared direction; 0: independent directions.
    pub coherence: f64,
    pub permute_coordinates: bool,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            task: FamilyTask::Classification { dim: 8, classes: 3, components: 2, radius: 2.0, noise: 0.6 },
            high_resource: "en".into(),
            auxiliary: ["de", "hi", "bg", "vi"].map(String::from).to_vec(),
            targets: ["ar", "es", "zh"].map(String::from).to_vec(),
            spread: 1.5,
            outlier: None,
            outlier_factor: 3.5,
            coherence: 0.75,
            permute_coordinates: false,
        }
    }
}

impl FamilyConfig {
    pub fn span_default() -> Self {
        FamilyConfig { task: FamilyTask::Span { vocab: 24, length: 10 }, spread: 0.3, ..FamilyConfig::default() }
    }

    /// Every language code: high-resource, auxiliaries, targets, then the outlier.
    pub fn languages(&self) -> Vec<String> {
        let mut out = vec![self.high_resource.clone()];
        out.extend(self.auxiliary.iter().cloned());
        out.extend(self.targets.iter().cloned());
        out.extend(self.outlier.iter().cloned());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let langs = self.languages();
        if langs.len() < 2 {
            return Err(Error::config("family", "at least two languages are required"));
        }
        let mut sorted = langs.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != langs.len() {
            return Err(Error::config("family", "language codes must be unique"));
        }
        if !(0.0..=1.0).contains(&self.coherence) {
            return Err(Error::config("coherence", "must lie in [0, 1]"));
        }
        if !(self.spread >= 0.0) {
            return Err(Error::config("spread", "must be >= 0"));
        }
        match self.task {
            FamilyTask::Classification { dim, classes, components, noise, .. } => {
                if dim < 2 || classes < 2 || components < 1 || !(noise >= 0.0) {
                    return Err(Error::config("task", "classification needs dim >= 2, classes >= 2, components >= 1"));
                }
            }
            FamilyTask::Span { vocab, length } => {
                if vocab < 4 || length < 2 {
                    return Err(Error::config("task", "span task needs vocab >= 4 and length >= 2"));
                }
            }
        }
        Ok(())
    }
}

/// The generated languages plus the latent problem they share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub config: FamilyConfig,
    pub languages: Vec<LanguageSpec>,
    /// Class-component means (classification only), `classes × components` rows.
    pub means: Vec<Vec<f64>>,
}

impl Family {
    pub fn language(&self, code: &str) -> Result<&LanguageSpec> {
        self.languages
            .iter()
            .find(|l| l.code == code)
            .ok_or_else(|| Error::InvalidInput(format!("unknown language `{code}`")))
    }
}

fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Vocabulary permutation that swaps `swaps` random pairs among ids `>= reserved`.
fn partial_vocab_permutation<R: Rng>(vocab: usize, reserved: usize, swaps: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..vocab).collect();
    let free = vocab - reserved;
    for _ in 0..swaps {
        let a = reserved + rng.random_range(0..free);
        let b = reserved + rng.random_range(0..free);
        p.swap(a, b);
    }
    p
}

/// Builds every language of the family, deterministically from `seed`.
///
/// The high-resource language is the identity. Every other language gets
/// per-plane angles `spread·m·d`, with magnitude `m` in `[0.5, 1.0]` and a
/// direction `d` that blends a family-wide profile (weight `coherence`)
/// with its own random signed profile. The outlier (if any) has an angle
/// norm of `outlier_factor` times the median in-family norm.
pub fn gen_language_family(config: &FamilyConfig, seed: u64) -> Result<Family> {
    config.validate()?;
    let mut rng = seed::rng(seed::derive(seed, "family"));
    match config.task {
        FamilyTask::Classification { dim, classes, components, radius, .. } => {
            let planes = dim / 2;
            let profile: Vec<f64> = (0..planes).map(|_| rng.random_range(0.5..1.5)).collect();
            let others: Vec<(&String, LanguageRole)> = config
                .auxiliary
                .iter()
                .map(|c| (c, LanguageRole::Auxiliary))
                .chain(config.targets.iter().map(|c| (c, LanguageRole::Target)))
                .collect();
            let direction = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                profile
                    .iter()
                    .map(|w| {
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        let own = sign * rng.random_range(0.5..1.5);
                        config.coherence * w + (1.0 - config.coherence) * own
                    })
                    .collect()
            };
            let mut languages = vec![LanguageSpec::identity(config.high_resource.clone(), planes)];
            let mut norms = Vec::new();
            for (code, role) in &others {
                let m: f64 = rng.random_range(0.5..1.0);
                let angles: Vec<f64> = direction(&mut rng).iter().map(|d| config.spread * m * d).collect();
                let spec = LanguageSpec {
                    code: code.to_string(),
                    role: *role,
                    angles,
                    permutation: config.permute_coordinates.then(|| random_permutation(dim, &mut rng)),
                    group: if m < 0.75 { "near".into() } else { "far".into() },
                };
                norms.push(spec.angle());
                languages.push(spec);
            }
            if let Some(code) = &config.outlier {
                let dir = direction(&mut rng);
                let n = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-12);
                let target = config.outlier_factor * median(&norms).unwrap_or(config.spread);
                languages.push(LanguageSpec {
                    code: code.clone(),
                    role: LanguageRole::Outlier,
                    angles: dir.iter().map(|d| d * target / n).collect(),
                    permutation: config.permute_coordinates.then(|| random_permutation(dim, &mut rng)),
                    group: "outlier".into(),
                });
            }
            let mut means = Vec::with_capacity(classes * components);
            for _ in 0..classes * components {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                means.push(v.into_iter().map(|a| a * radius / n).collect());
            }
            Ok(Family { config: config.clone(), languages, means })
        }
        FamilyTask::Span { vocab, .. } => {
            let free = vocab - SPAN_RESERVED;
            let swaps_for = |m: f64| (config.spread * m * free as f64).round() as usize;
            let mut languages =
                vec![LanguageSpec { angles: Vec::new(), ..LanguageSpec::identity(config.high_resource.clone(), 0) }];
            let others: Vec<(&String, LanguageRole)> = config
                .auxiliary
                .iter()
                .map(|c| (c, LanguageRole::Auxiliary))
                .chain(config.targets.iter().map(|c| (c, LanguageRole::Target)))
                .collect();
            let mut magnitudes = Vec::new();
            for (code, role) in others {
                let m: f64 = rng.random_range(0.5..1.0);
                magnitudes.push(m);
                languages.push(LanguageSpec {
                    code: code.clone(),
                    role,
                    angles: Vec::new(),
                    permutation: Some(partial_vocab_permutation(vocab, SPAN_RESERVED, swaps_for(m), &mut rng)),
                    group: if m < 0.75 { "near".into() } else { "far".into() },
                });
            }
            if let Some(code) = &config.outlier {
                let m = config.outlier_factor * median(&magnitudes).unwrap_or(0.75);
                languages.push(LanguageSpec {
                    code: code.clone(),
                    role: LanguageRole::Outlier,
                    angles: Vec::new(),
                    permutation: Some(partial_vocab_permutation(vocab, SPAN_RESERVED, swaps_for(m), &mut rng)),
                    group: "outlier".into(),
                });
            }
            Ok(Family { config: config.clone(), languages, means: Vec::new() })
        }
    }
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Token ids below this are the span markers and never permuted.
pub const SPAN_RESERVED: usize = 2;
const START_MARK: usize = 0;
const END_MARK: usize = 1;

/// Language-free content shared by every rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentExample {
    pub latent_id: u64,
    pub content: LatentContent,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LatentContent {
    Features(Vec<f64>),
    Tokens(Vec<usize>),
}

/// `x = transform_l(z)`, label and latent id unchanged.
pub fn render(z: &LatentExample, language: &LanguageSpec) -> Result<Example> {
    let x = match &z.content {
        LatentContent::Features(v) => Input::Features(language.transform(v)?),
        LatentContent::Tokens(t) => {
            if let Some(p) = &language.permutation {
                if let Some(&bad) = t.iter().find(|&&k| k >= p.len()) {
                    return Err(Error::InvalidInput(format!(
                        "token {bad} outside vocabulary of language `{}`",
                        language.code
                    )));
                }
            }
            Input::Tokens(t.iter().map(|&k| language.map_token(k)).collect())
        }
    };
    Ok(Example { x, y: z.label, latent_id: Some(z.latent_id) })
}

/// One language's labeled examples for one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageBag {
    pub language: String,
    pub split: Split,
    pub examples: Vec<Example>,
}

impl LanguageBag {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn has_latent_ids(&self) -> bool {
        !self.examples.is_empty() && self.examples.iter().all(|e| e.latent_id.is_some())
    }
}

pub type Bags = BTreeMap<String, LanguageBag>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusLayout {
    pub high_resource: String,
    pub train_size: usize,
    pub dev_sizes: BTreeMap<String, usize>,
    pub test_sizes: BTreeMap<String, usize>,
}

impl CorpusLayout {
    /// High-resource train 2,000; dev 250 and test 500 for every language.
    pub fn desk(family: &FamilyConfig) -> Self {
        Self::uniform(family, 2000, 250, 500)
    }

    pub fn uniform(family: &FamilyConfig, train: usize, dev: usize, test: usize) -> Self {
        let langs = family.languages();
        CorpusLayout {
            high_resource: family.high_resource.clone(),
            train_size: train,
            dev_sizes: langs.iter().map(|l| (l.clone(), dev)).collect(),
            test_sizes: langs.iter().map(|l| (l.clone(), test)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 {
            return Err(Error::config("train_size", "must be >= 1"));
        }
        for (lang, &n) in self.dev_sizes.iter().chain(&self.test_sizes) {
            if n == 0 {
                return Err(Error::config("layout", format!("size for `{lang}` must be >= 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    /// High-resource training bag.
    pub train: LanguageBag,
    pub dev: Bags,
    pub test: Bags,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Bags {
        match split {
            Split::Train => [(self.train.language.clone(), self.train.clone())].into_iter().collect(),
            Split::Dev => self.dev.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

const DEV_ID_BASE: u64 = 1 << 32;
const TEST_ID_BASE: u64 = 2 << 32;

/// Class-balanced latent examples: class `c` gets `n/C` (+1 for the first
/// `n mod C` classes), listed round-robin over classes.
fn latent_pool<R: Rng>(family: &Family, n: usize, id_base: u64, rng: &mut R) -> Vec<LatentExample> {
    match family.config.task {
        FamilyTask::Classification { dim, classes, components, noise, .. } => {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % classes;
                let k = rng.random_range(0..components);
                let mean = &family.means[c * components + k];
                let z: Vec<f64> = (0..dim)
                    .map(|d| {
                        let e: f64 = StandardNormal.sample(rng);
                        mean[d] + noise * e
                    })
                    .collect();
                out.push(LatentExample {
                    latent_id: id_base + i as u64,
                    content: LatentContent::Features(z),
                    label: Label::Class(c),
                });
            }
            out
        }
        FamilyTask::Span { vocab, length } => (0..n)
            .map(|i| {
                let mut toks: Vec<usize> = (0..length).map(|_| rng.random_range(SPAN_RESERVED..vocab)).collect();
                let a = rng.random_range(0..length);
                let b = rng.random_range(0..length);
                let (start, end) = if a == b {
                    if a + 1 < length {
                        (a, a + 1)
                    } else {
                        (a - 1, a)
                    }
                } else {
                    (a.min(b), a.max(b))
                };
                toks[start] = START_MARK;
                toks[end] = END_MARK;
                LatentExample {
                    latent_id: id_base + i as u64,
                    content: LatentContent::Tokens(toks),
                    label: Label::Span { start, end },
                }
            })
            .collect(),
    }
}

fn render_bag(family: &Family, lang: &str, split: Split, latents: &[LatentExample]) -> Result<LanguageBag> {
    let spec = family.language(lang)?;
    Ok(LanguageBag {
        language: lang.to_string(),
        split,
        examples: latents.iter().map(|z| render(z, spec)).collect::<Result<_>>()?,
    })
}

/// Generates the corpus for `layout`. Dev bags render one shared latent
/// pool (language `l` takes its first `dev_sizes[l]` items) and likewise
/// for test, so equal-sized bags are fully parallel.
pub fn gen_corpus(layout: &CorpusLayout, family: &Family, seed: u64) -> Result<Corpus> {
    layout.validate()?;
    let mut rng = seed::rng(seed::derive(seed, "corpus"));
    let train_latent = latent_pool(family, layout.train_size, 0, &mut rng);
    let max_dev = layout.dev_sizes.values().copied().max().unwrap_or(0);
    let dev_latent = latent_pool(family, max_dev, DEV_ID_BASE, &mut rng);
    let max_test = layout.test_sizes.values().copied().max().unwrap_or(0);
    let test_latent = latent_pool(family, max_test, TEST_ID_BASE, &mut rng);

    let train = render_bag(family, &layout.high_resource, Split::Train, &train_latent)?;
    let dev = layout
        .dev_sizes
        .iter()
        .map(|(l, &n)| Ok((l.clone(), render_bag(family, l, Split::Dev, &dev_latent[..n])?)))
        .collect::<Result<_>>()?;
    let test = layout
        .test_sizes
        .iter()
        .map(|(l, &n)| Ok((l.clone(), render_bag(family, l, Split::Test, &test_latent[..n])?)))
        .collect::<Result<_>>()?;
    Ok(Corpus { train, dev, test })
}

#[derive(Serialize)]
struct JsonlLine<'a> {
    language: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    latent_id: Option<u64>,
    x: &'a Input,
    label: &'a Label,
}

/// Writes bags as JSONL, one example per line, bags in map order.
pub fn write_jsonl<'a>(bags: impl IntoIterator<Item = &'a LanguageBag>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for bag in bags {
        for ex in &bag.examples {
            let line = JsonlLine { language: &bag.language, latent_id: ex.latent_id, x: &ex.x, label: &ex.y };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// How to read `x` from a JSONL object.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureFields {
    /// One array-valued field of floats.
    Array(String),
    /// One array-valued field of token ids.
    Tokens(String),
    /// Several scalar fields concatenated in order.
    Columns(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct JsonlSchema {
    pub language_field: String,
    pub features: FeatureFields,
    pub label_field: String,
    /// String label vocabulary; integer labels must be `< len` when set.
    pub label_names: Option<Vec<String>>,
    /// Integer class labels must be below this, when set.
    pub classes: Option<usize>,
}

impl JsonlSchema {
    /// The schema `write_jsonl` produces.
    pub fn standard(tokens: bool) -> Self {
        JsonlSchema {
            language_field: "language".into(),
            features: if tokens { FeatureFields::Tokens("x".into()) } else { FeatureFields::Array("x".into()) },
            label_field: "label".into(),
            label_names: None,
            classes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedBags {
    pub bags: Bags,
    /// True when every line carried a `latent_id`, enabling parallel sampling.
    pub parallel_available: bool,
}

pub fn load_jsonl(path: &Path, schema: &JsonlSchema, split: Split) -> Result<LoadedBags> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bags = Bags::new();
    let mut all_ids = true;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let field = |name: &str| obj.get(name).ok_or_else(|| fail(format!("missing field `{name}`")));
        let language = field(&schema.language_field)?
            .as_str()
            .ok_or_else(|| fail("language must be a string".into()))?
            .to_string();
        let x = parse_features(&obj, &schema.features).map_err(fail)?;
        let y = parse_label(field(&schema.label_field)?, schema).map_err(fail)?;
        let latent_id = match obj.get("latent_id") {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| fail("latent_id must be a non-negative integer".into()))?),
        };
        all_ids &= latent_id.is_some();
        bags.entry(language.clone())
            .or_insert_with(|| LanguageBag { language, split, examples: Vec::new() })
            .examples
            .push(Example { x, y, latent_id });
    }
    let parallel_available = all_ids && !bags.is_empty();
    Ok(LoadedBags { bags, parallel_available })
}

fn parse_features(
    obj: &serde_json::Map<String, serde_json::Value>,
    spec: &FeatureFields,
) -> std::result::Result<Input, String> {
    let get = |name: &str| obj.get(name).ok_or_else(|| format!("missing field `{name}`"));
    let as_array = |name: &str| -> std::result::Result<&Vec<serde_json::Value>, String> {
        get(name)?.as_array().ok_or_else(|| format!("field `{name}` must be an array"))
    };
    match spec {
        FeatureFields::Array(name) => as_array(name)?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| format!("field `{name}` must hold numbers")))
            .collect::<std::result::Result<_, _>>()
            .map(Input::Features),
        FeatureFields::Tokens(name) => as_array(name)?
            .iter()
            .map(|v| v.as_u64().map(|t| t as usize).ok_or_else(|| format!("field `{name}` must hold token ids")))
            .collect::<std::result::Result<_, _>>()
            .map(Input::Tokens),
        FeatureFields::Columns(names) => names
            .iter()
            .map(|n| get(n)?.as_f64().ok_or_else(|| format!("field `{n}` must be a number")))
            .collect::<std::result::Result<_, _>>()
            .map(Input::Features),
    }
}

fn parse_label(v: &serde_json::Value, schema: &JsonlSchema) -> std::result::Result<Label, String> {
    let limit = schema.label_names.as_ref().map(Vec::len).or(schema.classes);
    match v {
        serde_json::Value::Number(n) => {
            let c = n.as_u64().ok_or_else(|| format!("unknown label {n}"))? as usize;
            if limit.is_some_and(|l| c >= l) {
                return Err(format!("unknown label {c}"));
            }
            Ok(Label::Class(c))
        }
        serde_json::Value::String(s) => schema
            .label_names
            .as_ref()
            .and_then(|names| names.iter().position(|n| n == s))
            .map(Label::Class)
            .ok_or_else(|| format!("unknown label `{s}`")),
        serde_json::Value::Object(o) => {
            let idx = |k: &str| {
                o.get(k).and_then(|v| v.as_u64()).map(|v| v as usize).ok_or_else(|| format!("span label needs `{k}`"))
            };
            let (start, end) = (idx("start")?, idx("end")?);
            if end < start {
                return Err(format!("span label end {end} < start {start}"));
            }
            Ok(Label::Span { start, end })
        }
        other => Err(format!("unknown label {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn family(spread: f64) -> Family {
        gen_language_family(&FamilyConfig { spread, ..FamilyConfig::default() }, 17).unwrap()
    }

    #[test]
    fn zero_spread_makes_identical_transforms() {
        let f = family(0.0);
        let z = [0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7, 0.2];
        let first = f.languages[0].transform(&z).unwrap();
        for l in &f.languages {
            assert_eq!(l.transform(&z).unwrap(), first);
        }
    }

    #[test]
    fn family_is_deterministic() {
        assert_eq!(family(1.0), family(1.0));
        let other = gen_language_family(&FamilyConfig::default(), 18).unwrap();
        assert_ne!(family(1.0).languages, other.languages);
    }

    #[test]
    fn outlier_is_far_from_the_family() {
        let cfg = FamilyConfig { outlier: Some("sw".into()), ..FamilyConfig::default() };
        for seed in 0..10 {
            let f = gen_language_family(&cfg, seed).unwrap();
            let in_family: Vec<f64> = f
                .languages
                .iter()
                .filter(|l| matches!(l.role, LanguageRole::Auxiliary | LanguageRole::Target))
                .map(LanguageSpec::angle)
                .collect();
            let out = f.language("sw").unwrap().angle();
            assert!(out >= 3.0 * median(&in_family).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn render_preserves_norm_and_inverts() {
        let cfg = FamilyConfig { permute_coordinates: true, ..FamilyConfig::default() };
        let f = gen_language_family(&cfg, 4).unwrap();
        let z = LatentExample {
            latent_id: 9,
            content: LatentContent::Features(vec![0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.7, 0.2]),
            label: Label::Class(1),
        };
        let LatentContent::Features(zv) = &z.content else { unreachable!() };
        let zn: f64 = zv.iter().map(|v| v * v).sum::<f64>().sqrt();
        for l in &f.languages {
            let ex = render(&z, l).unwrap();
            assert_eq!(ex.y, Label::Class(1));
            assert_eq!(ex.latent_id, Some(9));
            let Input::Features(x) = &ex.x else { panic!() };
            let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((xn - zn).abs() < 1e-12);
            let back = l.inverse_transform(x).unwrap();
            for (a, b) in back.iter().zip(zv) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let id = LanguageSpec::identity("en", 4);
        assert_eq!(render(&z, &id).unwrap().x, Input::Features(zv.clone()));
        assert!(id.transform(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn corpus_sizes_balance_and_parallelism() {
        let f = family(1.0);
        let layout = CorpusLayout::desk(&f.config);
        let c = gen_corpus(&layout, &f, 5).unwrap();
        assert_eq!(c.train.len(), 2000);
        for lang in &f.config.auxiliary {
            assert_eq!(c.dev[lang].len(), 250);
        }
        let ids = |b: &LanguageBag| {
            let mut v: Vec<u64> = b.examples.iter().map(|e| e.latent_id.unwrap()).collect();
            v.sort();
            v
        };
        assert_eq!(ids(&c.dev["de"]), ids(&c.dev["hi"]));
        let labels: HashMap<u64, Label> = c.dev["de"].examples.iter().map(|e| (e.latent_id.unwrap(), e.y)).collect();
        for e in &c.dev["zh"].examples {
            assert_eq!(labels[&e.latent_id.unwrap()], e.y);
        }
        assert_eq!(c, gen_corpus(&layout, &f, 5).unwrap());
    }

    #[test]
    fn balanced_classes() {
        let f = family(1.0);
        let mut layout = CorpusLayout::uniform(&f.config, 300, 10, 10);
        layout.dev_sizes.clear();
        let c = gen_corpus(&layout, &f, 1).unwrap();
        let mut counts = [0usize; 3];
        for e in &c.train.examples {
            let Label::Class(k) = e.y else { panic!() };
            counts[k] += 1;
        }
        assert_eq!(counts, [100, 100, 100]);
    }

    #[test]
    fn span_family_renders_valid_spans() {
        let f = gen_language_family(&FamilyConfig::span_default(), 2).unwrap();
        let layout = CorpusLayout::uniform(&f.config, 50, 20, 20);
        let c = gen_corpus(&layout, &f, 2).unwrap();
        for bag in c.dev.values() {
            for e in &bag.examples {
                let (Input::Tokens(t), Label::Span { start, end }) = (&e.x, e.y) else { panic!() };
                assert!(end > start && end < t.len());
                assert_eq!((t[start], t[end]), (START_MARK, END_MARK));
            }
        }
    }

    #[test]
    fn jsonl_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let f = family(1.0);
        let c = gen_corpus(&CorpusLayout::uniform(&f.config, 30, 12, 9), &f, 3).unwrap();
        let path = dir.path().join("dev.jsonl");
        write_jsonl(c.dev.values(), &path).unwrap();
        let loaded = load_jsonl(&path, &JsonlSchema::standard(false), Split::Dev).unwrap();
        assert!(loaded.parallel_available);
        assert_eq!(loaded.bags, c.dev);

        let two = dir.path().join("two.jsonl");
        std::fs::write(
            &two,
            "{\"language\":\"en\",\"x\":[1.0,2.0],\"label\":0}\n{\"language\":\"hi\",\"x\":[0.5,0.1],\"label\":2}\n",
        )
        .unwrap();
        let loaded = load_jsonl(&two, &JsonlSchema::standard(false), Split::Dev).unwrap();
        assert_eq!(loaded.bags.len(), 2);
        assert!(loaded.bags.values().all(|b| b.len() == 1));
        assert!(!loaded.parallel_available);

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{\"language\":\"en\",\"x\":[1.0],\"label\":0}\nnot json\n").unwrap();
        let err = load_jsonl(&bad, &JsonlSchema::standard(false), Split::Dev).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let unknown = dir.path().join("unknown.jsonl");
        std::fs::write(&unknown, "{\"language\":\"en\",\"x\":[1.0],\"label\":\"maybe\"}\n").unwrap();
        let schema = JsonlSchema {
            label_names: Some(vec!["entailment".into(), "neutral".into(), "contradiction".into()]),
            ..JsonlSchema::standard(false)
        };
        let err = load_jsonl(&unknown, &schema, Split::Dev).unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
        let too_big = dir.path().join("big.jsonl");
        std::fs::write(&too_big, "{\"language\":\"en\",\"x\":[1.0],\"label\":5}\n").unwrap();
        let schema = JsonlSchema { classes: Some(3), ..JsonlSchema::standard(false) };
        assert!(load_jsonl(&too_big, &schema, Split::Dev).is_err());
    }

    #[test]
    fn jsonl_columns_and_spans() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cols.jsonl");
        std::fs::write(&p, "{\"lang\":\"de\",\"a\":1.5,\"b\":-2,\"y\":{\"start\":1,\"end\":3},\"latent_id\":4}\n")
            .unwrap();
        let schema = JsonlSchema {
            language_field: "lang".into(),
            features: FeatureFields::Columns(vec!["a".into(), "b".into()]),
            label_field: "y".into(),
            label_names: None,
            classes: None,
        };
        let loaded = load_jsonl(&p, &schema, Split::Train).unwrap();
        let ex = &loaded.bags["de"].examples[0];
        assert_eq!(ex.x, Input::Features(vec![1.5, -2.0]));
        assert_eq!(ex.y, Label::Span { start: 1, end: 3 });
        assert_eq!(ex.latent_id, Some(4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rotations_preserve_norm(
                z in proptest::collection::vec(-10.0f64..10.0, 8),
                angles in proptest::collection::vec(-7.0f64..7.0, 4),
            ) {
                let l = LanguageSpec { angles, ..LanguageSpec::identity("xx", 4) };
                let x = l.transform(&z).unwrap();
                let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
                prop_assert!((n(&x) - n(&z)).abs() < 1e-12 * (1.0 + n(&z)));
            }
        }
    }
}
