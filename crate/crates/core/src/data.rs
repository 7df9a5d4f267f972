//! Dataset manifests, the synthetic shape corpus, and IU-style XML report ingestion.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{encode_binary, ImageTensor};
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic,
    IuXml,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub caption: String,
}

/// `(image path, caption)` pairs, kept sorted by image path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub source: DatasetSource,
    pub seed: Option<u64>,
}

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl DatasetManifest {
    pub fn new(mut entries: Vec<ManifestEntry>, source: DatasetSource, seed: Option<u64>) -> Self {
        entries.sort_by(|a, b| a.image.cmp(&b.image));
        Self { entries, source, seed }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `image_path<TAB>caption` lines; paths are written as given.
    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.image.display(), single_line(&e.caption)))
            .collect()
    }

    /// Parses TSV lines. Relative image paths are resolved against `base_dir`.
    pub fn from_tsv(text: &str, base_dir: &Path, source: DatasetSource) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (path, caption) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("manifest line {} has no tab separator", n + 1)))?;
            if tokenize(caption).is_empty() {
                return Err(Error::Format(format!("manifest line {} has an empty caption", n + 1)));
            }
            let p = Path::new(path);
            let image = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
            entries.push(ManifestEntry {
                image,
                caption: caption.to_string(),
            });
        }
        Ok(Self::new(entries, source, None))
    }

    pub fn load(path: &Path, source: DatasetSource) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_tsv(&text, base, source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quadrant {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::UpperLeft,
        Quadrant::UpperRight,
        Quadrant::LowerLeft,
        Quadrant::LowerRight,
    ];

    fn origin(self) -> (usize, usize) {
        match self {
            Quadrant::UpperLeft => (0, 0),
            Quadrant::UpperRight => (0, 16),
            Quadrant::LowerLeft => (16, 0),
            Quadrant::LowerRight => (16, 16),
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quadrant::UpperLeft => "upper left",
            Quadrant::UpperRight => "upper right",
            Quadrant::LowerLeft => "lower left",
            Quadrant::LowerRight => "lower right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Cross,
    Disc,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Square, ShapeKind::Cross, ShapeKind::Disc];

    /// Whether cell-local pixel `(y, x)` of a 16x16 cell is covered.
    fn covers(self, y: usize, x: usize) -> bool {
        let (dy, dx) = (y as f64 - 7.5, x as f64 - 7.5);
        match self {
            ShapeKind::Square => (4..12).contains(&y) && (4..12).contains(&x),
            ShapeKind::Cross => {
                ((7..9).contains(&y) && (2..14).contains(&x)) || ((7..9).contains(&x) && (2..14).contains(&y))
            }
            ShapeKind::Disc => dy * dy + dx * dx <= 25.0,
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeKind::Square => "square",
            ShapeKind::Cross => "cross",
            ShapeKind::Disc => "disc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacedShape {
    pub kind: ShapeKind,
    pub bright: bool,
    pub quadrant: Quadrant,
}

impl PlacedShape {
    pub fn phrase(&self) -> String {
        let intensity = if self.bright { "bright" } else { "dim" };
        format!("{intensity} {} {}", self.kind, self.quadrant)
    }
}

pub const SYNTHETIC_SIZE: usize = 32;
const BRIGHT: f64 = 1.0;
const DIM: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: ImageTensor,
    pub caption: String,
    pub shapes: Vec<PlacedShape>,
}

/// Renders shapes into a 32x32 grayscale image and describes them, one
/// `<intensity> <shape> <position>` phrase per shape in quadrant order,
/// joined by "and".
pub fn render(shapes: &[PlacedShape]) -> Result<SyntheticSample> {
    let mut shapes = shapes.to_vec();
    shapes.sort_by_key(|s| s.quadrant);
    if shapes.windows(2).any(|w| w[0].quadrant == w[1].quadrant) {
        return Err(Error::Config("at most one shape per quadrant".into()));
    }
    let mut px = vec![0.0; SYNTHETIC_SIZE * SYNTHETIC_SIZE];
    for s in &shapes {
        let (oy, ox) = s.quadrant.origin();
        let v = if s.bright { BRIGHT } else { DIM };
        for y in 0..16 {
            for x in 0..16 {
                if s.kind.covers(y, x) {
                    px[(oy + y) * SYNTHETIC_SIZE + ox + x] = v;
                }
            }
        }
    }
    let caption = shapes.iter().map(PlacedShape::phrase).collect::<Vec<_>>().join(" and ");
    Ok(SyntheticSample {
        image: ImageTensor::new(SYNTHETIC_SIZE, SYNTHETIC_SIZE, 1, px)?,
        caption,
        shapes,
    })
}

/// `count` samples with one or two shapes each, deterministic for `seed`.
pub fn generate_synthetic(count: usize, seed: u64) -> Result<Vec<SyntheticSample>> {
    if count == 0 {
        return Err(Error::Config("synthetic dataset needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=2);
            let quads: Vec<Quadrant> = Quadrant::ALL.choose_multiple(&mut rng, k).copied().collect();
            let shapes: Vec<PlacedShape> = quads
                .into_iter()
                .map(|quadrant| PlacedShape {
                    kind: *ShapeKind::ALL.choose(&mut rng).expect("non-empty"),
                    bright: rng.gen_bool(0.5),
                    quadrant,
                })
                .collect();
            render(&shapes)
        })
        .collect()
}

/// Writes `synth_NNNN.pgm` images plus `manifest.tsv` into `dir`.
pub fn write_synthetic_dataset(dir: &Path, count: usize, seed: u64) -> Result<DatasetManifest> {
    let samples = generate_synthetic(count, seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = count.to_string().len().max(4);
    let mut entries = Vec::with_capacity(count);
    for (i, s) in samples.iter().enumerate() {
        let name = format!("synth_{i:0width$}.pgm");
        let path = dir.join(&name);
        std::fs::write(&path, encode_binary(&s.image)).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            image: PathBuf::from(name),
            caption: s.caption.clone(),
        });
    }
    let manifest = DatasetManifest::new(entries, DatasetSource::Synthetic, Some(seed));
    let mpath = dir.join("manifest.tsv");
    std::fs::write(&mpath, manifest.to_tsv()).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedReport {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct IuParseOutcome {
    pub manifest: DatasetManifest,
    pub skipped: Vec<SkippedReport>,
}

const IMAGE_EXTENSIONS: [&str; 2] = ["pgm", "ppm"];

/// Reads IU-style report XML files from `xml_dir`, taking the FINDINGS text as
/// the caption and pairing it with every `parentImage` id found in
/// `image_dir` as a `.pgm` or `.ppm` file.
pub fn parse_iu_reports(xml_dir: &Path, image_dir: &Path) -> Result<IuParseOutcome> {
    let listing = std::fs::read_dir(xml_dir)
        .map_err(|e| Error::Config(format!("cannot read report directory {}: {e}", xml_dir.display())))?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut skip = |path: &Path, reason: String| {
        log::warn!("skipping {}: {reason}", path.display());
        skipped.push(SkippedReport {
            path: path.to_path_buf(),
            reason,
        });
    };
    for file in files {
        let text = match std::fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                skip(&file, format!("unreadable: {e}"));
                continue;
            }
        };
        let report = match parse_iu_xml(&text) {
            Ok(r) => r,
            Err(e) => {
                skip(&file, format!("malformed XML: {e}"));
                continue;
            }
        };
        let Some(findings) = report.findings.filter(|f| !tokenize(f).is_empty()) else {
            skip(&file, "no findings text".into());
            continue;
        };
        let mut paired = 0;
        for id in &report.image_ids {
            let found = IMAGE_EXTENSIONS
                .iter()
                .map(|ext| image_dir.join(format!("{id}.{ext}")))
                .find(|p| p.is_file());
            match found {
                Some(image) => {
                    entries.push(ManifestEntry {
                        image,
                        caption: findings.clone(),
                    });
                    paired += 1;
                }
                None => log::warn!("{}: image `{id}` not found in {}", file.display(), image_dir.display()),
            }
        }
        if paired == 0 {
            skip(&file, "no referenced image found".into());
        }
    }
    if entries.is_empty() {
        return Err(Error::Config(format!(
            "no usable reports in {} ({} skipped)",
            xml_dir.display(),
            skipped.len()
        )));
    }
    Ok(IuParseOutcome {
        manifest: DatasetManifest::new(entries, DatasetSource::IuXml, None),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IuReport {
    pub findings: Option<String>,
    pub image_ids: Vec<String>,
}

/// Extracts the `AbstractText Label="FINDINGS"` text and `parentImage id`s.
pub fn parse_iu_xml(text: &str) -> std::result::Result<IuReport, roxmltree::Error> {
    let doc = roxmltree::Document::parse(text)?;
    let findings = doc
        .descendants()
        .find(|n| {
            n.has_tag_name("AbstractText")
                && n.attribute("Label").is_some_and(|l| l.eq_ignore_ascii_case("findings"))
        })
        .map(|n| single_line(&n.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect::<String>()))
        .filter(|s| !s.is_empty());
    let image_ids = doc
        .descendants()
        .filter(|n| n.has_tag_name("parentImage"))
        .filter_map(|n| n.attribute("id").map(str::to_string))
        .collect();
    Ok(IuReport { findings, image_ids })
}
