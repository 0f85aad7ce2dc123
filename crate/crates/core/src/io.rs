//! On-disk formats: grid JSON, sample CSV, dataset manifests, basis JSON and
//! codec pair CSV. Files always carry `f64`; grids keep full precision so a
//! write/read round trip is exact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, EigenBasis};
use crate::compare::RdSamplePair;
use crate::error::{GrdError, Result};
use crate::grid::{AxisSpec, GrdGrid, Sample, SampleSet};

/// Axis labels as written in grid and basis files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxesFile {
    pub bitrates_kbps: Vec<f64>,
    pub resolutions_diag: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<(u32, u32)>>,
}

impl From<&AxisSpec<f64>> for AxesFile {
    fn from(a: &AxisSpec<f64>) -> Self {
        Self { bitrates_kbps: a.bitrates.clone(), resolutions_diag: a.resolutions.clone(), sizes: a.sizes.clone() }
    }
}

impl AxesFile {
    pub fn to_axes(&self) -> Result<AxisSpec<f64>> {
        let axes = AxisSpec::new(self.bitrates_kbps.clone(), self.resolutions_diag.clone())?;
        match &self.sizes {
            Some(s) => axes.with_sizes(s.clone()),
            None => Ok(axes),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    bitrates_kbps: Vec<f64>,
    resolutions_diag: Vec<f64>,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sizes: Option<Vec<(u32, u32)>>,
    #[serde(default)]
    metadata: serde_json::Map<String, serde_json::Value>,
}

pub fn grid_to_json(grid: &GrdGrid<f64>) -> String {
    let file = GridFile {
        bitrates_kbps: grid.axes().bitrates.clone(),
        resolutions_diag: grid.axes().resolutions.clone(),
        values: grid.rows(),
        sizes: grid.axes().sizes.clone(),
        metadata: grid.metadata.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect(),
    };
    serde_json::to_string_pretty(&file).expect("grid serialization cannot fail")
}

/// Parses a grid file. Non-string metadata values are kept as their JSON text.
pub fn grid_from_json(text: &str) -> Result<GrdGrid<f64>> {
    let file: GridFile = serde_json::from_str(text)?;
    let axes = AxesFile { bitrates_kbps: file.bitrates_kbps, resolutions_diag: file.resolutions_diag, sizes: file.sizes }
        .to_axes()
        .map_err(|e| GrdError::MalformedGrid(e.to_string()))?;
    let mut grid = GrdGrid::from_rows(axes, &file.values)?;
    for (k, v) in file.metadata {
        let v = match v {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        grid.metadata.insert(k, v);
    }
    Ok(grid)
}

pub fn read_grid(path: &Path) -> Result<GrdGrid<f64>> {
    grid_from_json(&std::fs::read_to_string(path)?)
}

pub fn samples_to_csv(samples: &SampleSet<f64>) -> String {
    let axes = samples.axes();
    let mut out = String::from("bitrate_kbps,resolution_diag,quality\n");
    for s in samples.entries() {
        out.push_str(&format!(
            "{},{},{}\n",
            axes.bitrates[s.bitrate_index], axes.resolutions[s.resolution_index], s.quality
        ));
    }
    out
}

#[derive(Deserialize)]
struct SampleRow {
    bitrate_kbps: f64,
    resolution_diag: f64,
    quality: f64,
}

/// Parses a sample CSV against `axes`; every bitrate and diagonal must equal
/// an axis label exactly.
pub fn samples_from_csv(text: &str, axes: &AxisSpec<f64>) -> Result<SampleSet<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    for h in ["bitrate_kbps", "resolution_diag", "quality"] {
        if !headers.iter().any(|x| x == h) {
            return Err(GrdError::Schema(format!("sample file lacks column `{h}`")));
        }
    }
    let mut entries = Vec::new();
    for (line, row) in reader.deserialize::<SampleRow>().enumerate() {
        let row = row?;
        let i = axes.bitrate_index(row.bitrate_kbps).ok_or_else(|| {
            GrdError::InvalidSamples(format!("row {}: bitrate {} is not an axis label", line + 1, row.bitrate_kbps))
        })?;
        let j = axes.resolution_index(row.resolution_diag).ok_or_else(|| {
            GrdError::InvalidSamples(format!(
                "row {}: diagonal {} is not an axis label",
                line + 1,
                row.resolution_diag
            ))
        })?;
        entries.push(Sample { bitrate_index: i, resolution_index: j, quality: row.quality });
    }
    SampleSet::new(axes.clone(), entries)
}

pub fn read_samples(path: &Path, axes: &AxisSpec<f64>) -> Result<SampleSet<f64>> {
    samples_from_csv(&std::fs::read_to_string(path)?, axes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub split: Split,
}

/// Dataset manifest, stored as `manifest.json` beside the grid files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Free-form provenance (generator, seed, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub info: BTreeMap<String, serde_json::Value>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        for e in &m.entries {
            let p = Path::new(&e.file);
            if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return Err(GrdError::Schema(format!("manifest entry `{}` must be a plain relative path", e.file)));
            }
        }
        Ok(m)
    }
}

/// Grids of a dataset directory, grouped by split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub train: Vec<GrdGrid<f64>>,
    pub test: Vec<GrdGrid<f64>>,
}

impl Dataset {
    pub fn axes(&self) -> Option<&AxisSpec<f64>> {
        self.train.first().or(self.test.first()).map(|g| g.axes())
    }

    /// All grids, training split first.
    pub fn all(&self) -> Vec<GrdGrid<f64>> {
        self.train.iter().chain(&self.test).cloned().collect()
    }
}

/// Loads `dir/manifest.json` and every grid it lists. All grids must share
/// one axis specification.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = Manifest::from_json(&std::fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let mut axes: Option<AxisSpec<f64>> = None;
    for e in &manifest.entries {
        let g = read_grid(&dir.join(&e.file)).map_err(|err| match err {
            GrdError::Io(io) => GrdError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", e.file))),
            other => other,
        })?;
        match &axes {
            Some(a) => a.ensure_same(g.axes())?,
            None => axes = Some(g.axes().clone()),
        }
        match e.split {
            Split::Train => train.push(g),
            Split::Test => test.push(g),
        }
    }
    Ok(Dataset { root: dir.to_path_buf(), manifest, train, test })
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    kind: BasisKind,
    axes: AxesFile,
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
    training_count: usize,
    #[serde(default)]
    truncated: bool,
}

pub fn basis_to_json(basis: &EigenBasis<f64>) -> String {
    let file = BasisFile {
        kind: basis.kind,
        axes: AxesFile::from(&basis.axes),
        mean: basis.mean.clone(),
        components: basis.components.clone(),
        eigenvalues: basis.eigenvalues.clone(),
        total_variance: basis.total_variance,
        training_count: basis.training_count,
        truncated: basis.truncated,
    };
    serde_json::to_string_pretty(&file).expect("basis serialization cannot fail")
}

pub fn basis_from_json(text: &str) -> Result<EigenBasis<f64>> {
    let f: BasisFile = serde_json::from_str(text)?;
    let basis = EigenBasis {
        kind: f.kind,
        axes: f.axes.to_axes().map_err(|e| GrdError::Schema(e.to_string()))?,
        mean: f.mean,
        components: f.components,
        eigenvalues: f.eigenvalues,
        total_variance: f.total_variance,
        training_count: f.training_count,
        truncated: f.truncated,
    };
    basis.validate()?;
    Ok(basis)
}

pub fn read_basis(path: &Path) -> Result<EigenBasis<f64>> {
    basis_from_json(&std::fs::read_to_string(path)?)
}

#[derive(Deserialize)]
struct PairRow {
    content_id: String,
    codec: String,
    bitrate_kbps: f64,
    quality: f64,
}

/// Codec samples parsed from a pair CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFile {
    pub codec_a: String,
    pub codec_b: String,
    /// Contents in order of first appearance.
    pub contents: Vec<RdSamplePair>,
}

/// Parses `content_id,codec,bitrate_kbps,quality` rows. Exactly two codecs
/// must appear; the first one seen is the anchor (codec A) unless
/// `anchor` names the other.
pub fn pairs_from_csv(text: &str, anchor: Option<&str>) -> Result<PairFile> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut codecs: Vec<String> = Vec::new();
    let mut order: Vec<String> = Vec::new();
    let mut by_content: BTreeMap<String, [Vec<(f64, f64)>; 2]> = BTreeMap::new();
    for row in reader.deserialize::<PairRow>() {
        let row = row?;
        let c = match codecs.iter().position(|c| *c == row.codec) {
            Some(c) => c,
            None if codecs.len() < 2 => {
                codecs.push(row.codec.clone());
                codecs.len() - 1
            }
            None => {
                return Err(GrdError::Schema(format!(
                    "pair file names more than two codecs ({}, {}, {})",
                    codecs[0], codecs[1], row.codec
                )))
            }
        };
        if !by_content.contains_key(&row.content_id) {
            order.push(row.content_id.clone());
        }
        by_content.entry(row.content_id).or_default()[c].push((row.bitrate_kbps, row.quality));
    }
    if codecs.len() != 2 {
        return Err(GrdError::Schema(format!("pair file must name exactly two codecs, found {}", codecs.len())));
    }
    let swap = match anchor {
        None => false,
        Some(a) if a == codecs[0] => false,
        Some(a) if a == codecs[1] => true,
        Some(a) => return Err(GrdError::InvalidArgument(format!("anchor codec `{a}` not in pair file"))),
    };
    if swap {
        codecs.swap(0, 1);
    }
    let contents = order
        .into_iter()
        .map(|id| {
            let [mut a, mut b] = by_content.remove(&id).unwrap_or_default();
            if swap {
                std::mem::swap(&mut a, &mut b);
            }
            RdSamplePair { content_id: id, a, b }
        })
        .collect();
    let [codec_a, codec_b]: [String; 2] = codecs.try_into().expect("two codecs");
    Ok(PairFile { codec_a, codec_b, contents })
}

pub fn read_pairs(path: &Path, anchor: Option<&str>) -> Result<PairFile> {
    pairs_from_csv(&std::fs::read_to_string(path)?, anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::pca_train;
    use crate::synth::{generate, SynthParams};

    #[test]
    fn grid_round_trip_is_exact() {
        let g = generate(&SynthParams::new(5, AxisSpec::desk(), 1)).unwrap().remove(0);
        let back = grid_from_json(&grid_to_json(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn grid_rows_are_per_bitrate() {
        let text = r#"{"bitrates_kbps":[100,200,300],"resolutions_diag":[400,800],
            "values":[[1,0.5],[2,1.5],[3,2.5]],"metadata":{"content_id":"x","fps":30}}"#;
        let g = grid_from_json(text).unwrap();
        assert_eq!(g.values(), &[1.0, 0.5, 2.0, 1.5, 3.0, 2.5]);
        assert_eq!(g.metadata["fps"], "30");
        let ragged = text.replace("[2,1.5]", "[2]");
        assert!(matches!(grid_from_json(&ragged), Err(GrdError::MalformedGrid(_))));
    }

    #[test]
    fn samples_must_hit_labels() {
        let axes = AxisSpec::desk();
        let s = samples_from_csv("bitrate_kbps,resolution_diag,quality\n3000,865,61.5\n1000,400,10\n", &axes).unwrap();
        assert_eq!(s.flat_indices(), vec![2 * 6 + 3, 0]);
        assert_eq!(samples_from_csv(&samples_to_csv(&s), &axes).unwrap(), s);
        let off = samples_from_csv("bitrate_kbps,resolution_diag,quality\n3001,865,61.5\n", &axes);
        assert!(matches!(off, Err(GrdError::InvalidSamples(_))));
        let missing = samples_from_csv("bitrate,resolution_diag,quality\n3000,865,61.5\n", &axes);
        assert!(matches!(missing, Err(GrdError::Schema(_))));
    }

    #[test]
    fn basis_round_trip() {
        let data = generate(&SynthParams::new(1, AxisSpec::desk(), 12)).unwrap();
        let b = pca_train(&data, 4).unwrap();
        assert_eq!(basis_from_json(&basis_to_json(&b)).unwrap(), b);
        let v: serde_json::Value = serde_json::from_str(&basis_to_json(&b)).unwrap();
        assert_eq!(v["kind"], "eigen");
        assert_eq!(v["axes"]["bitrates_kbps"][0], 1000.0);
    }

    #[test]
    fn manifest_rejects_escaping_paths() {
        let ok = r#"{"entries":[{"file":"a.json","split":"train"},{"file":"b.json","split":"test"}]}"#;
        assert_eq!(Manifest::from_json(ok).unwrap().entries[1].split, Split::Test);
        assert!(Manifest::from_json(&ok.replace("a.json", "../a.json")).is_err());
        assert!(Manifest::from_json(&ok.replace("\"test\"", "\"dev\"")).is_err());
    }

    #[test]
    fn pairs_group_by_content_and_codec() {
        let text = "content_id,codec,bitrate_kbps,quality\n\
                    s1,x264,100,30\ns1,x265,100,35\ns2,x265,200,50\ns1,x264,200,40\ns2,x264,200,45\n";
        let p = pairs_from_csv(text, None).unwrap();
        assert_eq!((p.codec_a.as_str(), p.codec_b.as_str()), ("x264", "x265"));
        assert_eq!(p.contents[0].content_id, "s1");
        assert_eq!(p.contents[0].a, vec![(100.0, 30.0), (200.0, 40.0)]);
        assert_eq!(p.contents[1].b, vec![(200.0, 50.0)]);
        let q = pairs_from_csv(text, Some("x265")).unwrap();
        assert_eq!(q.codec_a, "x265");
        assert_eq!(q.contents[0].a, vec![(100.0, 35.0)]);
        assert!(pairs_from_csv(&format!("{text}s3,av1,100,20\n"), None).is_err());
    }
}
