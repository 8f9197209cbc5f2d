//! On-disk graph bundles.
//!
//! A bundle is a directory holding `meta.json`, `edges.tsv`,
//! `features.bin` (row-major little-endian `f32`) or `features.tsv`,
//! `labels.tsv`, and optionally `years.tsv` and `splits.tsv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFormat {
    Bin,
    Tsv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub format_version: u32,
    pub num_vertices: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub has_timestamps: bool,
    #[serde(default)]
    pub has_splits: bool,
    #[serde(default = "default_format")]
    pub feature_format: FeatureFormat,
}

fn default_format() -> FeatureFormat {
    FeatureFormat::Bin
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

/// A loaded bundle: the graph plus the optional predefined split.
#[derive(Clone, Debug)]
pub struct Bundle<T> {
    pub meta: BundleMeta,
    pub graph: Graph<T>,
    pub splits: Option<Vec<SplitTag>>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Non-empty lines split on tabs, with 1-based line numbers.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<String>)> + '_ {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split('\t').map(|f| f.trim().to_string()).collect()))
}

fn parse<F: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<F> {
    field
        .parse()
        .map_err(|_| malformed(path, line, format!("cannot parse {what} from {field:?}")))
}

fn expect_fields(path: &Path, line: usize, fields: &[String], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(malformed(path, line, format!("expected {n} tab-separated fields, got {}", fields.len())));
    }
    Ok(())
}

/// Reads a `vertex \t value` file covering every vertex exactly once.
fn read_vertex_column<V>(
    path: &Path,
    n: usize,
    what: &str,
    parse_value: impl Fn(usize, &str) -> Result<V>,
) -> Result<Vec<V>> {
    let text = read(path)?;
    let mut out: Vec<Option<V>> = (0..n).map(|_| None).collect();
    for (line, fields) in tsv_rows(&text) {
        expect_fields(path, line, &fields, 2)?;
        let v: usize = parse(path, line, &fields[0], "vertex id")?;
        if v >= n {
            return Err(malformed(path, line, format!("vertex {v} not below {n}")));
        }
        if out[v].is_some() {
            return Err(malformed(path, line, format!("vertex {v} listed twice")));
        }
        out[v] = Some(parse_value(line, &fields[1])?);
    }
    let listed = out.iter().filter(|v| v.is_some()).count();
    if listed != n {
        return Err(Error::Data(format!(
            "{}: {what} for {listed} of {n} vertices",
            path.display()
        )));
    }
    Ok(out.into_iter().map(|v| v.expect("checked")).collect())
}

fn read_features<T: Scalar>(dir: &Path, meta: &BundleMeta) -> Result<DenseMatrix<T>> {
    let (n, d) = (meta.num_vertices, meta.feature_dim);
    match meta.feature_format {
        FeatureFormat::Bin => {
            let path = dir.join("features.bin");
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if bytes.len() != n * d * 4 {
                return Err(Error::Data(format!(
                    "{}: {} bytes, expected {} for {n}x{d} f32 values",
                    path.display(),
                    bytes.len(),
                    n * d * 4
                )));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            DenseMatrix::from_vec(n, d, data)
        }
        FeatureFormat::Tsv => {
            let path = dir.join("features.tsv");
            let text = read(&path)?;
            let mut data = Vec::with_capacity(n * d);
            let mut rows = 0;
            for (line, fields) in tsv_rows(&text) {
                expect_fields(&path, line, &fields, d)?;
                for f in &fields {
                    let x: f64 = parse(&path, line, f, "feature value")?;
                    data.push(T::lit(x));
                }
                rows += 1;
            }
            if rows != n {
                return Err(Error::Data(format!("{}: {rows} rows for {n} vertices", path.display())));
            }
            DenseMatrix::from_vec(n, d, data)
        }
    }
}

pub fn load_bundle_full<T: Scalar>(dir: &Path) -> Result<Bundle<T>> {
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_str(&read(&meta_path)?).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    if meta.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "{}: format version {} but this build reads {BUNDLE_FORMAT_VERSION}",
            meta_path.display(),
            meta.format_version
        )));
    }
    let n = meta.num_vertices;

    let edges_path = dir.join("edges.tsv");
    let text = read(&edges_path)?;
    let mut edges = Vec::new();
    for (line, fields) in tsv_rows(&text) {
        expect_fields(&edges_path, line, &fields, 2)?;
        let u: usize = parse(&edges_path, line, &fields[0], "vertex id")?;
        let v: usize = parse(&edges_path, line, &fields[1], "vertex id")?;
        if u >= n || v >= n {
            return Err(malformed(&edges_path, line, format!("edge ({u}, {v}) outside 0..{n}")));
        }
        edges.push((u, v));
    }

    let features = read_features(dir, &meta)?;
    let labels_path = dir.join("labels.tsv");
    let labels = read_vertex_column(&labels_path, n, "labels", |line, f| {
        let y: usize = parse(&labels_path, line, f, "class id")?;
        if y >= meta.num_classes {
            return Err(malformed(&labels_path, line, format!("class {y} not below {}", meta.num_classes)));
        }
        Ok(y)
    })?;
    let years_path = dir.join("years.tsv");
    let timestamps = if meta.has_timestamps {
        Some(read_vertex_column(&years_path, n, "years", |line, f| {
            parse::<i64>(&years_path, line, f, "year")
        })?)
    } else {
        None
    };
    let splits_path = dir.join("splits.tsv");
    let splits = if meta.has_splits {
        Some(read_vertex_column(&splits_path, n, "splits", |line, f| match f {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(malformed(&splits_path, line, format!("unknown split {other:?}"))),
        })?)
    } else {
        None
    };
    let graph = build_graph(n, &edges, features, labels, meta.num_classes, timestamps)?;
    Ok(Bundle { meta, graph, splits })
}

/// Loads the graph of a bundle directory.
pub fn load_bundle<T: Scalar>(dir: &Path) -> Result<Graph<T>> {
    Ok(load_bundle_full(dir)?.graph)
}

/// Writes `g` in canonical form: edges `u < v` sorted, binary features.
pub fn save_bundle<T: Scalar>(g: &Graph<T>, dir: &Path) -> Result<Vec<PathBuf>> {
    save_bundle_with(g, None, FeatureFormat::Bin, dir)
}

/// Writes `g` with an optional split column and a chosen feature format.
/// Returns every path written.
pub fn save_bundle_with<T: Scalar>(
    g: &Graph<T>,
    splits: Option<&[SplitTag]>,
    format: FeatureFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if let Some(s) = splits {
        if s.len() != g.num_vertices() {
            return Err(Error::shape("save_bundle", format!("{} split tags for {} vertices", s.len(), g.num_vertices())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = BundleMeta {
        format_version: BUNDLE_FORMAT_VERSION,
        num_vertices: g.num_vertices(),
        feature_dim: g.feature_dim(),
        num_classes: g.num_classes(),
        has_timestamps: g.timestamps().is_some(),
        has_splits: splits.is_some(),
        feature_format: format,
    };
    let mut written = Vec::new();
    let mut put = |name: &str, contents: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write(&path, contents)?;
        written.push(path);
        Ok(())
    };
    let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta_json.push('\n');
    put("meta.json", meta_json.into_bytes())?;

    let mut edges = String::new();
    for (u, v) in g.canonical_edges() {
        writeln!(edges, "{u}\t{v}").expect("write to string");
    }
    put("edges.tsv", edges.into_bytes())?;

    match format {
        FeatureFormat::Bin => {
            let mut bytes = Vec::with_capacity(g.features().len() * 4);
            for x in g.features().as_slice() {
                bytes.extend_from_slice(&(x.to_f64_lossy() as f32).to_le_bytes());
            }
            put("features.bin", bytes)?;
        }
        FeatureFormat::Tsv => {
            let mut text = String::new();
            for i in 0..g.num_vertices() {
                let row: Vec<String> = g
                    .features()
                    .row(i)
                    .iter()
                    .map(|x| format!("{}", x.to_f64_lossy() as f32))
                    .collect();
                writeln!(text, "{}", row.join("\t")).expect("write to string");
            }
            put("features.tsv", text.into_bytes())?;
        }
    }

    let column = |values: &mut dyn Iterator<Item = String>| {
        let mut text = String::new();
        for (v, s) in values.enumerate() {
            writeln!(text, "{v}\t{s}").expect("write to string");
        }
        text.into_bytes()
    };
    put("labels.tsv", column(&mut g.labels().iter().map(|y| y.to_string())))?;
    if let Some(ts) = g.timestamps() {
        put("years.tsv", column(&mut ts.iter().map(|t| t.to_string())))?;
    }
    if let Some(s) = splits {
        put("splits.tsv", column(&mut s.iter().map(|t| t.as_str().to_string())))?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Graph<f64> {
        let f = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![0.0, 3.0]]).unwrap();
        build_graph(3, &[(2, 0), (0, 1)], f, vec![1, 0, 1], 2, Some(vec![2001, 2002, 2002])).unwrap()
    }

    #[test]
    fn round_trip_both_formats() {
        let g = sample();
        for format in [FeatureFormat::Bin, FeatureFormat::Tsv] {
            let dir = tempfile::tempdir().unwrap();
            let splits = [SplitTag::Train, SplitTag::Val, SplitTag::Test];
            save_bundle_with(&g, Some(&splits), format, dir.path()).unwrap();
            let b = load_bundle_full::<f64>(dir.path()).unwrap();
            assert_eq!(b.graph, g);
            assert_eq!(b.splits.as_deref(), Some(&splits[..]));
        }
    }

    #[test]
    fn canonical_edges_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(), dir.path()).unwrap();
        let edges = fs::read_to_string(dir.path().join("edges.tsv")).unwrap();
        assert_eq!(edges, "0\t1\n0\t2\n");
    }

    #[test]
    fn truncated_features_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(), dir.path()).unwrap();
        let p = dir.path().join("features.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_bundle::<f64>(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(), dir.path()).unwrap();
        fs::write(dir.path().join("edges.tsv"), "0\t1\n0\tx\n").unwrap();
        match load_bundle::<f64>(dir.path()).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&sample(), dir.path()).unwrap();
        let p = dir.path().join("meta.json");
        let meta = fs::read_to_string(&p).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        fs::write(&p, meta).unwrap();
        assert!(load_bundle::<f64>(dir.path()).is_err());
    }
}
