//! Ingestion of raw citation-graph files into bundles.
//!
//! Two layouts are understood. The generic layout has separate
//! whitespace-separated files keyed by a raw paper id:
//!
//! * edges: `id_a id_b`
//! * features: `id x_1 ... x_D`
//! * labels: `id class_name`
//! * years (optional): `id year`
//!
//! The LINQS layout (`*.content` plus `*.cites`) stores
//! `id x_1 ... x_D class_name` per line and `cited citing` pairs.
//!
//! Vertices are numbered in order of first appearance in the feature
//! (or content) file and classes are numbered by sorted class name.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::io::save_bundle;
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Raw files of the generic layout.
#[derive(Clone, Debug)]
pub struct RawCitationFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub years: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConvertOptions {
    /// Skip edges that mention an id absent from the feature file instead
    /// of failing.
    pub drop_dangling: bool,
}

/// A converted graph together with the tables that map it back to the raw ids.
#[derive(Clone, Debug)]
pub struct Converted<T> {
    pub graph: Graph<T>,
    /// Raw id of each vertex, indexed by vertex.
    pub raw_ids: Vec<String>,
    /// Class name of each class id.
    pub class_names: Vec<String>,
    pub dropped_edges: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> + '_ {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
}

struct Vertices {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vertices {
    fn new() -> Self {
        Vertices {
            ids: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn insert(&mut self, path: &Path, line: usize, id: &str) -> Result<()> {
        if self.index.contains_key(id) {
            return Err(malformed(path, line, format!("id {id:?} listed twice")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        Ok(())
    }

    fn lookup(&self, path: &Path, line: usize, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| malformed(path, line, format!("id {id:?} has no feature row")))
    }
}

fn parse_feature_row<T: Scalar>(path: &Path, line: usize, fields: &[&str], out: &mut Vec<T>) -> Result<()> {
    for f in fields {
        let x: f64 = f
            .parse()
            .map_err(|_| malformed(path, line, format!("cannot parse feature value from {f:?}")))?;
        out.push(T::lit(x));
    }
    Ok(())
}

fn check_width(path: &Path, line: usize, width: &mut Option<usize>, got: usize) -> Result<()> {
    match *width {
        Some(d) if d != got => Err(malformed(path, line, format!("{got} feature values, expected {d}"))),
        Some(_) => Ok(()),
        None => {
            *width = Some(got);
            Ok(())
        }
    }
}

fn read_edges(path: &Path, vertices: &Vertices, opts: ConvertOptions) -> Result<(Vec<(usize, usize)>, usize)> {
    let text = read(path)?;
    let mut edges = Vec::new();
    let mut dropped = 0;
    for (line, fields) in rows(&text) {
        if fields.len() != 2 {
            return Err(malformed(path, line, format!("expected 2 ids, got {}", fields.len())));
        }
        match (vertices.lookup(path, line, fields[0]), vertices.lookup(path, line, fields[1])) {
            (Ok(u), Ok(v)) => edges.push((u, v)),
            (Err(_), _) | (_, Err(_)) if opts.drop_dangling => dropped += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} edges with unknown endpoints", path.display());
    }
    Ok((edges, dropped))
}

/// Numbers class names by sorted order.
fn class_ids(names: &[String]) -> (Vec<usize>, Vec<String>) {
    let sorted: Vec<String> = names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: HashMap<&str, usize> = sorted.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    (names.iter().map(|n| index[n.as_str()]).collect(), sorted)
}

/// Reads a `id value` file that must cover every vertex exactly once.
fn read_keyed<'a>(path: &Path, text: &'a str, vertices: &Vertices) -> Result<Vec<&'a str>> {
    let mut out: Vec<Option<&str>> = vec![None; vertices.ids.len()];
    for (line, fields) in rows(text) {
        if fields.len() != 2 {
            return Err(malformed(path, line, format!("expected 2 fields, got {}", fields.len())));
        }
        let v = vertices.lookup(path, line, fields[0])?;
        if out[v].replace(fields[1]).is_some() {
            return Err(malformed(path, line, format!("id {:?} listed twice", fields[0])));
        }
    }
    out.iter()
        .enumerate()
        .map(|(v, x)| {
            x.ok_or_else(|| Error::Data(format!("{}: no entry for id {:?}", path.display(), vertices.ids[v])))
        })
        .collect()
}

fn finish<T: Scalar>(
    vertices: Vertices,
    width: Option<usize>,
    data: Vec<T>,
    edges: Vec<(usize, usize)>,
    dropped_edges: usize,
    names: Vec<String>,
    timestamps: Option<Vec<i64>>,
) -> Result<Converted<T>> {
    let n = vertices.ids.len();
    if n == 0 {
        return Err(Error::Data("no vertices in the feature file".into()));
    }
    let features = DenseMatrix::from_vec(n, width.unwrap_or(0), data)?;
    let (labels, class_names) = class_ids(&names);
    let graph = build_graph(n, &edges, features, labels, class_names.len(), timestamps)?;
    Ok(Converted {
        graph,
        raw_ids: vertices.ids,
        class_names,
        dropped_edges,
    })
}

/// Converts the generic layout.
pub fn convert_citation_raw<T: Scalar>(files: &RawCitationFiles, opts: ConvertOptions) -> Result<Converted<T>> {
    let text = read(&files.features)?;
    let mut vertices = Vertices::new();
    let mut width = None;
    let mut data = Vec::new();
    for (line, fields) in rows(&text) {
        vertices.insert(&files.features, line, fields[0])?;
        check_width(&files.features, line, &mut width, fields.len() - 1)?;
        parse_feature_row(&files.features, line, &fields[1..], &mut data)?;
    }
    let (edges, dropped) = read_edges(&files.edges, &vertices, opts)?;

    let text = read(&files.labels)?;
    let names = read_keyed(&files.labels, &text, &vertices)?
        .into_iter()
        .map(str::to_string)
        .collect();
    let timestamps = match &files.years {
        Some(path) => {
            let text = read(path)?;
            let raw = read_keyed(path, &text, &vertices)?;
            let years = raw
                .iter()
                .map(|y| y.parse::<i64>().map_err(|_| Error::Data(format!("{}: bad year {y:?}", path.display()))))
                .collect::<Result<Vec<_>>>()?;
            Some(years)
        }
        None => None,
    };
    finish(vertices, width, data, edges, dropped, names, timestamps)
}

/// Converts the LINQS `content` + `cites` layout.
pub fn convert_linqs<T: Scalar>(content: &Path, cites: &Path, opts: ConvertOptions) -> Result<Converted<T>> {
    let text = read(content)?;
    let mut vertices = Vertices::new();
    let mut width = None;
    let mut data = Vec::new();
    let mut names = Vec::new();
    for (line, fields) in rows(&text) {
        if fields.len() < 2 {
            return Err(malformed(content, line, "expected an id and a class name"));
        }
        vertices.insert(content, line, fields[0])?;
        let values = &fields[1..fields.len() - 1];
        check_width(content, line, &mut width, values.len())?;
        parse_feature_row(content, line, values, &mut data)?;
        names.push(fields[fields.len() - 1].to_string());
    }
    let (edges, dropped) = read_edges(cites, &vertices, opts)?;
    finish(vertices, width, data, edges, dropped, names, None)
}

/// Writes the bundle plus `mapping.tsv` (vertex, raw id) and
/// `classes.tsv` (class id, name). Returns every path written.
pub fn write_converted<T: Scalar>(c: &Converted<T>, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = save_bundle(&c.graph, dir)?;
    let mut table = |name: &str, values: &[String]| -> Result<()> {
        let mut text = String::new();
        for (i, s) in values.iter().enumerate() {
            writeln!(text, "{i}\t{s}").expect("write to string");
        }
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    table("mapping.tsv", &c.raw_ids)?;
    table("classes.tsv", &c.class_names)?;
    Ok(written)
}
