use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LeapModel, ModelHeader};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::{checkpoint, Array};

/// Writes the model as a checkpoint whose header is the TOML-encoded
/// [`ModelHeader`].
pub fn save_model<W: std::io::Write>(model: &LeapModel, out: W) -> Result<()> {
    let header = toml::to_string(model.header()).map_err(|e| Error::Checkpoint(format!("encoding header: {e}")))?;
    let arrays: Vec<(&str, &Array)> = model.params().named_arrays().collect();
    checkpoint::write(out, &header, &arrays)
}

pub fn load_model<R: Read>(input: R) -> Result<LeapModel> {
    let (header, arrays) = checkpoint::read(input)?;
    let header: ModelHeader = toml::from_str(&header).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let mut model = LeapModel::from_header(header, 0)?;
    model.params_mut().load_named(arrays)?;
    Ok(model)
}

impl LeapModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(self, BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_model(BufReader::new(File::open(path)?))
    }
}

/// Reads a node vector file: a `N K` header line, then `label v1 .. vK` per
/// node. Every node of `g` must appear exactly once and no other labels may.
pub fn read_node_vectors<R: BufRead>(g: &Graph, source: R) -> Result<Array> {
    let ids = g.lookup_label();
    let mut lines = source.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let parse_err = |line: usize, message: String| Error::Parse { line: line + 1, message };

    let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "empty vector file".into()))?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(hline, format!("expected `N K` header, got {header:?}")))?;
    let [rows, k] = dims[..] else {
        return Err(parse_err(hline, format!("expected `N K` header, got {header:?}")));
    };
    if k == 0 {
        return Err(parse_err(hline, "vector width must be positive".into()));
    }

    let n = g.node_count();
    let mut data = vec![0.0; n * k];
    let mut seen = HashSet::new();
    for (i, line) in lines {
        let line = line?;
        let mut fields = line.split_whitespace();
        let label = fields.next().unwrap_or_default();
        let &id = ids.get(label).ok_or_else(|| parse_err(i, format!("node {label:?} is not in the graph")))?;
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(i, format!("bad value for node {label:?}: {e}")))?;
        if values.len() != k {
            return Err(parse_err(i, format!("node {label:?} has {} values, header says {k}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(i, format!("non-finite value {v} for node {label:?}")));
        }
        if !seen.insert(id) {
            return Err(parse_err(i, format!("node {label:?} listed twice")));
        }
        data[id * k..(id + 1) * k].copy_from_slice(&values);
    }
    if seen.len() != rows {
        return Err(Error::InvalidArgument(format!("header announces {rows} rows, file has {}", seen.len())));
    }
    if let Some(missing) = (0..n).find(|x| !seen.contains(x)) {
        return Err(Error::InvalidArgument(format!("no vector for node {:?}", g.label(missing))));
    }
    Array::new(&[n, k], data)
}

pub fn write_node_vectors<W: Write>(g: &Graph, table: &Array, mut out: W) -> Result<()> {
    let [n, k] = table.shape()[..] else {
        return Err(Error::InvalidArgument(format!("vector table must be 2-d, got {:?}", table.shape())));
    };
    if n != g.node_count() {
        return Err(Error::InvalidArgument(format!("{n} vectors for {} nodes", g.node_count())));
    }
    writeln!(out, "{n} {k}")?;
    for (x, row) in table.data().chunks(k).enumerate() {
        let values: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{} {}", g.label(x), values.join(" "))?;
    }
    Ok(())
}

/// Pretrained embeddings for `g`, to be used frozen (see
/// [`NodeInputs`](super::NodeInputs)).
pub fn load_pretrained_embeddings(path: &Path, g: &Graph) -> Result<Array> {
    read_node_vectors(g, BufReader::new(File::open(path)?))
}
