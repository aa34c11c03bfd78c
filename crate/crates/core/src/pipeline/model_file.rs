//! Binary container shared by model, matrix and sparse-grid files.
//!
//! ```text
//! "TSSC"  u32 version  u32 section count
//! per section: [u8; 4] tag, u64 offset, u64 length
//! section payloads
//! ```
//!
//! Integers and floats are little-endian. Matrices are written as
//! `u64 rows, u64 cols` followed by `rows·cols` row-major `f64`s.

use std::path::Path;

use ndarray::Array2;

use crate::classify::LinearModel;
use crate::error::{Error, Result};
use crate::grouped::GroupTable;
use crate::pursuit::{Dictionary, SparseCode};
use crate::pyramid::{PyramidVector, SparseFeatureGrid};
use crate::treehash::{HashTree, HashedModel, LeafEntry, TreeNode};

pub const MAGIC: &[u8; 4] = b"TSSC";
pub const VERSION: u32 = 1;

pub type Tag = [u8; 4];

pub const DICT: Tag = *b"DICT";
pub const GRPS: Tag = *b"GRPS";
pub const TREE: Tag = *b"TREE";
pub const LEAF: Tag = *b"LEAF";
pub const LINM: Tag = *b"LINM";
pub const CONF: Tag = *b"CONF";
pub const MATX: Tag = *b"MATX";
pub const SGRD: Tag = *b"SGRD";

#[derive(Debug, Default)]
pub struct Encoder(Vec<u8>);

impl Encoder {
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    /// Row-major values of a `rows × cols` matrix.
    pub fn matrix(&mut self, rows: usize, cols: usize, row_major: impl IntoIterator<Item = f64>) {
        self.usize(rows);
        self.usize(cols);
        let start = self.0.len();
        row_major.into_iter().for_each(|v| self.f64(v));
        debug_assert_eq!(self.0.len() - start, rows * cols * 8);
    }

    pub fn array(&mut self, m: &Array2<f64>) {
        self.matrix(m.nrows(), m.ncols(), m.iter().copied());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("{} section is truncated", self.what)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size overflows usize".into()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format(format!("{} section has invalid UTF-8", self.what)))
    }

    /// `(rows, cols, row-major values)`.
    pub fn matrix(&mut self) -> Result<(usize, usize, Vec<f64>)> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
        let bytes = self.take(n)?;
        let vals = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((rows, cols, vals))
    }

    pub fn array(&mut self) -> Result<Array2<f64>> {
        let (r, c, v) = self.matrix()?;
        Ok(Array2::from_shape_vec((r, c), v).expect("length checked"))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} section has trailing bytes",
                self.what
            )));
        }
        Ok(())
    }
}

/// Tagged sections in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub sections: Vec<(Tag, Vec<u8>)>,
}

impl Container {
    pub fn push(&mut self, tag: Tag, payload: Vec<u8>) {
        self.sections.push((tag, payload));
    }

    pub fn get(&self, tag: Tag) -> Option<&[u8]> {
        self.sections
            .iter()
            .find(|s| s.0 == tag)
            .map(|s| s.1.as_slice())
    }

    fn require(&self, tag: Tag) -> Result<&[u8]> {
        self.get(tag).ok_or_else(|| {
            Error::Format(format!("missing {} section", String::from_utf8_lossy(&tag)))
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::default();
        e.0.extend_from_slice(MAGIC);
        e.u32(VERSION);
        e.u32(self.sections.len() as u32);
        let mut offset = 12 + 20 * self.sections.len();
        for (tag, p) in &self.sections {
            e.0.extend_from_slice(tag);
            e.usize(offset);
            e.usize(p.len());
            offset += p.len();
        }
        for (_, p) in &self.sections {
            e.0.extend_from_slice(p);
        }
        e.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a TSSC file (bad magic)".into()));
        }
        let mut d = Decoder::new(&bytes[4..], "header");
        let version = d.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {VERSION})"
            )));
        }
        let n = d.u32()? as usize;
        let mut sections = Vec::with_capacity(n.min(64));
        let mut expect = 12usize.saturating_add(20usize.saturating_mul(n));
        for _ in 0..n {
            let tag: Tag = d.take(4)?.try_into().unwrap();
            let off = d.usize()?;
            let len = d.usize()?;
            let end = off.checked_add(len).filter(|&e| e <= bytes.len());
            if off != expect || end.is_none() {
                return Err(Error::Format("section table is inconsistent".into()));
            }
            expect = off + len;
            sections.push((tag, bytes[off..off + len].to_vec()));
        }
        if expect != bytes.len() {
            return Err(Error::Format("file has trailing bytes".into()));
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Linear classifier with its class names.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub model: LinearModel,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: HashedModel,
    pub classifier: Option<Classifier>,
    pub config: String,
}

fn encode_dict(d: &Dictionary) -> Vec<u8> {
    let mut e = Encoder::default();
    e.array(&d.to_matrix());
    e.into_bytes()
}

fn decode_dict(b: &[u8]) -> Result<Dictionary> {
    let mut d = Decoder::new(b, "DICT");
    let (rows, cols, vals) = d.matrix()?;
    d.finish()?;
    let mut col_major = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            col_major[c * rows + r] = vals[r * cols + c];
        }
    }
    Dictionary::from_raw(rows, cols, col_major)
}

fn encode_groups(g: &GroupTable) -> Vec<u8> {
    let mut e = Encoder::default();
    e.usize(g.len());
    e.usize(g.n_atoms());
    for set in g.groups() {
        e.usize(set.len());
        set.iter().for_each(|&k| e.usize(k));
    }
    e.into_bytes()
}

fn decode_groups(b: &[u8]) -> Result<GroupTable> {
    let mut d = Decoder::new(b, "GRPS");
    let n = d.usize()?;
    let k = d.usize()?;
    let mut groups = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = d.usize()?;
        groups.push((0..len).map(|_| d.usize()).collect::<Result<Vec<_>>>()?);
    }
    d.finish()?;
    GroupTable::new(groups, k).map_err(|e| Error::Format(format!("group table: {e}")))
}

fn encode_tree(t: &HashTree) -> Vec<u8> {
    let mut e = Encoder::default();
    e.usize(t.dim());
    e.usize(t.max_depth());
    e.usize(t.nodes().len());
    for node in t.nodes() {
        match node {
            TreeNode::Split {
                direction,
                threshold,
                left,
                right,
            } => {
                e.u8(0);
                e.u32(*left);
                e.u32(*right);
                e.f64(f64::from(*threshold));
                direction.iter().for_each(|&v| e.f64(f64::from(v)));
            }
            TreeNode::Leaf { leaf } => {
                e.u8(1);
                e.u32(*leaf);
            }
        }
    }
    e.into_bytes()
}

fn to_f32_exact(v: f64) -> Result<f32> {
    let f = v as f32;
    if f64::from(f) == v || v.is_nan() {
        Ok(f)
    } else {
        Err(Error::Format(
            "tree value is not representable in f32".into(),
        ))
    }
}

fn decode_tree(b: &[u8]) -> Result<HashTree> {
    let mut d = Decoder::new(b, "TREE");
    let dim = d.usize()?;
    let max_depth = d.usize()?;
    let n = d.usize()?;
    let mut nodes = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        nodes.push(match d.u8()? {
            0 => {
                let left = d.u32()?;
                let right = d.u32()?;
                let threshold = to_f32_exact(d.f64()?)?;
                let direction = (0..dim)
                    .map(|_| d.f64().and_then(to_f32_exact))
                    .collect::<Result<Vec<_>>>()?;
                TreeNode::Split {
                    direction,
                    threshold,
                    left,
                    right,
                }
            }
            1 => TreeNode::Leaf { leaf: d.u32()? },
            k => return Err(Error::Format(format!("unknown tree node kind {k}"))),
        });
    }
    d.finish()?;
    HashTree::from_nodes(dim, max_depth, nodes)
}

fn encode_leaves(m: &HashedModel) -> Vec<u8> {
    let mut e = Encoder::default();
    e.usize(m.leaf_group.len());
    m.leaf_group.iter().for_each(|&g| e.usize(g));
    e.usize(m.entries.len());
    m.entries.iter().for_each(|en| e.array(&en.decoder));
    e.into_bytes()
}

fn encode_linear(c: &Classifier) -> Vec<u8> {
    let mut e = Encoder::default();
    e.array(&c.model.weights);
    e.matrix(1, c.model.bias.len(), c.model.bias.iter().copied());
    e.usize(c.classes.len());
    c.classes.iter().for_each(|s| e.str(s));
    e.into_bytes()
}

fn decode_linear(b: &[u8]) -> Result<Classifier> {
    let mut d = Decoder::new(b, "LINM");
    let weights = d.array()?;
    let (r, c, bias) = d.matrix()?;
    let n = d.usize()?;
    let classes = (0..n).map(|_| d.str()).collect::<Result<Vec<_>>>()?;
    d.finish()?;
    if r != 1 || c != weights.nrows() || classes.len() != c {
        return Err(Error::Format("classifier shapes disagree".into()));
    }
    Ok(Classifier {
        model: LinearModel {
            weights,
            bias: bias.into(),
        },
        classes,
    })
}

impl ModelFile {
    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.push(DICT, encode_dict(&self.model.dict));
        c.push(GRPS, encode_groups(&self.model.groups));
        c.push(TREE, encode_tree(&self.model.tree));
        c.push(LEAF, encode_leaves(&self.model));
        if let Some(cl) = &self.classifier {
            c.push(LINM, encode_linear(cl));
        }
        let mut e = Encoder::default();
        e.str(&self.config);
        c.push(CONF, e.into_bytes());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let dict = decode_dict(c.require(DICT)?)?;
        let groups = decode_groups(c.require(GRPS)?)?;
        let tree = decode_tree(c.require(TREE)?)?;
        let mut d = Decoder::new(c.require(LEAF)?, "LEAF");
        let n_leaves = d.usize()?;
        let leaf_group = (0..n_leaves)
            .map(|_| d.usize())
            .collect::<Result<Vec<_>>>()?;
        let n_entries = d.usize()?;
        if n_entries != groups.len() {
            return Err(Error::Format(
                "leaf entries do not match the group table".into(),
            ));
        }
        let entries = groups
            .groups()
            .iter()
            .map(|g| Ok(LeafEntry::from_decoder(g.clone(), d.array()?)))
            .collect::<Result<Vec<_>>>()?;
        d.finish()?;
        let model = HashedModel::from_parts(tree, dict, groups, leaf_group, entries)
            .map_err(|e| Error::Format(format!("inconsistent model: {e}")))?;
        let classifier = c.get(LINM).map(decode_linear).transpose()?;
        let mut d = Decoder::new(c.require(CONF)?, "CONF");
        let config = d.str()?;
        d.finish()?;
        Ok(Self {
            model,
            classifier,
            config,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(&Container::from_bytes(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Writes a matrix file (one `MATX` section).
pub fn save_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut e = Encoder::default();
    e.array(m);
    let mut c = Container::default();
    c.push(MATX, e.into_bytes());
    c.save(path)
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let c = Container::load(path)?;
    let mut d = Decoder::new(c.require(MATX)?, "MATX");
    let m = d.array()?;
    d.finish()?;
    Ok(m)
}

/// Writes a pyramid vector as a one-row matrix file.
pub fn save_pyramid(path: &Path, v: &PyramidVector) -> Result<()> {
    let mut e = Encoder::default();
    e.matrix(1, v.len(), v.values.iter().copied());
    let mut c = Container::default();
    c.push(MATX, e.into_bytes());
    c.save(path)
}

pub fn encode_grid(g: &SparseFeatureGrid) -> Container {
    let mut e = Encoder::default();
    e.usize(g.n_features());
    e.usize(g.width());
    e.usize(g.height());
    for code in g.codes() {
        e.usize(code.support.len());
        for (&k, &v) in code.support.iter().zip(&code.values) {
            e.usize(k);
            e.f64(v);
        }
    }
    let mut c = Container::default();
    c.push(SGRD, e.into_bytes());
    c
}

pub fn decode_grid(c: &Container) -> Result<SparseFeatureGrid> {
    let mut d = Decoder::new(c.require(SGRD)?, "SGRD");
    let nf = d.usize()?;
    let w = d.usize()?;
    let h = d.usize()?;
    let cells = w
        .checked_mul(h)
        .ok_or_else(|| Error::Format("grid size overflows".into()))?;
    let mut codes = Vec::with_capacity(cells.min(1 << 24));
    for _ in 0..cells {
        let n = d.usize()?;
        let mut code = SparseCode::empty();
        for _ in 0..n {
            code.support.push(d.usize()?);
            code.values.push(d.f64()?);
        }
        codes.push(code);
    }
    d.finish()?;
    SparseFeatureGrid::new(nf, w, h, codes).map_err(|e| Error::Format(format!("sparse grid: {e}")))
}

pub fn save_grid(path: &Path, g: &SparseFeatureGrid) -> Result<()> {
    encode_grid(g).save(path)
}

pub fn load_grid(path: &Path) -> Result<SparseFeatureGrid> {
    decode_grid(&Container::load(path)?)
}
