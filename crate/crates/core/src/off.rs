//! ASCII OFF / nOFF reading and writing.
//!
//! Writer layout (byte-exact):
//!
//! ```text
//! OFF                 | nOFF
//!                     | <dim>
//! <V> <F> 0
//! <V rows of dim reals, 9 significant digits, single spaces>
//! <F rows: arity i0 i1 ...>
//! ```
//!
//! The reader also accepts `#` comments, arbitrary whitespace, and counts on
//! the header line.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::mesh::SurfaceMesh;
use crate::sampler::DenseCloud;

#[derive(Debug, Error)]
pub enum OffError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("nothing to write: input has no vertices")]
    EmptyInput,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("face {face} references vertex {index} but only {vertex_count} exist")]
    DanglingFaceIndex {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffHeader {
    Off,
    NOff(usize),
}

impl OffHeader {
    pub fn for_dims(dims: usize) -> Self {
        if dims == 3 {
            OffHeader::Off
        } else {
            OffHeader::NOff(dims)
        }
    }

    pub fn dims(&self) -> usize {
        match *self {
            OffHeader::Off => 3,
            OffHeader::NOff(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffDocument {
    pub header: OffHeader,
    pub edge_count: usize,
    pub vertices: Vec<Vec<f64>>,
    pub faces: Vec<Vec<usize>>,
}

impl OffDocument {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, OffError> {
        if self.vertices.is_empty() {
            return Err(OffError::EmptyInput);
        }
        let mut out = String::with_capacity(self.vertices.len() * 48);
        match self.header {
            OffHeader::Off => out.push_str("OFF\n"),
            OffHeader::NOff(d) => {
                let _ = write!(out, "nOFF\n{d}\n");
            }
        }
        let _ = writeln!(out, "{} {} 0", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            for (k, x) in v.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                push_g9(&mut out, *x);
            }
            out.push('\n');
        }
        for f in &self.faces {
            let _ = write!(out, "{}", f.len());
            for i in f {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
        }
        Ok(out.into_bytes())
    }
}

/// Anything that serializes to an OFF document.
pub trait ToOff {
    fn to_off(&self) -> OffDocument;
}

impl ToOff for SurfaceMesh {
    fn to_off(&self) -> OffDocument {
        let dims = self.cloud.dims();
        OffDocument {
            header: OffHeader::for_dims(dims),
            edge_count: 0,
            vertices: self
                .cloud
                .points()
                .chunks_exact(dims)
                .map(<[f64]>::to_vec)
                .collect(),
            faces: self.faces().map(<[usize]>::to_vec).collect(),
        }
    }
}

impl ToOff for DenseCloud {
    fn to_off(&self) -> OffDocument {
        OffDocument {
            header: OffHeader::for_dims(self.dims),
            edge_count: 0,
            vertices: self.iter().map(<[f64]>::to_vec).collect(),
            faces: Vec::new(),
        }
    }
}

impl ToOff for OffDocument {
    fn to_off(&self) -> OffDocument {
        self.clone()
    }
}

pub fn encode_off(item: &impl ToOff) -> Result<Vec<u8>, OffError> {
    item.to_off().to_bytes()
}

/// Writes `item` to `path` and returns the number of bytes written.
pub fn write_off(item: &impl ToOff, path: impl AsRef<Path>) -> Result<usize, OffError> {
    let bytes = encode_off(item)?;
    std::fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn read_off(path: impl AsRef<Path>) -> Result<OffDocument, OffError> {
    let text = std::fs::read_to_string(path)?;
    parse_off(&text)
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut last_line = 1;
        for (n, line) in text.lines().enumerate() {
            last_line = n + 1;
            let body = line.split('#').next().unwrap_or("");
            items.extend(body.split_whitespace().map(|t| (n + 1, t)));
        }
        Self {
            items,
            pos: 0,
            last_line,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), OffError> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| OffError::Parse {
                line: self.last_line,
                reason: format!("unexpected end of file, expected {what}"),
            })?;
        self.pos += 1;
        Ok(t)
    }

    fn usize(&mut self, what: &str) -> Result<usize, OffError> {
        let (line, t) = self.next(what)?;
        t.parse().map_err(|_| OffError::Parse {
            line,
            reason: format!("expected {what}, found '{t}'"),
        })
    }

    fn f64(&mut self, what: &str) -> Result<f64, OffError> {
        let (line, t) = self.next(what)?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(OffError::Parse {
                line,
                reason: format!("expected {what}, found '{t}'"),
            }),
        }
    }
}

pub fn parse_off(text: &str) -> Result<OffDocument, OffError> {
    let mut tokens = Tokens::new(text);
    let (line, head) = tokens.next("header")?;
    let header = match head {
        "OFF" => OffHeader::Off,
        "nOFF" => {
            let d = tokens.usize("dimension")?;
            if d == 0 {
                return Err(OffError::Parse {
                    line,
                    reason: "dimension must be positive".into(),
                });
            }
            OffHeader::NOff(d)
        }
        other => {
            return Err(OffError::Parse {
                line,
                reason: format!("unknown header '{other}'"),
            })
        }
    };
    let dims = header.dims();
    let nv = tokens.usize("vertex count")?;
    let nf = tokens.usize("face count")?;
    let edge_count = tokens.usize("edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let v = (0..dims)
            .map(|_| tokens.f64("coordinate"))
            .collect::<Result<Vec<_>, _>>()?;
        vertices.push(v);
    }
    let mut faces = Vec::with_capacity(nf);
    for face in 0..nf {
        let arity = tokens.usize("face arity")?;
        let mut f = Vec::with_capacity(arity);
        for _ in 0..arity {
            let index = tokens.usize("vertex index")?;
            if index >= nv {
                return Err(OffError::DanglingFaceIndex {
                    face,
                    index,
                    vertex_count: nv,
                });
            }
            f.push(index);
        }
        faces.push(f);
    }
    if let Some(&(line, t)) = tokens.items.get(tokens.pos) {
        return Err(OffError::Parse {
            line,
            reason: format!("trailing content '{t}'"),
        });
    }
    Ok(OffDocument {
        header,
        edge_count,
        vertices,
        faces,
    })
}

/// Appends `v` the way C's `%.9g` prints it, with `-0` folded to `0`.
fn push_g9(out: &mut String, v: f64) {
    const PRECISION: i32 = 9;
    if v == 0.0 {
        out.push('0');
        return;
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..PRECISION).contains(&exp) {
        let decimals = (PRECISION - 1 - exp) as usize;
        let fixed = format!("{v:.decimals$}");
        out.push_str(trim_fraction(&fixed));
    } else {
        out.push_str(trim_fraction(mantissa));
        let sign = if exp < 0 { '-' } else { '+' };
        let _ = write!(out, "e{sign}{:02}", exp.abs());
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn format_g9(v: f64) -> String {
    let mut s = String::new();
    push_g9(&mut s, v);
    s
}
