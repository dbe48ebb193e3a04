use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, MeshError, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(Self::Off),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        MeshFormat::Off => parse_off(&text),
        MeshFormat::Obj => parse_obj(&text),
    }
}

struct Tokens<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current: Vec<(usize, &'a str)>,
    line_no: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            current: Vec::new(),
            line_no: 0,
        }
    }

    /// Next non-empty, non-comment line as (column, token) pairs.
    fn next_line(&mut self) -> Option<(usize, Vec<(usize, &'a str)>)> {
        for (i, line) in self.lines.by_ref() {
            let content = line.split('#').next().unwrap_or("");
            let toks = tokenize(content);
            if !toks.is_empty() {
                self.line_no = i + 1;
                self.current = toks.clone();
                return Some((i + 1, toks));
            }
        }
        None
    }
}

fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(line: usize, tok: (usize, &str), what: &str) -> Result<T, MeshError> {
    tok.1
        .parse::<T>()
        .map_err(|_| parse_err(line, tok.0, format!("expected {what}, found `{}`", tok.1)))
}

/// Parses ASCII OFF: `OFF`, then `N F E`, then vertices, then `3 i j k` faces.
pub fn parse_off(text: &str) -> Result<Mesh, MeshError> {
    let mut tokens = Tokens::new(text);
    let (line, toks) = tokens.next_line().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    if toks[0].1 != "OFF" {
        return Err(parse_err(line, toks[0].0, "missing OFF header"));
    }
    // Counts may share the header line.
    let counts = if toks.len() > 1 {
        (line, toks[1..].to_vec())
    } else {
        tokens
            .next_line()
            .ok_or_else(|| parse_err(line + 1, 1, "missing vertex/face counts"))?
    };
    let (cline, ctoks) = counts;
    if ctoks.len() < 2 {
        return Err(parse_err(cline, 1, "expected `N F 0`"));
    }
    let n: usize = number(cline, ctoks[0], "vertex count")?;
    let nf: usize = number(cline, ctoks[1], "face count")?;

    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let (l, t) = tokens
            .next_line()
            .ok_or_else(|| parse_err(tokens.line_no + 1, 1, format!("expected {n} vertices, found {}", vertices.len())))?;
        if t.len() < 3 {
            return Err(parse_err(l, 1, "vertex needs 3 coordinates"));
        }
        let p: Point = [number(l, t[0], "coordinate")?, number(l, t[1], "coordinate")?, number(l, t[2], "coordinate")?];
        vertices.push(p);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, t) = tokens
            .next_line()
            .ok_or_else(|| parse_err(tokens.line_no + 1, 1, format!("expected {nf} faces, found {}", faces.len())))?;
        let k: usize = number(l, t[0], "face arity")?;
        if k != 3 {
            return Err(parse_err(l, t[0].0, format!("only triangles are supported, found a {k}-gon")));
        }
        if t.len() < 4 {
            return Err(parse_err(l, 1, "triangle needs 3 indices"));
        }
        faces.push([number(l, t[1], "vertex index")?, number(l, t[2], "vertex index")?, number(l, t[3], "vertex index")?]);
    }
    if let Some((l, t)) = tokens.next_line() {
        return Err(parse_err(l, t[0].0, "unexpected content after the last face"));
    }
    Mesh::new(vertices, faces)
}

/// Parses the `v` and `f` records of an OBJ file. Texture and normal
/// sub-indices (`f 1/2/3 ...`) are ignored; other records are skipped.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut tokens = Tokens::new(text);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    while let Some((l, t)) = tokens.next_line() {
        match t[0].1 {
            "v" => {
                if t.len() < 4 {
                    return Err(parse_err(l, t[0].0, "vertex needs 3 coordinates"));
                }
                vertices.push([number(l, t[1], "coordinate")?, number(l, t[2], "coordinate")?, number(l, t[3], "coordinate")?]);
            }
            "f" => {
                if t.len() != 4 {
                    return Err(parse_err(l, t[0].0, format!("only triangles are supported, found {} indices", t.len() - 1)));
                }
                let mut face = [0usize; 3];
                for c in 0..3 {
                    let (col, tok) = t[c + 1];
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = number(l, (col, head), "vertex index")?;
                    let resolved = if idx > 0 {
                        idx as usize - 1
                    } else if idx < 0 && (-idx) as usize <= vertices.len() {
                        vertices.len() - (-idx) as usize
                    } else {
                        return Err(parse_err(l, col, format!("invalid vertex index {idx}")));
                    };
                    face[c] = resolved;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

pub fn write_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("OFF\n");
    let _ = writeln!(s, "{} {} 0", mesh.vertex_count(), mesh.face_count());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}
