//! Triangle meshes and PLY ingestion.
//!
//! The pipeline accepts PLY files (ASCII or binary little-endian) holding
//! either a triangle mesh (normals computed from the faces) or a bare point
//! set with stored `nx, ny, nz` normals, which is what the synthetic scene
//! writer emits.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{OrientedPoint, Vec3};

/// Errors from mesh loading and processing.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("ply parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unsupported ply format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh has no faces")]
    EmptyInput,
    #[error("mesh has neither faces nor stored normals; cannot orient points")]
    NoNormals,
    #[error("face {face} references vertex {index} but the mesh has {n_vertices} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        n_vertices: usize,
    },
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

/// Triangle mesh with counterclockwise (outward) winding, optionally
/// carrying per-vertex normals from the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Normals read from the input file, if any (point-set PLYs).
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    /// Build a mesh, validating that all face indices are in range.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx >= n {
                    return Err(MeshError::FaceIndexOutOfRange {
                        face: fi,
                        index: idx,
                        n_vertices: n,
                    });
                }
            }
        }
        Ok(Self {
            vertices,
            faces,
            normals: None,
        })
    }

    /// Point set with stored normals and no connectivity.
    pub fn from_points(points: &[OrientedPoint]) -> Self {
        Self {
            vertices: points.iter().map(|q| q.position).collect(),
            faces: Vec::new(),
            normals: Some(points.iter().map(|q| q.normal).collect()),
        }
    }

    /// Drop zero-area and repeated-index faces; returns how many went.
    pub fn drop_degenerate_faces(&mut self) -> usize {
        let vertices = &self.vertices;
        let before = self.faces.len();
        self.faces.retain(|f| {
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return false;
            }
            let a = vertices[f[0]];
            let b = vertices[f[1]];
            let c = vertices[f[2]];
            (b - a).cross(&(c - a)).norm_squared() > 0.0
        });
        before - self.faces.len()
    }
}

/// A loaded mesh plus load-time diagnostics.
#[derive(Debug, Clone)]
pub struct MeshLoad {
    pub mesh: TriangleMesh,
    /// Degenerate faces removed during loading.
    pub degenerate_faces_dropped: usize,
}

// ── PLY reading ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: ScalarType, name: String },
    List {
        count_ty: ScalarType,
        item_ty: ScalarType,
        name: String,
    },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Load a triangle mesh or oriented point set from a PLY file.
pub fn load_mesh(path: &Path) -> Result<MeshLoad, MeshError> {
    let bytes = fs::read(path)?;
    load_mesh_bytes(&bytes)
}

fn load_mesh_bytes(bytes: &[u8]) -> Result<MeshLoad, MeshError> {
    let (format, elements, body_start, header_lines) = parse_header(bytes)?;
    let raw = match format {
        PlyFormat::Ascii => parse_ascii_body(&bytes[body_start..], &elements, header_lines)?,
        PlyFormat::BinaryLittleEndian => {
            parse_binary_body(&bytes[body_start..], &elements, body_start)?
        }
    };
    let mut mesh = TriangleMesh::new(raw.vertices, raw.faces).map_err(|e| match e {
        MeshError::FaceIndexOutOfRange { face, index, n_vertices } => parse_err(
            format!("face {face}"),
            format!("vertex index {index} out of range (mesh has {n_vertices} vertices)"),
        ),
        other => other,
    })?;
    mesh.normals = raw.normals;
    let degenerate_faces_dropped = mesh.drop_degenerate_faces();
    Ok(MeshLoad {
        mesh,
        degenerate_faces_dropped,
    })
}

struct RawMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Option<Vec<Vec3>>,
}

type HeaderInfo = (PlyFormat, Vec<Element>, usize, usize);

fn parse_header(bytes: &[u8]) -> Result<HeaderInfo, MeshError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();

    let next_line = |pos: &mut usize, line_no: &mut usize| -> Result<String, MeshError> {
        if *pos >= bytes.len() {
            return Err(parse_err("end of file", "header not terminated"));
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos] != b'\n' {
            *pos += 1;
        }
        let mut end = *pos;
        if end > start && bytes[end - 1] == b'\r' {
            end -= 1;
        }
        *pos += 1; // skip '\n'
        *line_no += 1;
        String::from_utf8(bytes[start..end].to_vec())
            .map_err(|_| parse_err(format!("line {line_no}"), "header is not valid utf-8"))
    };

    let magic = next_line(&mut pos, &mut line_no)?;
    if magic.trim() != "ply" {
        return Err(parse_err("line 1", "missing ply magic"));
    }

    loop {
        let line = next_line(&mut pos, &mut line_no)?;
        let loc = format!("line {line_no}");
        let mut tokens = line.split_ascii_whitespace();
        match tokens.next() {
            None | Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                let fmt = tokens
                    .next()
                    .ok_or_else(|| parse_err(&loc, "format line missing type"))?;
                format = Some(match fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(MeshError::UnsupportedFormat(other.to_string())),
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(&loc, "element missing name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(&loc, "element missing count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(&loc, "property before any element"))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| parse_err(&loc, "property missing type"))?;
                if first == "list" {
                    let count_ty = tokens
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| parse_err(&loc, "bad list count type"))?;
                    let item_ty = tokens
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| parse_err(&loc, "bad list item type"))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| parse_err(&loc, "list property missing name"))?;
                    element.properties.push(Property::List {
                        count_ty,
                        item_ty,
                        name: name.to_string(),
                    });
                } else {
                    let ty = ScalarType::parse(first)
                        .ok_or_else(|| parse_err(&loc, format!("unknown type '{first}'")))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| parse_err(&loc, "property missing name"))?;
                    element.properties.push(Property::Scalar {
                        ty,
                        name: name.to_string(),
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(&loc, format!("unknown header keyword '{other}'")));
            }
        }
    }

    let format = format.ok_or_else(|| parse_err("header", "missing format line"))?;
    Ok((format, elements, pos, line_no))
}

/// Column layout of the vertex element: indices of x,y,z (+ optional normals)
/// among its scalar properties.
struct VertexLayout {
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout, MeshError> {
    let mut found = [None; 6];
    for (idx, prop) in element.properties.iter().enumerate() {
        if let Property::Scalar { name, .. } = prop {
            let slot = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                "nx" => 3,
                "ny" => 4,
                "nz" => 5,
                _ => continue,
            };
            found[slot] = Some(idx);
        }
    }
    let xyz = match (found[0], found[1], found[2]) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => {
            return Err(parse_err(
                "vertex element",
                "missing x/y/z vertex properties",
            ))
        }
    };
    let normal = match (found[3], found[4], found[5]) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    Ok(VertexLayout { xyz, normal })
}

fn is_face_list(name: &str) -> bool {
    name == "vertex_indices" || name == "vertex_index"
}

fn parse_ascii_body(
    body: &[u8],
    elements: &[Element],
    header_lines: usize,
) -> Result<RawMesh, MeshError> {
    let text = std::str::from_utf8(body)
        .map_err(|_| parse_err("body", "ascii body is not valid utf-8"))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut vertices = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut has_normals = false;
    let mut faces = Vec::new();

    for element in elements {
        let layout = if element.name == "vertex" {
            let l = vertex_layout(element)?;
            has_normals = l.normal.is_some();
            Some(l)
        } else {
            None
        };
        for row in 0..element.count {
            let (line_idx, line) = lines.next().ok_or_else(|| {
                parse_err(
                    "end of file",
                    format!("missing row {row} of element '{}'", element.name),
                )
            })?;
            let loc = format!("line {}", header_lines + line_idx + 1);
            let mut tokens = line.split_ascii_whitespace();
            let mut scalars: Vec<f64> = Vec::with_capacity(element.properties.len());
            let mut face: Option<Vec<usize>> = None;
            for prop in &element.properties {
                match prop {
                    Property::Scalar { .. } => {
                        let tok = tokens
                            .next()
                            .ok_or_else(|| parse_err(&loc, "row has too few values"))?;
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| parse_err(&loc, format!("bad number '{tok}'")))?;
                        scalars.push(v);
                    }
                    Property::List { name, .. } => {
                        let tok = tokens
                            .next()
                            .ok_or_else(|| parse_err(&loc, "missing list count"))?;
                        let count: usize = tok
                            .parse()
                            .map_err(|_| parse_err(&loc, format!("bad list count '{tok}'")))?;
                        let mut items = Vec::with_capacity(count);
                        for _ in 0..count {
                            let tok = tokens
                                .next()
                                .ok_or_else(|| parse_err(&loc, "list shorter than its count"))?;
                            let v: f64 = tok
                                .parse()
                                .map_err(|_| parse_err(&loc, format!("bad number '{tok}'")))?;
                            items.push(v);
                        }
                        if element.name == "face" && is_face_list(name) {
                            face = Some(items.iter().map(|v| *v as usize).collect());
                        }
                    }
                }
            }
            if let Some(layout) = &layout {
                vertices.push(Vec3::new(
                    scalars[layout.xyz[0]],
                    scalars[layout.xyz[1]],
                    scalars[layout.xyz[2]],
                ));
                if let Some(nidx) = layout.normal {
                    normals.push(Vec3::new(
                        scalars[nidx[0]],
                        scalars[nidx[1]],
                        scalars[nidx[2]],
                    ));
                }
            }
            if element.name == "face" {
                let items = face
                    .ok_or_else(|| parse_err(&loc, "face element has no vertex_indices list"))?;
                if items.len() != 3 {
                    return Err(parse_err(
                        &loc,
                        format!("face {row} has {} vertices; only triangles supported", items.len()),
                    ));
                }
                faces.push([items[0], items[1], items[2]]);
            }
        }
    }

    Ok(RawMesh {
        vertices,
        faces,
        normals: if has_normals { Some(normals) } else { None },
    })
}

struct ByteCursor<'a> {
    data: &'a [u8],
    pos: usize,
    base_offset: usize,
}

impl<'a> ByteCursor<'a> {
    fn read(&mut self, ty: ScalarType) -> Result<f64, MeshError> {
        let size = ty.size();
        if self.pos + size > self.data.len() {
            return Err(parse_err(
                format!("byte {}", self.base_offset + self.pos),
                "unexpected end of binary body",
            ));
        }
        let b = &self.data[self.pos..self.pos + size];
        self.pos += size;
        Ok(match ty {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes([
                b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
            ]),
        })
    }
}

fn parse_binary_body(
    body: &[u8],
    elements: &[Element],
    base_offset: usize,
) -> Result<RawMesh, MeshError> {
    let mut cur = ByteCursor {
        data: body,
        pos: 0,
        base_offset,
    };
    let mut vertices = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut has_normals = false;
    let mut faces = Vec::new();

    for element in elements {
        let layout = if element.name == "vertex" {
            let l = vertex_layout(element)?;
            has_normals = l.normal.is_some();
            Some(l)
        } else {
            None
        };
        for row in 0..element.count {
            let mut scalars: Vec<f64> = Vec::with_capacity(element.properties.len());
            let mut face: Option<Vec<usize>> = None;
            for prop in &element.properties {
                match prop {
                    Property::Scalar { ty, .. } => scalars.push(cur.read(*ty)?),
                    Property::List { count_ty, item_ty, name } => {
                        let count = cur.read(*count_ty)? as usize;
                        let mut items = Vec::with_capacity(count);
                        for _ in 0..count {
                            items.push(cur.read(*item_ty)?);
                        }
                        if element.name == "face" && is_face_list(name) {
                            face = Some(items.iter().map(|v| *v as usize).collect());
                        }
                    }
                }
            }
            if let Some(layout) = &layout {
                vertices.push(Vec3::new(
                    scalars[layout.xyz[0]],
                    scalars[layout.xyz[1]],
                    scalars[layout.xyz[2]],
                ));
                if let Some(nidx) = layout.normal {
                    normals.push(Vec3::new(
                        scalars[nidx[0]],
                        scalars[nidx[1]],
                        scalars[nidx[2]],
                    ));
                }
            }
            if element.name == "face" {
                let items = face.ok_or_else(|| {
                    parse_err(
                        format!("byte {}", base_offset + cur.pos),
                        "face element has no vertex_indices list",
                    )
                })?;
                if items.len() != 3 {
                    return Err(parse_err(
                        format!("byte {}", base_offset + cur.pos),
                        format!("face {row} has {} vertices; only triangles supported", items.len()),
                    ));
                }
                faces.push([items[0], items[1], items[2]]);
            }
        }
    }

    Ok(RawMesh {
        vertices,
        faces,
        normals: if has_normals { Some(normals) } else { None },
    })
}

// ── PLY writing ─────────────────────────────────────────────────────────────

/// On-disk encoding for [`save_ply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// Write a mesh (or point set, when `faces` is empty) as PLY with double
/// precision coordinates. Output is deterministic byte for byte.
pub fn save_ply(path: &Path, mesh: &TriangleMesh, encoding: PlyEncoding) -> Result<(), MeshError> {
    let mut out: Vec<u8> = Vec::new();
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(out, "ply")?;
    writeln!(out, "format {format} 1.0")?;
    writeln!(out, "element vertex {}", mesh.vertices.len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    if mesh.normals.is_some() {
        writeln!(out, "property double nx")?;
        writeln!(out, "property double ny")?;
        writeln!(out, "property double nz")?;
    }
    if !mesh.faces.is_empty() {
        writeln!(out, "element face {}", mesh.faces.len())?;
        writeln!(out, "property list uchar uint vertex_indices")?;
    }
    writeln!(out, "end_header")?;

    match encoding {
        PlyEncoding::Ascii => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                match &mesh.normals {
                    Some(normals) => {
                        let n = normals[i];
                        writeln!(out, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z)?;
                    }
                    None => writeln!(out, "{} {} {}", v.x, v.y, v.z)?,
                }
            }
            for f in &mesh.faces {
                writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                for c in [v.x, v.y, v.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(normals) = &mesh.normals {
                    let n = normals[i];
                    for c in [n.x, n.y, n.z] {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
            }
            for f in &mesh.faces {
                out.push(3);
                for &idx in f {
                    out.extend_from_slice(&(idx as u32).to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

// ── Normals and connectivity ────────────────────────────────────────────────

/// Angle-weighted per-vertex normals following the face winding.
///
/// Vertices referenced by no face get `None` and are excluded from the point
/// set downstream (count the `None`s for the diagnostic).
pub fn vertex_normals(mesh: &TriangleMesh) -> Vec<Option<Vec3>> {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    let mut touched = vec![false; mesh.vertices.len()];
    for f in &mesh.faces {
        let p = [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]];
        let fn_raw = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let norm = fn_raw.norm();
        if norm <= 0.0 {
            continue;
        }
        let face_normal = fn_raw / norm;
        for corner in 0..3 {
            let a = p[(corner + 1) % 3] - p[corner];
            let b = p[(corner + 2) % 3] - p[corner];
            let denom = a.norm() * b.norm();
            if denom <= 0.0 {
                continue;
            }
            let angle = (a.dot(&b) / denom).clamp(-1.0, 1.0).acos();
            acc[f[corner]] += angle * face_normal;
            touched[f[corner]] = true;
        }
    }
    acc.into_iter()
        .zip(touched)
        .map(|(n, t)| {
            if !t {
                return None;
            }
            let norm = n.norm();
            if norm < 1e-20 {
                None
            } else {
                Some(n / norm)
            }
        })
        .collect()
}

/// Oriented points of a mesh: positions paired with face-derived normals, or
/// with the stored normals when the mesh has no connectivity. Returns the
/// points plus the number of vertices excluded for having no usable normal.
pub fn oriented_points(mesh: &TriangleMesh) -> Result<(Vec<OrientedPoint>, usize), MeshError> {
    if !mesh.faces.is_empty() {
        let normals = vertex_normals(mesh);
        let mut points = Vec::with_capacity(mesh.vertices.len());
        let mut excluded = 0;
        for (v, n) in mesh.vertices.iter().zip(normals) {
            match n {
                Some(n) => points.push(OrientedPoint::new(*v, n)),
                None => excluded += 1,
            }
        }
        return Ok((points, excluded));
    }
    match &mesh.normals {
        Some(normals) => {
            let mut points = Vec::with_capacity(mesh.vertices.len());
            let mut excluded = 0;
            for (v, n) in mesh.vertices.iter().zip(normals.iter()) {
                let norm = n.norm();
                if norm < 1e-12 {
                    excluded += 1;
                } else {
                    points.push(OrientedPoint::new(*v, n / norm));
                }
            }
            Ok((points, excluded))
        }
        None => Err(MeshError::NoNormals),
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Select the connected surface component nearest to `center`.
///
/// Faces sharing an edge are connected. Components with at least half the
/// vertex count of the largest one are candidates; among those the component
/// whose vertex centroid lies closest to `center` wins. The result is a
/// reindexed submesh.
pub fn largest_component_near(
    mesh: &TriangleMesh,
    center: Vec3,
) -> Result<TriangleMesh, MeshError> {
    if mesh.faces.is_empty() {
        return Err(MeshError::EmptyInput);
    }
    let mut uf = UnionFind::new(mesh.faces.len());
    let mut edge_owner: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            let key = (a.min(b), a.max(b));
            match edge_owner.get(&key) {
                Some(&other) => uf.union(fi, other),
                None => {
                    edge_owner.insert(key, fi);
                }
            }
        }
    }

    // Group faces by component root, in face order for determinism.
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut root_to_group: std::collections::HashMap<usize, usize> =
        std::collections::HashMap::new();
    for fi in 0..mesh.faces.len() {
        let root = uf.find(fi);
        let gi = *root_to_group.entry(root).or_insert_with(|| {
            groups.push((root, Vec::new()));
            groups.len() - 1
        });
        groups[gi].1.push(fi);
    }

    struct Candidate {
        faces: Vec<usize>,
        vertex_count: usize,
        centroid: Vec3,
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    for (_, face_ids) in &groups {
        let mut seen = std::collections::BTreeSet::new();
        for &fi in face_ids {
            for &v in &mesh.faces[fi] {
                seen.insert(v);
            }
        }
        let centroid = seen.iter().map(|&v| mesh.vertices[v]).sum::<Vec3>() / seen.len() as f64;
        candidates.push(Candidate {
            faces: face_ids.clone(),
            vertex_count: seen.len(),
            centroid,
        });
    }
    let max_count = candidates.iter().map(|c| c.vertex_count).max().unwrap();
    let winner = candidates
        .iter()
        .filter(|c| 2 * c.vertex_count >= max_count)
        .min_by(|a, b| {
            let da = (a.centroid - center).norm();
            let db = (b.centroid - center).norm();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one candidate");

    // Reindex, preserving ascending vertex order.
    let mut vertex_map = vec![usize::MAX; mesh.vertices.len()];
    let mut kept_vertices = Vec::new();
    let mut kept_normals = mesh.normals.as_ref().map(|_| Vec::new());
    let mut faces = Vec::with_capacity(winner.faces.len());
    for &fi in &winner.faces {
        for &v in &mesh.faces[fi] {
            if vertex_map[v] == usize::MAX {
                vertex_map[v] = kept_vertices.len();
                kept_vertices.push(mesh.vertices[v]);
                if let (Some(kept), Some(all)) = (&mut kept_normals, &mesh.normals) {
                    kept.push(all[v]);
                }
            }
        }
        let f = mesh.faces[fi];
        faces.push([vertex_map[f[0]], vertex_map[f[1]], vertex_map[f[2]]]);
    }
    Ok(TriangleMesh {
        vertices: kept_vertices,
        faces,
        normals: kept_normals,
    })
}
