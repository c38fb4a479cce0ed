//! File formats: versioned binary scalar fields, JSON reports and SVG
//! figures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chart::Point;
use crate::contour::level_curve_arcs;
use crate::error::{Error, Result};
use crate::grid::{FieldKind, Grid, Provenance, ScalarField};
use crate::structure::CutLocusGraph;

pub const FIELD_MAGIC: &[u8; 4] = b"HCSF";
pub const FIELD_VERSION: u16 = 1;

/// Layout (little endian): magic, version `u16`, kind `u8`, periodic flags
/// `u8`, `nx` and `ny` as `u64`, origin and `h` as `f64`, provenance JSON
/// length `u32` and bytes, then `nx·ny` values as `f64`, then the SHA-256 of
/// everything before it.
pub fn field_to_bytes(field: &ScalarField) -> Vec<u8> {
    let g = &field.grid;
    let prov = serde_json::to_vec(&field.provenance).expect("provenance serializes");
    let mut out = Vec::with_capacity(64 + prov.len() + 8 * field.values.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.push(field.kind.code());
    out.push(g.periodic[0] as u8 | (g.periodic[1] as u8) << 1);
    out.extend_from_slice(&(g.nx as u64).to_le_bytes());
    out.extend_from_slice(&(g.ny as u64).to_le_bytes());
    for v in [g.origin[0], g.origin[1], g.h] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(prov.len() as u32).to_le_bytes());
    out.extend_from_slice(&prov);
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated payload"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn corrupt(msg: &str) -> Error {
    Error::Corrupt(msg.into())
}

pub fn field_from_bytes(buf: &[u8]) -> Result<ScalarField> {
    if buf.len() < 32 + 4 {
        return Err(corrupt("truncated payload"));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != FIELD_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u16()?;
    if version != FIELD_VERSION {
        return Err(corrupt(&format!("unsupported field version {version}")));
    }
    let kind = FieldKind::from_code(r.u8()?).ok_or_else(|| corrupt("unknown field kind"))?;
    let flags = r.u8()?;
    let nx = r.u64()? as usize;
    let ny = r.u64()? as usize;
    let origin = [r.f64()?, r.f64()?];
    let h = r.f64()?;
    let plen = r.u32()? as usize;
    let provenance: Provenance = serde_json::from_slice(r.take(plen)?).map_err(|e| corrupt(&e.to_string()))?;
    let n = nx.checked_mul(ny).ok_or_else(|| corrupt("grid size overflow"))?;
    if body.len() - r.pos != 8 * n {
        return Err(corrupt("payload length does not match grid"));
    }
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(origin, h, nx, ny, [flags & 1 != 0, flags & 2 != 0]).map_err(|e| corrupt(&e.to_string()))?;
    Ok(ScalarField::new(grid, values, kind, provenance))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    write_atomic(path, &field_to_bytes(field))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    field_from_bytes(&fs::read(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// `x,y` rows with a header.
pub fn points_csv(points: &[Point]) -> String {
    let mut s = String::from("x,y\n");
    for p in points {
        let _ = writeln!(s, "{},{}", p[0], p[1]);
    }
    s
}

/// Layers of an SVG figure in chart coordinates.
#[derive(Default)]
pub struct Figure<'a> {
    pub title: String,
    /// Field whose level curves are drawn at `levels`.
    pub contours: Option<(&'a ScalarField, Vec<f64>)>,
    pub graph: Option<&'a CutLocusGraph>,
    pub points: Vec<Point>,
}

/// Renders the grid rectangle with contour lines, graph edges and points.
pub fn svg(grid: &Grid, fig: &Figure) -> String {
    let size = 600.0;
    let m = grid.max_corner();
    let (w, hgt) = (m[0] - grid.origin[0], m[1] - grid.origin[1]);
    let scale = size / w.max(hgt);
    let (pw, ph) = (w * scale, hgt * scale);
    let px = |p: &Point| ((p[0] - grid.origin[0]) * scale, ph - (p[1] - grid.origin[1]) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {pw:.2} {ph:.2}">"#,
        pw, ph
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&fig.title));
    let _ = writeln!(s, r##"<rect width="{pw:.2}" height="{ph:.2}" fill="#ffffff" stroke="#000000"/>"##);
    let jump = 0.5 * w.min(hgt);
    if let Some((field, levels)) = &fig.contours {
        let _ = writeln!(s, r##"<g id="contours" fill="none" stroke="#7f8c8d" stroke-width="1">"##);
        for &t in levels {
            for c in level_curve_arcs(field, t).components {
                // Break polylines where a periodic wrap jumps across the chart.
                let mut path = String::new();
                let mut prev: Option<Point> = None;
                for p in &c.points {
                    let (x, y) = px(p);
                    let cmd = match prev {
                        Some(q) if (p - q).norm() < jump => 'L',
                        _ => 'M',
                    };
                    let _ = write!(path, "{cmd}{x:.2},{y:.2} ");
                    prev = Some(*p);
                }
                let _ = writeln!(s, r#"<path data-level="{t}" d="{}"/>"#, path.trim_end());
            }
        }
        let _ = writeln!(s, "</g>");
    }
    if let Some(g) = fig.graph {
        let _ = writeln!(s, r##"<g id="locus" stroke="#c0392b" stroke-width="2">"##);
        for e in &g.edges {
            let (a, b) = (g.vertices[e.a], g.vertices[e.b]);
            if (a - b).norm() >= jump {
                continue;
            }
            let ((x1, y1), (x2, y2)) = (px(&a), px(&b));
            let _ = writeln!(s, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    if !fig.points.is_empty() {
        let _ = writeln!(s, r##"<g id="points" fill="#c0392b">"##);
        for p in &fig.points {
            let (x, y) = px(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> ScalarField {
        let g = Grid::new([-1.0, -1.0], 0.25, 9, 9, [true, false]).unwrap();
        let mut f = ScalarField::from_fn(g, FieldKind::Busemann, "test", |p| p[0] * 0.5 + p[1]);
        f.provenance.params = serde_json::json!({ "h": 0.25 });
        f
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let f = field();
        let bytes = field_to_bytes(&f);
        let back = field_from_bytes(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(field_to_bytes(&back), bytes);
    }

    #[test]
    fn damaged_payloads_are_rejected() {
        let bytes = field_to_bytes(&field());
        assert!(matches!(field_from_bytes(&bytes[..bytes.len() - 9]), Err(Error::Corrupt(_))));
        let mut flipped = bytes.clone();
        flipped[60] ^= 1;
        assert!(matches!(field_from_bytes(&flipped), Err(Error::Corrupt(_))));
        assert!(field_from_bytes(&[]).is_err());
    }

    #[test]
    fn svg_has_layers() {
        let f = field();
        let s = svg(&f.grid, &Figure { title: "a<b".into(), contours: Some((&f, vec![0.1])), graph: None, points: vec![Point::zeros()] });
        assert!(s.starts_with("<svg"));
        assert!(s.contains("a&lt;b"));
        assert!(s.contains("data-level=\"0.1\""));
        assert!(s.contains("<circle"));
    }
}
