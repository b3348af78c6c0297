//! Closed mesh from a height field: front sheet, mirrored back sheet and
//! side walls along the rim.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::boundary_distance;
use crate::raster::{HeightField, Mask};

/// Camera model used for easing the front sheet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focal {
    Orthographic,
    /// Centre of projection in pixel units, on the viewer side (`z > 0`).
    Point([f64; 3]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    /// `(x, y, z)` with x right, y down and z toward the viewer.
    pub vertices: Vec<[f64; 3]>,
    /// Source pixel `(x, y)` of each vertex.
    pub uv: Vec<[f64; 2]>,
    /// Counter-clockwise seen from outside once y is flipped to point up.
    pub faces: Vec<[usize; 3]>,
    /// Image size the UVs refer to.
    pub width: usize,
    pub height: usize,
}

/// Moves the image-plane point `p` a distance `h` toward the focal point.
pub fn ease(p: [f64; 3], h: f64, focal: Focal) -> [f64; 3] {
    match focal {
        Focal::Orthographic => [p[0], p[1], p[2] + h],
        Focal::Point(f) => {
            let d = [f[0] - p[0], f[1] - p[1], f[2] - p[2]];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            [p[0] + h * d[0] / len, p[1] + h * d[1] / len, p[2] + h * d[2] / len]
        }
    }
}

/// Triangulates every 2×2 cell fully inside Ω, mirrors the sheet behind the
/// contour plane and stitches the two along the sheet border.
///
/// The back sheet sits at `−h − extrude · taper`, where `taper` grows
/// linearly from 0 on ∂Ω to 1 at the pixel farthest from it.
pub fn export_mesh(height: &HeightField, mask: &Mask, focal: Focal, extrude: f64) -> Result<Mesh> {
    let dims = mask.dims();
    if height.dims() != dims {
        return Err(Error::mismatch("height field and mask differ in size"));
    }
    if !(extrude >= 0.0 && extrude.is_finite()) {
        return Err(Error::InvalidInput(format!("extrusion must be finite and non-negative, got {extrude}")));
    }
    if let Focal::Point(f) = focal {
        if f[2] <= 0.0 || f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("focal point must be finite with z > 0".into()));
        }
    }

    let mut cells = Vec::new();
    for y in 0..dims.height.saturating_sub(1) {
        for x in 0..dims.width.saturating_sub(1) {
            let tl = dims.index(x, y);
            let corners = [tl, tl + 1, tl + dims.width, tl + dims.width + 1];
            if corners.iter().all(|&i| mask.inside(i)) {
                cells.push(corners);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyTriangulation);
    }

    let mut front_of = HashMap::new();
    let mut pixels = Vec::new();
    let mut front_faces = Vec::with_capacity(2 * cells.len());
    let mut vid = |p: usize, pixels: &mut Vec<usize>| {
        *front_of.entry(p).or_insert_with(|| {
            pixels.push(p);
            pixels.len() - 1
        })
    };
    for [tl, tr, bl, br] in cells {
        let (a, b, c, d) = (
            vid(tl, &mut pixels),
            vid(tr, &mut pixels),
            vid(bl, &mut pixels),
            vid(br, &mut pixels),
        );
        front_faces.push([a, c, d]);
        front_faces.push([a, d, b]);
    }

    let dist = boundary_distance(mask);
    let max_dist = pixels.iter().map(|&p| dist[p]).max().unwrap_or(0).max(1) as f64;
    let n = pixels.len();
    let mut vertices = Vec::with_capacity(2 * n);
    let mut uv = Vec::with_capacity(2 * n);
    for &p in &pixels {
        let (x, y) = dims.coords(p);
        vertices.push(ease([x as f64, y as f64, 0.0], height.get(p), focal));
        uv.push([x as f64, y as f64]);
    }
    for &p in &pixels {
        let (x, y) = dims.coords(p);
        let taper = dist[p] as f64 / max_dist;
        vertices.push([x as f64, y as f64, -height.get(p) - extrude * taper]);
        uv.push([x as f64, y as f64]);
    }

    // Directed border edges of the front sheet, in face order.
    let mut use_count: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &front_faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *use_count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut faces = front_faces.clone();
    faces.extend(front_faces.iter().map(|f| [f[0] + n, f[2] + n, f[1] + n]));
    for f in &front_faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if use_count[&(a.min(b), a.max(b))] == 1 {
                faces.push([b, a, a + n]);
                faces.push([b, a + n, b + n]);
            }
        }
    }
    Ok(Mesh {
        vertices,
        uv,
        faces,
        width: dims.width,
        height: dims.height,
    })
}

impl Mesh {
    /// Vertex, edge and face counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        (self.vertices.len(), edges.len(), self.faces.len())
    }

    /// Wavefront text with `v`, `vt` and `f v/vt` records. The y axis is
    /// flipped so that it points up; UVs are normalized to the image.
    pub fn to_obj(&self) -> String {
        let mut s = String::with_capacity(64 * (self.vertices.len() + self.faces.len()));
        s.push_str("# relume mesh\n");
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], -v[1], v[2]);
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for t in &self.uv {
            let _ = writeln!(s, "vt {} {}", (t[0] + 0.5) / w, 1.0 - (t[1] + 0.5) / h);
        }
        for f in &self.faces {
            let _ = writeln!(
                s,
                "f {0}/{0} {1}/{1} {2}/{2}",
                f[0] + 1,
                f[1] + 1,
                f[2] + 1
            );
        }
        s
    }
}
