//! Object-region utilities: component cleanup and the 4-connected boundary.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::Mask;

/// Smallest object region accepted after cleanup.
pub const MIN_AREA: usize = 16;

/// Keeps the largest 4-connected component of Ω, zeroing everything else.
/// Ties go to the component reached first in raster order.
pub fn cleanup_mask(raw: &Mask) -> Result<Mask> {
    let dims = raw.dims();
    let mut label = vec![usize::MAX; dims.len()];
    let mut best: Option<(usize, usize)> = None;
    let mut queue = VecDeque::new();
    let mut next_label = 0;
    for seed in 0..dims.len() {
        if !raw.inside(seed) || label[seed] != usize::MAX {
            continue;
        }
        let mut area = 0;
        label[seed] = next_label;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            area += 1;
            for j in dims.neighbors4(i) {
                if raw.inside(j) && label[j] == usize::MAX {
                    label[j] = next_label;
                    queue.push_back(j);
                }
            }
        }
        if best.is_none_or(|(_, a)| area > a) {
            best = Some((next_label, area));
        }
        next_label += 1;
    }
    let (keep, area) = best.ok_or_else(|| Error::DegenerateMask("no object pixels".into()))?;
    if area < MIN_AREA {
        return Err(Error::DegenerateMask(format!(
            "largest component has {area} pixels, need {MIN_AREA}"
        )));
    }
    let values = raw
        .values()
        .iter()
        .zip(&label)
        .map(|(&v, &l)| if l == keep { v } else { 0.0 })
        .collect();
    Mask::from_values(dims.width, dims.height, values)
}

/// Whether pixel `i` of Ω touches the outside: a 4-neighbour outside Ω, or
/// the image frame.
pub fn is_boundary(mask: &Mask, i: usize) -> bool {
    let dims = mask.dims();
    mask.inside(i) && (dims.on_frame(i) || dims.neighbors4(i).any(|j| !mask.inside(j)))
}

/// ∂Ω as raster-ordered pixel indices.
pub fn boundary_of(mask: &Mask) -> Vec<usize> {
    (0..mask.dims().len()).filter(|&i| is_boundary(mask, i)).collect()
}

/// ∂Ω as a per-pixel flag.
pub fn boundary_flags(mask: &Mask) -> Vec<bool> {
    (0..mask.dims().len()).map(|i| is_boundary(mask, i)).collect()
}

/// 4-connected step distance from ∂Ω for every pixel of Ω (0 on ∂Ω,
/// `u32::MAX` outside Ω).
pub fn boundary_distance(mask: &Mask) -> Vec<u32> {
    let dims = mask.dims();
    let mut dist = vec![u32::MAX; dims.len()];
    let mut queue = VecDeque::new();
    for i in boundary_of(mask) {
        dist[i] = 0;
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        for j in dims.neighbors4(i) {
            if mask.inside(j) && dist[j] == u32::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1).unwrap()
    }

    #[test]
    fn keeps_the_larger_blob() {
        // 10x10 = 100 and 10x5 = 50 pixel blobs.
        let m = Mask::from_fn(30, 12, |x, y| (x < 10 && y < 10) || ((15..25).contains(&x) && y < 5)).unwrap();
        let c = cleanup_mask(&m).unwrap();
        assert_eq!(c.area(), 100);
        assert!(c.inside(0));
        assert!(!c.inside(20));
    }

    #[test]
    fn empty_or_tiny_masks_are_degenerate() {
        let zero = Mask::from_values(8, 8, vec![0.0; 64]).unwrap();
        assert!(matches!(cleanup_mask(&zero), Err(Error::DegenerateMask(_))));
        let tiny = rect(8, 8, 0, 0, 3, 5);
        assert!(matches!(cleanup_mask(&tiny), Err(Error::DegenerateMask(_))));
    }

    #[test]
    fn full_frame_is_unchanged_with_a_ring_boundary() {
        let full = Mask::from_values(7, 5, vec![1.0; 35]).unwrap();
        let c = cleanup_mask(&full).unwrap();
        assert_eq!(c, full);
        assert_eq!(boundary_of(&c).len(), 2 * 7 + 2 * 5 - 4);
    }

    #[test]
    fn square_in_frame_has_sixteen_boundary_pixels() {
        let m = rect(9, 9, 2, 2, 7, 7);
        assert_eq!(boundary_of(&m).len(), 16);
    }

    #[test]
    fn single_pixel_is_its_own_boundary() {
        let m = rect(5, 5, 2, 2, 3, 3);
        assert_eq!(boundary_of(&m), vec![12]);
    }

    #[test]
    fn disk_boundary_matches_brute_force_count() {
        let (r, c) = (20.0, 31.5);
        let m = Mask::disk(64, 64, c, c, r).unwrap();
        // Brute force straight from the geometry: a pixel centre inside the
        // disk with at least one 4-neighbour centre outside it.
        let inside = |x: f64, y: f64| (x - c).powi(2) + (y - c).powi(2) <= r * r;
        let mut expected = 0;
        for y in 0..64 {
            for x in 0..64 {
                let (fx, fy) = (x as f64, y as f64);
                if inside(fx, fy)
                    && [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
                        .iter()
                        .any(|(dx, dy)| !inside(fx + dx, fy + dy))
                {
                    expected += 1;
                }
            }
        }
        let got = boundary_of(&m).len();
        assert_eq!(got, expected);
        // A 4-connected digital circle has about 4*sqrt(2)*r boundary pixels,
        // i.e. 0.90 of the Euclidean perimeter.
        let digital = 4.0 * std::f64::consts::SQRT_2 * r;
        assert!((got as f64 - digital).abs() < 0.05 * digital, "{got} vs {digital}");
    }

    #[test]
    fn boundary_is_subset_and_touches_outside() {
        let m = Mask::from_fn(20, 14, |x, y| (x * 7 + y * 3) % 11 != 0 && x > 1).unwrap();
        let m = cleanup_mask(&m).unwrap();
        for i in boundary_of(&m) {
            assert!(m.inside(i));
            let d = m.dims();
            assert!(d.on_frame(i) || d.neighbors4(i).any(|j| !m.inside(j)));
        }
    }

    #[test]
    fn cleanup_is_idempotent() {
        let m = Mask::from_fn(30, 30, |x, y| ((x / 4) + (y / 5)) % 3 != 0).unwrap();
        let once = cleanup_mask(&m).unwrap();
        assert_eq!(cleanup_mask(&once).unwrap(), once);
    }

    #[test]
    fn distance_grows_inward() {
        let m = rect(9, 9, 2, 2, 7, 7);
        let d = boundary_distance(&m);
        assert_eq!(d[m.dims().index(2, 2)], 0);
        assert_eq!(d[m.dims().index(4, 4)], 2);
        assert_eq!(d[0], u32::MAX);
    }
}
