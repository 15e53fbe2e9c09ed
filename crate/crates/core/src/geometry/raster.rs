use crate::model::{FaceMesh, Point};

const NONE: u32 = u32::MAX;

/// Per-pixel id of the canonical triangle covering the pixel center.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangleMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
}

impl TriangleMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<usize> {
        match self.ids[y * self.width + x] {
            NONE => None,
            id => Some(id as usize),
        }
    }

    /// Triangle of the pixel containing the continuous point `p`.
    pub fn at_point(&self, p: &Point) -> Option<usize> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let (x, y) = (p.x.floor() as usize, p.y.floor() as usize);
        if x >= self.width || y >= self.height {
            return None;
        }
        self.get(x, y)
    }

    pub fn covered_pixels(&self) -> usize {
        self.ids.iter().filter(|&&id| id != NONE).count()
    }
}

/// Barycentric coordinates of `p` in triangle `t`.
#[inline]
pub(crate) fn barycentric(t: &[Point; 3], p: &Point) -> [f64; 3] {
    let [a, b, c] = t;
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
    let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[inline]
pub(crate) fn contains(t: &[Point; 3], p: &Point) -> bool {
    const TOL: f64 = -1e-12;
    let l = barycentric(t, p);
    l[0] >= TOL && l[1] >= TOL && l[2] >= TOL
}

/// Assigns every pixel center the lowest id among triangles containing it
/// (edges inclusive), or none.
pub fn rasterize_triangle_map(mesh: &FaceMesh, width: usize, height: usize) -> TriangleMap {
    let mut ids = vec![NONE; width * height];
    for k in 0..mesh.triangle_count() {
        let t = mesh.triangle(k);
        let min_x = t.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = t.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = t.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = t.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        // pixel centers i + 0.5 within [min, max]
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
        if max_x < 0.5 || max_y < 0.5 {
            continue;
        }
        let x1 = (((max_x - 0.5).floor()) as usize).min(width.saturating_sub(1));
        let y1 = (((max_y - 0.5).floor()) as usize).min(height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let idx = y * width + x;
                if ids[idx] != NONE {
                    continue;
                }
                if contains(&t, &Point::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    ids[idx] = k as u32;
                }
            }
        }
    }
    TriangleMap { width, height, ids }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn single_triangle_containment() {
        let mesh =
            FaceMesh::new(vec![p(0., 0.), p(10., 0.), p(0., 10.)], vec![[0, 1, 2]]).unwrap();
        let map = rasterize_triangle_map(&mesh, 12, 12);
        assert_eq!(map.at_point(&p(1.5, 1.5)), Some(0));
        assert_eq!(map.at_point(&p(9.5, 9.5)), None);
        // diagonal x + y = 10 passes through centers like (4.5, 5.5): inclusive
        assert_eq!(map.get(4, 5), Some(0));
        assert_eq!(map.get(5, 5), None);
        // pixel centers with x + y <= 10: count pairs (i, j) with i + j <= 9
        assert_eq!(map.covered_pixels(), 55);
    }

    #[test]
    fn shared_edge_goes_to_lowest_id() {
        // fan around (4.5, 4.5); the spoke towards vertex 1 lies on y = 4.5 and
        // is shared by triangle 3 (0, 1, 2) and triangle 7 (0, 8, 1)
        let mut pts = vec![p(4.5, 4.5)];
        for i in 0..8 {
            let a = std::f64::consts::TAU * i as f64 / 8.0;
            pts.push(p(4.5 + 4.0 * a.cos(), 4.5 + 4.0 * a.sin()));
        }
        let tris = vec![
            [0, 2, 3],
            [0, 3, 4],
            [0, 4, 5],
            [0, 1, 2],
            [0, 5, 6],
            [0, 6, 7],
            [0, 7, 8],
            [0, 8, 1],
        ];
        let mesh = FaceMesh::new(pts, tris).unwrap();
        let map = rasterize_triangle_map(&mesh, 10, 10);
        assert_eq!(map.get(6, 4), Some(3));
        assert_eq!(map.get(7, 4), Some(3));
        // the hub touches every triangle
        assert_eq!(map.get(4, 4), Some(0));
    }

    #[test]
    fn union_of_triangles() {
        let mesh = FaceMesh::new(
            vec![p(0., 0.), p(8., 0.), p(0., 8.), p(8., 8.)],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let map = rasterize_triangle_map(&mesh, 10, 10);
        assert_eq!(map.covered_pixels(), 64);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(map.get(x, y).is_some(), x < 8 && y < 8);
            }
        }
    }
}
