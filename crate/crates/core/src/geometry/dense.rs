use std::collections::{BTreeSet, HashMap};

use crate::model::{FaceMesh, Point};

/// Canonical points tracked by flow: the mesh vertices plus a barycentric grid of
/// `subdivision` steps per triangle edge, shared points deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLandmarkSet {
    pub points: Vec<Point>,
    pub home_triangle: Vec<u32>,
    /// Barycentric coordinates w.r.t. the home triangle's vertex order.
    pub barycentric: Vec<[f64; 3]>,
    /// Triangulation of the dense points (each mesh triangle split into `s^2` pieces).
    pub triangles: Vec<[u32; 3]>,
    pub subdivision: usize,
}

impl DenseLandmarkSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Undirected edges of the dense triangulation, `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut set = BTreeSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }
}

/// Samples the barycentric grid `(a/s, b/s, c/s)`, `a + b + c = s`, on every triangle.
///
/// Points on shared vertices and edges are identified by their exact integer
/// barycentric weights over the shared simplex. The first `l` points are the mesh
/// vertices in landmark order; `s = 0` returns only those.
pub fn densify_landmarks(mesh: &FaceMesh, subdivision: usize) -> DenseLandmarkSet {
    let n = mesh.landmark_count();
    let tris = mesh.triangles();

    let mut points: Vec<Point> = mesh.landmarks().to_vec();
    let mut home_triangle = vec![u32::MAX; n];
    let mut barycentric = vec![[0.0; 3]; n];
    for (k, t) in tris.iter().enumerate() {
        for (corner, &v) in t.iter().enumerate() {
            let v = v as usize;
            if home_triangle[v] == u32::MAX {
                home_triangle[v] = k as u32;
                barycentric[v][corner] = 1.0;
            }
        }
    }

    if subdivision == 0 {
        return DenseLandmarkSet {
            points,
            home_triangle,
            barycentric,
            triangles: tris.to_vec(),
            subdivision,
        };
    }

    let s = subdivision as u32;
    let sf = subdivision as f64;
    // key: nonzero (vertex, weight) pairs sorted by vertex
    let mut index: HashMap<Vec<(u32, u32)>, u32> = HashMap::new();
    let mut triangles = Vec::with_capacity(tris.len() * subdivision * subdivision);
    let grid_len = (subdivision + 1) * (subdivision + 2) / 2;
    let grid_pos = |i: usize, j: usize| -> usize {
        // row i holds s - i + 1 entries
        i * (subdivision + 1) - i * (i.saturating_sub(1)) / 2 + j
    };
    let mut grid = vec![0u32; grid_len];

    for (k, t) in tris.iter().enumerate() {
        let corners = mesh.triangle(k);
        for i in 0..=subdivision {
            for j in 0..=(subdivision - i) {
                let w = [s - i as u32 - j as u32, i as u32, j as u32];
                let id = if let Some(c) = w.iter().position(|&x| x == s) {
                    t[c]
                } else {
                    let mut key: Vec<(u32, u32)> = t
                        .iter()
                        .zip(w)
                        .filter(|(_, wt)| *wt > 0)
                        .map(|(&v, wt)| (v, wt))
                        .collect();
                    key.sort_unstable();
                    *index.entry(key).or_insert_with(|| {
                        let b = [w[0] as f64 / sf, w[1] as f64 / sf, w[2] as f64 / sf];
                        let p = Point::from(
                            (corners[0].coords * w[0] as f64
                                + corners[1].coords * w[1] as f64
                                + corners[2].coords * w[2] as f64)
                                / sf,
                        );
                        points.push(p);
                        home_triangle.push(k as u32);
                        barycentric.push(b);
                        (points.len() - 1) as u32
                    })
                };
                grid[grid_pos(i, j)] = id;
            }
        }
        for i in 0..subdivision {
            for j in 0..(subdivision - i) {
                triangles.push([grid[grid_pos(i, j)], grid[grid_pos(i + 1, j)], grid[grid_pos(i, j + 1)]]);
                if i + j + 2 <= subdivision {
                    triangles.push([
                        grid[grid_pos(i + 1, j)],
                        grid[grid_pos(i + 1, j + 1)],
                        grid[grid_pos(i, j + 1)],
                    ]);
                }
            }
        }
    }

    DenseLandmarkSet {
        points,
        home_triangle,
        barycentric,
        triangles,
        subdivision,
    }
}
