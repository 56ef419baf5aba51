//! Conforming simplicial meshes in two and three dimensions.
//!
//! Coordinates are stored as 3-vectors with a zero third component in 2D so
//! that the discretization code can treat both dimensions uniformly. Cells keep
//! the vertex order used by the bisection routine in [`refine`]; geometric
//! quantities use absolute volumes, so that order carries no orientation.

mod presets;
mod refine;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub use presets::{preset_mesh, Geometry};
pub use refine::{refine, uniform_refine};

pub type Point = Vector3<f64>;

/// Marker for the missing neighbour of a boundary facet.
pub const NO_CELL: usize = usize::MAX;

/// Cells selected for refinement together with the marking fraction that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkSet {
    pub marked: Vec<usize>,
    pub beta: f64,
}

impl MarkSet {
    /// Sorted, deduplicated mark set.
    pub fn new(mut marked: Vec<usize>, beta: f64) -> Self {
        marked.sort_unstable();
        marked.dedup();
        MarkSet { marked, beta }
    }

    pub fn all(mesh: &Mesh) -> Self {
        MarkSet { marked: (0..mesh.num_cells()).collect(), beta: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.marked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marked.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    coords: Vec<Point>,
    cells: Vec<usize>,
    tags: Vec<u8>,
    generation: Vec<u32>,

    facets: Vec<usize>,
    facet_cells: Vec<[usize; 2]>,
    cell_facets: Vec<usize>,
    normals: Vec<Point>,
    facet_measure: Vec<f64>,
    facet_diameter: Vec<f64>,
    cell_volume: Vec<f64>,
    cell_diameter: Vec<f64>,
    vertex_cell_offsets: Vec<usize>,
    vertex_cell_list: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity and derives its facet topology.
    ///
    /// `cells` is a flat array of `dim + 1` vertex indices per cell, `tags`
    /// holds the bisection tag (`1..=dim`) of each cell.
    pub fn from_cells(
        dim: usize,
        coords: Vec<Point>,
        cells: Vec<usize>,
        tags: Vec<u8>,
        generation: Vec<u32>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {dim}")));
        }
        let nv = dim + 1;
        if cells.len() % nv != 0 {
            return Err(Error::InvalidArgument("cell array length is not a multiple of dim + 1".into()));
        }
        let num_cells = cells.len() / nv;
        if tags.len() != num_cells || generation.len() != num_cells {
            return Err(Error::InvalidArgument("tag/generation arrays do not match the cell count".into()));
        }
        if let Some(&v) = cells.iter().find(|&&v| v >= coords.len()) {
            return Err(Error::InvalidArgument(format!("cell references missing vertex {v}")));
        }
        let mut mesh = Mesh {
            dim,
            coords,
            cells,
            tags,
            generation,
            facets: Vec::new(),
            facet_cells: Vec::new(),
            cell_facets: Vec::new(),
            normals: Vec::new(),
            facet_measure: Vec::new(),
            facet_diameter: Vec::new(),
            cell_volume: Vec::new(),
            cell_diameter: Vec::new(),
            vertex_cell_offsets: Vec::new(),
            vertex_cell_list: Vec::new(),
        };
        mesh.facet_topology()?;
        mesh.cell_geometry()?;
        mesh.vertex_patches();
        Ok(mesh)
    }

    /// Enumerates facets in first-seen order and records incidence.
    ///
    /// The facet normal is the outward normal of the lower-indexed incident
    /// cell, which for interior facets points towards the higher-indexed one.
    fn facet_topology(&mut self) -> Result<()> {
        let dim = self.dim;
        let num_cells = self.num_cells();
        let mut index: HashMap<[usize; 3], usize> = HashMap::with_capacity(num_cells * (dim + 1));
        let mut facets = Vec::new();
        let mut facet_cells: Vec<[usize; 2]> = Vec::new();
        let mut cell_facets = vec![0usize; num_cells * (dim + 1)];
        for t in 0..num_cells {
            for j in 0..=dim {
                let key = self.facet_key(t, j);
                let f = match index.get(&key) {
                    Some(&f) => {
                        if facet_cells[f][1] != NO_CELL {
                            return Err(Error::NonManifold {
                                vertices: key[..dim].to_vec(),
                                count: 3,
                            });
                        }
                        facet_cells[f][1] = t;
                        f
                    }
                    None => {
                        let f = facet_cells.len();
                        index.insert(key, f);
                        facets.extend_from_slice(&key[..dim]);
                        facet_cells.push([t, NO_CELL]);
                        f
                    }
                };
                cell_facets[t * (dim + 1) + j] = f;
            }
        }
        self.facets = facets;
        self.facet_cells = facet_cells;
        self.cell_facets = cell_facets;

        let nf = self.num_facets();
        self.normals = Vec::with_capacity(nf);
        self.facet_measure = Vec::with_capacity(nf);
        self.facet_diameter = Vec::with_capacity(nf);
        for f in 0..nf {
            let vs = self.facet_vertices(f);
            let q0 = self.coords[vs[0]];
            let (mut nrm, meas) = if dim == 2 {
                let d = self.coords[vs[1]] - q0;
                (Vector3::new(d.y, -d.x, 0.0), d.norm())
            } else {
                let c = (self.coords[vs[1]] - q0).cross(&(self.coords[vs[2]] - q0));
                (c, 0.5 * c.norm())
            };
            nrm /= nrm.norm();
            let t = self.facet_cells[f][0];
            let j = self.local_facet_index(t, f);
            let opposite = self.coords[self.cell(t)[j]];
            if nrm.dot(&(q0 - opposite)) < 0.0 {
                nrm = -nrm;
            }
            let mut diam = 0.0f64;
            for a in 0..vs.len() {
                for b in a + 1..vs.len() {
                    diam = diam.max((self.coords[vs[a]] - self.coords[vs[b]]).norm());
                }
            }
            self.normals.push(nrm);
            self.facet_measure.push(meas);
            self.facet_diameter.push(diam);
        }
        Ok(())
    }

    fn facet_key(&self, t: usize, j: usize) -> [usize; 3] {
        let mut key = [usize::MAX; 3];
        let mut k = 0;
        for (i, &v) in self.cell(t).iter().enumerate() {
            if i != j {
                key[k] = v;
                k += 1;
            }
        }
        key[..self.dim].sort_unstable();
        key
    }

    fn cell_geometry(&mut self) -> Result<()> {
        let n = self.num_cells();
        self.cell_volume = Vec::with_capacity(n);
        self.cell_diameter = Vec::with_capacity(n);
        for t in 0..n {
            let vol = self.signed_volume(t).abs();
            if vol <= 0.0 {
                return Err(Error::InvalidArgument(format!("cell {t} is degenerate")));
            }
            let vs = self.cell(t);
            let mut diam = 0.0f64;
            for a in 0..vs.len() {
                for b in a + 1..vs.len() {
                    diam = diam.max((self.coords[vs[a]] - self.coords[vs[b]]).norm());
                }
            }
            self.cell_volume.push(vol);
            self.cell_diameter.push(diam);
        }
        Ok(())
    }

    fn vertex_patches(&mut self) {
        let nv = self.num_vertices();
        let mut counts = vec![0usize; nv + 1];
        for &v in &self.cells {
            counts[v + 1] += 1;
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut list = vec![0usize; self.cells.len()];
        let mut fill = counts.clone();
        for t in 0..self.num_cells() {
            for &v in self.cell(t) {
                list[fill[v]] = t;
                fill[v] += 1;
            }
        }
        self.vertex_cell_offsets = counts;
        self.vertex_cell_list = list;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn num_facets(&self) -> usize {
        self.facet_cells.len()
    }

    pub fn vertex(&self, v: usize) -> &Point {
        &self.coords[v]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.coords
    }

    /// Vertex indices of cell `t` in bisection order.
    pub fn cell(&self, t: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.cells[t * s..(t + 1) * s]
    }

    pub fn cell_points(&self, t: usize) -> [Point; 4] {
        let mut p = [Point::zeros(); 4];
        for (k, &v) in self.cell(t).iter().enumerate() {
            p[k] = self.coords[v];
        }
        p
    }

    pub fn tag(&self, t: usize) -> u8 {
        self.tags[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    pub fn generations(&self) -> &[u32] {
        &self.generation
    }

    pub(crate) fn raw_cells(&self) -> &[usize] {
        &self.cells
    }

    pub(crate) fn raw_tags(&self) -> &[u8] {
        &self.tags
    }

    /// Sorted vertex indices of facet `f`.
    pub fn facet_vertices(&self, f: usize) -> &[usize] {
        &self.facets[f * self.dim..(f + 1) * self.dim]
    }

    /// Incident cells of facet `f`; the second entry is [`NO_CELL`] on the boundary.
    pub fn facet_cells(&self, f: usize) -> [usize; 2] {
        self.facet_cells[f]
    }

    pub fn is_boundary_facet(&self, f: usize) -> bool {
        self.facet_cells[f][1] == NO_CELL
    }

    /// Facets of cell `t`; entry `j` is the facet opposite local vertex `j`.
    pub fn cell_facets(&self, t: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.cell_facets[t * s..(t + 1) * s]
    }

    pub fn local_facet_index(&self, t: usize, f: usize) -> usize {
        self.cell_facets(t)
            .iter()
            .position(|&g| g == f)
            .expect("facet is not incident to cell")
    }

    /// +1 when the global normal of local facet `j` points out of cell `t`.
    pub fn facet_sign(&self, t: usize, j: usize) -> f64 {
        let f = self.cell_facets(t)[j];
        if self.facet_cells[f][0] == t {
            1.0
        } else {
            -1.0
        }
    }

    pub fn normal(&self, f: usize) -> &Point {
        &self.normals[f]
    }

    pub fn facet_measure(&self, f: usize) -> f64 {
        self.facet_measure[f]
    }

    /// Facet diameter `h_e`.
    pub fn facet_diameter(&self, f: usize) -> f64 {
        self.facet_diameter[f]
    }

    pub fn cell_volume(&self, t: usize) -> f64 {
        self.cell_volume[t]
    }

    /// Cell diameter `h_T`: the largest distance between two vertices.
    pub fn cell_diameter(&self, t: usize) -> f64 {
        self.cell_diameter[t]
    }

    pub fn max_diameter(&self) -> f64 {
        self.cell_diameter.iter().cloned().fold(0.0, f64::max)
    }

    pub fn signed_volume(&self, t: usize) -> f64 {
        let p = self.cell_points(t);
        if self.dim == 2 {
            let a = p[1] - p[0];
            let b = p[2] - p[0];
            0.5 * (a.x * b.y - a.y * b.x)
        } else {
            Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]).determinant() / 6.0
        }
    }

    pub fn total_measure(&self) -> f64 {
        self.cell_volume.iter().sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let vs = self.cell(t);
        vs.iter().map(|&v| self.coords[v]).sum::<Point>() / vs.len() as f64
    }

    /// The patch `omega_z`: all cells containing vertex `z`, ascending.
    pub fn vertex_patch(&self, z: usize) -> &[usize] {
        &self.vertex_cell_list[self.vertex_cell_offsets[z]..self.vertex_cell_offsets[z + 1]]
    }

    pub fn patch_measure(&self, z: usize) -> f64 {
        self.vertex_patch(z).iter().map(|&t| self.cell_volume[t]).sum()
    }

    /// Point with barycentric coordinates `bary` in cell `t`.
    pub fn map_to_cell(&self, t: usize, bary: &[f64]) -> Point {
        self.cell(t)
            .iter()
            .zip(bary)
            .map(|(&v, &l)| self.coords[v] * l)
            .sum()
    }

    /// Point with barycentric coordinates `bary` on facet `f` (sorted vertex order).
    pub fn map_to_facet(&self, f: usize, bary: &[f64]) -> Point {
        self.facet_vertices(f)
            .iter()
            .zip(bary)
            .map(|(&v, &l)| self.coords[v] * l)
            .sum()
    }

    /// Barycentric coordinates of `x` with respect to cell `t`.
    pub fn barycentric(&self, t: usize, x: &Point) -> [f64; 4] {
        let p = self.cell_points(t);
        let mut out = [0.0; 4];
        if self.dim == 2 {
            let a = p[1] - p[0];
            let b = p[2] - p[0];
            let r = x - p[0];
            let det = a.x * b.y - a.y * b.x;
            let l1 = (r.x * b.y - r.y * b.x) / det;
            let l2 = (a.x * r.y - a.y * r.x) / det;
            out[0] = 1.0 - l1 - l2;
            out[1] = l1;
            out[2] = l2;
        } else {
            let m = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
            let l = m.lu().solve(&(x - p[0])).unwrap_or_else(Vector3::zeros);
            out[0] = 1.0 - l.x - l.y - l.z;
            out[1] = l.x;
            out[2] = l.y;
            out[3] = l.z;
        }
        out
    }

    /// Smallest interior angle over all cells (2D only; radians).
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.num_cells() {
            let p = self.cell_points(t);
            for k in 0..3 {
                let a = p[(k + 1) % 3] - p[k];
                let b = p[(k + 2) % 3] - p[k];
                let c = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
                best = best.min(c.acos());
            }
        }
        best
    }

    /// Debug check that every facet has one or two incident cells and every
    /// cell facet is registered.
    pub fn is_conforming(&self) -> bool {
        let mut count = vec![0usize; self.num_facets()];
        for t in 0..self.num_cells() {
            for &f in self.cell_facets(t) {
                count[f] += 1;
            }
        }
        count.iter().enumerate().all(|(f, &c)| {
            let expected = if self.is_boundary_facet(f) { 1 } else { 2 };
            c == expected
        }) && self.boundary_is_closed()
    }

    // Boundary facets must be on the domain boundary: each of their
    // (dim-2)-faces is shared by an even number of boundary facets.
    fn boundary_is_closed(&self) -> bool {
        let mut ridges: HashMap<[usize; 2], usize> = HashMap::new();
        for f in (0..self.num_facets()).filter(|&f| self.is_boundary_facet(f)) {
            let vs = self.facet_vertices(f);
            if self.dim == 2 {
                for &v in vs {
                    *ridges.entry([v, v]).or_default() += 1;
                }
            } else {
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    *ridges.entry([vs[a], vs[b]]).or_default() += 1;
                }
            }
        }
        ridges.values().all(|&c| c % 2 == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_topology() {
        let m = preset_mesh("unit_square", 2).unwrap();
        assert_eq!(m.num_cells(), 2);
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_facets(), 5);
        let interior = (0..5).filter(|&f| !m.is_boundary_facet(f)).count();
        assert_eq!(interior, 1);
        assert!((m.total_measure() - 1.0).abs() < 1e-15);
        assert!(m.is_conforming());
    }

    #[test]
    fn incidence_count_matches_cells() {
        for (name, dim) in [("unit_square", 2), ("lshape2d", 2), ("unit_cube", 3), ("lshape3d", 3)] {
            let m = preset_mesh(name, dim).unwrap();
            let s: usize = (0..m.num_facets())
                .map(|f| if m.is_boundary_facet(f) { 1 } else { 2 })
                .sum();
            assert_eq!(s, m.num_cells() * (dim + 1), "{name}");
        }
    }

    #[test]
    fn normals_are_unit_and_oriented() {
        let m = uniform_refine(&preset_mesh("lshape3d", 3).unwrap()).unwrap();
        for f in 0..m.num_facets() {
            assert!((m.normal(f).norm() - 1.0).abs() < 1e-14);
            let [t0, t1] = m.facet_cells(f);
            let x = m.map_to_facet(f, &[1.0 / 3.0; 3]);
            assert!(m.normal(f).dot(&(x - m.centroid(t0))) > 0.0);
            if t1 != NO_CELL {
                assert!(t0 < t1);
                assert!(m.normal(f).dot(&(m.centroid(t1) - x)) > 0.0);
            }
        }
    }

    #[test]
    fn cell_diameters() {
        let tri = Mesh::from_cells(
            2,
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)],
            vec![0, 1, 2],
            vec![2],
            vec![0],
        )
        .unwrap();
        assert!((tri.cell_diameter(0) - 2f64.sqrt()).abs() < 1e-15);

        let h = 3f64.sqrt() / 2.0;
        let eq = Mesh::from_cells(
            2,
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.5, h, 0.0)],
            vec![0, 1, 2],
            vec![2],
            vec![0],
        )
        .unwrap();
        assert!((eq.cell_diameter(0) - 1.0).abs() < 1e-15);

        let tet = Mesh::from_cells(
            3,
            vec![
                Point::new(0.0, 0.0, 0.0),
                Point::new(1.0, 0.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
                Point::new(0.0, 0.0, 1.0),
            ],
            vec![0, 1, 2, 3],
            vec![3],
            vec![0],
        )
        .unwrap();
        assert!((tet.cell_diameter(0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_manifold_is_rejected() {
        // three triangles sharing the edge (0, 1)
        let coords = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, -1.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
        ];
        let err = Mesh::from_cells(2, coords, vec![0, 1, 2, 0, 1, 3, 0, 1, 4], vec![2; 3], vec![0; 3]);
        assert!(matches!(err, Err(Error::NonManifold { .. })));
    }

    #[test]
    fn vertex_patches() {
        let m = preset_mesh("unit_square", 2).unwrap();
        // (1, 0) and (0, 1) belong to one triangle each
        let corners: Vec<usize> = (0..4).filter(|&v| m.vertex_patch(v).len() == 1).collect();
        assert_eq!(corners.len(), 2);

        let r = uniform_refine(&m).unwrap();
        let center = (0..r.num_vertices())
            .find(|&v| (r.vertex(v) - Point::new(0.5, 0.5, 0.0)).norm() < 1e-15)
            .unwrap();
        let patch = r.vertex_patch(center);
        let expected = (0..r.num_cells()).filter(|&t| r.cell(t).contains(&center)).count();
        assert_eq!(patch.len(), expected);
        // after one level the eight cells around the centre tile the square
        assert_eq!(patch.len(), 8);
        assert!((r.patch_measure(center) - 1.0).abs() < 1e-15);
        let r2 = uniform_refine(&r).unwrap();
        let c2 = (0..r2.num_vertices())
            .find(|&v| (r2.vertex(v) - Point::new(0.5, 0.5, 0.0)).norm() < 1e-15)
            .unwrap();
        assert!(r2.patch_measure(c2) < r2.total_measure());
        for v in 0..r.num_vertices() {
            assert!(r.patch_measure(v) > 0.0);
        }
    }
}
