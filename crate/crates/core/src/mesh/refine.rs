//! Conforming bisection refinement.
//!
//! Each cell carries an ordered vertex list `(x_0, ..., x_n)` and a tag
//! `k in 1..=n`; its refinement edge is `x_0 x_k`. Bisection at the edge
//! midpoint `z` produces
//!
//! ```text
//! (x_0, ..., x_{k-1}, z, x_{k+1}, ..., x_n)   and   (x_1, ..., x_k, z, x_{k+1}, ..., x_n)
//! ```
//!
//! with tag `k - 1` (or `n` when `k = 1`). In 2D this is newest-vertex
//! bisection. Conformity is restored by recursively bisecting every cell that
//! shares the refinement edge but has a different one; on the Kuhn-split
//! presets all refinement edges are compatible, so the closure terminates.

use std::collections::HashMap;

use super::{MarkSet, Mesh, Point};
use crate::error::{Error, Result};

struct Work {
    dim: usize,
    coords: Vec<Point>,
    cells: Vec<[usize; 4]>,
    tags: Vec<u8>,
    generation: Vec<u32>,
    vertex_cells: Vec<Vec<usize>>,
    midpoints: HashMap<(usize, usize), usize>,
}

impl Work {
    fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let cells: Vec<[usize; 4]> = mesh
            .raw_cells()
            .chunks(dim + 1)
            .map(|c| {
                let mut a = [usize::MAX; 4];
                a[..=dim].copy_from_slice(c);
                a
            })
            .collect();
        let mut vertex_cells = vec![Vec::new(); mesh.num_vertices()];
        for (t, c) in cells.iter().enumerate() {
            for &v in &c[..=dim] {
                vertex_cells[v].push(t);
            }
        }
        Work {
            dim,
            coords: mesh.vertices().to_vec(),
            cells,
            tags: mesh.raw_tags().to_vec(),
            generation: mesh.generations().to_vec(),
            vertex_cells,
            midpoints: HashMap::new(),
        }
    }

    fn ref_edge(&self, t: usize) -> (usize, usize) {
        let c = &self.cells[t];
        let (a, b) = (c[0], c[self.tags[t] as usize]);
        (a.min(b), a.max(b))
    }

    fn cells_with_edge(&self, (a, b): (usize, usize)) -> Vec<usize> {
        let (short, other) = if self.vertex_cells[a].len() <= self.vertex_cells[b].len() {
            (a, b)
        } else {
            (b, a)
        };
        let mut out: Vec<usize> = self.vertex_cells[short]
            .iter()
            .copied()
            .filter(|&t| self.cells[t][..=self.dim].contains(&other))
            .collect();
        out.sort_unstable();
        out
    }

    fn midpoint(&mut self, (a, b): (usize, usize)) -> usize {
        if let Some(&m) = self.midpoints.get(&(a, b)) {
            return m;
        }
        let m = self.coords.len();
        self.coords.push((self.coords[a] + self.coords[b]) * 0.5);
        self.vertex_cells.push(Vec::new());
        self.midpoints.insert((a, b), m);
        m
    }

    fn bisect(&mut self, t: usize, z: usize) {
        let n = self.dim;
        let k = self.tags[t] as usize;
        let x = self.cells[t];
        let mut second = x;
        second[..k].copy_from_slice(&x[1..=k]);
        second[k] = z;
        let mut first = x;
        first[k] = z;

        let new_tag = if k > 1 { k - 1 } else { n } as u8;
        let gen = self.generation[t] + 1;
        let t2 = self.cells.len();

        self.cells[t] = first;
        self.tags[t] = new_tag;
        self.generation[t] = gen;
        self.cells.push(second);
        self.tags.push(new_tag);
        self.generation.push(gen);

        let xk = x[k];
        self.vertex_cells[xk].retain(|&c| c != t);
        self.vertex_cells[z].push(t);
        for &v in &second[..=n] {
            self.vertex_cells[v].push(t2);
        }
    }

    /// Bisects `t` once, first refining any neighbour whose refinement edge
    /// is incompatible with that of `t`.
    fn refine_cell(&mut self, t: usize) -> Result<()> {
        let target_gen = self.generation[t];
        let mut stack: Vec<(usize, u32)> = vec![(t, target_gen)];
        let limit = 64 * (self.dim + 1) * 64;
        while let Some(&(c, gen)) = stack.last() {
            if self.generation[c] != gen {
                stack.pop();
                continue;
            }
            if stack.len() > limit {
                return Err(Error::Internal("bisection closure did not terminate".into()));
            }
            let edge = self.ref_edge(c);
            let patch = self.cells_with_edge(edge);
            if let Some(&bad) = patch.iter().find(|&&d| self.ref_edge(d) != edge) {
                stack.push((bad, self.generation[bad]));
                continue;
            }
            let z = self.midpoint(edge);
            for d in patch {
                self.bisect(d, z);
            }
            stack.pop();
        }
        Ok(())
    }

    fn into_mesh(self) -> Result<Mesh> {
        let dim = self.dim;
        let cells: Vec<usize> = self.cells.iter().flat_map(|c| c[..=dim].iter().copied()).collect();
        Mesh::from_cells(dim, self.coords, cells, self.tags, self.generation)
    }
}

/// Bisects every marked cell at least once and closes the mesh conformingly.
///
/// Refinement is deterministic: marked cells are processed in ascending order
/// and children replace their parent's slot (first child) or are appended.
pub fn refine(mesh: &Mesh, marks: &MarkSet) -> Result<Mesh> {
    if let Some(&t) = marks.marked.iter().find(|&&t| t >= mesh.num_cells()) {
        return Err(Error::InvalidArgument(format!("marked cell {t} out of range")));
    }
    if marks.is_empty() {
        return Ok(mesh.clone());
    }
    let mut work = Work::new(mesh);
    let original_gen = mesh.generations();
    for &t in &marks.marked {
        // already bisected through the closure of an earlier cell
        if work.generation[t] != original_gen[t] {
            continue;
        }
        work.refine_cell(t)?;
    }
    work.into_mesh()
}

/// One uniform refinement level: `dim` rounds of bisecting every cell, which
/// halves every edge (2D: 4 children per cell, 3D: 8).
pub fn uniform_refine(mesh: &Mesh) -> Result<Mesh> {
    let mut m = refine(mesh, &MarkSet::all(mesh))?;
    for _ in 1..mesh.dim() {
        m = refine(&m, &MarkSet::all(&m))?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::preset_mesh;

    #[test]
    fn full_marking_on_square() {
        let m = preset_mesh("unit_square", 2).unwrap();
        let r = refine(&m, &MarkSet::all(&m)).unwrap();
        assert!(r.num_cells() >= 4);
        assert!(r.is_conforming());
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = preset_mesh("lshape2d", 2).unwrap();
        let r = refine(&m, &MarkSet::new(vec![], 0.5)).unwrap();
        assert_eq!(r.raw_cells(), m.raw_cells());
        assert_eq!(r.vertices(), m.vertices());
    }

    #[test]
    fn repeated_full_marking_keeps_area_and_angles() {
        let mut m = preset_mesh("unit_square", 2).unwrap();
        let initial_angle = m.min_angle();
        for _ in 0..3 {
            m = refine(&m, &MarkSet::all(&m)).unwrap();
            assert!((m.total_measure() - 1.0).abs() < 1e-12);
            assert!(m.is_conforming());
        }
        // newest-vertex bisection of right isosceles triangles stays in one similarity class
        assert!(m.min_angle() >= initial_angle - 1e-12);
    }

    #[test]
    fn local_refinement_stays_conforming_and_shape_regular() {
        let mut m = preset_mesh("lshape2d", 2).unwrap();
        let a0 = m.min_angle();
        for _ in 0..12 {
            // refine around the re-entrant corner
            let marked: Vec<usize> = (0..m.num_cells())
                .filter(|&t| m.cell(t).iter().any(|&v| m.vertex(v).norm() < 1e-14))
                .collect();
            let h_before: Vec<f64> = marked.iter().map(|&t| m.cell_diameter(t)).collect();
            let hmax = m.max_diameter();
            let r = refine(&m, &MarkSet::new(marked.clone(), 0.5)).unwrap();
            assert!(r.is_conforming());
            assert!(r.max_diameter() <= hmax);
            assert!((r.total_measure() - 3.0).abs() < 1e-12);
            assert!(r.min_angle() >= a0 - 1e-12);
            // children of marked cells occupy the parent's slot and are smaller
            for (&t, h) in marked.iter().zip(h_before) {
                assert!(r.cell_diameter(t) <= h + 1e-15);
                assert!(r.generation(t) > m.generation(t));
            }
            m = r;
        }
        let gens = m.generations();
        assert!(gens.iter().max().unwrap() > &10);
    }

    #[test]
    fn three_dimensional_closure() {
        let mut m = preset_mesh("lshape3d", 3).unwrap();
        for step in 0..8 {
            let marked: Vec<usize> = (0..m.num_cells())
                .filter(|&t| {
                    let c = m.centroid(t);
                    (c.x * c.x + c.y * c.y).sqrt() < 0.5 || (step < 2 && t % 3 == 0)
                })
                .collect();
            let r = refine(&m, &MarkSet::new(marked, 0.5)).unwrap();
            assert!(r.is_conforming());
            assert!((r.total_measure() - 3.0).abs() < 1e-12);
            assert!(r.max_diameter() <= m.max_diameter());
            m = r;
        }
        assert!(m.num_cells() > 200);
    }

    #[test]
    fn uniform_refinement_halves_edges() {
        let m = preset_mesh("unit_cube", 3).unwrap();
        let r = uniform_refine(&m).unwrap();
        assert_eq!(r.num_cells(), 8 * m.num_cells());
        assert!(r.is_conforming());
        let s = uniform_refine(&preset_mesh("lshape2d", 2).unwrap()).unwrap();
        assert_eq!(s.num_cells(), 24);
        assert!((s.max_diameter() - 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn refinement_is_deterministic() {
        let m = uniform_refine(&preset_mesh("lshape2d", 2).unwrap()).unwrap();
        let marks = MarkSet::new(vec![1, 5, 7, 19], 0.5);
        let a = refine(&m, &marks).unwrap();
        let b = refine(&m, &marks).unwrap();
        assert_eq!(a.raw_cells(), b.raw_cells());
        assert_eq!(a.vertices(), b.vertices());
    }
}
