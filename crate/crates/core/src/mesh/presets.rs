use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{Mesh, Point};
use crate::error::{Error, Result};

/// Built-in domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Geometry {
    UnitSquare,
    /// `(-1,1)^2 \ (-1,0)^2`, re-entrant corner at the origin.
    LShape2d,
    UnitCube,
    /// `(-1,1)^2 x (-1,0) \ (-1,0)^3`, re-entrant edge `{x = 0, y = 0}`.
    LShape3d,
}

impl Geometry {
    pub fn dim(self) -> usize {
        match self {
            Geometry::UnitSquare | Geometry::LShape2d => 2,
            Geometry::UnitCube | Geometry::LShape3d => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Geometry::UnitSquare => "unit_square",
            Geometry::LShape2d => "lshape2d",
            Geometry::UnitCube => "unit_cube",
            Geometry::LShape3d => "lshape3d",
        }
    }

    /// Area or volume of the domain.
    pub fn measure(self) -> f64 {
        match self {
            Geometry::UnitSquare | Geometry::UnitCube => 1.0,
            Geometry::LShape2d | Geometry::LShape3d => 3.0,
        }
    }

    /// Lower corners of the unit cubes making up the domain.
    fn cube_origins(self) -> &'static [[i64; 3]] {
        match self {
            Geometry::UnitSquare | Geometry::UnitCube => &[[0, 0, 0]],
            Geometry::LShape2d => &[[0, -1, 0], [0, 0, 0], [-1, 0, 0]],
            Geometry::LShape3d => &[[0, -1, -1], [0, 0, -1], [-1, 0, -1]],
        }
    }

    pub fn mesh(self) -> Result<Mesh> {
        kuhn_mesh(self.dim(), self.cube_origins())
    }

    /// Distance from `p` to the re-entrant corner or edge; `None` for convex domains.
    pub fn singular_distance(self, p: &Point) -> Option<f64> {
        match self {
            Geometry::LShape2d | Geometry::LShape3d => Some(p.x.hypot(p.y)),
            Geometry::UnitSquare | Geometry::UnitCube => None,
        }
    }

    /// Fraction of the domain within distance `r <= 1` of the singular set.
    pub fn singular_neighbourhood_fraction(self, r: f64) -> Option<f64> {
        match self {
            // three quarters of a disc (2D) or of a unit-length cylinder (3D)
            Geometry::LShape2d | Geometry::LShape3d => Some(0.75 * std::f64::consts::PI * r * r / self.measure()),
            Geometry::UnitSquare | Geometry::UnitCube => None,
        }
    }
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_square" => Ok(Geometry::UnitSquare),
            "lshape2d" => Ok(Geometry::LShape2d),
            "unit_cube" => Ok(Geometry::UnitCube),
            "lshape3d" => Ok(Geometry::LShape3d),
            other => Err(Error::UnknownGeometry(other.to_string())),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coarse initial triangulation of a named domain.
pub fn preset_mesh(name: &str, dim: usize) -> Result<Mesh> {
    let g: Geometry = name.parse()?;
    if g.dim() != dim {
        return Err(Error::InvalidArgument(format!("geometry {name} is {}-dimensional, not {dim}", g.dim())));
    }
    g.mesh()
}

fn permutations(dim: usize) -> Vec<Vec<usize>> {
    if dim == 2 {
        vec![vec![0, 1], vec![1, 0]]
    } else {
        vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ]
    }
}

/// Kuhn (Freudenthal) split of a union of unit cubes: every cube becomes
/// `dim!` simplices `x_0 = corner, x_i = x_{i-1} + e_{pi(i)}` sharing the main
/// diagonal, which is the initial refinement edge (tag `dim`).
fn kuhn_mesh(dim: usize, origins: &[[i64; 3]]) -> Result<Mesh> {
    let mut ids: HashMap<[i64; 3], usize> = HashMap::new();
    let mut coords = Vec::new();
    let mut cells = Vec::new();
    let mut id_of = |p: [i64; 3], coords: &mut Vec<Point>| -> usize {
        *ids.entry(p).or_insert_with(|| {
            coords.push(Point::new(p[0] as f64, p[1] as f64, p[2] as f64));
            coords.len() - 1
        })
    };
    for origin in origins {
        for perm in permutations(dim) {
            let mut p = *origin;
            cells.push(id_of(p, &mut coords));
            for &axis in &perm {
                p[axis] += 1;
                cells.push(id_of(p, &mut coords));
            }
        }
    }
    let n = cells.len() / (dim + 1);
    Mesh::from_cells(dim, coords, cells, vec![dim as u8; n], vec![0; n])
}
