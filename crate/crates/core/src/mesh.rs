//! Structured P1 triangulation of the unit square with side-labelled
//! boundary edges.
//!
//! The workspace is always Omega = (0,1)^2. Each grid cell is split along
//! the bottom-left to top-right diagonal, which keeps assembly
//! bit-reproducible across runs. Node (i, j) sits at (i/nx, j/ny) and has
//! index `j * (nx + 1) + i`.

use crate::error::{Error, Result};

/// One of the four sides of the unit square.
///
/// Numbering: side 1 is the bottom {x2 = 0}, side 2 the right {x1 = 1},
/// side 3 the top {x2 = 1}, side 4 the left {x1 = 0}. Each side hosts one
/// actuator stack blowing into the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    /// 1-based side id used in file formats and reports.
    pub fn id(self) -> usize {
        match self {
            Side::Bottom => 1,
            Side::Right => 2,
            Side::Top => 3,
            Side::Left => 4,
        }
    }

    /// 0-based storage index (id - 1).
    pub fn index(self) -> usize {
        self.id() - 1
    }

    pub fn from_id(id: usize) -> Option<Side> {
        Side::ALL.iter().copied().find(|s| s.id() == id)
    }

    /// Coordinate axis normal to this side (0 for left/right, 1 for
    /// bottom/top). The actuator on this side pushes along this axis and
    /// its decay profile depends on this coordinate.
    pub fn axis(self) -> usize {
        match self {
            Side::Bottom | Side::Top => 1,
            Side::Left | Side::Right => 0,
        }
    }

    /// Axis along which the side extends; the control functions live on
    /// this coordinate.
    pub fn tangent_axis(self) -> usize {
        1 - self.axis()
    }

    /// Value of the normal coordinate on the side itself.
    pub fn coordinate(self) -> f64 {
        match self {
            Side::Bottom | Side::Left => 0.0,
            Side::Top | Side::Right => 1.0,
        }
    }

    /// Sign of the outward normal component along `axis()`.
    pub fn normal_sign(self) -> f64 {
        match self {
            Side::Bottom | Side::Left => -1.0,
            Side::Top | Side::Right => 1.0,
        }
    }

    /// Sign with which this side's actuator enters the velocity field and
    /// the control coupling matrices: actuators push inward, so it is the
    /// negated outward normal sign.
    pub fn orientation(self) -> f64 {
        -self.normal_sign()
    }

    /// Distance of `x` from this side.
    pub fn distance(self, x: [f64; 2]) -> f64 {
        (x[self.axis()] - self.coordinate()).abs()
    }
}

/// Boundary edge: node pair ordered along the side, plus the side label.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub side: Side,
}

/// P1 triangulation of the unit square.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub nx: usize,
    pub ny: usize,
}

impl Mesh {
    /// Build the structured mesh with `nx` by `ny` grid cells, each split
    /// into two triangles along the bottom-left to top-right diagonal.
    pub fn structured(nx: usize, ny: usize) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMeshResolution { nx, ny });
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        for j in 0..ny {
            for i in 0..nx {
                let v0 = idx(i, j);
                let v1 = idx(i + 1, j);
                let v2 = idx(i + 1, j + 1);
                let v3 = idx(i, j + 1);
                triangles.push([v0, v1, v2]);
                triangles.push([v0, v2, v3]);
            }
        }
        let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(i, 0), idx(i + 1, 0)],
                side: Side::Bottom,
            });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(nx, j), idx(nx, j + 1)],
                side: Side::Right,
            });
        }
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(i, ny), idx(i + 1, ny)],
                side: Side::Top,
            });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge {
                nodes: [idx(0, j), idx(0, j + 1)],
                side: Side::Left,
            });
        }
        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges,
            nx,
            ny,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Signed area of triangle `t` (positive for counter-clockwise).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = self.nodes[a];
        let q = self.nodes[b];
        let r = self.nodes[c];
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Total length of the boundary edges on one side.
    pub fn side_length(&self, side: Side) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.side == side)
            .map(|e| {
                let p = self.nodes[e.nodes[0]];
                let q = self.nodes[e.nodes[1]];
                ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
            })
            .sum()
    }

    /// Half bandwidth of any nodal matrix assembled on this mesh: the
    /// largest index distance inside one triangle is (nx + 1) + 1.
    pub fn bandwidth(&self) -> usize {
        self.nx + 2
    }

    /// Evaluate the P1 interpolant of nodal values at a point of the
    /// closed unit square.
    pub fn interpolate(&self, nodal: &[f64], x: [f64; 2]) -> Result<f64> {
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::PointOutsideDomain(x[0], x[1]));
        }
        if nodal.len() != self.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "nodal vector has {} entries, mesh has {} nodes",
                nodal.len(),
                self.n_nodes()
            )));
        }
        let (nx, ny) = (self.nx, self.ny);
        let i = ((x[0] * nx as f64) as usize).min(nx - 1);
        let j = ((x[1] * ny as f64) as usize).min(ny - 1);
        let xi = x[0] * nx as f64 - i as f64;
        let eta = x[1] * ny as f64 - j as f64;
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let v0 = nodal[idx(i, j)];
        let v1 = nodal[idx(i + 1, j)];
        let v2 = nodal[idx(i + 1, j + 1)];
        let v3 = nodal[idx(i, j + 1)];
        // The cell diagonal runs from (0,0) to (1,1) in local coordinates.
        Ok(if xi >= eta {
            v0 * (1.0 - xi) + v1 * (xi - eta) + v2 * eta
        } else {
            v0 * (1.0 - eta) + v2 * xi + v3 * (eta - xi)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_mesh_counts() {
        let m = Mesh::structured(1, 1).unwrap();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.boundary_edges.len(), 4);
    }

    #[test]
    fn two_by_two_counts() {
        let m = Mesh::structured(2, 2).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.boundary_edges.len(), 8);
    }

    #[test]
    fn rejects_degenerate_resolution() {
        assert!(Mesh::structured(0, 3).is_err());
        assert!(Mesh::structured(3, 0).is_err());
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        // Independent oracle: sum the signed areas triangle by triangle.
        let m = Mesh::structured(26, 26).unwrap();
        assert_eq!(m.n_nodes(), 729);
        let mut total = 0.0;
        for t in 0..m.triangles.len() {
            let a = m.signed_area(t);
            assert!(a > 0.0, "triangle {t} has non-positive area {a}");
            total += a;
        }
        assert!((total - 1.0).abs() < 1e-12, "total area {total}");
    }

    #[test]
    fn node_coordinates_are_exact_grid_points() {
        let m = Mesh::structured(7, 5).unwrap();
        for j in 0..=5usize {
            for i in 0..=7usize {
                let n = m.nodes[j * 8 + i];
                assert_eq!(n[0], i as f64 / 7.0);
                assert_eq!(n[1], j as f64 / 5.0);
            }
        }
    }

    #[test]
    fn boundary_edges_lie_on_their_sides_with_unit_length() {
        let m = Mesh::structured(9, 4).unwrap();
        assert_eq!(m.boundary_edges.len(), 2 * (9 + 4));
        for e in &m.boundary_edges {
            for &n in &e.nodes {
                let x = m.nodes[n];
                assert_eq!(x[e.side.axis()], e.side.coordinate());
            }
        }
        for side in Side::ALL {
            assert!((m.side_length(side) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let m = Mesh::structured(4, 3).unwrap();
        let nodal: Vec<f64> = m.nodes.iter().map(|p| 2.0 * p[0] - 0.5 * p[1] + 1.0).collect();
        for &p in &[[0.0, 0.0], [1.0, 1.0], [0.31, 0.77], [0.9, 0.1], [0.5, 0.5]] {
            let v = m.interpolate(&nodal, p).unwrap();
            let want = 2.0 * p[0] - 0.5 * p[1] + 1.0;
            assert!((v - want).abs() < 1e-13, "at {p:?}: {v} vs {want}");
        }
        assert!(m.interpolate(&nodal, [1.2, 0.0]).is_err());
    }

    #[test]
    fn side_geometry_is_consistent() {
        for side in Side::ALL {
            assert_eq!(Side::from_id(side.id()), Some(side));
            assert_eq!(side.orientation(), -side.normal_sign());
            assert_eq!(side.tangent_axis(), 1 - side.axis());
        }
        assert_eq!(Side::Bottom.axis(), 1);
        assert_eq!(Side::Left.axis(), 0);
        assert_eq!(Side::Right.coordinate(), 1.0);
    }
}
