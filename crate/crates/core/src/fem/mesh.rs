use crate::error::{Error, Result};

/// Boundary sides of the rectangle `[0, Lx] x [0, Ly]`.
///
/// Order is fixed: right, top, left, bottom. Corner nodes belong to both adjacent sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `{Lx} x [0, Ly]`
    Right,
    /// `[0, Lx] x {Ly}`
    Top,
    /// `{0} x [0, Ly]`
    Left,
    /// `[0, Lx] x {0}`
    Bottom,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Right, Side::Top, Side::Left, Side::Bottom];
}

/// Structured P1 triangulation of a rectangle.
///
/// Nodes are numbered row-major, `index = j * (nx + 1) + i` for the node at
/// `(i * Lx / nx, j * Ly / ny)`. Every cell is split along its lower-left to
/// upper-right diagonal into two counter-clockwise triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub extent: (f64, f64),
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary edges per side, in `Side::ALL` order.
    pub boundary: [Vec<[usize; 2]>; 4],
}

impl Mesh {
    pub fn new(nx: usize, ny: usize, extent: (f64, f64)) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Domain(format!("mesh needs at least one cell per side, got {nx}x{ny}")));
        }
        let (lx, ly) = extent;
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::Domain(format!("mesh extent must be positive, got ({lx}, {ly})")));
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;

        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // pin the far edges exactly
                let x = if i == nx { lx } else { i as f64 * hx };
                let y = if j == ny { ly } else { j as f64 * hy };
                nodes.push([x, y]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (n00, n10, n01, n11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            }
        }

        let right = (0..ny).map(|j| [idx(nx, j), idx(nx, j + 1)]).collect();
        let top = (0..nx).map(|i| [idx(i, ny), idx(i + 1, ny)]).collect();
        let left = (0..ny).map(|j| [idx(0, j), idx(0, j + 1)]).collect();
        let bottom = (0..nx).map(|i| [idx(i, 0), idx(i + 1, 0)]).collect();

        Ok(Self {
            nx,
            ny,
            extent,
            nodes,
            triangles,
            boundary: [right, top, left, bottom],
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn edges(&self, side: Side) -> &[[usize; 2]] {
        &self.boundary[side as usize]
    }

    /// Signed area of a triangle (positive for counter-clockwise).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = Mesh::new(1, 1, (1.0, 1.0)).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.triangles.len(), 2);
        for side in Side::ALL {
            assert_eq!(m.edges(side).len(), 1);
        }
        let m = Mesh::new(64, 64, (1.0, 1.0)).unwrap();
        assert_eq!(m.node_count(), 4225);
        assert_eq!(m.triangles.len(), 8192);
        let m = Mesh::new(2, 1, (1.0, 1.0)).unwrap();
        assert_eq!(m.node_count(), 6);
        assert_eq!(m.triangles.len(), 4);
        assert!(Mesh::new(0, 3, (1.0, 1.0)).is_err());
    }

    #[test]
    fn triangles_are_positive_and_uniform() {
        let m = Mesh::new(5, 3, (2.0, 1.5)).unwrap();
        let expect = 2.0 * 1.5 / (2.0 * 15.0);
        for t in 0..m.triangles.len() {
            assert!((m.triangle_area(t) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_sides_lie_on_their_lines() {
        let m = Mesh::new(4, 3, (1.0, 2.0)).unwrap();
        let on = |side: Side, p: [f64; 2]| match side {
            Side::Right => p[0] == 1.0,
            Side::Top => p[1] == 2.0,
            Side::Left => p[0] == 0.0,
            Side::Bottom => p[1] == 0.0,
        };
        for side in Side::ALL {
            for e in m.edges(side) {
                assert!(on(side, m.nodes[e[0]]) && on(side, m.nodes[e[1]]));
            }
        }
    }
}
