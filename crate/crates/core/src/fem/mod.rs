//! P1 finite elements on a structured rectangular mesh.
//!
//! Assembly realizes the form `a(z1, z2) = <grad z1, D grad z2>`; output operators
//! realize boundary side integrals and weighted domain integrals.

mod mesh;
mod sparse;

pub use mesh::{Mesh, Side};
pub use sparse::CsrMatrix;

use crate::error::{check_len, Result};
use crate::model::Diffusion;

/// Mass and stiffness matrices of a mesh.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    /// Row sums of `mass`.
    pub lumped_mass: Vec<f64>,
}

impl AssembledOperators {
    /// Squared L2 norm `v^T M v`.
    pub fn l2_norm_sq(&self, v: &[f64]) -> f64 {
        self.mass.bilinear(v, v)
    }

    /// Total mass `1^T M v`.
    pub fn integral(&self, v: &[f64]) -> f64 {
        self.lumped_mass.iter().zip(v).map(|(m, x)| m * x).sum()
    }
}

/// Assembles the consistent mass matrix and the stiffness matrix for constant `D`.
pub fn assemble(mesh: &Mesh, diffusion: &Diffusion) -> Result<AssembledOperators> {
    diffusion.validate()?;
    let n = mesh.node_count();
    let mut mass_t = Vec::with_capacity(9 * mesh.triangles.len());
    let mut stiff_t = Vec::with_capacity(9 * mesh.triangles.len());

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(t);
        let p = tri.map(|k| mesh.nodes[k]);
        // gradients of the barycentric coordinates
        let grads: [[f64; 2]; 3] = std::array::from_fn(|a| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            [
                (p[b][1] - p[c][1]) / (2.0 * area),
                (p[c][0] - p[b][0]) / (2.0 * area),
            ]
        });
        for a in 0..3 {
            let dg = diffusion.apply(grads[a]);
            for b in 0..3 {
                let k = area * (dg[0] * grads[b][0] + dg[1] * grads[b][1]);
                let m = if a == b { area / 6.0 } else { area / 12.0 };
                stiff_t.push((tri[a], tri[b], k));
                mass_t.push((tri[a], tri[b], m));
            }
        }
    }

    let mass = CsrMatrix::from_triplets(n, n, &mass_t);
    let stiffness = CsrMatrix::from_triplets(n, n, &stiff_t);
    let lumped_mass = mass.row_sums();
    Ok(AssembledOperators {
        mass,
        stiffness,
        lumped_mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    BoundarySegments,
    Distributed,
}

/// Discrete output operator: `y_i = b_i^T v`.
#[derive(Debug, Clone)]
pub struct OutputOperator {
    pub kind: OutputKind,
    /// Dense node weights, one vector per output channel.
    pub columns: Vec<Vec<f64>>,
    support: Vec<Vec<(usize, f64)>>,
}

impl OutputOperator {
    pub fn new(kind: OutputKind, columns: Vec<Vec<f64>>) -> Self {
        let support = columns
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(k, w)| (k, *w))
                    .collect()
            })
            .collect();
        Self {
            kind,
            columns,
            support,
        }
    }

    /// Number of output channels `m`.
    pub fn channels(&self) -> usize {
        self.columns.len()
    }

    pub fn apply_into(&self, v: &[f64], y: &mut [f64]) {
        for (yi, sup) in y.iter_mut().zip(&self.support) {
            *yi = sup.iter().map(|&(k, w)| w * v[k]).sum();
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.channels()];
        self.apply_into(v, &mut y);
        y
    }

    /// Adds `sum_i i_se[i] * b_i` to `load`.
    pub fn add_injection(&self, i_se: &[f64], load: &mut [f64]) {
        for (&a, sup) in i_se.iter().zip(&self.support) {
            if a != 0.0 {
                for &(k, w) in sup {
                    load[k] += a * w;
                }
            }
        }
    }
}

/// Side integrals over right, top, left and bottom, by the trapezoidal rule.
pub fn boundary_output(mesh: &Mesh) -> OutputOperator {
    let n = mesh.node_count();
    let columns = Side::ALL
        .iter()
        .map(|&side| {
            let mut b = vec![0.0; n];
            for &[p, q] in mesh.edges(side) {
                let (a, c) = (mesh.nodes[p], mesh.nodes[q]);
                let len = ((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2)).sqrt();
                b[p] += 0.5 * len;
                b[q] += 0.5 * len;
            }
            b
        })
        .collect();
    OutputOperator::new(OutputKind::BoundarySegments, columns)
}

/// Single-channel output `b = M w` approximating `<w, v>`.
pub fn distributed_output(mesh: &Mesh, mask: &[f64], ops: &AssembledOperators) -> Result<OutputOperator> {
    check_len("distributed output mask", mesh.node_count(), mask.len())?;
    Ok(OutputOperator::new(
        OutputKind::Distributed,
        vec![ops.mass.mul_vec(mask)],
    ))
}

/// Load vector `sum_i i_se[i] b_i` of the control term.
pub fn control_injection(out: &OutputOperator, ops: &AssembledOperators, i_se: &[f64]) -> Result<Vec<f64>> {
    check_len("control injection", out.channels(), i_se.len())?;
    let mut load = vec![0.0; ops.lumped_mass.len()];
    out.add_injection(i_se, &mut load);
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> (Mesh, AssembledOperators) {
        let mesh = Mesh::new(n, n, (1.0, 1.0)).unwrap();
        let ops = assemble(&mesh, &Diffusion::isotropic(1.0)).unwrap();
        (mesh, ops)
    }

    #[test]
    fn mass_partition_of_unity_and_kernel() {
        for n in [1, 3, 16] {
            let (mesh, ops) = unit(n);
            assert!((ops.mass.sum() - 1.0).abs() < 1e-13);
            let ones = vec![1.0; mesh.node_count()];
            let k1 = ops.stiffness.mul_vec(&ones);
            assert!(k1.iter().all(|x| x.abs() < 1e-12));
            assert!(ops.mass.asymmetry() < 1e-16);
            assert!(ops.stiffness.asymmetry() < 1e-13);
        }
    }

    #[test]
    fn stiffness_is_linear_in_diffusion() {
        let mesh = Mesh::new(8, 8, (1.0, 1.0)).unwrap();
        let lap = assemble(&mesh, &Diffusion::isotropic(1.0)).unwrap();
        let k = assemble(&mesh, &Diffusion::isotropic(0.015)).unwrap();
        let scaled = lap.stiffness.scaled(0.015);
        for r in 0..mesh.node_count() {
            for (c, v) in k.stiffness.row(r) {
                assert!((v - scaled.get(r, c)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn non_spd_diffusion_rejected() {
        let mesh = Mesh::new(2, 2, (1.0, 1.0)).unwrap();
        let bad = Diffusion {
            xx: 1.0,
            xy: 0.0,
            yy: -1.0,
        };
        assert!(assemble(&mesh, &bad).is_err());
    }

    #[test]
    fn boundary_output_examples() {
        let (mesh, _) = unit(1);
        let b = boundary_output(&mesh);
        assert_eq!(b.apply(&[1.0; 4]), vec![1.0; 4]);
        let corner = mesh.node_index(1, 1);
        let mut v = vec![0.0; 4];
        v[corner] = 1.0;
        assert_eq!(b.apply(&v), vec![0.5, 0.5, 0.0, 0.0]);

        let (mesh, _) = unit(7);
        let b = boundary_output(&mesh);
        let y = b.apply(&mesh.interpolate(|x, _| x));
        for (got, want) in y.iter().zip([1.0, 0.5, 0.0, 0.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn distributed_output_examples() {
        let (mesh, ops) = unit(4);
        let n = mesh.node_count();
        let b = distributed_output(&mesh, &vec![1.0; n], &ops).unwrap();
        assert!((b.apply(&vec![1.0; n])[0] - 1.0).abs() < 1e-14);
        let z = distributed_output(&mesh, &vec![0.0; n], &ops).unwrap();
        assert!(z.columns[0].iter().all(|w| *w == 0.0));
        assert!(distributed_output(&mesh, &[1.0], &ops).is_err());
    }

    #[test]
    fn injection() {
        let (mesh, ops) = unit(5);
        let b = boundary_output(&mesh);
        assert!(control_injection(&b, &ops, &[0.0; 4]).unwrap().iter().all(|x| *x == 0.0));
        assert_eq!(control_injection(&b, &ops, &[1.0, 0.0, 0.0, 0.0]).unwrap(), b.columns[0]);
        let total: f64 = control_injection(&b, &ops, &[1.0; 4]).unwrap().iter().sum();
        assert!((total - 4.0).abs() < 1e-13);
        assert!(control_injection(&b, &ops, &[1.0; 3]).is_err());
    }
}
