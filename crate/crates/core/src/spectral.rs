//! Galerkin scheme in the Neumann eigenbasis of the rectangle.
//!
//! For `D = d I` on `[0, Lx] x [0, Ly]` the eigenfunctions of the Neumann operator are
//! `theta_jk = n_jk cos(j pi x / Lx) cos(k pi y / Ly)` with eigenvalues
//! `alpha_jk = d pi^2 (j^2 / Lx^2 + k^2 / Ly^2)`. The cubic reaction is projected
//! with the midpoint rule on a tensor grid, which integrates `cos(m pi x / L)`
//! exactly for `0 < m < 2 G`. With `G >= 2 (max + 1)` points per axis every term of
//! `<p3(v), theta>` is integrated exactly.

use crate::closed_loop::{ClosedLoop, Discretization, Forcing, Control, Physics};
use crate::error::{check_len, Error, Result};
use crate::fem::{AssembledOperators, Mesh};
use crate::integrate::OdeSystem;
use crate::model::ModelParams;
use crate::scenario::Region;

/// Points per axis used to project stimulus footprints (indicator functions).
const FOOTPRINT_POINTS: usize = 512;

#[derive(Debug, Clone)]
struct CosTable {
    /// `values[j * points + q] = cos(j pi x_q / L)`
    values: Vec<f64>,
    points: usize,
    weight: f64,
}

impl CosTable {
    fn midpoint(max_mode: usize, points: usize, length: f64) -> Self {
        let mut values = Vec::with_capacity((max_mode + 1) * points);
        for j in 0..=max_mode {
            for q in 0..points {
                let x = (q as f64 + 0.5) / points as f64;
                values.push((j as f64 * std::f64::consts::PI * x).cos());
            }
        }
        Self {
            values,
            points,
            weight: length / points as f64,
        }
    }

    #[inline]
    fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.points..(j + 1) * self.points]
    }
}

/// Analytic Neumann eigenbasis truncated to `0 <= j <= max_j`, `0 <= k <= max_k`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub extent: (f64, f64),
    pub diffusion: f64,
    pub max_j: usize,
    pub max_k: usize,
    /// `(j, k)` ordered by eigenvalue, ties broken lexicographically.
    pub modes: Vec<(usize, usize)>,
    pub eigenvalues: Vec<f64>,
    pub norm_factors: Vec<f64>,
    /// `gamma_i = B' theta_i` for the right, top, left and bottom side integrals.
    pub output_gamma: Vec<[f64; 4]>,
    /// Position of mode `(j, k)` in `modes`, stored at `j * (max_k + 1) + k`.
    position: Vec<usize>,
    qx: CosTable,
    qy: CosTable,
}

/// Builds the basis with the smallest exact quadrature grid.
pub fn build_basis(max_j: usize, max_k: usize, params: &ModelParams) -> Result<SpectralBasis> {
    SpectralBasis::with_quadrature(max_j, max_k, params, 2 * (max_j + 1), 2 * (max_k + 1))
}

impl SpectralBasis {
    pub fn with_quadrature(
        max_j: usize,
        max_k: usize,
        params: &ModelParams,
        points_x: usize,
        points_y: usize,
    ) -> Result<Self> {
        params.validate()?;
        let d = params.diffusion.as_isotropic().ok_or_else(|| {
            Error::Unsupported("the analytic eigenbasis needs an isotropic diffusion tensor d I".into())
        })?;
        let (min_x, min_y) = (2 * (max_j + 1), 2 * (max_k + 1));
        if points_x < min_x || points_y < min_y {
            return Err(Error::Domain(format!(
                "quadrature grid {points_x}x{points_y} too coarse, need at least {min_x}x{min_y}"
            )));
        }
        let (lx, ly) = params.extent;
        let area = lx * ly;
        let pi2 = std::f64::consts::PI.powi(2);
        let alpha = |j: usize, k: usize| d * pi2 * ((j * j) as f64 / (lx * lx) + (k * k) as f64 / (ly * ly));

        let mut modes: Vec<(usize, usize)> = (0..=max_j).flat_map(|j| (0..=max_k).map(move |k| (j, k))).collect();
        modes.sort_by(|a, b| alpha(a.0, a.1).total_cmp(&alpha(b.0, b.1)).then(a.cmp(b)));

        let fac = |j: usize| if j == 0 { 1.0 } else { 2.0 };
        let eigenvalues = modes.iter().map(|&(j, k)| alpha(j, k)).collect();
        let norm_factors: Vec<f64> = modes.iter().map(|&(j, k)| (fac(j) * fac(k) / area).sqrt()).collect();
        let sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        let output_gamma = modes
            .iter()
            .zip(&norm_factors)
            .map(|(&(j, k), &n)| {
                let side_x = if k == 0 { n * ly } else { 0.0 };
                let side_y = if j == 0 { n * lx } else { 0.0 };
                [sign(j) * side_x, sign(k) * side_y, side_x, side_y]
            })
            .collect();
        let mut position = vec![0; (max_j + 1) * (max_k + 1)];
        for (p, &(j, k)) in modes.iter().enumerate() {
            position[j * (max_k + 1) + k] = p;
        }

        Ok(Self {
            extent: params.extent,
            diffusion: d,
            max_j,
            max_k,
            modes,
            eigenvalues,
            norm_factors,
            output_gamma,
            position,
            qx: CosTable::midpoint(max_j, points_x, lx),
            qy: CosTable::midpoint(max_k, points_y, ly),
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Position of mode `(j, k)`.
    pub fn index_of(&self, j: usize, k: usize) -> Option<usize> {
        (j <= self.max_j && k <= self.max_k).then(|| self.position[j * (self.max_k + 1) + k])
    }

    /// `theta_i(x, y)`.
    pub fn eval_mode(&self, i: usize, x: f64, y: f64) -> f64 {
        let (j, k) = self.modes[i];
        let (lx, ly) = self.extent;
        let pi = std::f64::consts::PI;
        self.norm_factors[i] * (j as f64 * pi * x / lx).cos() * (k as f64 * pi * y / ly).cos()
    }

    /// `sum_i coeffs_i theta_i(x, y)`.
    pub fn eval(&self, coeffs: &[f64], x: f64, y: f64) -> f64 {
        coeffs.iter().enumerate().map(|(i, c)| c * self.eval_mode(i, x, y)).sum()
    }

    /// Projects `f` sampled on a midpoint grid onto every mode.
    ///
    /// `grid[q * py + r] = f(x_q, y_r)`; the tables fix the grid.
    fn project_grid(&self, grid: &[f64], qx: &CosTable, qy: &CosTable, out: &mut [f64]) {
        let (px, py) = (qx.points, qy.points);
        let mut partial = vec![0.0; (self.max_j + 1) * py];
        for j in 0..=self.max_j {
            let cx = qx.row(j);
            let row = &mut partial[j * py..(j + 1) * py];
            for q in 0..px {
                let c = cx[q];
                let g = &grid[q * py..(q + 1) * py];
                for r in 0..py {
                    row[r] += c * g[r];
                }
            }
        }
        let w = qx.weight * qy.weight;
        for (i, &(j, k)) in self.modes.iter().enumerate() {
            let row = &partial[j * py..(j + 1) * py];
            let s: f64 = row.iter().zip(qy.row(k)).map(|(a, b)| a * b).sum();
            out[i] += w * self.norm_factors[i] * s;
        }
    }

    /// Samples `sum_i coeffs_i theta_i` on the quadrature grid.
    fn synthesize(&self, coeffs: &[f64], grid: &mut [f64]) {
        let (px, py) = (self.qx.points, self.qy.points);
        let nk = self.max_k + 1;
        // scaled coefficients as a dense (j, k) array
        let mut dense = vec![0.0; (self.max_j + 1) * nk];
        for (i, &(j, k)) in self.modes.iter().enumerate() {
            dense[j * nk + k] = coeffs[i] * self.norm_factors[i];
        }
        let mut partial = vec![0.0; (self.max_j + 1) * py];
        for j in 0..=self.max_j {
            let row = &mut partial[j * py..(j + 1) * py];
            for k in 0..nk {
                let c = dense[j * nk + k];
                if c != 0.0 {
                    for (r, &cy) in self.qy.row(k).iter().enumerate() {
                        row[r] += c * cy;
                    }
                }
            }
        }
        grid.fill(0.0);
        for j in 0..=self.max_j {
            let cx = self.qx.row(j);
            let row = &partial[j * py..(j + 1) * py];
            for q in 0..px {
                let c = cx[q];
                let g = &mut grid[q * py..(q + 1) * py];
                for r in 0..py {
                    g[r] += c * row[r];
                }
            }
        }
    }

    /// `<p3(sum_i mu_i theta_i), theta_j>` for all `j`, added to `out`.
    pub fn add_projected_reaction(&self, params: &ModelParams, mu: &[f64], out: &mut [f64]) {
        let mut grid = vec![0.0; self.qx.points * self.qy.points];
        self.synthesize(mu, &mut grid);
        grid.iter_mut().for_each(|v| *v = params.p3(*v));
        self.project_grid(&grid, &self.qx, &self.qy, out);
    }

    /// `<1_region, theta_i>` by the midpoint rule on a fine grid.
    pub fn project_region(&self, region: &Region) -> Vec<f64> {
        let (lx, ly) = self.extent;
        let qx = CosTable::midpoint(self.max_j, FOOTPRINT_POINTS, lx);
        let qy = CosTable::midpoint(self.max_k, FOOTPRINT_POINTS, ly);
        let mut grid = vec![0.0; FOOTPRINT_POINTS * FOOTPRINT_POINTS];
        for q in 0..FOOTPRINT_POINTS {
            let x = (q as f64 + 0.5) * qx.weight;
            for r in 0..FOOTPRINT_POINTS {
                let y = (r as f64 + 0.5) * qy.weight;
                if region.contains(x, y) {
                    grid[q * FOOTPRINT_POINTS + r] = 1.0;
                }
            }
        }
        let mut out = vec![0.0; self.len()];
        self.project_grid(&grid, &qx, &qy, &mut out);
        out
    }

    /// Nodal interpolant of `sum_i coeffs_i theta_i` on `mesh`.
    pub fn to_nodal(&self, coeffs: &[f64], mesh: &Mesh) -> Vec<f64> {
        mesh.interpolate(|x, y| self.eval(coeffs, x, y))
    }
}

/// `<v, theta_i>` using the FEM mass matrix against nodal interpolants of the modes.
pub fn project_nodal(v_nodal: &[f64], mesh: &Mesh, basis: &SpectralBasis, ops: &AssembledOperators) -> Result<Vec<f64>> {
    check_len("nodal vector", mesh.node_count(), v_nodal.len())?;
    check_len("mass matrix", mesh.node_count(), ops.mass.nrows())?;
    let mv = ops.mass.mul_vec(v_nodal);
    Ok((0..basis.len())
        .map(|i| {
            mesh.nodes
                .iter()
                .zip(&mv)
                .map(|(p, w)| basis.eval_mode(i, p[0], p[1]) * w)
                .sum()
        })
        .collect())
}

impl Discretization for SpectralBasis {
    fn size(&self) -> usize {
        self.len()
    }

    fn channels(&self) -> usize {
        4
    }

    fn output(&self, v: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (mu, g) in v.iter().zip(&self.output_gamma) {
            for c in 0..4 {
                y[c] += g[c] * mu;
            }
        }
    }

    fn diffusion(&self, v: &[f64], out: &mut [f64]) {
        for ((o, mu), a) in out.iter_mut().zip(v).zip(&self.eigenvalues) {
            *o = -a * mu;
        }
    }

    fn add_reaction(&self, params: &ModelParams, v: &[f64], out: &mut [f64]) {
        self.add_projected_reaction(params, v, out);
    }

    fn add_control(&self, i_se: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.output_gamma) {
            *o += g.iter().zip(i_se).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn stimulus_load(&self, region: &Region) -> Vec<f64> {
        self.project_region(region)
    }

    fn l2_norm(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Galerkin coefficients of `v` and `u` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub t: f64,
}

impl SpectralState {
    pub fn zeros(basis: &SpectralBasis) -> Self {
        Self {
            mu: vec![0.0; basis.len()],
            nu: vec![0.0; basis.len()],
            t: 0.0,
        }
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.mu.clone();
        x.extend(&self.nu);
        x
    }
}

/// Coefficient derivatives `(mu', nu')` of the Galerkin system.
pub fn spectral_rhs(
    state: &SpectralState,
    basis: &SpectralBasis,
    params: &ModelParams,
    forcing: &[Forcing],
    control: Option<Control<'_>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("spectral mu", basis.len(), state.mu.len())?;
    check_len("spectral nu", basis.len(), state.nu.len())?;
    let sys = ClosedLoop {
        disc: basis,
        params: *params,
        physics: Physics::FULL,
        forcing: forcing.to_vec(),
        control,
    };
    let mut dx = vec![0.0; sys.dim()];
    sys.rhs(state.t, &state.stacked(), &mut dx)?;
    let dnu = dx.split_off(basis.len());
    Ok((dx, dnu))
}
