use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{farthest_point_indices, PointCloud};
use crate::se3::{RigidTransform, Vec3};
use crate::seed;

/// Largest translation (m) a single action may command.
pub const MAX_STEP_TRANSLATION: f64 = 0.05;

/// Rest shape of a two-layer box-like sheet. Rows run along y, columns along
/// x; row 0 is the anchored edge. The top layer sits `thickness` above the
/// bottom one and both are bent by `curvature · (x − length_x/2)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheetGeometry {
    pub rows: usize,
    pub cols: usize,
    pub length_x: f64,
    pub width_y: f64,
    pub thickness: f64,
    pub curvature: f64,
    pub kernel_sigma: f64,
    /// In-plane rotation (rad) of the whole layout about the sheet centre.
    #[serde(default)]
    pub yaw: f64,
}

impl SheetGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 4 || self.cols < 4 {
            return Err(Error::Config(format!(
                "sheet grid must be at least 4x4, got {}x{}",
                self.rows, self.cols
            )));
        }
        let positive = [self.length_x, self.width_y, self.thickness, self.kernel_sigma];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !self.curvature.is_finite() || !self.yaw.is_finite() {
            return Err(Error::Config("sheet dimensions and kernel sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel-weighted rigid deformation model of a sheet anchored along one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformableSheet {
    geometry: SheetGeometry,
    rest: Vec<Vec3>,
    displacement: Vec<Vec3>,
}

impl DeformableSheet {
    pub fn new(geometry: SheetGeometry) -> Result<Self> {
        geometry.validate()?;
        let SheetGeometry {
            rows,
            cols,
            length_x,
            width_y,
            thickness,
            curvature,
            yaw,
            ..
        } = geometry;
        let turn = crate::se3::Rotation3::about_z(yaw);
        let centre = Vec3::new(0.5 * length_x, 0.5 * width_y, 0.0);
        let mut rest = Vec::with_capacity(2 * rows * cols);
        for layer in 0..2 {
            for r in 0..rows {
                for c in 0..cols {
                    let x = c as f64 / (cols - 1) as f64 * length_x;
                    let y = r as f64 / (rows - 1) as f64 * width_y;
                    let z = layer as f64 * thickness + curvature * (x - 0.5 * length_x).powi(2);
                    rest.push(centre + turn.rotate(&(Vec3::new(x, y, z) - centre)));
                }
            }
        }
        let displacement = vec![Vec3::zeros(); rest.len()];
        Ok(Self {
            geometry,
            rest,
            displacement,
        })
    }

    pub fn geometry(&self) -> &SheetGeometry {
        &self.geometry
    }

    pub fn node_count(&self) -> usize {
        self.rest.len()
    }

    /// Node index for `(layer, row, col)`; layer 1 is the visible top surface.
    pub fn node(&self, layer: usize, row: usize, col: usize) -> usize {
        let g = &self.geometry;
        layer * g.rows * g.cols + row * g.cols + col
    }

    /// `(layer, row, col)` of a node index.
    pub fn node_coords(&self, index: usize) -> (usize, usize, usize) {
        let g = &self.geometry;
        let per_layer = g.rows * g.cols;
        (index / per_layer, (index % per_layer) / g.cols, index % g.cols)
    }

    pub fn is_anchored(&self, index: usize) -> bool {
        self.node_coords(index).1 == 0
    }

    pub fn rest_position(&self, index: usize) -> Vec3 {
        self.rest[index]
    }

    pub fn position(&self, index: usize) -> Vec3 {
        self.rest[index] + self.displacement[index]
    }

    pub fn displacements(&self) -> &[Vec3] {
        &self.displacement
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.rest.iter().zip(&self.displacement).map(|(r, d)| r + d).collect()
    }

    pub fn top_surface_indices(&self) -> std::ops::Range<usize> {
        let per_layer = self.geometry.rows * self.geometry.cols;
        per_layer..2 * per_layer
    }

    /// Noise-free top-surface nodes: the partial view a camera above sees.
    pub fn top_surface(&self) -> PointCloud {
        PointCloud::new(self.top_surface_indices().map(|i| self.position(i)).collect())
    }

    /// Largest displacement norm over anchored nodes (always 0 for a valid sheet).
    pub fn anchored_max_displacement(&self) -> f64 {
        (0..self.node_count())
            .filter(|&i| self.is_anchored(i))
            .map(|i| self.displacement[i].norm())
            .fold(0.0, f64::max)
    }

    /// Moves every node toward where the rigid `action` about the grasp point
    /// would carry it, scaled by `exp(−d²/σ²)` with `d` the rest distance to
    /// the grasp node. Anchored nodes stay fixed.
    pub fn apply_action(&mut self, grasp: usize, action: &RigidTransform) -> Result<()> {
        if grasp >= self.node_count() {
            return Err(Error::Config(format!("grasp node {grasp} out of range")));
        }
        if self.is_anchored(grasp) {
            return Err(Error::GraspOnAnchor(grasp));
        }
        let magnitude = action.translation.norm();
        if !(magnitude <= MAX_STEP_TRANSLATION + 1e-12) {
            return Err(Error::ActionOutOfRange(magnitude));
        }
        let sigma2 = self.geometry.kernel_sigma.powi(2);
        let grasp_rest = self.rest[grasp];
        let grasp_now = self.position(grasp);
        for i in 0..self.node_count() {
            if self.is_anchored(i) {
                self.displacement[i] = Vec3::zeros();
                continue;
            }
            let w = (-(self.rest[i] - grasp_rest).norm_squared() / sigma2).exp();
            let x = self.position(i);
            let target = action.rotation.rotate(&(x - grasp_now)) + grasp_now + action.translation;
            self.displacement[i] += w * (target - x);
        }
        Ok(())
    }
}

pub fn apply_action(sheet: &DeformableSheet, grasp: usize, action: &RigidTransform) -> Result<DeformableSheet> {
    let mut next = sheet.clone();
    next.apply_action(grasp, action)?;
    Ok(next)
}

/// Sensing parameters: farthest-point subsample size and Gaussian noise (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub subsample_n: usize,
    pub noise_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            subsample_n: 64,
            noise_sigma: 0.0005,
        }
    }
}

/// Senses the top surface: farthest-point subsample to `subsample_n` points
/// and i.i.d. Gaussian noise, both driven by `seed`.
pub fn sense_point_cloud(sheet: &DeformableSheet, subsample_n: usize, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    sense_with_seeds(sheet, subsample_n, noise_sigma, seed, seed::derive(seed, 0x5E45, 0))
}

/// As [`sense_point_cloud`] with separate seeds for the subsample start and
/// the noise. The subsample is chosen on the rest layout, so views that share
/// `subsample_seed` observe the same surface points.
pub fn sense_with_seeds(
    sheet: &DeformableSheet,
    subsample_n: usize,
    noise_sigma: f64,
    subsample_seed: u64,
    noise_seed: u64,
) -> Result<PointCloud> {
    let surface = sheet.top_surface();
    let rest: Vec<Vec3> = sheet.top_surface_indices().map(|i| sheet.rest_position(i)).collect();
    let picks = farthest_point_indices(&rest, subsample_n, subsample_seed)?;
    let mut rng = seed::rng(noise_seed);
    let normal = rand_distr::Normal::new(0.0, noise_sigma.max(0.0))
        .map_err(|e| Error::Config(format!("sensor noise: {e}")))?;
    let points = picks
        .into_iter()
        .map(|i| {
            let p = surface.points[i];
            if noise_sigma > 0.0 {
                use rand_distr::Distribution;
                p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                p
            }
        })
        .collect();
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Rotation3;
    use approx::assert_abs_diff_eq;

    pub(crate) fn geometry() -> SheetGeometry {
        SheetGeometry {
            rows: 6,
            cols: 5,
            length_x: 0.1,
            width_y: 0.1,
            thickness: 0.01,
            curvature: 0.0,
            kernel_sigma: 0.04,
            yaw: 0.0,
        }
    }

    #[test]
    fn identity_action_is_noop() {
        let mut s = DeformableSheet::new(geometry()).unwrap();
        let before = s.clone();
        let g = s.node(1, 5, 2);
        s.apply_action(g, &RigidTransform::identity()).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn grasp_node_follows_translation_exactly() {
        let mut s = DeformableSheet::new(geometry()).unwrap();
        let g = s.node(1, 5, 2);
        let t = Vec3::new(0.01, -0.005, 0.02);
        s.apply_action(g, &RigidTransform::from_translation(t)).unwrap();
        assert_abs_diff_eq!(s.position(g), s.rest_position(g) + t, epsilon = 1e-15);
    }

    #[test]
    fn node_at_sigma_moves_by_one_over_e() {
        let mut geo = geometry();
        // top-layer neighbour along x is exactly one sigma away
        geo.kernel_sigma = geo.length_x / (geo.cols - 1) as f64;
        let mut s = DeformableSheet::new(geo).unwrap();
        let g = s.node(1, 5, 2);
        let n = s.node(1, 5, 3);
        let t = Vec3::new(0.0, 0.0, 0.02);
        s.apply_action(g, &RigidTransform::from_translation(t)).unwrap();
        assert_abs_diff_eq!(s.displacements()[n], t * (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn anchored_edge_and_guards() {
        let mut s = DeformableSheet::new(geometry()).unwrap();
        let anchored = s.node(1, 0, 3);
        assert!(matches!(
            s.apply_action(anchored, &RigidTransform::identity()),
            Err(Error::GraspOnAnchor(_))
        ));
        let g = s.node(1, 1, 3);
        assert!(matches!(
            s.apply_action(g, &RigidTransform::from_translation(Vec3::new(0.06, 0.0, 0.0))),
            Err(Error::ActionOutOfRange(_))
        ));
        let a = RigidTransform::new(Rotation3::about_x(0.5), Vec3::new(0.0, 0.0, 0.05));
        s.apply_action(g, &a).unwrap();
        assert_eq!(s.anchored_max_displacement(), 0.0);
        assert!(s.position(g).z > s.rest_position(g).z);
    }

    #[test]
    fn translation_then_inverse_restores() {
        let mut s = DeformableSheet::new(geometry()).unwrap();
        let g = s.node(1, 4, 1);
        let a = RigidTransform::from_translation(Vec3::new(0.02, 0.01, 0.03));
        s.apply_action(g, &a).unwrap();
        s.apply_action(g, &a.inverse()).unwrap();
        for i in 0..s.node_count() {
            assert_abs_diff_eq!(s.position(i), s.rest_position(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn small_grid_rejected() {
        let mut geo = geometry();
        geo.rows = 3;
        assert!(DeformableSheet::new(geo).is_err());
    }

    #[test]
    fn noiseless_full_sensing_is_the_surface() {
        let s = DeformableSheet::new(geometry()).unwrap();
        let n = s.top_surface().len();
        let c = sense_point_cloud(&s, n, 0.0, 3).unwrap();
        let mut a: Vec<_> = c.points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut b: Vec<_> = s.top_surface().points.iter().map(|p| [p.x, p.y, p.z]).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
        assert_eq!(sense_point_cloud(&s, 20, 0.001, 9).unwrap(), sense_point_cloud(&s, 20, 0.001, 9).unwrap());
        assert!(sense_point_cloud(&s, n + 1, 0.0, 1).is_err());
    }
}
