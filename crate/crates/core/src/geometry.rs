//! Frustum lattice, pinhole unprojection and voxel assignment.
//!
//! Everything here runs in `f64`; only the final voxel indices are narrowed
//! to `u32`. Points are laid out `(N, D, H, W)` with `W` fastest, which is the
//! same layout the depth-score tensor uses, so a flat point index doubles as a
//! flat depth-score index.

use rayon::prelude::*;

use crate::error::GeometryError;

/// Tolerance for the rotation orthonormality and determinant checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Sentinel for frustum points that fall outside every voxel.
pub const INVALID_VOXEL: u32 = u32::MAX;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Pinhole intrinsics plus camera-to-ego extrinsics for a single view.
///
/// The camera frame is x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-ego rotation, row-major.
    pub rot: Mat3,
    /// Camera origin in the ego frame, meters.
    pub trans: Vec3,
}

impl CameraView {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.rot.iter().flatten())
            .chain(self.trans.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::NonFinite("camera view"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::FocalLength {
                fx: self.fx,
                fy: self.fy,
            });
        }
        let r = &self.rot;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > ROTATION_TOLERANCE {
                    return Err(GeometryError::NotOrthonormal);
                }
            }
        }
        let det = determinant(r);
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::Reflection(det));
        }
        Ok(())
    }

    /// Unprojects pixel `(u, v)` at metric depth `depth` into the ego frame.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let cam = [
            depth * (u - self.cx) / self.fx,
            depth * (v - self.cy) / self.fy,
            depth,
        ];
        let r = &self.rot;
        [
            r[0][0] * cam[0] + r[0][1] * cam[1] + r[0][2] * cam[2] + self.trans[0],
            r[1][0] * cam[0] + r[1][1] * cam[1] + r[1][2] * cam[2] + self.trans[1],
            r[2][0] * cam[0] + r[2][1] * cam[1] + r[2][2] * cam[2] + self.trans[2],
        ]
    }
}

pub(crate) fn determinant(r: &Mat3) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// The full multi-view camera rig. Its length is the view count `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    views: Vec<CameraView>,
}

impl CameraRig {
    pub fn new(views: Vec<CameraView>) -> Result<Self, GeometryError> {
        if views.is_empty() {
            return Err(GeometryError::EmptyRig);
        }
        for (i, view) in views.iter().enumerate() {
            view.validate().map_err(|e| GeometryError::View(i, Box::new(e)))?;
        }
        Ok(Self { views })
    }

    pub fn views(&self) -> &[CameraView] {
        &self.views
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    /// Returns a copy with every camera shifted by `offset` in the ego frame.
    pub fn translated(&self, offset: Vec3) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| CameraView {
                trans: [
                    v.trans[0] + offset[0],
                    v.trans[1] + offset[1],
                    v.trans[2] + offset[2],
                ],
                ..*v
            })
            .collect();
        Self { views }
    }
}

/// Discretization of image-plane cells and depth bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrustumSpec {
    pub feat_h: usize,
    pub feat_w: usize,
    /// Pixels per feature cell.
    pub downsample: usize,
    pub depth_start: f64,
    pub depth_end: f64,
    pub depth_step: f64,
}

impl FrustumSpec {
    /// Number of uniform depth bins, `round((end - start) / step)`.
    pub fn depth_bins(&self) -> usize {
        let bins = ((self.depth_end - self.depth_start) / self.depth_step).round();
        if bins.is_finite() && bins > 0.0 {
            bins as usize
        } else {
            0
        }
    }

    /// Image size in pixels as `(height, width)`.
    pub fn image_size(&self) -> (usize, usize) {
        (self.feat_h * self.downsample, self.feat_w * self.downsample)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if ![self.depth_start, self.depth_end, self.depth_step]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(GeometryError::NonFinite("depth range"));
        }
        if self.feat_h == 0 || self.feat_w == 0 || self.downsample == 0 {
            return Err(GeometryError::EmptyFeatureMap {
                feat_h: self.feat_h,
                feat_w: self.feat_w,
                downsample: self.downsample,
            });
        }
        if self.depth_step <= 0.0 || self.depth_end <= self.depth_start || self.depth_bins() == 0 {
            return Err(GeometryError::DepthRange {
                start: self.depth_start,
                end: self.depth_end,
                step: self.depth_step,
            });
        }
        Ok(())
    }

    /// Pixel coordinate of the center of feature cell `index` along an axis.
    #[inline]
    pub fn cell_center(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.downsample as f64 - 0.5
    }

    #[inline]
    pub fn depth_of_bin(&self, bin: usize) -> f64 {
        self.depth_start + bin as f64 * self.depth_step
    }
}

/// Axis-aligned voxel grid in the ego frame. Cells are half-open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridSpec {
    pub lower: Vec3,
    pub voxel_size: Vec3,
    /// `(nx, ny, nz)`.
    pub dims: [usize; 3],
}

impl VoxelGridSpec {
    /// Grid centered on the ego origin in x and y; z starts at `z_lower`.
    pub fn ego_centered(voxel_size: Vec3, dims: [usize; 3], z_lower: f64) -> Self {
        Self {
            lower: [
                -(dims[0] as f64 * voxel_size[0]) / 2.0,
                -(dims[1] as f64 * voxel_size[1]) / 2.0,
                z_lower,
            ],
            voxel_size,
            dims,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.lower.iter().chain(self.voxel_size.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("voxel grid"));
        }
        if self.voxel_size.iter().any(|&s| s <= 0.0) || self.dims.contains(&0) {
            return Err(GeometryError::DegenerateGrid);
        }
        if self.num_voxels() >= INVALID_VOXEL as usize {
            return Err(GeometryError::GridTooLarge(self.dims));
        }
        Ok(())
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Flat index `(iz * ny + iy) * nx + ix` of the cell holding `p`, or
    /// [`INVALID_VOXEL`] when any axis falls outside `[0, dim)`.
    #[inline]
    pub fn locate(&self, p: Vec3) -> u32 {
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let t = ((p[axis] - self.lower[axis]) / self.voxel_size[axis]).floor();
            // NaN fails both comparisons.
            if !(t >= 0.0 && t < self.dims[axis] as f64) {
                return INVALID_VOXEL;
            }
            idx[axis] = t as usize;
        }
        ((idx[2] * self.dims[1] + idx[1]) * self.dims[0] + idx[0]) as u32
    }
}

/// `(D, H, W)` lattice of `(u_pixel, v_pixel, depth_m)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrustumPoints {
    pub depth_bins: usize,
    pub height: usize,
    pub width: usize,
    points: Vec<Vec3>,
}

impl FrustumPoints {
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, d: usize, h: usize, w: usize) -> Vec3 {
        self.points[(d * self.height + h) * self.width + w]
    }
}

/// Frustum points of every view in the ego frame, `(N, D, H, W)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoPoints {
    pub num_views: usize,
    pub depth_bins: usize,
    pub height: usize,
    pub width: usize,
    points: Vec<Vec3>,
}

impl EgoPoints {
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Flat voxel index per frustum point, `(N, D, H, W)` layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelIndexMap {
    pub num_views: usize,
    pub depth_bins: usize,
    pub height: usize,
    pub width: usize,
    pub grid_dims: [usize; 3],
    indices: Vec<u32>,
}

impl VoxelIndexMap {
    /// Wraps raw indices, checking the length and that every non-sentinel
    /// value addresses a voxel of `grid_dims`.
    pub fn from_raw(
        shape: [usize; 4],
        grid_dims: [usize; 3],
        indices: Vec<u32>,
    ) -> Result<Self, GeometryError> {
        let [num_views, depth_bins, height, width] = shape;
        let expected = shape.iter().product::<usize>();
        if indices.len() != expected {
            return Err(GeometryError::IndexMapLength {
                expected,
                actual: indices.len(),
            });
        }
        let voxels = grid_dims.iter().product::<usize>();
        if let Some(pos) = indices
            .iter()
            .position(|&v| v != INVALID_VOXEL && v as usize >= voxels)
        {
            return Err(GeometryError::IndexOutOfGrid {
                position: pos,
                value: indices[pos],
            });
        }
        Ok(Self {
            num_views,
            depth_bins,
            height,
            width,
            grid_dims,
            indices,
        })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.num_views, self.depth_bins, self.height, self.width]
    }

    pub fn num_valid(&self) -> usize {
        self.indices.iter().filter(|&&v| v != INVALID_VOXEL).count()
    }
}

pub fn create_frustum(spec: &FrustumSpec) -> Result<FrustumPoints, GeometryError> {
    spec.validate()?;
    let depth_bins = spec.depth_bins();
    let (height, width) = (spec.feat_h, spec.feat_w);
    let mut points = Vec::with_capacity(depth_bins * height * width);
    for d in 0..depth_bins {
        let depth = spec.depth_of_bin(d);
        for h in 0..height {
            let v = spec.cell_center(h);
            for w in 0..width {
                points.push([spec.cell_center(w), v, depth]);
            }
        }
    }
    Ok(FrustumPoints {
        depth_bins,
        height,
        width,
        points,
    })
}

pub fn frustum_to_ego(frustum: &FrustumPoints, rig: &CameraRig) -> EgoPoints {
    let per_view = frustum.len();
    let mut points = vec![[0.0; 3]; per_view * rig.num_views()];
    if per_view > 0 {
        points
            .par_chunks_mut(per_view)
            .zip(rig.views().par_iter())
            .for_each(|(out, view)| {
                for (dst, &[u, v, d]) in out.iter_mut().zip(frustum.points()) {
                    *dst = view.unproject(u, v, d);
                }
            });
    }
    EgoPoints {
        num_views: rig.num_views(),
        depth_bins: frustum.depth_bins,
        height: frustum.height,
        width: frustum.width,
        points,
    }
}

pub fn voxelize(points: &EgoPoints, grid: &VoxelGridSpec) -> VoxelIndexMap {
    let indices = points.points().par_iter().map(|&p| grid.locate(p)).collect();
    VoxelIndexMap {
        num_views: points.num_views,
        depth_bins: points.depth_bins,
        height: points.height,
        width: points.width,
        grid_dims: grid.dims,
        indices,
    }
}

/// Runs the whole geometry chain: lattice, unprojection, voxel assignment.
pub fn voxel_index_map(
    rig: &CameraRig,
    frustum: &FrustumSpec,
    grid: &VoxelGridSpec,
) -> Result<VoxelIndexMap, GeometryError> {
    grid.validate()?;
    let lattice = create_frustum(frustum)?;
    Ok(voxelize(&frustum_to_ego(&lattice, rig), grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn unit_view(rot: Mat3, trans: Vec3) -> CameraView {
        CameraView {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            rot,
            trans,
        }
    }

    fn spec(feat_h: usize, feat_w: usize, downsample: usize, start: f64, end: f64) -> FrustumSpec {
        FrustumSpec {
            feat_h,
            feat_w,
            downsample,
            depth_start: start,
            depth_end: end,
            depth_step: 1.0,
        }
    }

    #[test]
    fn single_cell_frustum() {
        let f = create_frustum(&spec(1, 1, 1, 1.0, 3.0)).unwrap();
        assert_eq!(f.depth_bins, 2);
        assert_eq!(f.points(), &[[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]]);
    }

    #[test]
    fn cell_centers_with_downsample() {
        let f = create_frustum(&spec(2, 2, 2, 1.0, 2.0)).unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(f.get(0, 0, 0), [0.5, 0.5, 1.0]);
        assert_eq!(f.get(0, 0, 1), [2.5, 0.5, 1.0]);
        assert_eq!(f.get(0, 1, 0), [0.5, 2.5, 1.0]);
        assert_eq!(f.get(0, 1, 1), [2.5, 2.5, 1.0]);
    }

    #[test]
    fn low_resolution_lattice_size() {
        let f = create_frustum(&spec(16, 44, 16, 1.0, 60.0)).unwrap();
        assert_eq!(f.depth_bins, 59);
        assert_eq!(f.len(), 41_536);
        for d in 1..f.depth_bins {
            assert!(f.get(d, 0, 0)[2] > f.get(d - 1, 0, 0)[2]);
        }
        assert!(f.points().iter().all(|p| p[0] >= 0.0 && p[0] < 704.0));
        assert!(f.points().iter().all(|p| p[1] >= 0.0 && p[1] < 256.0));
    }

    #[test]
    fn rejects_bad_frustum_specs() {
        assert!(create_frustum(&spec(1, 1, 1, 1.0, 1.2)).is_err()); // D rounds to 0
        assert!(create_frustum(&spec(1, 1, 1, 3.0, 1.0)).is_err());
        assert!(create_frustum(&spec(1, 1, 1, 1.0, f64::INFINITY)).is_err());
        assert!(create_frustum(&spec(0, 1, 1, 1.0, 3.0)).is_err());
        let mut s = spec(1, 1, 1, 1.0, 3.0);
        s.depth_step = f64::NAN;
        assert!(create_frustum(&s).is_err());
    }

    #[test]
    fn unprojection_cases() {
        let v = unit_view(IDENTITY, [0.0; 3]);
        assert_eq!(v.unproject(2.0, 0.0, 3.0), [6.0, 0.0, 3.0]);
        let v = unit_view(IDENTITY, [1.0, 0.0, 0.0]);
        assert_eq!(v.unproject(0.0, 0.0, 5.0), [1.0, 0.0, 5.0]);
        // 90 degrees about z: cam (1, 0, 2) -> ego (0, 1, 2)
        let rz = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let v = unit_view(rz, [0.0; 3]);
        assert_eq!(v.unproject(1.0 / 2.0, 0.0, 2.0), [0.0, 1.0, 2.0]);
    }

    #[test]
    fn rig_validation() {
        assert!(matches!(CameraRig::new(vec![]), Err(GeometryError::EmptyRig)));
        let mut v = unit_view(IDENTITY, [0.0; 3]);
        v.fx = 0.0;
        assert!(CameraRig::new(vec![v]).is_err());
        let mirror = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            CameraRig::new(vec![unit_view(mirror, [0.0; 3])]),
            Err(GeometryError::View(0, _))
        ));
        let skew = [[1.0, 1e-6, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraRig::new(vec![unit_view(skew, [0.0; 3])]).is_err());
        assert!(CameraRig::new(vec![unit_view(IDENTITY, [0.0; 3])]).is_ok());
    }

    #[test]
    fn voxel_lookup() {
        let grid = VoxelGridSpec {
            lower: [-1.0; 3],
            voxel_size: [1.0; 3],
            dims: [2, 2, 2],
        };
        assert_eq!(grid.locate([0.5, 0.5, 0.5]), 7);
        assert_eq!(grid.locate([-0.5, -0.5, -0.5]), 0);
        assert_eq!(grid.locate([1.5, 0.0, 0.0]), INVALID_VOXEL);
        assert_eq!(grid.locate([1.0, 0.0, 0.0]), INVALID_VOXEL);
        assert_eq!(grid.locate([-1.0, -1.0, -1.0]), 0);
        assert_eq!(grid.locate([f64::NAN, 0.0, 0.0]), INVALID_VOXEL);
    }

    #[test]
    fn ego_centered_grid() {
        let g = VoxelGridSpec::ego_centered([0.8, 0.8, 8.0], [128, 128, 1], -5.0);
        assert_eq!(g.lower, [-51.2, -51.2, -5.0]);
        assert_eq!(g.locate([0.0, 0.0, 0.0]), 64 * 128 + 64);
    }

    #[test]
    fn index_map_rejects_out_of_grid_values() {
        assert!(VoxelIndexMap::from_raw([1, 1, 1, 2], [2, 1, 1], vec![1, INVALID_VOXEL]).is_ok());
        assert!(VoxelIndexMap::from_raw([1, 1, 1, 2], [2, 1, 1], vec![2, 0]).is_err());
        assert!(VoxelIndexMap::from_raw([1, 1, 1, 2], [2, 1, 1], vec![0]).is_err());
    }
}
