//! Per-pixel ray casting against the terrain, the platform slab and the
//! target object. Depth is z-depth along the optical axis, not range.

use rand::Rng;


use crate::robot::RobotState;
use crate::scene::catalog::Shape;
use crate::scene::state::{SceneState, PLATFORM_THICKNESS};
use crate::scene::terrain::TerrainField;
use crate::se3::{Mat3, Pose6, Vec3};

use super::camera::CameraModel;

/// Rays stop after this much z-depth.
pub const MAX_DEPTH: f64 = 20.0;
const T_NEAR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Surface {
    None,
    Ground,
    Platform,
    Object,
}

/// Row-major image. Pixels without a hit carry depth 0 and are not valid.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub surface: Vec<Surface>,
    /// Metres; 0 where nothing was hit.
    pub depth: Vec<f32>,
}

impl Frame {
    pub fn empty(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            surface: vec![Surface::None; width * height],
            depth: vec![0.0; width * height],
        }
    }

    pub fn mask(&self, i: usize) -> bool {
        self.surface[i] == Surface::Object
    }

    pub fn valid(&self, i: usize) -> bool {
        self.surface[i] != Surface::None
    }

    pub fn mask_pixels(&self) -> usize {
        (0..self.surface.len()).filter(|&i| self.mask(i)).count()
    }

    /// Mean `(u, v)` of mask pixels at their centres.
    pub fn mask_centroid(&self) -> Option<(f64, f64)> {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for i in 0..self.surface.len() {
            if self.mask(i) {
                su += (i % self.width) as f64 + 0.5;
                sv += (i / self.width) as f64 + 0.5;
                n += 1;
            }
        }
        (n > 0).then(|| (su / n as f64, sv / n as f64))
    }

    /// Flips each mask pixel with probability `p`, mimicking segmentation error.
    /// Pixels that become mask keep their depth, or get `fallback_depth` when they had none.
    pub fn apply_mask_noise(&mut self, p: f64, fallback_depth: f32, rng: &mut impl Rng) {
        if p <= 0.0 {
            return;
        }
        for i in 0..self.surface.len() {
            if rng.random_bool(p.min(1.0)) {
                if self.mask(i) {
                    self.surface[i] = Surface::Ground;
                } else {
                    if !self.valid(i) {
                        self.depth[i] = fallback_depth;
                    }
                    self.surface[i] = Surface::Object;
                }
            }
        }
    }
}

/// Ray `o + t d` in some local frame.
#[derive(Clone, Copy)]
struct Ray {
    o: Vec3<f64>,
    d: Vec3<f64>,
}

impl Ray {
    fn into_frame(self, frame: &LocalFrame) -> Ray {
        Ray {
            o: frame.rot_t.mul_vec(self.o - frame.origin),
            d: frame.rot_t.mul_vec(self.d),
        }
    }
}

struct LocalFrame {
    origin: Vec3<f64>,
    rot_t: Mat3<f64>,
}

impl LocalFrame {
    fn new(pose: &Pose6<f64>) -> Self {
        LocalFrame {
            origin: pose.position,
            rot_t: pose.rotation().transpose(),
        }
    }
}

/// Entry parameter of an axis-aligned box centred at the origin.
fn hit_box(r: Ray, half: [f64; 3]) -> Option<f64> {
    let o = r.o.to_array();
    let d = r.d.to_array();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let (a, b) = ((-half[i] - o[i]) * inv, (half[i] - o[i]) * inv);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    if hi < lo || hi < T_NEAR {
        return None;
    }
    Some(if lo > T_NEAR { lo } else { hi })
}

fn hit_sphere(r: Ray, radius: f64) -> Option<f64> {
    let a = r.d.dot(r.d);
    let b = r.o.dot(r.d);
    let c = r.o.dot(r.o) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [(-b - s) / a, (-b + s) / a].into_iter().find(|t| *t > T_NEAR)
}

/// Capped cylinder along local z.
fn hit_cylinder(r: Ray, radius: f64, half_height: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut keep = |t: f64| {
        if t > T_NEAR && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = r.d.x * r.d.x + r.d.y * r.d.y;
    if a > 1e-18 {
        let b = r.o.x * r.d.x + r.o.y * r.d.y;
        let c = r.o.x * r.o.x + r.o.y * r.o.y - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / a, (-b + s) / a] {
                if (r.o.z + t * r.d.z).abs() <= half_height {
                    keep(t);
                }
            }
        }
    }
    if r.d.z.abs() > 1e-15 {
        for cap in [-half_height, half_height] {
            let t = (cap - r.o.z) / r.d.z;
            let (x, y) = (r.o.x + t * r.d.x, r.o.y + t * r.d.y);
            if x * x + y * y <= radius * radius {
                keep(t);
            }
        }
    }
    best
}

fn hit_shape(r: Ray, shape: &Shape) -> Option<f64> {
    match *shape {
        Shape::Sphere { radius } => hit_sphere(r, radius),
        Shape::Box { .. } => hit_box(r, shape.half_extents().to_array()),
        Shape::Cylinder { radius, height } => hit_cylinder(r, radius, height / 2.0),
    }
}

/// Smallest root of `a s^2 + b s + c` in `[0, len]`.
fn first_root(a: f64, b: f64, c: f64, len: f64) -> Option<f64> {
    if c <= 0.0 {
        return Some(0.0);
    }
    let ok = |s: f64| (0.0..=len).contains(&s).then_some(s);
    if a.abs() < 1e-12 {
        return if b < 0.0 { ok(-c / b) } else { None };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = (q / a, if q != 0.0 { c / q } else { f64::INFINITY });
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    ok(lo).or_else(|| ok(hi))
}

/// First crossing of the height field before `t_max`. Walks the lattice cells
/// the ray passes over inside the terrain's height band and, where the ray
/// dips below a cell's highest corner, solves the bilinear patch exactly
/// (a quadratic in `t`). The field ends at the lattice border here.
fn hit_terrain(r: Ray, terrain: &TerrainField, band: (f64, f64), t_max: f64) -> Option<f64> {
    let (lo, hi) = band;
    let (mut t0, mut t1) = (T_NEAR, t_max);
    if r.d.z.abs() < 1e-15 {
        if r.o.z > hi || r.o.z < lo {
            return None;
        }
    } else {
        let idz = 1.0 / r.d.z;
        let (a, b) = ((hi - r.o.z) * idz, (lo - r.o.z) * idz);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 <= t0 {
        return None;
    }
    let inv = terrain.inv_cell();
    let (nx, ny) = terrain.nodes();
    // Grid coordinates along the ray: g(t) = g0 + gd t.
    let origin = terrain.origin();
    let g0 = [(r.o.x - origin[0]) * inv, (r.o.y - origin[1]) * inv];
    let gd = [r.d.x * inv, r.d.y * inv];
    let igd = gd.map(|v| if v.abs() < 1e-15 { f64::INFINITY } else { 1.0 / v });
    // Clip to the lattice.
    for (k, n) in [(0, (nx - 1) as f64), (1, (ny - 1) as f64)] {
        if igd[k].is_infinite() {
            if g0[k] < 0.0 || g0[k] > n {
                return None;
            }
        } else {
            let (a, b) = (-g0[k] * igd[k], (n - g0[k]) * igd[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t1 <= t0 {
        return None;
    }
    let mut cell = [
        ((g0[0] + gd[0] * t0).max(0.0) as usize).min(nx - 2),
        ((g0[1] + gd[1] * t0).max(0.0) as usize).min(ny - 2),
    ];
    let step = [if gd[0] > 0.0 { 1isize } else { -1 }, if gd[1] > 0.0 { 1isize } else { -1 }];
    // Ray parameter at the next cell boundary on each axis, and per-cell increment.
    let mut t_next = [f64::INFINITY; 2];
    let mut t_delta = [f64::INFINITY; 2];
    for k in 0..2 {
        if igd[k].is_finite() {
            let edge = cell[k] as f64 + if gd[k] > 0.0 { 1.0 } else { 0.0 };
            t_next[k] = (edge - g0[k]) * igd[k];
            t_delta[k] = igd[k].abs();
        }
    }
    let mut t_enter = t0;
    loop {
        let t_exit = t_next[0].min(t_next[1]).min(t1);
        let h = terrain.cell(cell[0], cell[1]);
        let top = h[0].max(h[1]).max(h[2]).max(h[3]);
        let z_low = r.o.z + r.d.z * if r.d.z < 0.0 { t_exit } else { t_enter };
        if z_low <= top {
            // Patch h = h00 + e fx + f fy + k fx fy, with fx = ax + bx s, s = t - t_enter.
            let (ax, ay) = (g0[0] + gd[0] * t_enter - cell[0] as f64, g0[1] + gd[1] * t_enter - cell[1] as f64);
            let (bx, by) = (gd[0], gd[1]);
            let (e, f, k) = (h[1] - h[0], h[2] - h[0], h[0] - h[1] - h[2] + h[3]);
            let a = -k * bx * by;
            let b = r.d.z - e * bx - f * by - k * (ax * by + ay * bx);
            let c = r.o.z + r.d.z * t_enter - (h[0] + e * ax + f * ay + k * ax * ay);
            if let Some(s) = first_root(a, b, c, t_exit - t_enter) {
                return Some(t_enter + s);
            }
        }
        if t_exit >= t1 {
            return None;
        }
        let k = if t_next[0] < t_next[1] { 0 } else { 1 };
        let next = cell[k] as isize + step[k];
        let limit = if k == 0 { nx - 1 } else { ny - 1 };
        if next < 0 || next as usize >= limit {
            return None;
        }
        cell[k] = next as usize;
        t_enter = t_exit;
        t_next[k] += t_delta[k];
    }
}

/// Height band the terrain occupies; computed once per frame.
fn terrain_band(terrain: &TerrainField) -> (f64, f64) {
    let (lo, hi) = terrain.min_max();
    (lo - 1e-9, hi + 1e-9)
}

/// Conservative pixel rectangle `[col0, col1) x [row0, row1)` covering a
/// camera-frame sphere; the whole image when it straddles the camera plane.
fn screen_rect(cam: &CameraModel, centre: Vec3<f64>, radius: f64) -> (usize, usize, usize, usize) {
    let full = (0, cam.width, 0, cam.height);
    let (xlo, xhi) = (centre.x - radius, centre.x + radius);
    if xhi <= 0.0 {
        return (0, 0, 0, 0);
    }
    if xlo <= 1e-3 {
        return full;
    }
    // Extremes of a/x over the box [lo, hi] x [xlo, xhi].
    let ratio = |lo: f64, hi: f64| {
        let c = [lo / xlo, lo / xhi, hi / xlo, hi / xhi];
        (c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    };
    let f = cam.focal();
    let (cx, cy) = cam.principal_point();
    let (ylo, yhi) = ratio(centre.y - radius, centre.y + radius);
    let (zlo, zhi) = ratio(centre.z - radius, centre.z + radius);
    let clip = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
    (
        clip((cx - f * yhi).floor() - 1.0, cam.width),
        clip((cx - f * ylo).ceil() + 1.0, cam.width),
        clip((cy - f * zhi).floor() - 1.0, cam.height),
        clip((cy - f * zlo).ceil() + 1.0, cam.height),
    )
}

fn inside(rect: (usize, usize, usize, usize), row: usize, col: usize) -> bool {
    col >= rect.0 && col < rect.1 && row >= rect.2 && row < rect.3
}

pub fn render_frame(scene: &SceneState, robot: &RobotState, cam: &CameraModel) -> Frame {
    let mut frame = Frame::empty(cam.width, cam.height);
    let cam_pose = cam.world_pose(robot);
    let cam_rot = cam_pose.rotation();
    let object = LocalFrame::new(&scene.object_pose);
    // Platform pose is its top face; the slab centre sits half a thickness lower.
    let slab = LocalFrame::new(&scene.platform_pose.compose(&Pose6::from_translation(Vec3::new(
        0.0,
        0.0,
        -PLATFORM_THICKNESS / 2.0,
    ))));
    let slab_half = scene.platform_half_extents.to_array();
    let to_cam = cam_pose.inverse();
    let object_rect = screen_rect(
        cam,
        to_cam.transform_point(scene.object_pose.position),
        scene.object.shape.bounding_radius(),
    );
    let slab_rect = screen_rect(cam, to_cam.transform_point(slab.origin), scene.platform_half_extents.norm());
    let band = terrain_band(&scene.terrain);
    let f = cam.focal();
    let (cx, cy) = cam.principal_point();
    // World direction of pixel (row, col) is x_axis + a_col y_axis + b_row z_axis.
    let (ax, ay, az) = (cam_rot.column(0), cam_rot.column(1), cam_rot.column(2));
    for row in 0..cam.height {
        let b = (cy - (row as f64 + 0.5)) / f;
        let row_dir = ax + az * b;
        for col in 0..cam.width {
            let a = (cx - (col as f64 + 0.5)) / f;
            let ray = Ray {
                o: cam_pose.position,
                d: row_dir + ay * a,
            };
            let mut best = (MAX_DEPTH, Surface::None);
            if inside(object_rect, row, col) {
                if let Some(t) = hit_shape(ray.into_frame(&object), &scene.object.shape) {
                    if t < best.0 {
                        best = (t, Surface::Object);
                    }
                }
            }
            if inside(slab_rect, row, col) {
                if let Some(t) = hit_box(ray.into_frame(&slab), slab_half) {
                    if t < best.0 {
                        best = (t, Surface::Platform);
                    }
                }
            }
            if let Some(t) = hit_terrain(ray, &scene.terrain, band, best.0) {
                if t < best.0 {
                    best = (t, Surface::Ground);
                }
            }
            if best.1 != Surface::None {
                let i = row * cam.width + col;
                frame.surface[i] = best.1;
                frame.depth[i] = best.0 as f32;
            }
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_hits_match_closed_forms() {
        let r = Ray {
            o: Vec3::new(-2.0, 0.0, 0.0),
            d: Vec3::new(1.0, 0.0, 0.0),
        };
        assert!((hit_sphere(r, 0.5).unwrap() - 1.5).abs() < 1e-12);
        assert!((hit_box(r, [0.1, 0.2, 0.3]).unwrap() - 1.9).abs() < 1e-12);
        assert!((hit_cylinder(r, 0.3, 0.1).unwrap() - 1.7).abs() < 1e-12);
        let down = Ray {
            o: Vec3::new(0.0, 0.0, 1.0),
            d: Vec3::new(0.0, 0.0, -1.0),
        };
        assert!((hit_cylinder(down, 0.3, 0.1).unwrap() - 0.9).abs() < 1e-12);
        let miss = Ray {
            o: Vec3::new(-2.0, 1.0, 0.0),
            d: Vec3::new(1.0, 0.0, 0.0),
        };
        assert!(hit_sphere(miss, 0.5).is_none() && hit_box(miss, [0.1; 3]).is_none());
    }

    /// Fine march with bisection as an independent reference.
    fn marched(r: Ray, t: &TerrainField, t_max: f64) -> Option<f64> {
        let gap = |s: f64| r.o.z + s * r.d.z - t.height_at(r.o.x + s * r.d.x, r.o.y + s * r.d.y);
        let dt = 1e-3;
        let mut a = T_NEAR;
        while a < t_max {
            let b = a + dt;
            if gap(b) <= 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..50 {
                    let m = 0.5 * (lo + hi);
                    if gap(m) > 0.0 {
                        lo = m
                    } else {
                        hi = m
                    }
                }
                return Some(hi);
            }
            a = b;
        }
        None
    }

    #[test]
    fn terrain_hits_match_fine_march() {
        use rand::SeedableRng;
        let field = crate::scene::terrain::sample_terrain(4, 6.0, 0.25).unwrap();
        let band = terrain_band(&field);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut hits = 0;
        for _ in 0..300 {
            let o = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.2..0.8));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.6..0.05));
            let r = Ray { o, d };
            let exact = hit_terrain(r, &field, band, 3.0);
            let reference = marched(r, &field, 3.0);
            // Both must agree except where the ray leaves the lattice.
            let inside = |t: f64| (r.o.x + t * r.d.x).abs() < 3.0 && (r.o.y + t * r.d.y).abs() < 3.0;
            match (exact, reference) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
                    hits += 1;
                }
                (None, Some(b)) => assert!(!inside(b), "missed hit at {b}"),
                (Some(a), None) => panic!("spurious hit at {a}"),
                (None, None) => {}
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn terrain_hit_on_flat_ground() {
        let t = TerrainField::flat(0.05, 10.0, 0.25).unwrap();
        let r = Ray {
            o: Vec3::new(0.0, 0.0, 1.05),
            d: Vec3::new(1.0, 0.0, -0.5),
        };
        let hit = hit_terrain(r, &t, terrain_band(&t), MAX_DEPTH).unwrap();
        assert!((hit - 2.0).abs() < 1e-6);
    }
}
