//! Two-pass point-gathering renderer.
//!
//! Pass 1 scatters irradiance sample points over the mesh in proportion to
//! area and records the spot light's irradiance at each. Pass 2 traces camera
//! rays and, at each visible point, sums the material's transport from every
//! lit irradiance point:
//!
//! ```text
//! L = (1/pi) * sum_j T(i(x), j) * E_j * A_j
//! ```
//!
//! For a factored material `i(x)` and `j` are sample indices found by
//! projecting mesh points onto the material's sample patch
//! ([`SampleBinding`]); for a dipole material `T` is `R_d(|x - x_j|)`.

pub mod image_io;
pub mod mesh;
pub mod scene_file;

pub use image_io::{read_pfm, write_image, ImageBuffer, ImageFormat, ImageIoError};
pub use mesh::{Bvh, Hit, Mesh, Ray};

use crate::dipole::DipoleMaterial;
use crate::factor::{FactorError, FactoredBssrdf};
use crate::geometry::Vec3;
use crate::material::{MaterialDescriptor, SurfaceSampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("scene mesh has no triangles")]
    EmptyMesh,
    #[error("scene has no material bound")]
    UnboundMaterial,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid render settings: {0}")]
    InvalidSettings(String),
    #[error("material evaluation failed: {0}")]
    Evaluation(#[from] FactorError),
    #[error("could not build render thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    #[serde(default = "default_up")]
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub vfov_deg: f64,
    pub width: usize,
    pub height: usize,
}

fn default_up() -> Vec3 {
    Vec3::new(0.0, 1.0, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotLight {
    pub position: Vec3,
    pub direction: Vec3,
    /// Half-angle of the cone in degrees.
    pub cone_angle_deg: f64,
    /// Radiant intensity in W/sr per channel, constant inside the cone.
    pub intensity: [f64; 3],
}

impl SpotLight {
    /// Total emitted flux per channel.
    pub fn flux(&self) -> [f64; 3] {
        let solid_angle = 2.0 * PI * (1.0 - self.cone_angle_deg.to_radians().cos());
        self.intensity.map(|i| i * solid_angle)
    }

    pub fn scaled(&self, factor: f64) -> SpotLight {
        SpotLight { intensity: self.intensity.map(|i| i * factor), ..*self }
    }
}

/// How mesh points are mapped onto a material's sample patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Projection {
    /// Longitude/latitude around the mesh's bounding-box center.
    #[default]
    Spherical,
    /// Orthographic along z, normalized to the mesh's x/y extent.
    Planar,
}

/// Material data the renderer evaluates.
#[derive(Debug, Clone)]
pub enum BoundMaterial {
    Factored { descriptor: MaterialDescriptor, bssrdf: Arc<FactoredBssrdf>, samples: Arc<SurfaceSampleSet> },
    Dipole { descriptor: MaterialDescriptor, model: DipoleMaterial },
}

impl BoundMaterial {
    pub fn descriptor(&self) -> &MaterialDescriptor {
        match self {
            BoundMaterial::Factored { descriptor, .. } | BoundMaterial::Dipole { descriptor, .. } => descriptor,
        }
    }

    /// Rank of the evaluated model; a dipole counts as rank 1.
    pub fn k(&self) -> usize {
        match self {
            BoundMaterial::Factored { bssrdf, .. } => bssrdf.k(),
            BoundMaterial::Dipole { .. } => 1,
        }
    }

    pub fn storage_bytes(&self) -> u64 {
        match self {
            BoundMaterial::Factored { bssrdf, .. } => bssrdf.storage_bytes(),
            BoundMaterial::Dipole { .. } => std::mem::size_of::<DipoleMaterial>() as u64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneDescription {
    pub mesh: Arc<Mesh>,
    pub camera: Camera,
    pub light: SpotLight,
    pub material: Option<Arc<BoundMaterial>>,
    pub background: [f64; 3],
    pub projection: Projection,
}

impl SceneDescription {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.mesh.triangle_count() == 0 {
            return Err(RenderError::EmptyMesh);
        }
        let bad = |m: String| Err(RenderError::InvalidScene(m));
        let c = &self.camera;
        if !(c.vfov_deg > 1.0 && c.vfov_deg < 179.0) {
            return bad(format!("camera field of view {} outside (1, 179) degrees", c.vfov_deg));
        }
        if c.width == 0 || c.height == 0 {
            return bad("image dimensions must be positive".into());
        }
        if (c.look_at - c.position).length() == 0.0 || (c.look_at - c.position).cross(c.up).length() == 0.0 {
            return bad("camera view direction is degenerate".into());
        }
        let l = &self.light;
        if !(l.cone_angle_deg > 0.0 && l.cone_angle_deg <= 90.0) {
            return bad(format!("cone angle {} outside (0, 90] degrees", l.cone_angle_deg));
        }
        if l.direction.length() == 0.0 || !l.direction.is_finite() || !l.position.is_finite() {
            return bad("light direction must be a finite nonzero vector".into());
        }
        if l.intensity.iter().chain(&self.background).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("light intensity and background must be finite and nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub samples_per_pixel: usize,
    pub irradiance_sample_count: usize,
    /// Gather only irradiance points within this distance; `None` sums all.
    pub gather_truncation_radius: Option<f64>,
    pub thread_count: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { samples_per_pixel: 4, irradiance_sample_count: 2048, gather_truncation_radius: None, thread_count: 1 }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidSettings(m.to_string()));
        if self.samples_per_pixel == 0 {
            return bad("samples_per_pixel must be positive");
        }
        if self.irradiance_sample_count == 0 {
            return bad("irradiance_sample_count must be positive");
        }
        if self.thread_count == 0 {
            return bad("thread_count must be positive");
        }
        if let Some(r) = self.gather_truncation_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad("gather_truncation_radius must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    #[serde(skip)]
    pub image: ImageBuffer,
    pub width: usize,
    pub height: usize,
    pub wall_time: f64,
    pub bssrdf_eval_count: u64,
    /// Number of (shading point, irradiance point) terms summed.
    pub gather_count: u64,
    pub k_used: usize,
    pub peak_memory_estimate: u64,
    pub material: String,
    pub seed: u64,
}

/// Output of the irradiance pass.
#[derive(Debug, Clone)]
pub struct IrradianceSamples {
    pub samples: SurfaceSampleSet,
    /// W/m² per channel.
    pub irradiance: Vec<[f64; 3]>,
}

impl IrradianceSamples {
    /// Estimated flux reaching the surface, `sum E_j A_j`.
    pub fn collected_flux(&self) -> [f64; 3] {
        let mut f = [0.0; 3];
        for (e, a) in self.irradiance.iter().zip(&self.samples.areas) {
            for c in 0..3 {
                f[c] += e[c] * a;
            }
        }
        f
    }
}

/// Preview poses, in meters. The sphere has radius [`PREVIEW_RADIUS_M`].
pub const PREVIEW_RADIUS_M: f64 = 0.005;
/// Spot intensity giving roughly 1.5 W/m² on the lit side of the sphere.
pub const PREVIEW_INTENSITY: f64 = 4e-4;
pub const PREVIEW_SLICES: usize = 64;
pub const PREVIEW_STACKS: usize = 32;

/// The fixed preview scene: a sphere at the origin lit from the upper right
/// front by a spot light, seen head-on. Only the material binding varies.
pub fn build_preview_scene(material: Option<Arc<BoundMaterial>>) -> SceneDescription {
    let r = PREVIEW_RADIUS_M;
    let light_pos = Vec3::new(2.5 * r, 2.5 * r, 2.5 * r);
    SceneDescription {
        mesh: Arc::new(Mesh::uv_sphere(Vec3::ZERO, r, PREVIEW_SLICES, PREVIEW_STACKS)),
        camera: Camera {
            position: Vec3::new(0.0, 0.0, 4.0 * r),
            look_at: Vec3::ZERO,
            up: default_up(),
            vfov_deg: 35.0,
            width: 256,
            height: 256,
        },
        light: SpotLight { position: light_pos, direction: -light_pos, cone_angle_deg: 30.0, intensity: [PREVIEW_INTENSITY; 3] },
        material,
        background: [0.02; 3],
        projection: Projection::Spherical,
    }
}

/// Stratified along the cumulative area of the triangle list: point `m` is
/// drawn from the `m`-th of `N` equal-area strata, so per-triangle counts are
/// proportional to area and every point carries area `A / N`.
pub fn sample_irradiance_points(
    scene: &SceneDescription,
    settings: &RenderSettings,
    seed: u64,
) -> Result<IrradianceSamples, RenderError> {
    scene.validate()?;
    settings.validate()?;
    let bvh = Bvh::build(&scene.mesh);
    Ok(sample_with_bvh(scene, &bvh, settings.irradiance_sample_count, seed))
}

/// Stream id reserved for the irradiance pass; pixel streams start at 1.
const IRRADIANCE_STREAM: u64 = 0;

fn sample_with_bvh(scene: &SceneDescription, bvh: &Bvh, count: usize, seed: u64) -> IrradianceSamples {
    let mesh = &scene.mesh;
    let mut cdf = Vec::with_capacity(mesh.triangle_count());
    let mut total = 0.0;
    for t in 0..mesh.triangle_count() {
        total += mesh.triangle_area(t);
        cdf.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(IRRADIANCE_STREAM);
    let area = total / count as f64;
    let eps = ray_epsilon(mesh);

    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut irradiance = Vec::with_capacity(count);
    for m in 0..count {
        let target = (m as f64 + rng.random::<f64>()) / count as f64 * total;
        let t = cdf.partition_point(|&c| c < target).min(cdf.len() - 1);
        let (mut b1, mut b2): (f64, f64) = (rng.random(), rng.random());
        if b1 + b2 > 1.0 {
            b1 = 1.0 - b1;
            b2 = 1.0 - b2;
        }
        let p = mesh.point_at(t, b1, b2);
        let n = mesh.shading_normal(t, b1, b2);
        let ng = mesh.geometric_normal(t);
        points.push(p);
        normals.push(n);
        irradiance.push(spot_irradiance(&scene.light, mesh, bvh, p, n, ng, eps));
    }
    let samples = SurfaceSampleSet::new(points, normals, vec![area; count]).expect("mesh samples are finite");
    IrradianceSamples { samples, irradiance }
}

fn ray_epsilon(mesh: &Mesh) -> f64 {
    let (lo, hi) = mesh.bounds();
    1e-6 * (hi - lo).length().max(1e-12)
}

/// Irradiance from the spot light at `p` with shading normal `n`.
fn spot_irradiance(light: &SpotLight, mesh: &Mesh, bvh: &Bvh, p: Vec3, n: Vec3, ng: Vec3, eps: f64) -> [f64; 3] {
    let to_light = light.position - p;
    let d = to_light.length();
    if d == 0.0 {
        return [0.0; 3];
    }
    let w = to_light / d;
    let cos_surface = n.dot(w);
    if cos_surface <= 0.0 {
        return [0.0; 3];
    }
    let cos_cone = (-w).dot(light.direction.normalized());
    if cos_cone < light.cone_angle_deg.to_radians().cos() {
        return [0.0; 3];
    }
    let offset = if ng.dot(w) >= 0.0 { ng } else { -ng };
    let origin = p + offset * eps;
    let shadow = Ray { origin, dir: w };
    if bvh.occluded(mesh, &shadow, eps, (light.position - origin).length() * (1.0 - 1e-9)) {
        return [0.0; 3];
    }
    let g = cos_surface / (d * d);
    light.intensity.map(|i| i * g)
}

/// Maps mesh points to indices of a material's surface samples.
#[derive(Debug, Clone)]
pub struct SampleBinding {
    projection: Projection,
    center: Vec3,
    mesh_lo: Vec3,
    mesh_extent: Vec3,
    patch_lo: Vec3,
    patch_extent: Vec3,
    samples: Arc<SurfaceSampleSet>,
}

impl SampleBinding {
    pub fn new(mesh: &Mesh, projection: Projection, samples: Arc<SurfaceSampleSet>) -> Self {
        let (lo, hi) = mesh.bounds();
        let mut plo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut phi = -plo;
        for &p in &samples.points {
            plo = plo.min(p);
            phi = phi.max(p);
        }
        Self {
            projection,
            center: (lo + hi) * 0.5,
            mesh_lo: lo,
            mesh_extent: hi - lo,
            patch_lo: plo,
            patch_extent: phi - plo,
            samples,
        }
    }

    /// Patch coordinates in `[0, 1]^2` for a mesh point.
    pub fn project(&self, p: Vec3) -> (f64, f64) {
        match self.projection {
            Projection::Spherical => {
                let d = p - self.center;
                let len = d.length();
                if len == 0.0 {
                    return (0.5, 0.5);
                }
                let d = d / len;
                let u = 0.5 + d.z.atan2(d.x) / (2.0 * PI);
                let v = d.y.clamp(-1.0, 1.0).acos() / PI;
                (u.clamp(0.0, 1.0), v)
            }
            Projection::Planar => {
                let f = |x: f64, lo: f64, ext: f64| if ext > 0.0 { ((x - lo) / ext).clamp(0.0, 1.0) } else { 0.5 };
                (f(p.x, self.mesh_lo.x, self.mesh_extent.x), f(p.y, self.mesh_lo.y, self.mesh_extent.y))
            }
        }
    }

    /// Index of the sample nearest to the projection of `p`.
    pub fn index_of(&self, p: Vec3) -> usize {
        let (u, v) = self.project(p);
        let target = self.patch_lo
            + Vec3::new(u * self.patch_extent.x, v * self.patch_extent.y, 0.5 * self.patch_extent.z);
        nearest_sample_index(&self.samples, target)
    }
}

/// Nearest sample by Euclidean distance; ties go to the lower index.
pub fn nearest_sample_index(samples: &SurfaceSampleSet, target: Vec3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in samples.points.iter().enumerate() {
        let d = p.distance_squared(target);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// A lit irradiance point prepared for gathering: the term `E_j * A_j` and,
/// for factored materials, its sample index.
#[derive(Debug, Clone, Copy)]
struct GatherTerm {
    position: Vec3,
    flux: [f64; 3],
    sample: usize,
}

/// Evaluates exitant radiance at surface points against a fixed irradiance
/// point set. Points with zero irradiance are dropped up front.
#[derive(Debug, Clone)]
pub struct Gatherer {
    material: Arc<BoundMaterial>,
    binding: Option<SampleBinding>,
    terms: Vec<GatherTerm>,
    radius: Option<f64>,
    /// Factored transport is tabulated per unit patch area; this rescales it
    /// to the mesh so `sum_j T A_j` keeps its meaning.
    transport_scale: f64,
}

impl Gatherer {
    pub fn new(
        scene: &SceneDescription,
        irradiance: &IrradianceSamples,
        settings: &RenderSettings,
    ) -> Result<Self, RenderError> {
        let material = scene.material.clone().ok_or(RenderError::UnboundMaterial)?;
        let (binding, transport_scale) = match material.as_ref() {
            BoundMaterial::Factored { bssrdf, samples, .. } => {
                if samples.len() != bssrdf.n_i() || samples.len() != bssrdf.n_o() {
                    return Err(RenderError::InvalidScene(format!(
                        "material has {} samples but a {}x{} factorization",
                        samples.len(),
                        bssrdf.n_i(),
                        bssrdf.n_o()
                    )));
                }
                let patch_area: f64 = samples.areas.iter().sum();
                let scale = patch_area / scene.mesh.surface_area();
                (Some(SampleBinding::new(&scene.mesh, scene.projection, samples.clone())), scale)
            }
            BoundMaterial::Dipole { .. } => (None, 1.0),
        };
        let s = &irradiance.samples;
        let terms = (0..s.len())
            .filter(|&j| irradiance.irradiance[j].iter().any(|&e| e > 0.0))
            .map(|j| GatherTerm {
                position: s.points[j],
                flux: irradiance.irradiance[j].map(|e| e * s.areas[j]),
                sample: binding.as_ref().map_or(0, |b| b.index_of(s.points[j])),
            })
            .collect();
        Ok(Self { material, binding, terms, radius: settings.gather_truncation_radius, transport_scale })
    }

    pub fn lit_point_count(&self) -> usize {
        self.terms.len()
    }

    /// Radiance leaving surface point `x`. `gathers` counts summed terms and
    /// `evals` adds `k` per factored term or 1 per dipole term.
    pub fn radiance_at(&self, x: Vec3, gathers: &mut u64, evals: &mut u64) -> Result<[f64; 3], RenderError> {
        let r2 = self.radius.map(|r| r * r);
        let within = |t: &GatherTerm| r2.is_none_or(|r2| t.position.distance_squared(x) <= r2);
        let mut acc = [0.0; 3];
        match self.material.as_ref() {
            BoundMaterial::Factored { bssrdf, .. } => {
                let i = self.binding.as_ref().expect("factored materials are bound").index_of(x);
                let k = bssrdf.k() as u64;
                for t in self.terms.iter().filter(|t| within(t)) {
                    let tr = bssrdf.evaluate_rgb(i, t.sample)?;
                    for c in 0..3 {
                        acc[c] += tr[c] * t.flux[c];
                    }
                    *gathers += 1;
                    *evals += k;
                }
                for a in acc.iter_mut() {
                    *a *= self.transport_scale;
                }
            }
            BoundMaterial::Dipole { model, .. } => {
                for t in self.terms.iter().filter(|t| within(t)) {
                    let rd = model.diffuse_reflectance(t.position.distance(x));
                    for c in 0..3 {
                        acc[c] += rd[c] * t.flux[c];
                    }
                    *gathers += 1;
                    *evals += 1;
                }
            }
        }
        Ok(acc.map(|a| a / PI))
    }
}

/// Radiance at one shading point; returns `(radiance, bssrdf_eval_count)`.
pub fn gather_exitant_radiance(
    shading_point: Vec3,
    irradiance: &IrradianceSamples,
    scene: &SceneDescription,
    settings: &RenderSettings,
) -> Result<([f64; 3], u64), RenderError> {
    let g = Gatherer::new(scene, irradiance, settings)?;
    let (mut gathers, mut evals) = (0, 0);
    let l = g.radiance_at(shading_point, &mut gathers, &mut evals)?;
    Ok((l, evals))
}

struct CameraFrame {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    half_h: f64,
    half_w: f64,
}

impl CameraFrame {
    fn new(c: &Camera) -> Self {
        let forward = (c.look_at - c.position).normalized();
        let right = forward.cross(c.up).normalized();
        let up = right.cross(forward);
        let half_h = (c.vfov_deg.to_radians() / 2.0).tan();
        let half_w = half_h * c.width as f64 / c.height as f64;
        Self { origin: c.position, forward, right, up, half_h, half_w }
    }

    /// Ray through continuous image coordinates (x right, y down, in pixels).
    fn ray(&self, c: &Camera, x: f64, y: f64) -> Ray {
        let sx = (2.0 * x / c.width as f64 - 1.0) * self.half_w;
        let sy = (1.0 - 2.0 * y / c.height as f64) * self.half_h;
        Ray { origin: self.origin, dir: (self.forward + self.right * sx + self.up * sy).normalized() }
    }
}

pub fn pixel_rng(seed: u64, pixel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel + 1);
    rng
}

/// Renders the scene. Each pixel draws its jitter from its own RNG stream and
/// rows are summed in a fixed order, so the image does not depend on the
/// thread count. `progress` receives the completed fraction after each row.
pub fn render(
    scene: &SceneDescription,
    settings: &RenderSettings,
    seed: u64,
    progress: Option<&(dyn Fn(f64) + Sync)>,
) -> Result<RenderReport, RenderError> {
    let start = Instant::now();
    scene.validate()?;
    settings.validate()?;
    let material = scene.material.as_ref().ok_or(RenderError::UnboundMaterial)?;

    let mesh = &scene.mesh;
    let bvh = Bvh::build(mesh);
    let irradiance = sample_with_bvh(scene, &bvh, settings.irradiance_sample_count, seed);
    let gatherer = Gatherer::new(scene, &irradiance, settings)?;

    let cam = &scene.camera;
    let frame = CameraFrame::new(cam);
    let (w, h) = (cam.width, cam.height);
    let spp = settings.samples_per_pixel;
    let done = AtomicUsize::new(0);

    let render_row = |y: usize| -> Result<(Vec<f32>, u64, u64), RenderError> {
        let mut row = Vec::with_capacity(3 * w);
        let (mut gathers, mut evals) = (0u64, 0u64);
        for x in 0..w {
            let mut rng = pixel_rng(seed, (y * w + x) as u64);
            let mut sum = [0.0; 3];
            for _ in 0..spp {
                let (jx, jy): (f64, f64) = (rng.random(), rng.random());
                let ray = frame.ray(cam, x as f64 + jx, y as f64 + jy);
                let l = match bvh.intersect(mesh, &ray, 0.0, f64::INFINITY) {
                    Some(hit) => gatherer.radiance_at(mesh.point_at(hit.triangle, hit.b1, hit.b2), &mut gathers, &mut evals)?,
                    None => scene.background,
                };
                for c in 0..3 {
                    sum[c] += l[c];
                }
            }
            row.extend(sum.map(|s| (s / spp as f64) as f32));
        }
        if let Some(cb) = progress {
            cb((done.fetch_add(1, Ordering::SeqCst) + 1) as f64 / h as f64);
        }
        Ok((row, gathers, evals))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.thread_count)
        .build()
        .map_err(|e| RenderError::ThreadPool(e.to_string()))?;
    let rows: Vec<(Vec<f32>, u64, u64)> =
        pool.install(|| (0..h).into_par_iter().map(render_row).collect::<Result<_, _>>())?;

    let mut data = Vec::with_capacity(3 * w * h);
    let (mut gathers, mut evals) = (0u64, 0u64);
    for (row, g, e) in rows {
        data.extend(row);
        gathers += g;
        evals += e;
    }
    let image = ImageBuffer { width: w, height: h, data };
    if !image.is_finite() {
        return Err(RenderError::InvalidScene("render produced non-finite radiance".into()));
    }

    let peak_memory_estimate = (mesh.positions.len() * 2 * std::mem::size_of::<Vec3>()
        + mesh.triangles.len() * std::mem::size_of::<[u32; 3]>()
        + bvh.memory_bytes()
        + irradiance.samples.len() * (2 * std::mem::size_of::<Vec3>() + 4 * std::mem::size_of::<f64>())
        + gatherer.lit_point_count() * std::mem::size_of::<GatherTerm>()
        + image.data.len() * std::mem::size_of::<f32>()) as u64
        + material.storage_bytes();

    Ok(RenderReport {
        image,
        width: w,
        height: h,
        wall_time: start.elapsed().as_secs_f64(),
        bssrdf_eval_count: evals,
        gather_count: gathers,
        k_used: material.k(),
        peak_memory_estimate,
        material: material.descriptor().name.clone(),
        seed,
    })
}
