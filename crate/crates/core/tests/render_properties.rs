//! Renderer invariants on small versions of the preview scene.

use gensss_core::dipole::DipoleMaterial;
use gensss_core::factor::{compress, TransformParams};
use gensss_core::geometry::Vec3;
use gensss_core::material::{
    synthesize_heterogeneous, Channel, DipoleParams, MaterialDescriptor, MaterialType, Pattern, ScatteringMatrix,
    SurfaceSampleSet,
};
use gensss_core::render::image_io::{decode_pfm, encode_pfm, encode_png};
use gensss_core::render::{
    build_preview_scene, gather_exitant_radiance, read_pfm, render, sample_irradiance_points, write_image,
    BoundMaterial, ImageBuffer, ImageFormat, IrradianceSamples, RenderSettings, SceneDescription, PREVIEW_RADIUS_M,
};
use std::f64::consts::PI;
use std::sync::Arc;

const MARBLE: DipoleParams = DipoleParams { sigma_s_prime: [2190.0, 2620.0, 3000.0], sigma_a: [2.1, 4.1, 7.1], eta: 1.3 };

fn descriptor(name: &str, material_type: MaterialType, k: usize) -> MaterialDescriptor {
    MaterialDescriptor { name: name.into(), material_type, k_parameter: k, source: None, dipole_params: None }
}

fn dipole() -> Arc<BoundMaterial> {
    let mut d = descriptor("marble", MaterialType::Homogeneous, 1);
    d.dipole_params = Some(MARBLE);
    Arc::new(BoundMaterial::Dipole { descriptor: d, model: DipoleMaterial::new(MARBLE).unwrap() })
}

fn factored(pattern: Pattern, k: usize, scale: f64) -> Arc<BoundMaterial> {
    let (samples, t) = synthesize_heterogeneous(64, pattern, 3).unwrap();
    let t = t.map(|m| m.scaled(scale).unwrap());
    let bssrdf = compress(&t, &TransformParams::uniform(0.5 * scale), k).unwrap();
    Arc::new(BoundMaterial::Factored {
        descriptor: descriptor(&format!("{pattern:?}"), MaterialType::Heterogeneous, k),
        bssrdf: Arc::new(bssrdf),
        samples: Arc::new(samples),
    })
}

fn scene(material: Arc<BoundMaterial>, px: usize) -> SceneDescription {
    let mut s = build_preview_scene(Some(material));
    s.camera.width = px;
    s.camera.height = px;
    s
}

fn settings(irradiance: usize, threads: usize) -> RenderSettings {
    RenderSettings { samples_per_pixel: 2, irradiance_sample_count: irradiance, gather_truncation_radius: None, thread_count: threads }
}

#[test]
fn collected_flux_is_bounded_by_emission_and_matches_geometry() {
    let s = build_preview_scene(None);
    let n = 20_000;
    let irr = sample_irradiance_points(&s, &settings(n, 1), 7).unwrap();
    let collected = irr.collected_flux()[0];

    // Per-point estimates E_j * A_total; stratification only lowers the true spread.
    let total_area = s.mesh.surface_area();
    let est: Vec<f64> = irr.irradiance.iter().map(|e| e[0] * total_area).collect();
    let mean = est.iter().sum::<f64>() / n as f64;
    let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sigma = (var / n as f64).sqrt();
    assert!((mean - collected).abs() < 1e-12 * collected);

    let emitted = s.light.flux()[0];
    assert!(collected <= emitted + 3.0 * sigma, "{collected} > {emitted}");

    // The whole sphere sits inside the cone, so it intercepts the solid angle it subtends.
    let d = s.light.position.length();
    let subtended = 2.0 * PI * (1.0 - (1.0 - (PREVIEW_RADIUS_M / d).powi(2)).sqrt());
    let intercepted = s.light.intensity[0] * subtended;
    assert!((collected - intercepted).abs() <= 3.0 * sigma + 0.01 * intercepted, "{collected} vs {intercepted}");
}

#[test]
fn single_point_gather_equals_dipole_term() {
    let s = scene(dipole(), 8);
    let p = Vec3::new(0.0, 0.0, PREVIEW_RADIUS_M);
    let (e, a) = ([1.5, 0.75, 0.25], 3e-7);
    let irr = IrradianceSamples {
        samples: SurfaceSampleSet::new(vec![p], vec![Vec3::new(0.0, 0.0, 1.0)], vec![a]).unwrap(),
        irradiance: vec![e],
    };
    let x = Vec3::new(0.0, PREVIEW_RADIUS_M * 0.1, PREVIEW_RADIUS_M * 0.995);
    let (l, evals) = gather_exitant_radiance(x, &irr, &s, &settings(1, 1)).unwrap();
    assert_eq!(evals, 1);

    let r = x.distance(p);
    for c in 0..3 {
        let st = MARBLE.sigma_s_prime[c] + MARBLE.sigma_a[c];
        let f_dr = -1.440 / 1.69 + 0.710 / 1.3 + 0.668 + 0.0636 * 1.3;
        let boundary = (1.0 + f_dr) / (1.0 - f_dr);
        let (z_r, z_v) = (1.0 / st, (1.0 + 4.0 * boundary / 3.0) / st);
        let s_tr = (3.0 * MARBLE.sigma_a[c] * st).sqrt();
        let pole = |z: f64| {
            let d = r.hypot(z);
            z * (1.0 + s_tr * d) * (-s_tr * d).exp() / d.powi(3)
        };
        let rd = MARBLE.sigma_s_prime[c] / st / (4.0 * PI) * (pole(z_r) + pole(z_v));
        let want = rd * e[c] * a / PI;
        assert!((l[c] - want).abs() <= 1e-12 * want, "channel {c}: {} vs {want}", l[c]);
    }

    let dark = IrradianceSamples { irradiance: vec![[0.0; 3]], ..irr };
    assert_eq!(gather_exitant_radiance(x, &dark, &s, &settings(1, 1)).unwrap(), ([0.0; 3], 0));
}

#[test]
fn radiance_is_linear_in_light_intensity() {
    for m in [dipole(), factored(Pattern::Chessboard4, 5, 1.0)] {
        let mut a = scene(m, 24);
        a.background = [0.0; 3];
        let mut b = a.clone();
        b.light = a.light.scaled(2.0);
        let ra = render(&a, &settings(256, 1), 3, None).unwrap();
        let rb = render(&b, &settings(256, 1), 3, None).unwrap();
        assert!(ra.image.mean() > 0.0);
        for (x, y) in ra.image.data.iter().zip(&rb.image.data) {
            assert_eq!(2.0 * x, *y);
        }
    }
}

#[test]
fn radiance_is_linear_in_transport_scale() {
    let mut a = scene(factored(Pattern::VeinedMarble, 5, 1.0), 24);
    a.background = [0.0; 3];
    let mut b = a.clone();
    b.material = Some(factored(Pattern::VeinedMarble, 5, 2.0));
    let ra = render(&a, &settings(256, 1), 3, None).unwrap();
    let rb = render(&b, &settings(256, 1), 3, None).unwrap();
    assert!(ra.image.mean() > 0.0);
    for (x, y) in ra.image.data.iter().zip(&rb.image.data) {
        assert_eq!(2.0 * x, *y);
    }
}

#[test]
fn bit_identical_across_thread_counts() {
    for m in [dipole(), factored(Pattern::Chessboard8, 10, 1.0)] {
        let s = scene(m, 40);
        let base = render(&s, &settings(300, 1), 11, None).unwrap();
        for threads in [2, 3, 8] {
            let r = render(&s, &settings(300, threads), 11, None).unwrap();
            assert_eq!(r.image, base.image, "{threads} threads");
            assert_eq!((r.bssrdf_eval_count, r.gather_count), (base.bssrdf_eval_count, base.gather_count));
        }
        let other = render(&s, &settings(300, 1), 12, None).unwrap();
        assert_ne!(other.image, base.image);
    }
}

#[test]
fn eval_count_scales_exactly_with_rank() {
    let counts: Vec<(u64, u64, usize)> = [1, 5, 10]
        .into_iter()
        .map(|k| {
            let r = render(&scene(factored(Pattern::Chessboard4, k, 1.0), 32), &settings(200, 1), 5, None).unwrap();
            (r.bssrdf_eval_count, r.gather_count, r.k_used)
        })
        .collect();
    let (base, gathers, _) = counts[0];
    assert!(base > 0);
    assert_eq!(base, gathers);
    for (&(evals, g, k), want_k) in counts.iter().zip([1, 5, 10]) {
        assert_eq!(g, gathers);
        assert_eq!(k, want_k);
        assert_eq!(evals, want_k as u64 * base);
    }
    let d = render(&scene(dipole(), 32), &settings(200, 1), 5, None).unwrap();
    assert_eq!(d.bssrdf_eval_count, d.gather_count);
    assert_eq!(d.k_used, 1);
}

#[test]
fn spatial_variation_changes_the_image() {
    let uniform = render(&scene(factored(Pattern::Uniform, 5, 1.0), 32), &settings(300, 1), 1, None).unwrap();
    let chess = render(&scene(factored(Pattern::Chessboard4, 5, 1.0), 32), &settings(300, 1), 1, None).unwrap();
    assert!(uniform.image.l2_distance(&chess.image).unwrap() > 0.0);
}

#[test]
fn truncation_radius_limits_the_gather() {
    let s = scene(dipole(), 24);
    let full = render(&s, &settings(300, 1), 2, None).unwrap();
    let huge = RenderSettings { gather_truncation_radius: Some(1.0), ..settings(300, 1) };
    assert_eq!(render(&s, &huge, 2, None).unwrap().image, full.image);
    let tight = RenderSettings { gather_truncation_radius: Some(PREVIEW_RADIUS_M * 0.2), ..settings(300, 1) };
    let t = render(&s, &tight, 2, None).unwrap();
    assert!(t.gather_count < full.gather_count);
    assert!(t.image.data.iter().zip(&full.image.data).all(|(a, b)| a <= b));
}

#[test]
fn misses_show_the_background() {
    let mut s = scene(dipole(), 16);
    s.background = [0.25, 0.5, 0.125];
    let r = render(&s, &settings(64, 1), 0, None).unwrap();
    assert_eq!(r.image.pixel(0, 0), [0.25, 0.5, 0.125]);
    assert_eq!(r.image.pixel(15, 15), [0.25, 0.5, 0.125]);

    s.camera.look_at = s.camera.position * 2.0;
    let away = render(&s, &settings(64, 1), 0, None).unwrap();
    assert!((0..16).all(|y| (0..16).all(|x| away.image.pixel(x, y) == [0.25, 0.5, 0.125])));
    assert_eq!(away.bssrdf_eval_count, 0);
}

#[test]
fn progress_reaches_completion() {
    let s = scene(dipole(), 12);
    let seen = std::sync::Mutex::new(Vec::new());
    let cb = |f: f64| seen.lock().unwrap().push(f);
    render(&s, &settings(32, 2), 0, Some(&cb)).unwrap();
    let mut seen = seen.into_inner().unwrap();
    seen.sort_by(f64::total_cmp);
    assert_eq!(seen.len(), 12);
    assert_eq!(*seen.last().unwrap(), 1.0);
}

#[test]
fn png_applies_the_srgb_curve() {
    let values = [0.0f32, 0.002, 0.0031308, 0.05, 0.18, 0.5, 0.9, 1.0, 2.0];
    // Reference bytes computed offline from the piecewise sRGB curve.
    let expected = [0u8, 7, 10, 63, 118, 188, 243, 255, 255];
    let data = values.iter().flat_map(|&v| [v; 3]).collect();
    let img = ImageBuffer::from_data(3, 3, data).unwrap();
    let decoded = image::load_from_memory(&encode_png(&img).unwrap()).unwrap().to_rgb8();
    assert_eq!(decoded.dimensions(), (3, 3));
    for (i, px) in decoded.pixels().enumerate() {
        assert_eq!(px.0, [expected[i]; 3], "value {}", values[i]);
    }

    let black = image::load_from_memory(&encode_png(&ImageBuffer::new(4, 2)).unwrap()).unwrap().to_rgb8();
    assert!(black.pixels().all(|p| p.0 == [0, 0, 0]));

    let mut bad = ImageBuffer::new(1, 1);
    bad.data[0] = f32::NAN;
    assert!(encode_png(&bad).is_err());
}

#[test]
fn pfm_round_trip() {
    let data: Vec<f32> = (0..5 * 3 * 3).map(|i| i as f32 * 0.37 - 2.0).collect();
    let img = ImageBuffer::from_data(5, 3, data).unwrap();
    let bytes = encode_pfm(&img).unwrap();
    assert!(bytes.starts_with(b"PF\n5 3\n-1"));
    assert_eq!(decode_pfm(&bytes).unwrap(), img);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pfm");
    write_image(&img, &path, ImageFormat::PfmLinear).unwrap();
    assert_eq!(read_pfm(&path).unwrap(), img);
    assert!(decode_pfm(&bytes[..bytes.len() - 2]).is_err());
}

#[test]
fn irradiance_points_are_stratified_by_area() {
    let s = build_preview_scene(None);
    let a = sample_irradiance_points(&s, &settings(512, 1), 4).unwrap();
    let b = sample_irradiance_points(&s, &settings(512, 1), 4).unwrap();
    assert_eq!(a.samples, b.samples);
    let area = s.mesh.surface_area() / 512.0;
    assert!(a.samples.areas.iter().all(|&x| (x - area).abs() < 1e-15));
    assert!(a.samples.points.iter().all(|p| (p.length() - PREVIEW_RADIUS_M).abs() < 0.01 * PREVIEW_RADIUS_M));
    assert!(a.irradiance.iter().all(|e| e.iter().all(|&v| v >= 0.0 && v.is_finite())));
    // The side facing away from the light is dark.
    for (p, e) in a.samples.points.iter().zip(&a.irradiance) {
        if p.dot(s.light.position) < 0.0 {
            assert_eq!(*e, [0.0; 3]);
        }
    }
}

#[test]
fn scattering_matrix_scaling_is_checked() {
    let m = ScatteringMatrix::new(Channel::R, gensss_core::linalg::Matrix::from_vec(1, 2, vec![1.0, 2.0])).unwrap();
    assert_eq!(m.scaled(3.0).unwrap().values().as_slice(), &[3.0, 6.0]);
    assert!(m.scaled(-1.0).is_err());
}
