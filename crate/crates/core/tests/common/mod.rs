#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uwvf_core::basis::reference_element;
use uwvf_core::geometry::Vec3;
use uwvf_core::mesh::{build_topology, ElementKind, Material, Mesh};
use uwvf_core::C64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_kind(rng: &mut ChaCha8Rng) -> ElementKind {
    ElementKind::ALL[rng.gen_range(0..3)]
}

/// Lossless, lossy and plasma-like materials.
pub fn random_material(rng: &mut ChaCha8Rng, lossless: bool) -> Material {
    let eps = if lossless || rng.gen_bool(0.3) {
        C64::new(rng.gen_range(1.0..4.0), 0.0)
    } else if rng.gen_bool(0.5) {
        C64::new(rng.gen_range(1.0..4.0), rng.gen_range(0.1..1.0))
    } else {
        C64::new(rng.gen_range(-2.0..-0.5), rng.gen_range(0.1..1.0))
    };
    let mu = if lossless { C64::new(rng.gen_range(1.0..2.0), 0.0) } else { C64::new(rng.gen_range(1.0..2.0), rng.gen_range(0.0..0.3)) };
    Material::new(eps, mu)
}

/// Reference element of `kind` with jittered vertices, scaled and shifted.
pub fn random_element(rng: &mut ChaCha8Rng, kind: ElementKind, material: Material) -> Mesh {
    let mut raw = reference_element(kind).to_raw();
    let scale = rng.gen_range(0.5..2.0);
    let shift = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    for v in &mut raw.vertices {
        let jitter = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        *v = (*v + jitter) * scale + shift;
    }
    raw.materials = vec![material];
    build_topology(raw).expect("jittered element stays valid")
}

pub fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn random_body(rng: &mut ChaCha8Rng, kind: ElementKind, lossless: bool) -> Mesh {
    let material = random_material(rng, lossless);
    random_element(rng, kind, material)
}
