//! Textured surfaces (bounded planes and ellipsoids) with analytic ray
//! intersection. Textures are band-limited sums of sinusoids so the scene is
//! smooth enough to splat yet carries gradient everywhere for tracking.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub enum Surface {
    /// Bounded plane patch: origin + u * edge_u + v * edge_v, u, v in [0,1].
    /// Edges are orthogonal by construction.
    Rect {
        origin: Vector3<f64>,
        edge_u: Vector3<f64>,
        edge_v: Vector3<f64>,
    },
    Ellipsoid {
        center: Vector3<f64>,
        radii: Vector3<f64>,
    },
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: Vector3<f64>,
    freq: Vector2<f64>,
    phase: f64,
}

#[derive(Debug, Clone)]
pub struct Texture {
    base: Vector3<f64>,
    waves: Vec<Wave>,
}

impl Texture {
    fn sample(&self, u: f64, v: f64) -> Vector3<f64> {
        let mut c = self.base;
        for w in &self.waves {
            let s = (2.0 * std::f64::consts::PI * (w.freq.x * u + w.freq.y * v) + w.phase).sin();
            c += w.amp * s;
        }
        Vector3::new(c.x.clamp(0.0, 1.0), c.y.clamp(0.0, 1.0), c.z.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    /// Box footprint: walls at x = +-extent/2 and z = extent (far), z = -3.
    pub extent: f64,
    pub boulders: usize,
    pub panels: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            extent: 10.0,
            boulders: 5,
            panels: 2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    surfaces: Vec<(Surface, Texture)>,
}

/// A ray hit: parameter t (camera-z when the direction is z-normalized),
/// surface index, and the albedo at the hit point.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub surface: usize,
    pub color: Vector3<f64>,
}

const T_MIN: f64 = 0.05;

impl SyntheticScene {
    pub fn build(spec: SceneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let e = spec.extent;
        let half = e / 2.0;
        let mut surfaces = Vec::new();
        let tex = |rng: &mut ChaCha8Rng| -> Texture {
            let base = Vector3::new(
                rng.random_range(0.3..0.65),
                rng.random_range(0.3..0.65),
                rng.random_range(0.3..0.65),
            );
            let n = rng.random_range(3..6);
            let waves = (0..n)
                .map(|_| Wave {
                    amp: Vector3::new(
                        rng.random_range(0.03..0.13),
                        rng.random_range(0.03..0.13),
                        rng.random_range(0.03..0.13),
                    ),
                    freq: Vector2::new(
                        rng.random_range(1.5..12.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                        rng.random_range(1.5..12.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    ),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                })
                .collect();
            Texture { base, waves }
        };

        // Camera travels near y = 0 looking +z; y points down, ground below.
        let ground_y = 1.2;
        let ceil_y = -2.2;
        let z_near_wall = -3.0;
        let z_far_wall = e;
        // Ground and ceiling.
        surfaces.push((
            Surface::Rect {
                origin: Vector3::new(-half, ground_y, z_near_wall),
                edge_u: Vector3::new(e, 0.0, 0.0),
                edge_v: Vector3::new(0.0, 0.0, z_far_wall - z_near_wall),
            },
            tex(&mut rng),
        ));
        surfaces.push((
            Surface::Rect {
                origin: Vector3::new(-half, ceil_y, z_near_wall),
                edge_u: Vector3::new(e, 0.0, 0.0),
                edge_v: Vector3::new(0.0, 0.0, z_far_wall - z_near_wall),
            },
            tex(&mut rng),
        ));
        // Four walls.
        let wall_h = ground_y - ceil_y;
        for (origin, edge_u) in [
            (
                Vector3::new(-half, ceil_y, z_far_wall),
                Vector3::new(e, 0.0, 0.0),
            ),
            (
                Vector3::new(-half, ceil_y, z_near_wall),
                Vector3::new(e, 0.0, 0.0),
            ),
            (
                Vector3::new(-half, ceil_y, z_near_wall),
                Vector3::new(0.0, 0.0, z_far_wall - z_near_wall),
            ),
            (
                Vector3::new(half, ceil_y, z_near_wall),
                Vector3::new(0.0, 0.0, z_far_wall - z_near_wall),
            ),
        ] {
            surfaces.push((
                Surface::Rect {
                    origin,
                    edge_u,
                    edge_v: Vector3::new(0.0, wall_h, 0.0),
                },
                tex(&mut rng),
            ));
        }
        // Boulders sitting on the ground.
        for _ in 0..spec.boulders {
            let r = Vector3::new(
                rng.random_range(0.25..0.7),
                rng.random_range(0.25..0.7),
                rng.random_range(0.25..0.7),
            );
            let center = Vector3::new(
                rng.random_range(-half * 0.8..half * 0.8),
                ground_y - r.y,
                rng.random_range(1.5..z_far_wall - 1.0),
            );
            surfaces.push((Surface::Ellipsoid { center, radii: r }, tex(&mut rng)));
        }
        // Tilted floating panels.
        for _ in 0..spec.panels {
            let origin = Vector3::new(
                rng.random_range(-half * 0.7..half * 0.7),
                rng.random_range(-1.2..0.6),
                rng.random_range(2.0..z_far_wall - 1.5),
            );
            let du = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.4..0.4),
                rng.random_range(-1.0..1.0),
            )
            .normalize()
                * rng.random_range(0.8..1.6);
            let mut dv = du.cross(&Vector3::new(0.0, 1.0, 0.0));
            if dv.norm() < 1e-6 {
                dv = du.cross(&Vector3::new(1.0, 0.0, 0.0));
            }
            let dv = dv.normalize() * rng.random_range(0.6..1.2);
            surfaces.push((
                Surface::Rect {
                    origin,
                    edge_u: du,
                    edge_v: dv,
                },
                tex(&mut rng),
            ));
        }
        SyntheticScene { spec, surfaces }
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &Surface> {
        self.surfaces.iter().map(|(s, _)| s)
    }

    /// Closest intersection of the ray `origin + t * dir` with any surface.
    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (idx, (surface, texture)) in self.surfaces.iter().enumerate() {
            if let Some((t, u, v)) = intersect(surface, origin, dir) {
                if best.as_ref().is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        surface: idx,
                        color: texture.sample(u, v),
                    });
                }
            }
        }
        best
    }
}

fn intersect(
    surface: &Surface,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    match surface {
        Surface::Rect {
            origin: o,
            edge_u,
            edge_v,
        } => {
            let normal = edge_u.cross(edge_v);
            let denom = normal.dot(dir);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = normal.dot(&(o - origin)) / denom;
            if t < T_MIN {
                return None;
            }
            let p = origin + dir * t - o;
            let u = p.dot(edge_u) / edge_u.norm_squared();
            let v = p.dot(edge_v) / edge_v.norm_squared();
            if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
                Some((t, u, v))
            } else {
                None
            }
        }
        Surface::Ellipsoid { center, radii } => {
            let o = (origin - center).component_div(radii);
            let d = dir.component_div(radii);
            let a = d.norm_squared();
            let b = 2.0 * o.dot(&d);
            let c = o.norm_squared() - 1.0;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t0 = (-b - sq) / (2.0 * a);
            let t1 = (-b + sq) / (2.0 * a);
            let t = if t0 >= T_MIN {
                t0
            } else if t1 >= T_MIN {
                t1
            } else {
                return None;
            };
            let n = (o + d * t).normalize();
            let u = (n.y.atan2(n.x) / std::f64::consts::TAU).rem_euclid(1.0);
            let v = (n.z.clamp(-1.0, 1.0).acos()) / std::f64::consts::PI;
            Some((t, u, v))
        }
    }
}
