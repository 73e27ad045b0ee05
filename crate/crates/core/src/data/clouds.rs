use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, SamgcError};
use crate::tensor::Tensor;

const TORUS_MAJOR: f64 = 1.0;
const TORUS_MINOR: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Sphere,
    Cube,
    Plane,
    Torus,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Sphere, Shape::Cube, Shape::Plane, Shape::Torus];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Plane => "plane",
            Shape::Torus => "torus",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = SamgcError;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SamgcError::Config(format!("unknown shape `{s}`")))
    }
}

/// `n` points uniform on the surface of `shape` in its canonical pose:
/// unit sphere, cube `[-1,1]^3`, square `[-1,1]^2` at `z = 0`, and a torus
/// with radii 1 and 0.35 around the z axis.
pub fn sample_shape<R: Rng + ?Sized>(shape: Shape, n: usize, rng: &mut R) -> Tensor {
    let mut out = Tensor::zeros(n, 3);
    for i in 0..n {
        let p = match shape {
            Shape::Sphere => loop {
                let v: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if norm > 1e-9 {
                    break [v[0] / norm, v[1] / norm, v[2] / norm];
                }
            },
            Shape::Cube => {
                let face = rng.random_range(0..6);
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let s = if face % 2 == 0 { 1.0 } else { -1.0 };
                match face / 2 {
                    0 => [s, a, b],
                    1 => [a, s, b],
                    _ => [a, b, s],
                }
            }
            Shape::Plane => [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0],
            Shape::Torus => loop {
                let theta = rng.random_range(0.0..2.0 * PI);
                let phi = rng.random_range(0.0..2.0 * PI);
                // area element is proportional to R + r cos(phi)
                let accept = (TORUS_MAJOR + TORUS_MINOR * phi.cos()) / (TORUS_MAJOR + TORUS_MINOR);
                if rng.random::<f64>() < accept {
                    let ring = TORUS_MAJOR + TORUS_MINOR * phi.cos();
                    break [ring * theta.cos(), ring * theta.sin(), TORUS_MINOR * phi.sin()];
                }
            },
        };
        out.row_mut(i).copy_from_slice(&p);
    }
    out
}

/// Uniformly random rotation matrix from a normalised Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let (w, x, y, z) = loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate(points: &mut Tensor, rot: &[[f64; 3]; 3]) {
    for i in 0..points.rows() {
        let p = points.row(i).to_vec();
        let row = points.row_mut(i);
        for (r, out) in rot.iter().zip(row.iter_mut()) {
            *out = r[0] * p[0] + r[1] * p[1] + r[2] * p[2];
        }
    }
}

/// Centers on the centroid and scales the farthest point to norm 1.
pub fn normalize_unit_sphere(points: &mut Tensor) {
    let n = points.rows();
    if n == 0 {
        return;
    }
    let mut centroid = [0.0; 3];
    for i in 0..n {
        for (c, x) in centroid.iter_mut().zip(points.row(i)) {
            *c += x / n as f64;
        }
    }
    let mut far: f64 = 0.0;
    for i in 0..n {
        let row = points.row_mut(i);
        for (x, c) in row.iter_mut().zip(centroid) {
            *x -= c;
        }
        far = far.max(row.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    if far > 0.0 {
        points.data_mut().iter_mut().for_each(|x| *x /= far);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCloudSet {
    pub clouds: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: Vec<Shape>,
    pub seed: u64,
}

impl SyntheticCloudSet {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// `per_class` clouds of every shape, class-interleaved, each jittered by
/// Gaussian noise, randomly rotated and normalised into the unit sphere.
pub fn gen_synthetic_clouds(
    classes: &[Shape],
    per_class: usize,
    n_pts: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticCloudSet> {
    if n_pts < 16 {
        return Err(SamgcError::Config(format!("clouds need at least 16 points, got {n_pts}")));
    }
    if classes.is_empty() {
        return Err(SamgcError::Config("no shape classes given".into()));
    }
    let noise = Normal::new(0.0, noise_sigma)
        .map_err(|e| SamgcError::Config(format!("noise sigma {noise_sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clouds = Vec::with_capacity(per_class * classes.len());
    let mut labels = Vec::with_capacity(clouds.capacity());
    for _ in 0..per_class {
        for (label, &shape) in classes.iter().enumerate() {
            let mut pts = sample_shape(shape, n_pts, &mut rng);
            if noise_sigma > 0.0 {
                pts.data_mut().iter_mut().for_each(|x| *x += noise.sample(&mut rng));
            }
            rotate(&mut pts, &random_rotation(&mut rng));
            normalize_unit_sphere(&mut pts);
            clouds.push(pts);
            labels.push(label);
        }
    }
    Ok(SyntheticCloudSet {
        clouds,
        labels,
        classes: classes.to_vec(),
        seed,
    })
}
