//! Two-dimensional simulation data: entangled spirals and four shapes.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Result};
use crate::rng;

/// Angular extent of each spiral arm, in turns.
pub const SPIRAL_TURNS: f64 = 1.5;

/// Four-shapes layout. Each shape occupies its own region of the plane.
pub mod shapes {
    pub const GAUSSIAN_CENTER: (f64, f64) = (0.0, 0.0);
    pub const GAUSSIAN_SD: f64 = 0.5;
    /// Square `[x0, x0 + side] × [y0, y0 + side]`.
    pub const SQUARE_ORIGIN: (f64, f64) = (3.0, -1.0);
    pub const SQUARE_SIDE: f64 = 2.0;
    /// Triangle vertices.
    pub const TRIANGLE: [(f64, f64); 3] = [(-1.0, 3.0), (1.0, 3.0), (0.0, 5.0)];
    /// Sine band `y = y0 + amp·sin(freq·(x − x0))` for `x ∈ [x0, x0 + len]`,
    /// with vertical uniform jitter of at most `half_width`.
    pub const WAVE_ORIGIN: (f64, f64) = (2.0, 4.0);
    pub const WAVE_LENGTH: f64 = 3.0;
    pub const WAVE_AMPLITUDE: f64 = 0.5;
    pub const WAVE_FREQUENCY: f64 = std::f64::consts::PI;
    pub const WAVE_HALF_WIDTH: f64 = 0.15;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorParams {
    EntangledSpirals { n: usize, noise_sd: f64, turns: f64, seed: u64 },
    FourShapes { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoints {
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
    pub params: GeneratorParams,
}

impl LabeledPoints {
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&l| l + 1)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "label"])?;
        for (row, l) in self.points.rows().into_iter().zip(&self.labels) {
            w.write_record([row[0].to_string(), row[1].to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Noise-free position on spiral arm `arm` (0 or 1) at parameter
/// `w ∈ [0, turns)`: radius `(2w + 1)/3`, angle `2πw`, second arm rotated
/// by π.
pub fn spiral_arm(w: f64, arm: usize) -> (f64, f64) {
    let r = (2.0 * w + 1.0) / 3.0;
    let angle = 2.0 * std::f64::consts::PI * w;
    let sign = if arm == 0 { 1.0 } else { -1.0 };
    (sign * r * angle.cos(), sign * r * angle.sin())
}

/// Two interleaved spiral arms of `n/2` points each, evenly spaced in the
/// arm parameter, with isotropic Gaussian noise. Labels are the arm index.
pub fn entangled_spirals(n: usize, noise_sd: f64, seed: u64) -> Result<LabeledPoints> {
    if !n.is_multiple_of(2) || n == 0 {
        return Err(DataError::OddN(n));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(DataError::InvalidParameter(format!("noise sd {noise_sd}")));
    }
    let half = n / 2;
    let mut stream = rng::stream(rng::derive(seed, &[rng::tag::SPIRALS]), 0);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
    let mut points = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for arm in 0..2 {
        for i in 0..half {
            let w = SPIRAL_TURNS * i as f64 / half as f64;
            let (x, y) = spiral_arm(w, arm);
            let row = arm * half + i;
            points[[row, 0]] = x + noise.sample(&mut stream);
            points[[row, 1]] = y + noise.sample(&mut stream);
            labels.push(arm);
        }
    }
    Ok(LabeledPoints {
        points,
        labels,
        params: GeneratorParams::EntangledSpirals {
            n,
            noise_sd,
            turns: SPIRAL_TURNS,
            seed,
        },
    })
}

/// Which shape a class index denotes in [`four_shapes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Gaussian,
    Square,
    Triangle,
    Wave,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Gaussian, Shape::Square, Shape::Triangle, Shape::Wave];

    /// Membership test for the bounded shapes; the Gaussian accepts
    /// everything.
    pub fn contains(self, x: f64, y: f64) -> bool {
        use shapes::*;
        match self {
            Shape::Gaussian => true,
            Shape::Square => {
                let (x0, y0) = SQUARE_ORIGIN;
                (x0..=x0 + SQUARE_SIDE).contains(&x) && (y0..=y0 + SQUARE_SIDE).contains(&y)
            }
            Shape::Triangle => {
                let [a, b, c] = TRIANGLE;
                let cross = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
                let (d1, d2, d3) = (cross(a, b), cross(b, c), cross(c, a));
                let eps = 1e-12;
                (d1 >= -eps && d2 >= -eps && d3 >= -eps) || (d1 <= eps && d2 <= eps && d3 <= eps)
            }
            Shape::Wave => {
                let (x0, y0) = WAVE_ORIGIN;
                let centre = y0 + WAVE_AMPLITUDE * (WAVE_FREQUENCY * (x - x0)).sin();
                (x0..=x0 + WAVE_LENGTH).contains(&x) && (y - centre).abs() <= WAVE_HALF_WIDTH + 1e-12
            }
        }
    }
}

/// `n` points split as evenly as possible over a Gaussian blob, a filled
/// square, a filled triangle and a sinusoidal band. Label `c` is
/// `Shape::ALL[c]`.
pub fn four_shapes(n: usize, seed: u64) -> Result<LabeledPoints> {
    use shapes::*;
    if n < 4 {
        return Err(DataError::InvalidParameter(format!("four shapes need n ≥ 4, got {n}")));
    }
    let mut stream = rng::stream(rng::derive(seed, &[rng::tag::SHAPES]), 0);
    let gauss = Normal::new(0.0, GAUSSIAN_SD).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
    let mut points = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (c, shape) in Shape::ALL.iter().enumerate() {
        let count = n / 4 + usize::from(c < n % 4);
        for _ in 0..count {
            let (x, y) = match shape {
                Shape::Gaussian => (
                    GAUSSIAN_CENTER.0 + gauss.sample(&mut stream),
                    GAUSSIAN_CENTER.1 + gauss.sample(&mut stream),
                ),
                Shape::Square => (
                    SQUARE_ORIGIN.0 + SQUARE_SIDE * stream.random::<f64>(),
                    SQUARE_ORIGIN.1 + SQUARE_SIDE * stream.random::<f64>(),
                ),
                Shape::Triangle => {
                    let (mut u, mut v): (f64, f64) = (stream.random(), stream.random());
                    if u + v > 1.0 {
                        u = 1.0 - u;
                        v = 1.0 - v;
                    }
                    let [a, b, c] = TRIANGLE;
                    (
                        a.0 + u * (b.0 - a.0) + v * (c.0 - a.0),
                        a.1 + u * (b.1 - a.1) + v * (c.1 - a.1),
                    )
                }
                Shape::Wave => {
                    let x = WAVE_ORIGIN.0 + WAVE_LENGTH * stream.random::<f64>();
                    let jitter = WAVE_HALF_WIDTH * (2.0 * stream.random::<f64>() - 1.0);
                    let y = WAVE_ORIGIN.1 + WAVE_AMPLITUDE * (WAVE_FREQUENCY * (x - WAVE_ORIGIN.0)).sin() + jitter;
                    (x, y)
                }
            };
            points[[row, 0]] = x;
            points[[row, 1]] = y;
            labels.push(c);
            row += 1;
        }
    }
    Ok(LabeledPoints {
        points,
        labels,
        params: GeneratorParams::FourShapes { n, seed },
    })
}
