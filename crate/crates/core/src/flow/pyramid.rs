use crate::model::{bilinear_clamped, FrameImage};

/// One pyramid level: intensities plus central-difference gradients.
#[derive(Debug, Clone)]
pub(crate) struct Level {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub grad_x: Vec<f32>,
    pub grad_y: Vec<f32>,
}

impl Level {
    fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        let mut grad_x = vec![0f32; data.len()];
        let mut grad_y = vec![0f32; data.len()];
        for y in 0..height {
            let up = y.saturating_sub(1);
            let down = (y + 1).min(height - 1);
            for x in 0..width {
                let left = x.saturating_sub(1);
                let right = (x + 1).min(width - 1);
                let i = y * width + x;
                grad_x[i] = 0.5 * (data[y * width + right] - data[y * width + left]);
                grad_y[i] = 0.5 * (data[down * width + x] - data[up * width + x]);
            }
        }
        Self {
            width,
            height,
            data,
            grad_x,
            grad_y,
        }
    }

    #[inline]
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        bilinear_clamped(&self.data, self.width, self.height, u, v)
    }

    #[inline]
    pub fn sample_grad(&self, u: f64, v: f64) -> (f64, f64) {
        (
            bilinear_clamped(&self.grad_x, self.width, self.height, u, v),
            bilinear_clamped(&self.grad_y, self.width, self.height, u, v),
        )
    }
}

/// Gaussian pyramid: level `l + 1` is level `l` blurred with the 5-tap binomial
/// kernel and decimated by 2, so index coordinates halve exactly.
#[derive(Debug, Clone)]
pub(crate) struct Pyramid {
    pub levels: Vec<Level>,
}

impl Pyramid {
    pub fn build(frame: &FrameImage, max_levels: usize) -> Self {
        let mut levels = vec![Level::new(
            frame.width(),
            frame.height(),
            frame.pixels().to_vec(),
        )];
        while levels.len() < max_levels {
            let prev = levels.last().expect("non-empty");
            if prev.width < 4 || prev.height < 4 {
                break;
            }
            let (w, h, data) = pyr_down(&prev.data, prev.width, prev.height);
            levels.push(Level::new(w, h, data));
        }
        Self { levels }
    }
}

const BINOMIAL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn pyr_down(data: &[f32], width: usize, height: usize) -> (usize, usize, Vec<f32>) {
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut horizontal = vec![0f32; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0f32;
            for (t, k) in BINOMIAL.iter().enumerate() {
                acc += k * data[y * width + clamp(x as isize + t as isize - 2, width)];
            }
            horizontal[y * width + x] = acc;
        }
    }
    let (w2, h2) = (width.div_ceil(2), height.div_ceil(2));
    let mut out = vec![0f32; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            let mut acc = 0f32;
            for (t, k) in BINOMIAL.iter().enumerate() {
                acc += k * horizontal[clamp(2 * y as isize + t as isize - 2, height) * width + 2 * x];
            }
            out[y * w2 + x] = acc.clamp(0.0, 1.0);
        }
    }
    (w2, h2, out)
}
