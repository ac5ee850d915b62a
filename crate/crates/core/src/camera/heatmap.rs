//! Gaussian heatmaps, soft-argmax readout and bilinear feature sampling.
//!
//! Grid conventions: pixel `(0, 0)` is the center of the top-left cell, `u`
//! runs along columns and `v` along rows.

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// Channel-major `channels × height × width` grid of floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Per-keypoint likelihood maps.
pub type Heatmap = Grid;
/// Image feature maps sampled at reprojected keypoints.
pub type FeatureMap = Grid;

impl Grid {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "grid data",
                channels * height * width,
                data.len(),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }
}

/// Renders `exp(-‖q - p‖² / (2σ²))` over a `width × height` grid.
pub fn render_gaussian_heatmap(
    p: Vector2<f64>,
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    add_gaussian(&mut out, p, width, height, sigma_px, 1.0);
    out
}

/// Adds `scale · exp(-‖q - p‖² / (2σ²))` to `out` in place.
pub(crate) fn add_gaussian(
    out: &mut [f64],
    p: Vector2<f64>,
    width: usize,
    height: usize,
    sigma_px: f64,
    scale: f64,
) {
    assert!(sigma_px > 0.0, "sigma must be positive");
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    for row in 0..height {
        let dv = row as f64 - p.y;
        for col in 0..width {
            let du = col as f64 - p.x;
            out[row * width + col] += scale * (-(du * du + dv * dv) * inv).exp();
        }
    }
}

/// Expected pixel coordinate under `softmax(temperature · h)`.
pub fn soft_argmax(h: &[f64], width: usize, height: usize, temperature: f64) -> Vector2<f64> {
    let w = softmax_weights(h, temperature);
    let mut u = 0.0;
    let mut v = 0.0;
    for row in 0..height {
        for col in 0..width {
            let p = w[row * width + col];
            u += p * col as f64;
            v += p * row as f64;
        }
    }
    Vector2::new(u, v)
}

/// Gradient of `d_uv · soft_argmax(h)` with respect to every heatmap value.
pub fn soft_argmax_backward(
    h: &[f64],
    width: usize,
    height: usize,
    temperature: f64,
    d_uv: Vector2<f64>,
) -> Vec<f64> {
    let w = softmax_weights(h, temperature);
    let mean = soft_argmax(h, width, height, temperature);
    let mut grad = vec![0.0; h.len()];
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            let du = col as f64 - mean.x;
            let dv = row as f64 - mean.y;
            grad[i] = temperature * w[i] * (d_uv.x * du + d_uv.y * dv);
        }
    }
    grad
}

fn softmax_weights(h: &[f64], temperature: f64) -> Vec<f64> {
    let max = h
        .iter()
        .fold(f64::NEG_INFINITY, |m, &x| m.max(temperature * x));
    let mut w: Vec<f64> = h.iter().map(|&x| (temperature * x - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Bilinear corner indices and weights for a sampling location; corners that
/// fall outside the grid are dropped (zero padding).
fn bilinear_taps(
    p: Vector2<f64>,
    width: usize,
    height: usize,
) -> ([(usize, f64, f64, f64); 4], usize) {
    let x0 = p.x.floor();
    let y0 = p.y.floor();
    let fx = p.x - x0;
    let fy = p.y - y0;
    let mut taps = [(0usize, 0.0, 0.0, 0.0); 4];
    let mut n = 0;
    // (dx, dy, weight, d weight/du, d weight/dv)
    let corners = [
        (0.0, 0.0, (1.0 - fx) * (1.0 - fy), -(1.0 - fy), -(1.0 - fx)),
        (1.0, 0.0, fx * (1.0 - fy), 1.0 - fy, -fx),
        (0.0, 1.0, (1.0 - fx) * fy, -fy, 1.0 - fx),
        (1.0, 1.0, fx * fy, fy, fx),
    ];
    for (dx, dy, w, dwu, dwv) in corners {
        let cx = x0 + dx;
        let cy = y0 + dy;
        if cx < 0.0 || cy < 0.0 || cx >= width as f64 || cy >= height as f64 {
            continue;
        }
        taps[n] = ((cy as usize) * width + cx as usize, w, dwu, dwv);
        n += 1;
    }
    (taps, n)
}

/// Bilinearly interpolated C-vector at grid location `p`, zero-padded outside.
pub fn grid_sample(f: &FeatureMap, p: Vector2<f64>) -> Vec<f64> {
    let mut out = vec![0.0; f.channels];
    grid_sample_into(f, p, &mut out);
    out
}

pub(crate) fn grid_sample_into(f: &FeatureMap, p: Vector2<f64>, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if !(p.x.is_finite() && p.y.is_finite()) {
        return;
    }
    let (taps, n) = bilinear_taps(p, f.width, f.height);
    let plane = f.width * f.height;
    for (c, o) in out.iter_mut().enumerate() {
        let ch = &f.data[c * plane..(c + 1) * plane];
        *o = taps[..n].iter().map(|&(i, w, _, _)| w * ch[i]).sum();
    }
}

/// Gradients of `d_out · grid_sample(f, p)` w.r.t. the sampling location and
/// w.r.t. the feature values (dense, same layout as `f`).
pub fn grid_sample_backward(
    f: &FeatureMap,
    p: Vector2<f64>,
    d_out: &[f64],
) -> (Vector2<f64>, Vec<f64>) {
    let mut d_feat = vec![0.0; f.data.len()];
    let mut d_p = Vector2::zeros();
    let (taps, n) = bilinear_taps(p, f.width, f.height);
    let plane = f.width * f.height;
    for (c, &g) in d_out.iter().enumerate() {
        for &(i, w, dwu, dwv) in &taps[..n] {
            let val = f.data[c * plane + i];
            d_feat[c * plane + i] += g * w;
            d_p.x += g * dwu * val;
            d_p.y += g * dwv * val;
        }
    }
    (d_p, d_feat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;

    #[test]
    fn gaussian_peak_and_sigma_falloff() {
        let h = render_gaussian_heatmap(Vector2::new(10.0, 5.0), 32, 16, 2.0);
        assert_eq!(h[5 * 32 + 10], 1.0);
        assert!((h[5 * 32 + 12] - (-0.5f64).exp()).abs() < 1e-15);
        let max = h.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn gaussian_outside_image_stays_small() {
        let sigma = 2.0;
        let h = render_gaussian_heatmap(Vector2::new(-5.0, 8.0), 16, 16, sigma);
        let bound = (-(5.0f64 * 5.0) / (2.0 * sigma * sigma)).exp();
        assert!(h.iter().all(|&v| v.is_finite() && v <= bound + 1e-15));
    }

    #[test]
    fn soft_argmax_delta() {
        let mut h = vec![0.0; 64 * 64];
        h[20 * 64 + 10] = 1.0;
        let uv = soft_argmax(&h, 64, 64, 1000.0);
        assert!((uv.x - 10.0).abs() < 1e-3 && (uv.y - 20.0).abs() < 1e-3);
    }

    #[test]
    fn soft_argmax_uniform_is_center() {
        let h = vec![0.3; 64 * 48];
        let uv = soft_argmax(&h, 64, 48, 1.0);
        assert!((uv.x - 31.5).abs() < 1e-12 && (uv.y - 23.5).abs() < 1e-12);
    }

    #[test]
    fn soft_argmax_two_equal_peaks() {
        let mut h = vec![0.0; 64 * 64];
        h[10 * 64 + 10] = 1.0;
        h[10 * 64 + 30] = 1.0;
        let uv = soft_argmax(&h, 64, 64, 1000.0);
        assert!((uv.x - 20.0).abs() < 1e-9 && (uv.y - 10.0).abs() < 1e-3);
    }

    #[test]
    fn soft_argmax_gradient_matches_fd() {
        let h = render_gaussian_heatmap(Vector2::new(3.3, 2.7), 8, 6, 1.5);
        let d = Vector2::new(0.7, -1.1);
        let grad = soft_argmax_backward(&h, 8, 6, 4.0, d);
        let err = finite_diff_check(
            |x| {
                let uv = soft_argmax(x, 8, 6, 4.0);
                d.x * uv.x + d.y * uv.y
            },
            &grad,
            &h,
            1e-6,
        );
        assert!(err < 1e-6, "{err}");
    }

    fn ramp() -> FeatureMap {
        let data: Vec<f64> = (0..2 * 4 * 5).map(|i| (i as f64).sin() + 2.0).collect();
        FeatureMap::from_vec(2, 4, 5, data).unwrap()
    }

    #[test]
    fn grid_sample_exact_at_pixel() {
        let f = ramp();
        let s = grid_sample(&f, Vector2::new(3.0, 2.0));
        assert_eq!(s, vec![f.get(0, 2, 3), f.get(1, 2, 3)]);
    }

    #[test]
    fn grid_sample_midpoint_average() {
        let f = ramp();
        let s = grid_sample(&f, Vector2::new(1.5, 1.0));
        for c in 0..2 {
            let avg = 0.5 * (f.get(c, 1, 1) + f.get(c, 1, 2));
            assert!((s[c] - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_sample_outside_is_zero() {
        let f = ramp();
        assert_eq!(grid_sample(&f, Vector2::new(-3.0, 1.0)), vec![0.0, 0.0]);
        assert_eq!(grid_sample(&f, Vector2::new(2.0, 40.0)), vec![0.0, 0.0]);
    }

    #[test]
    fn grid_sample_gradients_match_fd() {
        let f = ramp();
        let p = Vector2::new(2.3, 1.6);
        let d_out = [0.4, -1.3];
        let (d_p, d_feat) = grid_sample_backward(&f, p, &d_out);
        let err = finite_diff_check(
            |q| {
                let s = grid_sample(&f, Vector2::new(q[0], q[1]));
                s[0] * d_out[0] + s[1] * d_out[1]
            },
            &[d_p.x, d_p.y],
            &[p.x, p.y],
            1e-6,
        );
        assert!(err < 1e-8, "{err}");
        let err = finite_diff_check(
            |vals| {
                let g = FeatureMap::from_vec(2, 4, 5, vals.to_vec()).unwrap();
                let s = grid_sample(&g, p);
                s[0] * d_out[0] + s[1] * d_out[1]
            },
            &d_feat,
            f.as_slice(),
            1e-6,
        );
        assert!(err < 1e-8, "{err}");
    }

    proptest::proptest! {
        #[test]
        fn soft_argmax_inside_hull(vals in proptest::collection::vec(-5.0f64..5.0, 6 * 5), t in 0.1f64..20.0) {
            let uv = soft_argmax(&vals, 6, 5, t);
            let tol = 1e-12;
            proptest::prop_assert!(uv.x >= -tol && uv.x <= 5.0 + tol && uv.y >= -tol && uv.y <= 4.0 + tol);
        }

        #[test]
        fn grid_sample_is_convex_in_bounds(u in 0.0f64..4.0, v in 0.0f64..3.0) {
            let f = ramp();
            let s = grid_sample(&f, Vector2::new(u, v));
            for c in 0..2 {
                let ch = f.channel(c);
                let lo = ch.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                proptest::prop_assert!(s[c] >= lo - 1e-12 && s[c] <= hi + 1e-12);
            }
        }
    }
}
