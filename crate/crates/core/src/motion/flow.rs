//! Two-frame dense optical flow by polynomial expansion.
//!
//! Each image neighborhood is approximated as a quadratic polynomial through
//! Gaussian-weighted least squares; equating the expansions of both frames
//! yields a per-pixel linear system for the displacement, aggregated over a
//! window and refined over a coarse-to-fine pyramid with warping.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MotionError;
use crate::video::Frame;

/// Dense displacement field in pixels per frame, signed, same dims as the
/// source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    ofx: Vec<f32>,
    ofy: Vec<f32>,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        ofx: Vec<f32>,
        ofy: Vec<f32>,
    ) -> Result<Self, MotionError> {
        if ofx.len() != width * height || ofy.len() != width * height {
            return Err(MotionError::Input("flow component size mismatch".into()));
        }
        if ofx.iter().chain(&ofy).any(|v| !v.is_finite()) {
            return Err(MotionError::Input("non-finite flow values".into()));
        }
        Ok(Self { width, height, ofx, ofy })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, ofx: vec![0.0; width * height], ofy: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn x(&self, x: usize, y: usize) -> f32 {
        self.ofx[y * self.width + x]
    }

    #[inline]
    pub fn y(&self, x: usize, y: usize) -> f32 {
        self.ofy[y * self.width + x]
    }
}

/// Estimator parameters; the defaults mirror the usual choices for this
/// family of estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    /// Aggregation window side for the displacement solve; must be odd.
    pub window: usize,
    pub iterations: usize,
    /// Half-size of the polynomial expansion neighborhood.
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { levels: 3, window: 15, iterations: 3, poly_n: 5, poly_sigma: 1.1 }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), MotionError> {
        if self.levels < 1 {
            return Err(MotionError::Input("levels must be >= 1".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(MotionError::Input("window must be odd and >= 3".into()));
        }
        if self.iterations < 1 || self.poly_n < 1 || self.poly_sigma <= 0.0 {
            return Err(MotionError::Input("bad expansion parameters".into()));
        }
        Ok(())
    }
}

/// Per-pixel quadratic expansion coefficients: f ~ c + b.x + x'Ax with
/// b = (bx, by), A = [[axx, axy/2], [axy/2, ayy]].
struct PolyExpansion {
    width: usize,
    height: usize,
    bx: Vec<f64>,
    by: Vec<f64>,
    axx: Vec<f64>,
    ayy: Vec<f64>,
    axy: Vec<f64>,
}

fn poly_expand(img: &Frame, n: usize, sigma: f64) -> PolyExpansion {
    let (w, h) = (img.width(), img.height());
    let size = 2 * n + 1;
    let mut applic = vec![0.0f64; size];
    for (k, a) in applic.iter_mut().enumerate() {
        let d = k as f64 - n as f64;
        *a = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    // 1D moments of the applicability
    let (mut s0, mut s2, mut s4) = (0.0, 0.0, 0.0);
    for (k, a) in applic.iter().enumerate() {
        let d = k as f64 - n as f64;
        s0 += a;
        s2 += a * d * d;
        s4 += a * d * d * d * d;
    }
    // Invert the even-parity block of the normal matrix for basis
    // (1, x^2, y^2); odd components decouple.
    let g = [
        [s0 * s0, s0 * s2, s0 * s2],
        [s0 * s2, s0 * s4, s2 * s2],
        [s0 * s2, s2 * s2, s0 * s4],
    ];
    let ginv = invert3(&g);
    let inv_x = 1.0 / (s0 * s2);
    let inv_xy = 1.0 / (s2 * s2);

    // Horizontal pass: weighted moments along x.
    let mut t0 = vec![0.0f64; w * h];
    let mut t1 = vec![0.0f64; w * h];
    let mut t2 = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for k in 0..size {
                let d = k as f64 - n as f64;
                let sx = (x as isize + k as isize - n as isize).clamp(0, w as isize - 1) as usize;
                let v = applic[k] * img.get(sx, y) as f64;
                m0 += v;
                m1 += v * d;
                m2 += v * d * d;
            }
            let idx = y * w + x;
            t0[idx] = m0;
            t1[idx] = m1;
            t2[idx] = m2;
        }
    }
    // Vertical pass combines y moments and solves per pixel.
    let mut out = PolyExpansion {
        width: w,
        height: h,
        bx: vec![0.0; w * h],
        by: vec![0.0; w * h],
        axx: vec![0.0; w * h],
        ayy: vec![0.0; w * h],
        axy: vec![0.0; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let (mut m_1, mut m_x, mut m_y, mut m_xx, mut m_yy, mut m_xy) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for k in 0..size {
                let d = k as f64 - n as f64;
                let sy = (y as isize + k as isize - n as isize).clamp(0, h as isize - 1) as usize;
                let a = applic[k];
                let idx = sy * w + x;
                m_1 += a * t0[idx];
                m_x += a * t1[idx];
                m_y += a * d * t0[idx];
                m_xx += a * t2[idx];
                m_yy += a * d * d * t0[idx];
                m_xy += a * d * t1[idx];
            }
            let idx = y * w + x;
            out.bx[idx] = m_x * inv_x;
            out.by[idx] = m_y * inv_x;
            out.axy[idx] = m_xy * inv_xy;
            out.axx[idx] = ginv[1][0] * m_1 + ginv[1][1] * m_xx + ginv[1][2] * m_yy;
            out.ayy[idx] = ginv[2][0] * m_1 + ginv[2][1] * m_xx + ginv[2][2] * m_yy;
        }
    }
    out
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b, c, d) = (
                m[(j + 1) % 3][(i + 1) % 3],
                m[(j + 2) % 3][(i + 2) % 3],
                m[(j + 1) % 3][(i + 2) % 3],
                m[(j + 2) % 3][(i + 1) % 3],
            );
            out[i][j] = (a * b - c * d) * inv_det;
        }
    }
    out
}

impl PolyExpansion {
    /// Bilinear sample of the 5 coefficient planes, clamped to the image.
    fn sample(&self, fx: f64, fy: f64) -> (f64, f64, f64, f64, f64) {
        let fx = fx.clamp(0.0, (self.width - 1) as f64);
        let fy = fy.clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
        let lerp = |p: &[f64]| {
            let top = p[y0 * self.width + x0] * (1.0 - ax) + p[y0 * self.width + x1] * ax;
            let bot = p[y1 * self.width + x0] * (1.0 - ax) + p[y1 * self.width + x1] * ax;
            top * (1.0 - ay) + bot * ay
        };
        (lerp(&self.bx), lerp(&self.by), lerp(&self.axx), lerp(&self.ayy), lerp(&self.axy))
    }
}

/// One displacement refinement: equate the two expansions under the current
/// flow, aggregate the least-squares system over the window, solve per pixel.
fn refine(
    e1: &PolyExpansion,
    e2: &PolyExpansion,
    flow: &mut FlowField,
    window: usize,
) {
    let (w, h) = (e1.width, e1.height);
    let mut g11 = vec![0.0f64; w * h];
    let mut g12 = vec![0.0f64; w * h];
    let mut g22 = vec![0.0f64; w * h];
    let mut h1 = vec![0.0f64; w * h];
    let mut h2 = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let (dx, dy) = (flow.ofx[idx] as f64, flow.ofy[idx] as f64);
            let (bx2, by2, axx2, ayy2, axy2) = e2.sample(x as f64 + dx, y as f64 + dy);
            let a11 = 0.5 * (e1.axx[idx] + axx2);
            let a22 = 0.5 * (e1.ayy[idx] + ayy2);
            let a12 = 0.25 * (e1.axy[idx] + axy2);
            let db1 = -0.5 * (bx2 - e1.bx[idx]) + a11 * dx + a12 * dy;
            let db2 = -0.5 * (by2 - e1.by[idx]) + a12 * dx + a22 * dy;
            g11[idx] = a11 * a11 + a12 * a12;
            g12[idx] = a12 * (a11 + a22);
            g22[idx] = a22 * a22 + a12 * a12;
            h1[idx] = a11 * db1 + a12 * db2;
            h2[idx] = a12 * db1 + a22 * db2;
        }
    }
    for plane in [&mut g11, &mut g12, &mut g22, &mut h1, &mut h2] {
        box_blur(plane, w, h, window);
    }
    for idx in 0..w * h {
        let det = g11[idx] * g22[idx] - g12[idx] * g12[idx];
        if det.abs() > 1e-9 {
            flow.ofx[idx] = ((g22[idx] * h1[idx] - g12[idx] * h2[idx]) / det) as f32;
            flow.ofy[idx] = ((g11[idx] * h2[idx] - g12[idx] * h1[idx]) / det) as f32;
        }
    }
}

/// Separable mean filter with edge truncation (the window shrinks at the
/// borders instead of padding).
fn box_blur(plane: &mut [f64], w: usize, h: usize, window: usize) {
    let r = window / 2;
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let mut prefix = vec![0.0f64; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + plane[y * w + x];
        }
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            tmp[y * w + x] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    }
    for x in 0..w {
        let mut prefix = vec![0.0f64; h + 1];
        for y in 0..h {
            prefix[y + 1] = prefix[y] + tmp[y * w + x];
        }
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(h);
            plane[y * w + x] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    }
}

/// 5-tap binomial smoothing then bilinear half-size, for the pyramid.
fn downsample(img: &Frame) -> Frame {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (img.width(), img.height());
    let mut tmp = Frame::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in K.iter().enumerate() {
                let sx = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += kv * img.get(sx, y);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut smooth = Frame::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in K.iter().enumerate() {
                let sy = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp.get(x, sy);
            }
            smooth.set(x, y, acc.clamp(0.0, 1.0));
        }
    }
    crate::video::resize_half(&smooth).0
}

fn upsample_flow(flow: &FlowField, w: usize, h: usize) -> FlowField {
    let mut out = FlowField::zeros(w, h);
    let rx = flow.width as f64 / w as f64;
    let ry = flow.height as f64 / h as f64;
    for y in 0..h {
        let sy = ((y as f64 + 0.5) * ry - 0.5).clamp(0.0, (flow.height - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(flow.height - 1);
        let fy = sy - y0 as f64;
        for x in 0..w {
            let sx = ((x as f64 + 0.5) * rx - 0.5).clamp(0.0, (flow.width - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(flow.width - 1);
            let fx = sx - x0 as f64;
            let lerp = |p: &[f32]| {
                let top = p[y0 * flow.width + x0] as f64 * (1.0 - fx)
                    + p[y0 * flow.width + x1] as f64 * fx;
                let bot = p[y1 * flow.width + x0] as f64 * (1.0 - fx)
                    + p[y1 * flow.width + x1] as f64 * fx;
                top * (1.0 - fy) + bot * fy
            };
            // doubling the scale doubles the displacement
            out.ofx[y * w + x] = (lerp(&flow.ofx) * 2.0) as f32;
            out.ofy[y * w + x] = (lerp(&flow.ofy) * 2.0) as f32;
        }
    }
    out
}

/// Dense two-frame optical flow from `frame_a` to `frame_b`.
pub fn dense_flow(
    frame_a: &Frame,
    frame_b: &Frame,
    params: &FlowParams,
) -> Result<FlowField, MotionError> {
    params.validate()?;
    if frame_a.width() != frame_b.width() || frame_a.height() != frame_b.height() {
        return Err(MotionError::Input(format!(
            "frame dims {}x{} vs {}x{}",
            frame_a.width(),
            frame_a.height(),
            frame_b.width(),
            frame_b.height()
        )));
    }
    // Cap pyramid depth so the coarsest level keeps enough room for the
    // expansion neighborhood.
    let min_dim = frame_a.width().min(frame_a.height());
    let mut levels = params.levels;
    while levels > 1 && (min_dim >> (levels - 1)) < 4 * params.poly_n {
        levels -= 1;
    }
    let mut pyr_a = vec![frame_a.clone()];
    let mut pyr_b = vec![frame_b.clone()];
    for _ in 1..levels {
        pyr_a.push(downsample(pyr_a.last().unwrap()));
        pyr_b.push(downsample(pyr_b.last().unwrap()));
    }
    let coarsest = pyr_a.last().unwrap();
    let mut flow = FlowField::zeros(coarsest.width(), coarsest.height());
    for level in (0..levels).rev() {
        let (a, b) = (&pyr_a[level], &pyr_b[level]);
        if flow.width != a.width() || flow.height != a.height() {
            flow = upsample_flow(&flow, a.width(), a.height());
        }
        let e1 = poly_expand(a, params.poly_n, params.poly_sigma);
        let e2 = poly_expand(b, params.poly_n, params.poly_sigma);
        for _ in 0..params.iterations {
            refine(&e1, &e2, &mut flow, params.window);
        }
    }
    Ok(flow)
}

/// Consecutive-pair flow over a whole single-channel clip.
pub fn clip_flow(
    clip: &crate::video::VideoTensor,
    params: &FlowParams,
) -> Result<Vec<FlowField>, MotionError> {
    if clip.channels() != 1 {
        return Err(MotionError::StreamConfig("optical flow needs single-channel clips".into()));
    }
    if clip.temporal_depth() < 2 {
        return Err(MotionError::StreamConfig("optical flow needs at least 2 frames".into()));
    }
    (0..clip.temporal_depth() - 1)
        .map(|n| dense_flow(&clip.plane(0, n), &clip.plane(0, n + 1), params))
        .collect()
}

pub const FLOW_MAGIC: &[u8; 8] = b"FLOWFLD1";

/// Precomputed flow file: magic, u32 dims (width, height, field count), then
/// per field interleaved (OF_x, OF_y) f32 little-endian values in row-major
/// order.
pub fn write_flow_file(path: &Path, fields: &[FlowField]) -> Result<(), MotionError> {
    let first = fields.first().ok_or_else(|| MotionError::Input("no flow fields".into()))?;
    let file = File::create(path).map_err(|e| MotionError::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| MotionError::Io(path.display().to_string(), e);
    w.write_all(FLOW_MAGIC).map_err(io_err)?;
    for dim in [first.width as u32, first.height as u32, fields.len() as u32] {
        w.write_all(&dim.to_le_bytes()).map_err(io_err)?;
    }
    for f in fields {
        if f.width != first.width || f.height != first.height {
            return Err(MotionError::Input("flow fields have mismatched dims".into()));
        }
        for i in 0..f.ofx.len() {
            w.write_all(&f.ofx[i].to_le_bytes()).map_err(io_err)?;
            w.write_all(&f.ofy[i].to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_flow_file(path: &Path) -> Result<Vec<FlowField>, MotionError> {
    let file = File::open(path).map_err(|e| MotionError::Io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| MotionError::Format("truncated header".into()))?;
    if &magic != FLOW_MAGIC {
        return Err(MotionError::Format("bad magic bytes".into()));
    }
    let mut dims = [0u32; 3];
    for d in &mut dims {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|_| MotionError::Format("truncated dims".into()))?;
        *d = u32::from_le_bytes(buf);
    }
    let (w, h, count) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    if w == 0 || h == 0 || count == 0 || w * h > (1 << 28) {
        return Err(MotionError::Format(format!("implausible dims {dims:?}")));
    }
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ofx = Vec::with_capacity(w * h);
        let mut ofy = Vec::with_capacity(w * h);
        let mut buf = [0u8; 4];
        for _ in 0..w * h {
            r.read_exact(&mut buf).map_err(|_| MotionError::Format("truncated values".into()))?;
            ofx.push(f32::from_le_bytes(buf));
            r.read_exact(&mut buf).map_err(|_| MotionError::Format("truncated values".into()))?;
            ofy.push(f32::from_le_bytes(buf));
        }
        fields.push(FlowField::new(w, h, ofx, ofy)?);
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Smooth deterministic texture: bilinear upsample of a coarse random
    /// grid, so every neighborhood carries gradient information.
    fn texture(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (cw, ch) = (w / 4 + 2, h / 4 + 2);
        let coarse: Vec<f32> = (0..cw * ch).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let mut out = Frame::zeros(w, h);
        for y in 0..h {
            let fy = y as f32 / 4.0;
            let y0 = fy.floor() as usize;
            let ay = fy - y0 as f32;
            for x in 0..w {
                let fx = x as f32 / 4.0;
                let x0 = fx.floor() as usize;
                let ax = fx - x0 as f32;
                let v = coarse[y0 * cw + x0] * (1.0 - ax) * (1.0 - ay)
                    + coarse[y0 * cw + x0 + 1] * ax * (1.0 - ay)
                    + coarse[(y0 + 1) * cw + x0] * (1.0 - ax) * ay
                    + coarse[(y0 + 1) * cw + x0 + 1] * ax * ay;
                out.set(x, y, v);
            }
        }
        out
    }

    fn roll(frame: &Frame, dx: isize, dy: isize) -> Frame {
        let (w, h) = (frame.width(), frame.height());
        let mut out = Frame::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
                let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
                out.set(x, y, frame.get(sx, sy));
            }
        }
        out
    }

    fn interior_medians(flow: &FlowField, margin: usize) -> (f64, f64, f64) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut abs_ys = Vec::new();
        for y in margin..flow.height() - margin {
            for x in margin..flow.width() - margin {
                xs.push(flow.x(x, y) as f64);
                ys.push(flow.y(x, y) as f64);
                abs_ys.push((flow.y(x, y) as f64).abs());
            }
        }
        let med = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        (med(&mut xs), med(&mut ys), med(&mut abs_ys))
    }

    #[test]
    fn identical_frames_give_near_zero_flow() {
        let f = texture(48, 48, 5);
        let flow = dense_flow(&f, &f, &FlowParams::default()).unwrap();
        for y in 0..48 {
            for x in 0..48 {
                assert!(flow.x(x, y).abs() < 1e-3, "({x},{y}): {}", flow.x(x, y));
                assert!(flow.y(x, y).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn one_pixel_right_shift_recovered() {
        let a = texture(64, 64, 7);
        let b = roll(&a, 1, 0);
        let flow = dense_flow(&a, &b, &FlowParams::default()).unwrap();
        let (med_x, _, med_abs_y) = interior_medians(&flow, 10);
        assert!((0.8..=1.2).contains(&med_x), "median OF_x = {med_x}");
        assert!(med_abs_y < 0.2, "median |OF_y| = {med_abs_y}");
    }

    #[test]
    fn two_pixel_down_shift_recovered() {
        let a = texture(64, 64, 9);
        let b = roll(&a, 0, 2);
        let flow = dense_flow(&a, &b, &FlowParams::default()).unwrap();
        let (_, med_y, _) = interior_medians(&flow, 10);
        assert!((1.6..=2.4).contains(&med_y), "median OF_y = {med_y}");
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let a = Frame::zeros(8, 8);
        let b = Frame::zeros(9, 8);
        assert!(dense_flow(&a, &b, &FlowParams::default()).is_err());
    }

    #[test]
    fn flow_file_roundtrip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let fields: Vec<FlowField> = (0..3)
            .map(|_| {
                let ofx = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let ofy = (0..12).map(|_| rng.gen_range(-5.0..5.0)).collect();
                FlowField::new(4, 3, ofx, ofy).unwrap()
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.flow");
        write_flow_file(&path, &fields).unwrap();
        let back = read_flow_file(&path).unwrap();
        assert_eq!(fields, back);
    }
}
