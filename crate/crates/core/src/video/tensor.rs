use super::VideoError;

/// Single-channel 2D value map, row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, VideoError> {
        if width == 0 || height == 0 {
            return Err(VideoError::InvalidDims(format!("{width}x{height}")));
        }
        if data.len() != width * height {
            return Err(VideoError::InvalidDims(format!(
                "frame data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// 4D tensor of values in [0, 1], laid out with x fastest, then y, then
/// channel, then frame index. This storage order is the contract for the
/// on-disk clip format and for flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    width: usize,
    height: usize,
    channels: usize,
    temporal_depth: usize,
    data: Vec<f32>,
}

impl VideoTensor {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        temporal_depth: usize,
        data: Vec<f32>,
    ) -> Result<Self, VideoError> {
        if width == 0 || height == 0 || channels == 0 || temporal_depth == 0 {
            return Err(VideoError::InvalidDims(format!(
                "{width}x{height}x{channels}x{temporal_depth}"
            )));
        }
        if data.len() != width * height * channels * temporal_depth {
            return Err(VideoError::InvalidDims(format!(
                "data length {} does not match {width}x{height}x{channels}x{temporal_depth}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v) || !v.is_finite()) {
            return Err(VideoError::ValueRange(*v));
        }
        Ok(Self { width, height, channels, temporal_depth, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize, temporal_depth: usize) -> Self {
        Self {
            width,
            height,
            channels,
            temporal_depth,
            data: vec![0.0; width * height * channels * temporal_depth],
        }
    }

    /// Stack single-channel frames of equal size into a clip.
    pub fn from_frames(frames: &[Frame]) -> Result<Self, VideoError> {
        let first = frames.first().ok_or(VideoError::EmptyInput)?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(w * h * frames.len());
        for f in frames {
            if f.width() != w || f.height() != h {
                return Err(VideoError::InvalidDims(format!(
                    "frame {}x{} does not match {w}x{h}",
                    f.width(),
                    f.height()
                )));
            }
            data.extend_from_slice(f.data());
        }
        Self::new(w, h, 1, frames.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn temporal_depth(&self) -> usize {
        self.temporal_depth
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize, n: usize) -> usize {
        x + self.width * (y + self.height * (c + self.channels * n))
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize, n: usize) -> f32 {
        self.data[self.index(x, y, c, n)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, n: usize, v: f32) {
        let i = self.index(x, y, c, n);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Copy of one (channel, frame) plane as a `Frame`.
    pub fn plane(&self, c: usize, n: usize) -> Frame {
        let mut out = Frame::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, y, self.get(x, y, c, n));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_order_is_x_then_y_then_c_then_n() {
        let mut t = VideoTensor::zeros(2, 2, 2, 2);
        t.set(1, 0, 0, 0, 0.5);
        assert_eq!(t.data()[1], 0.5);
        t.set(0, 1, 0, 0, 0.25);
        assert_eq!(t.data()[2], 0.25);
        t.set(0, 0, 1, 0, 0.75);
        assert_eq!(t.data()[4], 0.75);
        t.set(0, 0, 0, 1, 1.0);
        assert_eq!(t.data()[8], 1.0);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(VideoTensor::new(1, 1, 1, 1, vec![1.5]).is_err());
        assert!(VideoTensor::new(1, 1, 1, 1, vec![-0.1]).is_err());
        assert!(VideoTensor::new(1, 1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(VideoTensor::new(0, 1, 1, 1, vec![]).is_err());
    }
}
