//! Flat binary tensor format: 8 magic bytes, four u32 little-endian dims
//! (width, height, channels, temporal depth), then f32 little-endian values
//! in storage order (x fastest, then y, channel, frame).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{VideoError, VideoTensor};

pub const CLIP_MAGIC: &[u8; 8] = b"VTENSOR1";

pub fn write_clip(path: &Path, tensor: &VideoTensor) -> Result<(), VideoError> {
    let file = File::create(path).map_err(|e| VideoError::Io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    write_clip_to(&mut w, tensor).map_err(|e| VideoError::Io(path.display().to_string(), e))
}

pub fn write_clip_to<W: Write>(w: &mut W, tensor: &VideoTensor) -> std::io::Result<()> {
    w.write_all(CLIP_MAGIC)?;
    for dim in [
        tensor.width(),
        tensor.height(),
        tensor.channels(),
        tensor.temporal_depth(),
    ] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for v in tensor.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_clip(path: &Path) -> Result<VideoTensor, VideoError> {
    let file = File::open(path).map_err(|e| VideoError::Io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    read_clip_from(&mut r).map_err(|e| match e {
        VideoError::Format(msg) => VideoError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_clip_from<R: Read>(r: &mut R) -> Result<VideoTensor, VideoError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| VideoError::Format("truncated header".into()))?;
    if &magic != CLIP_MAGIC {
        return Err(VideoError::Format("bad magic bytes".into()));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)
            .map_err(|_| VideoError::Format("truncated dims".into()))?;
        *d = u32::from_le_bytes(buf) as usize;
    }
    let count = dims.iter().product::<usize>();
    if count == 0 || count > (1 << 31) {
        return Err(VideoError::Format(format!("implausible dims {dims:?}")));
    }
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 4];
    for _ in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| VideoError::Format("truncated values".into()))?;
        data.push(f32::from_le_bytes(buf));
    }
    VideoTensor::new(dims[0], dims[1], dims[2], dims[3], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let t = VideoTensor::new(3, 2, 1, 2, (0..12).map(|i| i as f32 / 11.0).collect()).unwrap();
        let mut buf = Vec::new();
        write_clip_to(&mut buf, &t).unwrap();
        let back = read_clip_from(&mut buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = b"NOTAMAGC".to_vec();
        buf.extend_from_slice(&[0u8; 16]);
        assert!(read_clip_from(&mut buf.as_slice()).is_err());
    }
}
