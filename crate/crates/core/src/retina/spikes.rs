use std::cmp::Ordering;
use std::io::{BufRead, Write};

use super::CodecError;

/// One unary spike at a tensor coordinate. `z` is the temporal frame index,
/// `c` the channel; `t` lies in `[0, t_exposition]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeEvent {
    pub x: u32,
    pub y: u32,
    pub z: u32,
    pub c: u32,
    pub t: f64,
}

impl SpikeEvent {
    /// Ascending time order with the deterministic (x, y, z, c) tie order.
    pub fn order(&self, other: &Self) -> Ordering {
        self.t
            .partial_cmp(&other.t)
            .expect("spike times are finite")
            .then(self.x.cmp(&other.x))
            .then(self.y.cmp(&other.y))
            .then(self.z.cmp(&other.z))
            .then(self.c.cmp(&other.c))
    }
}

/// A set of spikes over a 4D coordinate grid with at most one event per
/// coordinate, stored in ascending time order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingTensor {
    width: usize,
    height: usize,
    channels: usize,
    temporal_depth: usize,
    events: Vec<SpikeEvent>,
}

impl SpikingTensor {
    pub fn empty(width: usize, height: usize, channels: usize, temporal_depth: usize) -> Self {
        Self { width, height, channels, temporal_depth, events: Vec::new() }
    }

    /// Sorts, bounds-checks and uniqueness-checks the given events.
    pub fn from_events(
        width: usize,
        height: usize,
        channels: usize,
        temporal_depth: usize,
        mut events: Vec<SpikeEvent>,
    ) -> Result<Self, CodecError> {
        let mut seen = vec![false; width * height * channels * temporal_depth];
        for e in &events {
            if e.x as usize >= width
                || e.y as usize >= height
                || e.c as usize >= channels
                || e.z as usize >= temporal_depth
            {
                return Err(CodecError::EventOutOfBounds(format!(
                    "({}, {}, {}, {}) outside {width}x{height}x{channels}x{temporal_depth}",
                    e.x, e.y, e.z, e.c
                )));
            }
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(CodecError::EventOutOfBounds(format!("bad timestamp {}", e.t)));
            }
            let idx = coord_index(width, height, channels, e.x, e.y, e.z, e.c);
            if seen[idx] {
                return Err(CodecError::DuplicateEvent(format!(
                    "({}, {}, {}, {})",
                    e.x, e.y, e.z, e.c
                )));
            }
            seen[idx] = true;
        }
        events.sort_by(SpikeEvent::order);
        Ok(Self { width, height, channels, temporal_depth, events })
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

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn mean_spike_time(&self) -> f64 {
        if self.events.is_empty() {
            return 0.0;
        }
        self.events.iter().map(|e| e.t).sum::<f64>() / self.events.len() as f64
    }

    /// Dense per-coordinate spike-time grid, laid out like the value tensor
    /// (x fastest, then y, channel, frame). `NaN`-free: absent spikes are
    /// `None`.
    pub fn first_spike_grid(&self) -> Vec<Option<f64>> {
        let mut grid = vec![None; self.width * self.height * self.channels * self.temporal_depth];
        for e in &self.events {
            let idx = coord_index(self.width, self.height, self.channels, e.x, e.y, e.z, e.c);
            grid[idx] = Some(e.t);
        }
        grid
    }

    #[inline]
    pub fn coord_index(&self, x: u32, y: u32, z: u32, c: u32) -> usize {
        coord_index(self.width, self.height, self.channels, x, y, z, c)
    }
}

#[inline]
fn coord_index(width: usize, height: usize, channels: usize, x: u32, y: u32, z: u32, c: u32) -> usize {
    x as usize + width * (y as usize + height * (c as usize + channels * z as usize))
}

/// Debug dump: one `t,x,y,z,c` line per event, in stored order.
pub fn write_spike_dump<W: Write>(w: &mut W, spikes: &SpikingTensor) -> std::io::Result<()> {
    for e in spikes.events() {
        writeln!(w, "{},{},{},{},{}", e.t, e.x, e.y, e.z, e.c)?;
    }
    Ok(())
}

pub fn read_spike_dump<R: BufRead>(
    r: &mut R,
    dims: (usize, usize, usize, usize),
) -> Result<SpikingTensor, CodecError> {
    let mut events = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| CodecError::Dump(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CodecError::Dump(format!("expected 5 fields, got: {line}")));
        }
        let parse_u32 =
            |s: &str| s.parse::<u32>().map_err(|_| CodecError::Dump(format!("bad coord {s}")));
        events.push(SpikeEvent {
            t: fields[0].parse().map_err(|_| CodecError::Dump(format!("bad time {}", fields[0])))?,
            x: parse_u32(fields[1])?,
            y: parse_u32(fields[2])?,
            z: parse_u32(fields[3])?,
            c: parse_u32(fields[4])?,
        });
    }
    SpikingTensor::from_events(dims.0, dims.1, dims.2, dims.3, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_sort_by_time_then_coords() {
        let events = vec![
            SpikeEvent { x: 1, y: 0, z: 0, c: 0, t: 0.5 },
            SpikeEvent { x: 0, y: 0, z: 0, c: 0, t: 0.5 },
            SpikeEvent { x: 2, y: 0, z: 0, c: 0, t: 0.1 },
        ];
        let st = SpikingTensor::from_events(3, 1, 1, 1, events).unwrap();
        let xs: Vec<u32> = st.events().iter().map(|e| e.x).collect();
        assert_eq!(xs, vec![2, 0, 1]);
    }

    #[test]
    fn duplicate_coordinate_rejected() {
        let events = vec![
            SpikeEvent { x: 0, y: 0, z: 0, c: 0, t: 0.5 },
            SpikeEvent { x: 0, y: 0, z: 0, c: 0, t: 0.2 },
        ];
        assert!(SpikingTensor::from_events(1, 1, 1, 1, events).is_err());
    }

    #[test]
    fn out_of_bounds_rejected() {
        let events = vec![SpikeEvent { x: 5, y: 0, z: 0, c: 0, t: 0.5 }];
        assert!(SpikingTensor::from_events(2, 2, 1, 1, events).is_err());
    }

    #[test]
    fn dump_roundtrip() {
        let events = vec![
            SpikeEvent { x: 1, y: 2, z: 0, c: 1, t: 0.25 },
            SpikeEvent { x: 0, y: 0, z: 1, c: 0, t: 0.75 },
        ];
        let st = SpikingTensor::from_events(3, 3, 2, 2, events).unwrap();
        let mut buf = Vec::new();
        write_spike_dump(&mut buf, &st).unwrap();
        let back = read_spike_dump(&mut buf.as_slice(), (3, 3, 2, 2)).unwrap();
        assert_eq!(st, back);
    }
}
