use crate::error::{Error, Result};

/// A `channels x time` real array stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTensor {
    channels: usize,
    time: usize,
    data: Vec<f64>,
}

impl SignalTensor {
    pub fn new(channels: usize, time: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || time == 0 {
            return Err(Error::Shape(format!("tensor must be non-empty, got {channels}x{time}")));
        }
        if data.len() != channels * time {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {channels}x{time} tensor",
                data.len()
            )));
        }
        Ok(Self { channels, time, data })
    }

    pub fn zeros(channels: usize, time: usize) -> Self {
        Self {
            channels,
            time,
            data: vec![0.0; channels * time],
        }
    }

    pub fn from_signal(samples: &[f64]) -> Result<Self> {
        Self::new(1, samples.len(), samples.to_vec())
    }

    /// Stack equal-length signals as channels, in the given order.
    pub fn stack(signals: &[&[f64]]) -> Result<Self> {
        let time = signals.first().map_or(0, |s| s.len());
        if let Some(bad) = signals.iter().find(|s| s.len() != time) {
            return Err(Error::Shape(format!(
                "cannot stack signals of length {time} and {}",
                bad.len()
            )));
        }
        let data = signals.iter().flat_map(|s| s.iter().copied()).collect();
        Self::new(signals.len(), time, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.time)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.time..(c + 1) * self.time]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.time..(c + 1) * self.time]
    }

    /// Copy of the time range `[start, start + len)` of every channel.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.time {
            return Err(Error::Shape(format!(
                "window {start}..{} exceeds length {}",
                start + len,
                self.time
            )));
        }
        let data = (0..self.channels)
            .flat_map(|c| self.channel(c)[start..start + len].iter().copied())
            .collect();
        Self::new(self.channels, len, data)
    }
}
