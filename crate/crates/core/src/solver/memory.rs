/// Tracks simultaneously retained image-sized buffers (complex images of the
/// problem size; network activations are counted in the same units).
#[derive(Debug, Default, Clone, PartialEq)]
pub struct BufferMeter {
    live: f64,
    peak: f64,
}

impl BufferMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hold(&mut self, buffers: f64) {
        self.live += buffers;
        self.peak = self.peak.max(self.live);
    }

    pub fn release(&mut self, buffers: f64) {
        self.live -= buffers;
    }

    pub fn live(&self) -> f64 {
        self.live
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }
}

/// Peak retained-buffer counts for one solver phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryReport {
    /// Complex-image buffers retained by the algorithm itself.
    pub state_buffers: usize,
    /// Network activations held at the peak, in image-buffer units.
    pub activation_buffers: f64,
}

impl MemoryReport {
    pub fn total(&self) -> f64 {
        self.state_buffers as f64 + self.activation_buffers
    }

    /// Peak of two phases that run one after the other.
    pub fn sequential_peak(&self, other: &MemoryReport) -> MemoryReport {
        if other.total() > self.total() {
            *other
        } else {
            *self
        }
    }
}
