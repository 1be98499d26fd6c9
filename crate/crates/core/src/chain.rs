use serde::Serialize;

/// Per-iteration event tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub bounces: usize,
    pub boundaries: usize,
    pub refreshes: usize,
}

impl EventCounts {
    pub fn total(&self) -> usize {
        self.bounces + self.boundaries + self.refreshes
    }
}

impl std::ops::AddAssign for EventCounts {
    fn add_assign(&mut self, o: Self) {
        self.bounces += o.bounces;
        self.boundaries += o.boundaries;
        self.refreshes += o.refreshes;
    }
}

/// Stored positions of one Markov chain plus per-iteration metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    dim: usize,
    /// Row-major `len x dim`.
    samples: Vec<f64>,
    pub event_counts: Vec<EventCounts>,
    /// Trajectory time simulated for each stored row.
    pub travel_times: Vec<f64>,
    pub wall_seconds: f64,
    /// Fraction of accepted proposals for samplers with an accept step.
    pub acceptance_rate: Option<f64>,
    pub sampler: String,
}

impl Chain {
    pub fn new(dim: usize, sampler: impl Into<String>) -> Self {
        Self {
            dim,
            samples: Vec::new(),
            event_counts: Vec::new(),
            travel_times: Vec::new(),
            wall_seconds: 0.0,
            acceptance_rate: None,
            sampler: sampler.into(),
        }
    }

    /// Builds a chain from raw rows (e.g. read back from disk).
    pub fn from_rows(dim: usize, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len() % dim.max(1), 0);
        let n = samples.len() / dim.max(1);
        Self {
            dim,
            samples,
            event_counts: vec![EventCounts::default(); n],
            travel_times: vec![0.0; n],
            ..Self::new(dim, "external")
        }
    }

    pub fn push(&mut self, x: &[f64], counts: EventCounts, travel_time: f64) {
        debug_assert_eq!(x.len(), self.dim);
        self.samples.extend_from_slice(x);
        self.event_counts.push(counts);
        self.travel_times.push(travel_time);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.event_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn total_counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for e in &self.event_counts {
            c += *e;
        }
        c
    }

    pub fn mean_travel_time(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.travel_times.iter().sum::<f64>() / self.len() as f64
    }

    /// Keeps rows `0, thin, 2 thin, ...`; counts and travel times of the
    /// dropped rows are folded into the kept row that precedes them.
    pub fn thinned(&self, thin: usize) -> Chain {
        let thin = thin.max(1);
        let mut out = Chain {
            samples: Vec::new(),
            event_counts: Vec::new(),
            travel_times: Vec::new(),
            ..self.clone()
        };
        for start in (0..self.len()).step_by(thin) {
            let end = (start + thin).min(self.len());
            let mut counts = EventCounts::default();
            let mut time = 0.0;
            for i in start..end {
                counts += self.event_counts[i];
                time += self.travel_times[i];
            }
            out.push(self.row(start), counts, time);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_ceil_rows() {
        let mut c = Chain::new(2, "test");
        for i in 0..10 {
            c.push(&[i as f64, -(i as f64)], EventCounts { bounces: 1, ..Default::default() }, 0.5);
        }
        let t = c.thinned(3);
        assert_eq!(t.len(), 4);
        assert_eq!(t.row(1), &[3.0, -3.0]);
        assert_eq!(t.total_counts().bounces, 10);
        assert_eq!(t.column(0), vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(c.thinned(1), c);
    }
}
