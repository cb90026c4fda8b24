use serde::{Deserialize, Serialize};

/// `value(t) = start + (end - start) * min(t / duration, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub duration: u64,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64, duration: u64) -> Self {
        Self {
            start,
            end,
            duration: duration.max(1),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, value, 1)
    }

    pub fn value(&self, t: u64) -> f64 {
        if t >= self.duration {
            return self.end;
        }
        let frac = t as f64 / self.duration as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay_then_flat() {
        let s = LinearSchedule::new(1.0, 0.01, 1000);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(500) - 0.505).abs() < 1e-12);
        assert_eq!(s.value(1000), 0.01);
        assert_eq!(s.value(10_000), 0.01);
    }
}
