//! Residual aggregation shared by the verification modules.

use serde::{Deserialize, Serialize};

/// Summary of one equation's residual over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStat {
    pub eq: String,
    pub max: f64,
    pub mean: f64,
    pub points: usize,
}

/// Ordered collection of per-equation residual summaries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResidualSet {
    pub stats: Vec<ResidualStat>,
}

impl ResidualSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one pointwise residual under `eq`, keeping first-seen equation order.
    pub fn push(&mut self, eq: &str, value: f64) {
        // NaN residuals must surface as failures, so they poison the max.
        let v = if value.is_nan() { f64::INFINITY } else { value.abs() };
        match self.stats.iter_mut().find(|s| s.eq == eq) {
            Some(s) => {
                s.mean = (s.mean * s.points as f64 + v) / (s.points + 1) as f64;
                s.points += 1;
                s.max = s.max.max(v);
            }
            None => self.stats.push(ResidualStat {
                eq: eq.to_string(),
                max: v,
                mean: v,
                points: 1,
            }),
        }
    }

    pub fn extend<'a>(&mut self, items: impl IntoIterator<Item = (&'a str, f64)>) {
        for (eq, v) in items {
            self.push(eq, v);
        }
    }

    pub fn merge(&mut self, other: &ResidualSet) {
        for s in &other.stats {
            match self.stats.iter_mut().find(|x| x.eq == s.eq) {
                Some(x) => {
                    let n = x.points + s.points;
                    x.mean = (x.mean * x.points as f64 + s.mean * s.points as f64) / n as f64;
                    x.points = n;
                    x.max = x.max.max(s.max);
                }
                None => self.stats.push(s.clone()),
            }
        }
    }

    pub fn get(&self, eq: &str) -> Option<&ResidualStat> {
        self.stats.iter().find(|s| s.eq == eq)
    }

    pub fn max(&self, eq: &str) -> Option<f64> {
        self.get(eq).map(|s| s.max)
    }

    pub fn overall_max(&self) -> f64 {
        self.stats.iter().map(|s| s.max).fold(0.0, f64::max)
    }

    pub fn all_below(&self, tol: f64) -> bool {
        self.stats.iter().all(|s| s.max <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulates_max_and_mean() {
        let mut r = ResidualSet::new();
        r.push("e6", 1.0);
        r.push("e6", -3.0);
        r.push("e4", 0.5);
        let s = r.get("e6").unwrap();
        assert_eq!((s.max, s.mean, s.points), (3.0, 2.0, 2));
        assert_eq!(r.stats[1].eq, "e4");
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with(r#"[{"eq":"e6","max":3.0,"mean":2.0,"points":2}"#));
        r.push("e4", f64::NAN);
        assert!(!r.all_below(1e300));
    }
}
