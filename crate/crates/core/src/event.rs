//! Events on the real line: finite unions of intervals with open or closed ends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() {
            return Err(Error::invalid("interval endpoint is NaN"));
        }
        if lo > hi {
            return Err(Error::invalid(format!("interval endpoints out of order: {lo} > {hi}")));
        }
        // Infinite endpoints are never attained.
        let lo_closed = lo_closed && lo.is_finite();
        let hi_closed = hi_closed && hi.is_finite();
        Ok(Interval { lo, lo_closed, hi, hi_closed })
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    /// `P(X ∈ self)` under a single law.
    pub fn probability(&self, m: &Measure) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let upper = if self.hi == f64::INFINITY {
            1.0
        } else if self.hi_closed {
            m.cdf(self.hi)
        } else {
            m.cdf_left(self.hi)
        };
        let lower = if self.lo == f64::NEG_INFINITY {
            0.0
        } else if self.lo_closed {
            m.cdf_left(self.lo)
        } else {
            m.cdf(self.lo)
        };
        (upper - lower).clamp(0.0, 1.0)
    }
}

/// A finite union of intervals kept sorted, disjoint and non-adjacent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct Event {
    intervals: Vec<Interval>,
}

impl TryFrom<Vec<Interval>> for Event {
    type Error = Error;

    fn try_from(v: Vec<Interval>) -> Result<Self> {
        let checked = v
            .into_iter()
            .map(|i| Interval::new(i.lo, i.lo_closed, i.hi, i.hi_closed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Event::from_intervals(checked))
    }
}

impl From<Event> for Vec<Interval> {
    fn from(e: Event) -> Self {
        e.intervals
    }
}

impl Event {
    pub fn empty() -> Self {
        Event { intervals: Vec::new() }
    }

    pub fn everything() -> Self {
        Event {
            intervals: vec![Interval { lo: f64::NEG_INFINITY, lo_closed: false, hi: f64::INFINITY, hi_closed: false }],
        }
    }

    pub fn from_intervals(intervals: Vec<Interval>) -> Self {
        let mut v: Vec<Interval> = intervals.into_iter().filter(|i| !i.is_empty()).collect();
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo).then_with(|| b.lo_closed.cmp(&a.lo_closed)));
        let mut merged: Vec<Interval> = Vec::with_capacity(v.len());
        for next in v {
            if let Some(cur) = merged.last_mut() {
                let touches = next.lo < cur.hi || (next.lo == cur.hi && (cur.hi_closed || next.lo_closed));
                if touches {
                    if next.hi > cur.hi {
                        cur.hi = next.hi;
                        cur.hi_closed = next.hi_closed;
                    } else if next.hi == cur.hi {
                        cur.hi_closed |= next.hi_closed;
                    }
                    continue;
                }
            }
            merged.push(next);
        }
        Event { intervals: merged }
    }

    /// `{X > t}`
    pub fn gt(t: f64) -> Self {
        Self::from_intervals(vec![Interval { lo: t, lo_closed: false, hi: f64::INFINITY, hi_closed: false }])
    }

    /// `{X ≥ t}`
    pub fn ge(t: f64) -> Self {
        Self::from_intervals(vec![Interval { lo: t, lo_closed: t.is_finite(), hi: f64::INFINITY, hi_closed: false }])
    }

    /// `{X < t}`
    pub fn lt(t: f64) -> Self {
        Self::from_intervals(vec![Interval { lo: f64::NEG_INFINITY, lo_closed: false, hi: t, hi_closed: false }])
    }

    /// `{X ≤ t}`
    pub fn le(t: f64) -> Self {
        Self::from_intervals(vec![Interval { lo: f64::NEG_INFINITY, lo_closed: false, hi: t, hi_closed: t.is_finite() }])
    }

    /// `{|X| > t}`
    pub fn abs_gt(t: f64) -> Self {
        if t < 0.0 {
            return Self::everything();
        }
        Self::lt(-t).union(&Self::gt(t))
    }

    /// `{|X| ≥ t}`
    pub fn abs_ge(t: f64) -> Self {
        if t <= 0.0 {
            return Self::everything();
        }
        Self::le(-t).union(&Self::ge(t))
    }

    pub fn interval(lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Result<Self> {
        Ok(Self::from_intervals(vec![Interval::new(lo, lo_closed, hi, hi_closed)?]))
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(x))
    }

    pub fn union(&self, other: &Event) -> Event {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Event::from_intervals(all)
    }

    pub fn complement(&self) -> Event {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut lo = f64::NEG_INFINITY;
        let mut lo_closed = false;
        for i in &self.intervals {
            out.push(Interval { lo, lo_closed, hi: i.lo, hi_closed: !i.lo_closed && i.lo.is_finite() });
            lo = i.hi;
            lo_closed = !i.hi_closed && i.hi.is_finite();
        }
        out.push(Interval { lo, lo_closed, hi: f64::INFINITY, hi_closed: false });
        Event::from_intervals(out)
    }

    pub fn probability(&self, m: &Measure) -> f64 {
        self.intervals.iter().map(|i| i.probability(m)).sum::<f64>().clamp(0.0, 1.0)
    }

    /// Finite interval endpoints, useful as quadrature breakpoints.
    pub fn endpoints(&self) -> Vec<f64> {
        self.intervals.iter().flat_map(|i| [i.lo, i.hi]).filter(|x| x.is_finite()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_merges_touching_intervals() {
        let a = Event::interval(0.0, true, 1.0, false).unwrap();
        let b = Event::interval(1.0, true, 2.0, true).unwrap();
        let u = a.union(&b);
        assert_eq!(u.intervals().len(), 1);
        assert!(u.contains(1.0) && u.contains(2.0) && !u.contains(2.5));

        let open = Event::interval(0.0, true, 1.0, false).unwrap().union(&Event::interval(1.0, false, 2.0, true).unwrap());
        assert_eq!(open.intervals().len(), 2);
        assert!(!open.contains(1.0));
    }

    #[test]
    fn complement_flips_endpoint_closure() {
        let e = Event::ge(0.5);
        let c = e.complement();
        assert!(c.contains(0.49) && !c.contains(0.5));
        assert_eq!(c.complement(), e);
        let abs = Event::abs_gt(2.0);
        let inside = abs.complement();
        assert!(inside.contains(2.0) && inside.contains(-2.0) && !inside.contains(2.0001));
    }

    #[test]
    fn complement_of_empty_is_everything() {
        assert_eq!(Event::empty().complement(), Event::everything());
        assert!(Event::everything().complement().is_empty());
    }
}
