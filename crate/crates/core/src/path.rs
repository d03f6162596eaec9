//! Sampled paths, dyadic partitions, quadratic variation and the local
//! realized volatility read off it.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;

/// A trajectory on a fine time grid, with optional jump marks.
///
/// Running sums (left-point integrals of the value and of its logarithm, and
/// the running maximum) are precomputed so that stopped-path queries are O(1).
#[derive(Debug, Clone)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    /// grid index -> left-limit value
    jumps: BTreeMap<usize, f64>,
    positive: bool,
    cum_int: Vec<f64>,
    cum_log: Vec<f64>,
    run_max: Vec<f64>,
}

impl SampledPath {
    /// Build a path from raw samples. `price` requests strict positivity.
    pub fn new(times: Vec<f64>, values: Vec<f64>, price: bool) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidPath(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath("need at least two samples".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidPath(format!("first time must be 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPath("times must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("values must be finite".into()));
        }
        if price && values.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidPath("price path must be strictly positive".into()));
        }
        let n = values.len();
        let mut cum_int = vec![0.0; n];
        let mut cum_log = vec![0.0; n];
        let mut run_max = vec![values[0]; n];
        for k in 1..n {
            let dt = times[k] - times[k - 1];
            cum_int[k] = cum_int[k - 1] + values[k - 1] * dt;
            cum_log[k] = if price { cum_log[k - 1] + values[k - 1].ln() * dt } else { f64::NAN };
            run_max[k] = run_max[k - 1].max(values[k]);
        }
        Ok(SampledPath { times, values, jumps: BTreeMap::new(), positive: price, cum_int, cum_log, run_max })
    }

    /// Path on the uniform grid of `values.len() - 1` cells over [0, horizon].
    pub fn uniform(horizon: f64, values: Vec<f64>, price: bool) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidPath("horizon must be positive".into()));
        }
        let cells = values.len().saturating_sub(1).max(1);
        let times = (0..values.len()).map(|k| horizon * k as f64 / cells as f64).collect();
        Self::new(times, values, price)
    }

    /// Uniform dyadic grid of 2^level cells; `f` gives the value at each time.
    pub fn from_fn<F: Fn(f64) -> f64>(horizon: f64, level: u32, price: bool, f: F) -> Result<Self> {
        let cells = 1usize << level;
        let values = (0..=cells).map(|k| f(horizon * k as f64 / cells as f64)).collect();
        Self::uniform(horizon, values, price)
    }

    /// Attach jump marks: (grid index, left-limit value).
    pub fn with_jumps(mut self, marks: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        for (k, left) in marks {
            if k == 0 || k >= self.values.len() {
                return Err(Error::InvalidPath(format!("jump mark {k} is not an interior grid index")));
            }
            if !left.is_finite() || left == self.values[k] {
                return Err(Error::InvalidPath(format!(
                    "left limit at jump mark {k} must differ from the value"
                )));
            }
            if self.positive && left <= 0.0 {
                return Err(Error::InvalidPath("left limit must be positive on a price path".into()));
            }
            self.jumps.insert(k, left);
        }
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jumps(&self) -> &BTreeMap<usize, f64> {
        &self.jumps
    }

    pub fn is_price(&self) -> bool {
        self.positive
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest grid index whose time is <= t (t clamped to the grid).
    pub fn index_at(&self, t: f64) -> usize {
        let tol = 1e-12 * self.horizon();
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => {
                if (self.times[k.min(self.len() - 1)] - t).abs() <= tol {
                    k.min(self.len() - 1)
                } else {
                    k - 1
                }
            }
        }
    }

    /// Exact grid index of time t, if t is (to rounding) a grid time.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        let k = self.index_at(t);
        let tol = 1e-9 * self.horizon() / self.len() as f64;
        ((self.times[k] - t).abs() <= tol).then_some(k)
    }

    /// Previous-tick value at t.
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    /// Left-point integral of the path over [0, t_k].
    pub fn integral_to(&self, k: usize) -> f64 {
        self.cum_int[k]
    }

    /// Left-point integral of log of the path over [0, t_k] (price paths only).
    pub fn log_integral_to(&self, k: usize) -> f64 {
        self.cum_log[k]
    }

    /// max of the path over indices 0..=k.
    pub fn max_to(&self, k: usize) -> f64 {
        self.run_max[k]
    }

    /// Copy of the path with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let p = Self::new(self.times.clone(), self.values.iter().map(|v| v * c).collect(), self.positive)?;
        p.with_jumps(self.jumps.iter().map(|(k, l)| (*k, l * c)))
    }

    /// Copy with values at indices >= k multiplied by (1 + e): the vertical
    /// perturbation omega (1 + e 1_[t,T]).
    pub fn perturbed_from(&self, k: usize, e: f64) -> Result<Self> {
        let mut v = self.values.clone();
        v[k..].iter_mut().for_each(|x| *x *= 1.0 + e);
        Self::new(self.times.clone(), v, self.positive)
    }

    /// Copy with values replaced after index k (testing non-anticipativity).
    pub fn with_values_after(&self, k: usize, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let v = self
            .values
            .iter()
            .enumerate()
            .map(|(j, x)| if j > k { f(j, *x) } else { *x })
            .collect();
        Self::new(self.times.clone(), v, self.positive)
    }

    /// Read `time,value[,jump]` CSV and resample onto a uniform grid of
    /// 2^level cells by previous-tick interpolation. A `jump` flag of 1 marks
    /// a jump at that observation; its left limit is the previous observation.
    pub fn from_csv<R: Read>(reader: R, level: u32, price: bool) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            time: f64,
            value: f64,
            #[serde(default)]
            jump: Option<u8>,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut obs: Vec<(f64, f64, bool)> = Vec::new();
        for row in rdr.deserialize() {
            let r: Row = row?;
            obs.push((r.time, r.value, r.jump.unwrap_or(0) == 1));
        }
        if obs.len() < 2 {
            return Err(Error::InvalidPath("CSV path needs at least two rows".into()));
        }
        if obs[0].0 != 0.0 {
            return Err(Error::InvalidPath("CSV path must start at time 0".into()));
        }
        if obs.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidPath("CSV times must be strictly increasing".into()));
        }
        let horizon = obs.last().expect("rows").0;
        let cells = 1usize << level;
        let mut values = Vec::with_capacity(cells + 1);
        let mut marks = Vec::new();
        let mut j = 0;
        for k in 0..=cells {
            let t = horizon * k as f64 / cells as f64;
            let before = j;
            while j + 1 < obs.len() && obs[j + 1].0 <= t + 1e-12 * horizon {
                j += 1;
            }
            if k > 0 && (before + 1..=j).any(|i| obs[i].2) {
                marks.push((k, values[k - 1]));
            }
            values.push(obs[j].1);
        }
        let path = Self::uniform(horizon, values, price)?;
        let marks: Vec<_> = marks.into_iter().filter(|(k, l)| path.values[*k] != *l).collect();
        path.with_jumps(marks)
    }

    /// Write `time,value` CSV.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["time", "value"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            wtr.write_record([t.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Nested dyadic partitions of [0, T]; level n has breakpoints k T / 2^n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicPartitionSequence {
    pub horizon: f64,
    pub max_level: u32,
}

impl DyadicPartitionSequence {
    pub fn new(horizon: f64, max_level: u32) -> Result<Self> {
        if !(horizon > 0.0) || !(1..=30).contains(&max_level) {
            return Err(Error::Grid(format!(
                "need horizon > 0 and 1 <= max_level <= 30, got {horizon}, {max_level}"
            )));
        }
        Ok(DyadicPartitionSequence { horizon, max_level })
    }

    pub fn mesh(&self, level: u32) -> f64 {
        self.horizon / (1u64 << level) as f64
    }

    pub fn breakpoints(&self, level: u32) -> Vec<f64> {
        let n = 1usize << level;
        (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect()
    }

    /// Grid indices of the level-n breakpoints in `path`.
    pub fn indices(&self, path: &SampledPath, level: u32) -> Result<Vec<usize>> {
        if level > self.max_level {
            return Err(Error::Grid(format!("level {level} exceeds max level {}", self.max_level)));
        }
        if (path.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::Grid(format!(
                "partition horizon {} differs from path horizon {}",
                self.horizon,
                path.horizon()
            )));
        }
        let n = 1usize << level;
        // fast path: uniform grid whose cell count is a multiple of 2^level
        let cells = path.len() - 1;
        if cells.is_multiple_of(n) {
            let stride = cells / n;
            let idx: Vec<usize> = (0..=n).map(|k| k * stride).collect();
            let ok = idx.iter().enumerate().all(|(k, &i)| {
                (path.times[i] - self.horizon * k as f64 / n as f64).abs() <= 1e-9 * self.mesh(level)
            });
            if ok {
                return Ok(idx);
            }
        }
        self.breakpoints(level)
            .into_iter()
            .map(|t| path.grid_index(t).ok_or(Error::GridMismatch { level, time: t }))
            .collect()
    }
}

/// Quadratic variation estimates along the partition levels.
#[derive(Debug, Clone, Serialize)]
pub struct QVEstimate {
    /// A^n sampled on the level-n breakpoints, for n = 1..=N (index n-1).
    pub per_level: Vec<Vec<f64>>,
    pub limit_estimate: f64,
    pub converged: bool,
    pub local_vol: Option<Vec<f64>>,
    pub max_level: u32,
    pub horizon: f64,
}

impl QVEstimate {
    /// A^N at every finest breakpoint.
    pub fn finest(&self) -> &[f64] {
        self.per_level.last().expect("at least one level")
    }

    /// A^N(T) for each level.
    pub fn terminal_by_level(&self) -> Vec<f64> {
        self.per_level.iter().map(|v| *v.last().expect("non-empty")).collect()
    }

    /// [omega](t) from the finest level, exact for any t in [0, T].
    pub fn at(&self, path: &SampledPath, t: f64) -> f64 {
        let fine = self.finest();
        let cells = fine.len() - 1;
        let mesh = self.horizon / cells as f64;
        let pos = (t / mesh).clamp(0.0, cells as f64);
        let i = (pos.floor() as usize).min(cells);
        let ti = i as f64 * mesh;
        if i == cells || (t - ti).abs() <= 1e-12 * self.horizon {
            return fine[i];
        }
        let d = path.value_at(t) - path.value_at(ti);
        fine[i] + d * d
    }
}

fn increments_sq(path: &SampledPath, idx: &[usize], t: f64) -> Vec<f64> {
    // A^n at each breakpoint <= t, then frozen; the last partial cell included
    let v = path.values();
    let tv = path.value_at(t);
    let times = path.times();
    let mut out = Vec::with_capacity(idx.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if times[a] < t {
            let d = if times[b] <= t { v[b] - v[a] } else { tv - v[a] };
            acc += d * d;
        }
        out.push(acc);
    }
    out
}

/// A^n(t) = sum_i (omega(t_{i+1} ^ t) - omega(t_i ^ t))^2 on level n.
pub fn qv_approx(path: &SampledPath, level: u32, t: f64) -> Result<f64> {
    let horizon = path.horizon();
    if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::HorizonExceeded { time: t, horizon });
    }
    let part = DyadicPartitionSequence::new(horizon, level.max(1))?;
    let idx = if level == 0 { vec![0, path.len() - 1] } else { part.indices(path, level)? };
    Ok(*increments_sq(path, &idx, t).last().expect("non-empty"))
}

/// A^n for n = 1..N; converged when the last two level-to-level changes of
/// A^n(T) are below `tol` relative to A^N(T).
pub fn qv_limit(path: &SampledPath, partitions: &DyadicPartitionSequence, tol: f64) -> Result<QVEstimate> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    let horizon = path.horizon();
    let mut per_level = Vec::with_capacity(partitions.max_level as usize);
    for n in 1..=partitions.max_level {
        let idx = partitions.indices(path, n)?;
        per_level.push(increments_sq(path, &idx, horizon));
    }
    let term: Vec<f64> = per_level.iter().map(|v| *v.last().expect("non-empty")).collect();
    let limit = *term.last().expect("levels");
    let scale = limit.abs();
    let n = term.len();
    let close = |a: f64, b: f64| (a - b).abs() <= tol * scale;
    let converged = n >= 3 && close(term[n - 1], term[n - 2]) && close(term[n - 2], term[n - 3]);
    Ok(QVEstimate {
        per_level,
        limit_estimate: limit,
        converged,
        local_vol: None,
        max_level: partitions.max_level,
        horizon: partitions.horizon,
    })
}

/// (1/omega(t)) sqrt(([omega](t+w) - [omega](t)) / w) with [omega] from the finest level.
pub fn local_realized_vol(qv: &QVEstimate, path: &SampledPath, t: f64, window: f64) -> Result<f64> {
    let horizon = path.horizon();
    if !(window > 0.0) || t < 0.0 || t + window > horizon * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("window [{t}, {}] not inside [0, {horizon}]", t + window)));
    }
    let w = path.value_at(t);
    if w <= 0.0 {
        return Err(Error::Domain("path touches zero".into()));
    }
    let dq = (qv.at(path, (t + window).min(horizon)) - qv.at(path, t)).max(0.0);
    Ok((dq / window).sqrt() / w)
}

/// Local realized vol on every finest cell (window = one cell); stored on the estimate.
pub fn attach_local_vol(qv: &mut QVEstimate, path: &SampledPath) -> Result<()> {
    let fine = qv.finest();
    let cells = fine.len() - 1;
    let mesh = qv.horizon / cells as f64;
    let part = DyadicPartitionSequence::new(qv.horizon, qv.max_level)?;
    let idx = part.indices(path, qv.max_level)?;
    let mut out = Vec::with_capacity(cells);
    for i in 0..cells {
        let w = path.values()[idx[i]];
        if w <= 0.0 {
            return Err(Error::Domain("path touches zero".into()));
        }
        out.push(((fine[i + 1] - fine[i]) / mesh).sqrt() / w);
    }
    qv.local_vol = Some(out);
    Ok(())
}

/// Both sides of A^n(t) = omega(t)^2 - omega(0)^2 + G(t; phi^n), phi^n = -2 omega(t_i).
pub fn qv_gain_identity(path: &SampledPath, level: u32, t: f64) -> Result<(f64, f64)> {
    let a = qv_approx(path, level, t)?;
    let part = DyadicPartitionSequence::new(path.horizon(), level.max(1))?;
    let idx = part.indices(path, level)?;
    let v = path.values();
    let times = path.times();
    let tv = path.value_at(t);
    let mut gain = 0.0;
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        if times[i] >= t {
            break;
        }
        let end = if times[j] <= t { v[j] } else { tv };
        gain += -2.0 * v[i] * (end - v[i]);
    }
    Ok((a, tv * tv - v[0] * v[0] + gain))
}

/// Continuous part [omega]^c(T) = A^N(T) - sum of squared jumps.
pub fn continuous_qv(qv: &QVEstimate, path: &SampledPath) -> f64 {
    let jumps: f64 = path.jumps().iter().map(|(k, l)| (path.values()[*k] - l).powi(2)).sum();
    qv.limit_estimate - jumps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_path_qv() {
        let p = SampledPath::from_fn(1.0, 10, false, |t| t).unwrap();
        for n in [1u32, 3, 7, 10] {
            let a = qv_approx(&p, n, 1.0).unwrap();
            assert!((a - 2f64.powi(-(n as i32))).abs() < 1e-15);
        }
        let (a, b) = qv_gain_identity(&p, 3, 1.0).unwrap();
        assert!((a - 0.125).abs() < 1e-15 && (b - 0.125).abs() < 1e-15);
    }

    #[test]
    fn constant_path_is_converged_zero() {
        let p = SampledPath::uniform(1.0, vec![2.0; 1025], true).unwrap();
        let part = DyadicPartitionSequence::new(1.0, 10).unwrap();
        let q = qv_limit(&p, &part, 1e-3).unwrap();
        assert_eq!(q.limit_estimate, 0.0);
        assert!(q.converged);
        assert_eq!(local_realized_vol(&q, &p, 0.2, 1.0 / 52.0).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let times = vec![0.0, 0.3, 1.0];
        let p = SampledPath::new(times, vec![1.0, 1.1, 1.2], true).unwrap();
        assert!(matches!(qv_approx(&p, 1, 1.0), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn partial_cell_uses_stopped_value() {
        let p = SampledPath::from_fn(1.0, 4, false, |t| t).unwrap();
        // level 1 stopped at t = 0.25: single partial increment 0.25
        assert!((qv_approx(&p, 1, 0.25).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn qv_at_matches_direct() {
        let p = SampledPath::from_fn(1.0, 6, true, |t| 1.0 + 0.3 * (7.0 * t).sin()).unwrap();
        let part = DyadicPartitionSequence::new(1.0, 6).unwrap();
        let q = qv_limit(&p, &part, 1e-3).unwrap();
        for t in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert!((q.at(&p, t) - qv_approx(&p, 6, t).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_ingestion_resamples_and_marks_jumps() {
        let data = "time,value,jump\n0,1.0,0\n0.3,1.2,0\n0.5,1.5,1\n1.0,1.4,0\n";
        let p = SampledPath::from_csv(data.as_bytes(), 2, true).unwrap();
        assert_eq!(p.values(), &[1.0, 1.0, 1.5, 1.5, 1.4]);
        assert_eq!(p.jumps().get(&2), Some(&1.0));
        let data = "time,value\n0,1\n1,2\n";
        let p = SampledPath::from_csv(data.as_bytes(), 1, true).unwrap();
        assert_eq!(p.values(), &[1.0, 1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(SampledPath::new(vec![0.0, 0.0], vec![1.0, 1.0], false).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![1.0, -1.0], true).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![1.0, f64::NAN], false).is_err());
        let p = SampledPath::uniform(1.0, vec![1.0, 2.0, 3.0], true).unwrap();
        assert!(p.clone().with_jumps([(1, 2.0)]).is_err());
        assert!(p.with_jumps([(5, 1.0)]).is_err());
    }
}
