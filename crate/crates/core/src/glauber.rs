//! Graphical construction of heat-bath Glauber dynamics.
//!
//! Each site carries a rate-one Poisson clock on `(-inf, 0]` with a uniform mark per
//! ring. Times are stored as depths `t >= 0` meaning the instant `-t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::SpinGraph;
use crate::lattice::BoundaryCondition;
use crate::stats::splitmix64;

/// Inverse temperature and external field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(beta: f64, h: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 || !h.is_finite() {
            return invalid(format!("need finite beta >= 0 and finite h, got beta={beta}, h={h}"));
        }
        Ok(ModelParams { beta, h })
    }

    /// Conditional probability of `+1` given local field `a`.
    pub fn plus_probability(&self, a: i32) -> f64 {
        1.0 / (1.0 + (-2.0 * self.beta * a as f64 - 2.0 * self.h).exp())
    }
}

/// Heat-bath update: `+1` iff `mark < 1 / (1 + exp(-2 beta a - 2 h))`.
pub fn flip(params: &ModelParams, a: i32, mark: f64) -> i8 {
    if mark < params.plus_probability(a) {
        1
    } else {
        -1
    }
}

/// Tabulated thresholds for the local fields a graph can produce.
#[derive(Clone, Debug)]
pub struct HeatBath {
    offset: i32,
    table: Vec<f64>,
}

impl HeatBath {
    pub fn new(params: &ModelParams, max_field: i32) -> Self {
        let table = (-max_field..=max_field).map(|a| params.plus_probability(a)).collect();
        HeatBath { offset: max_field, table }
    }

    pub fn for_graph(params: &ModelParams, g: &SpinGraph) -> Self {
        Self::new(params, g.max_field())
    }

    #[inline]
    pub fn spin(&self, a: i32, mark: f64) -> i8 {
        if mark < self.table[(a + self.offset) as usize] {
            1
        } else {
            -1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub depth: f64,
    pub mark: f64,
}

/// Clock rings and marks of every site on the depth window `[0, window]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRealization {
    n_sites: usize,
    window: f64,
    seed: Option<u64>,
    events: Vec<Vec<Event>>,
}

const MAX_SITES: usize = 1 << 44;

fn epoch_bounds(k: u32) -> (f64, f64) {
    if k == 0 {
        (0.0, 1.0)
    } else {
        ((1u64 << (k - 1)) as f64, (1u64 << k) as f64)
    }
}

fn epoch_of(depth: f64) -> u32 {
    let mut k = 0;
    while epoch_bounds(k).1 <= depth {
        k += 1;
    }
    k
}

fn stream_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

fn epoch_events(key: &[u8; 32], site: usize, k: u32) -> Vec<Event> {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(((site as u64) << 20) | k as u64);
    let (lo, hi) = epoch_bounds(k);
    let mut out = Vec::new();
    let mut t = lo;
    loop {
        t += -(1.0 - rng.gen::<f64>()).ln();
        if t >= hi {
            return out;
        }
        out.push(Event { depth: t, mark: rng.gen() });
    }
}

#[derive(Serialize, Deserialize)]
struct Dump {
    n_sites: usize,
    window: f64,
    seed: Option<u64>,
    /// `(site, time, mark)` with `time = -depth`.
    events: Vec<(usize, f64, f64)>,
}

impl UpdateRealization {
    /// Draws the realization on `[0, window]` from the streams of `seed`.
    pub fn sample(n_sites: usize, window: f64, seed: u64) -> Result<Self> {
        if n_sites > MAX_SITES {
            return Err(Error::SizeCap { what: "sites", size: n_sites, cap: MAX_SITES });
        }
        let mut r = UpdateRealization { n_sites, window: 0.0, seed: Some(seed), events: vec![Vec::new(); n_sites] };
        r.extend_backward(window)?;
        Ok(r)
    }

    /// Replays explicit `(site, depth, mark)` events; such realizations cannot be extended.
    pub fn from_events(n_sites: usize, window: f64, events: &[(usize, f64, f64)]) -> Result<Self> {
        if !(window >= 0.0) {
            return invalid("window must be >= 0");
        }
        let mut per = vec![Vec::new(); n_sites];
        for &(s, depth, mark) in events {
            if s >= n_sites || !(depth > 0.0 && depth <= window) || !(0.0..=1.0).contains(&mark) {
                return invalid(format!("event ({s}, {depth}, {mark}) outside the realization"));
            }
            per[s].push(Event { depth, mark });
        }
        for l in per.iter_mut() {
            l.sort_by(|a, b| a.depth.total_cmp(&b.depth));
        }
        Ok(UpdateRealization { n_sites, window, seed: None, events: per })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    pub fn window(&self) -> f64 {
        self.window
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Events of `site` in increasing depth.
    pub fn events(&self, site: usize) -> &[Event] {
        &self.events[site]
    }

    pub fn total_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// First event of `site` at depth `>= from` (or `> from` when `strict`).
    #[inline]
    pub fn next_event(&self, site: usize, from: f64, strict: bool) -> Option<Event> {
        let ev = &self.events[site];
        let i = if strict { ev.partition_point(|e| e.depth <= from) } else { ev.partition_point(|e| e.depth < from) };
        ev.get(i).copied()
    }

    /// Grows the window to `new_window`; existing events are untouched.
    pub fn extend_backward(&mut self, new_window: f64) -> Result<()> {
        if !(new_window >= 0.0) || !new_window.is_finite() {
            return invalid(format!("window must be finite and >= 0, got {new_window}"));
        }
        if new_window <= self.window {
            return Ok(());
        }
        let Some(seed) = self.seed else {
            return Err(Error::NotExtendable { window: self.window });
        };
        let key = stream_key(seed);
        let (old, first, last) = (self.window, epoch_of(self.window), epoch_of(new_window));
        for (site, list) in self.events.iter_mut().enumerate() {
            for k in first..=last {
                list.extend(epoch_events(&key, site, k).into_iter().filter(|e| e.depth > old && e.depth <= new_window));
            }
        }
        self.window = new_window;
        Ok(())
    }

    /// Extends if the window is shorter than `depth`.
    pub fn ensure_window(&mut self, depth: f64) -> Result<()> {
        if depth <= self.window {
            return Ok(());
        }
        if self.seed.is_none() {
            return Err(Error::WindowTooShort { window: self.window, needed: depth });
        }
        self.extend_backward(depth)
    }

    pub fn check_window(&self, depth: f64) -> Result<()> {
        if depth > self.window {
            return Err(Error::WindowTooShort { window: self.window, needed: depth });
        }
        Ok(())
    }

    /// The same realization cut down to `[0, window]`.
    pub fn restrict(&self, window: f64) -> Self {
        let window = window.min(self.window);
        let events = self.events.iter().map(|l| l.iter().copied().filter(|e| e.depth <= window).collect()).collect();
        UpdateRealization { n_sites: self.n_sites, window, seed: self.seed, events }
    }

    /// All events as `(depth, site, mark)`, sorted by depth then site.
    pub fn sorted_events(&self) -> Vec<(f64, usize, f64)> {
        let mut all: Vec<(f64, usize, f64)> =
            self.events.iter().enumerate().flat_map(|(s, l)| l.iter().map(move |e| (e.depth, s, e.mark))).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all
    }

    pub fn to_json(&self) -> Result<String> {
        let events = self.sorted_events().into_iter().map(|(d, s, m)| (s, -d, m)).collect();
        Ok(serde_json::to_string(&Dump { n_sites: self.n_sites, window: self.window, seed: self.seed, events })?)
    }

    /// Loads a dump; the result is a replay and keeps no seed.
    pub fn from_json(s: &str) -> Result<Self> {
        let dump: Dump = serde_json::from_str(s)?;
        let events: Vec<(usize, f64, f64)> = dump.events.into_iter().map(|(s, t, m)| (s, -t, m)).collect();
        Self::from_events(dump.n_sites, dump.window, &events)
    }
}

/// A `+-1` configuration, optionally tagged with the boundary condition it was drawn under.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    pub spins: Vec<i8>,
    pub bc: Option<BoundaryCondition>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Self {
        assert!(spins.iter().all(|&s| s == 1 || s == -1), "spins must be +-1");
        SpinConfig { spins, bc: None }
    }
    pub fn all_plus(n: usize) -> Self {
        Self::new(vec![1; n])
    }
    pub fn all_minus(n: usize) -> Self {
        Self::new(vec![-1; n])
    }
    /// Pointwise order.
    pub fn le(&self, other: &SpinConfig) -> bool {
        self.spins.iter().zip(&other.spins).all(|(a, b)| a <= b)
    }
}

/// Applies every event with `end <= depth <= start` in forward time order.
///
/// `on_event(site, spins)` runs after each update. Ties in depth are ordered by
/// site index, the larger site being the earlier event.
pub fn evolve_window(
    real: &UpdateRealization,
    graph: &SpinGraph,
    params: &ModelParams,
    spins: &mut [i8],
    start: f64,
    end: f64,
    mut on_event: impl FnMut(usize, &[i8]),
) -> Result<()> {
    real.check_window(start)?;
    let hb = HeatBath::for_graph(params, graph);
    let events = real.sorted_events();
    for &(depth, site, mark) in events.iter().rev() {
        if depth > start || depth < end {
            continue;
        }
        spins[site] = hb.spin(graph.local_field(spins, site), mark);
        on_event(site, spins);
    }
    Ok(())
}

/// `sigma_0` started from `eta` at the deepest point of the window.
pub fn evolve(real: &UpdateRealization, graph: &SpinGraph, params: &ModelParams, eta: &SpinConfig) -> Result<SpinConfig> {
    let mut s = eta.spins.clone();
    evolve_window(real, graph, params, &mut s, real.window(), 0.0, |_, _| {})?;
    Ok(SpinConfig { spins: s, bc: eta.bc })
}

/// Evolutions from all-plus and all-minus.
pub fn evolve_extremal(real: &UpdateRealization, graph: &SpinGraph, params: &ModelParams) -> Result<(SpinConfig, SpinConfig)> {
    let n = graph.n_sites();
    Ok((evolve(real, graph, params, &SpinConfig::all_plus(n))?, evolve(real, graph, params, &SpinConfig::all_minus(n))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TorusGeom;

    fn p(beta: f64, h: f64) -> ModelParams {
        ModelParams::new(beta, h).unwrap()
    }

    #[test]
    fn flip_thresholds() {
        assert_eq!(flip(&p(0.0, 0.0), 3, 0.49), 1);
        assert_eq!(flip(&p(0.0, 0.0), -3, 0.51), -1);
        assert_eq!(flip(&p(0.5, 0.0), 2, 0.88), 1);
        assert_eq!(flip(&p(0.5, 0.0), 2, 0.8809), -1);
    }

    #[test]
    fn empty_window_has_no_events() {
        let r = UpdateRealization::sample(10, 0.0, 1).unwrap();
        assert_eq!(r.total_events(), 0);
    }

    #[test]
    fn extension_is_consistent() {
        let one = UpdateRealization::sample(7, 5.3, 11).unwrap();
        let mut two = UpdateRealization::sample(7, 1.0, 11).unwrap();
        two.extend_backward(2.5).unwrap();
        two.extend_backward(5.3).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.restrict(1.0), UpdateRealization::sample(7, 1.0, 11).unwrap());
        let mut same = one.clone();
        same.extend_backward(5.3).unwrap();
        assert_eq!(same, one);
    }

    #[test]
    fn replay_cannot_extend() {
        let mut r = UpdateRealization::from_events(2, 1.0, &[(0, 0.5, 0.3)]).unwrap();
        assert!(matches!(r.extend_backward(2.0), Err(Error::NotExtendable { .. })));
        assert!(UpdateRealization::from_events(2, 1.0, &[(0, 1.5, 0.3)]).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let r = UpdateRealization::sample(5, 2.0, 3).unwrap();
        let back = UpdateRealization::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.sorted_events(), r.sorted_events());
        assert_eq!(back.seed(), None);
    }

    #[test]
    fn no_events_is_identity_and_infinite_field_saturates() {
        let t = TorusGeom::new(1, 3).unwrap();
        let g = SpinGraph::torus(&t);
        let eta = SpinConfig::new(vec![1, -1, 1, -1, -1, 1]);
        let r = UpdateRealization::sample(6, 0.0, 0).unwrap();
        assert_eq!(evolve(&r, &g, &p(0.4, 0.0), &eta).unwrap(), eta);
        let r = UpdateRealization::sample(6, 3.0, 0).unwrap();
        let out = evolve(&r, &g, &p(0.0, 1e9), &eta).unwrap();
        for s in 0..6 {
            if !r.events(s).is_empty() {
                assert_eq!(out.spins[s], 1);
            }
        }
    }

    #[test]
    fn beta_zero_extremals_agree_on_updated_sites() {
        let t = TorusGeom::new(2, 3).unwrap();
        let g = SpinGraph::torus(&t);
        let r = UpdateRealization::sample(t.n_sites(), 0.7, 9).unwrap();
        let (top, bot) = evolve_extremal(&r, &g, &p(0.0, 0.3)).unwrap();
        for s in 0..t.n_sites() {
            assert_eq!(top.spins[s] == bot.spins[s], !r.events(s).is_empty());
        }
    }
}
