use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::env::RaceResult;
use crate::sim::Compound;

/// Notation for what a car actually did, e.g. `S[14]M`.
pub fn executed_strategy(start: Compound, pits: &[(u32, Compound)]) -> String {
    let mut s = start.letter().to_string();
    for (lap, c) in pits {
        write!(s, "[{lap}]{}", c.letter()).expect("write to string");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopStats {
    pub first: u32,
    pub last: u32,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    /// Valid (non-failed) races considered.
    pub n_races: usize,
    /// Races that followed the modal compound sequence.
    pub n_modal: usize,
    /// Modal sequence with observed pit windows, e.g. `S[10,20]M`.
    pub notation: String,
    pub stops: Vec<StopStats>,
    /// Between one and three stops.
    pub reasonable_stops: bool,
    /// On average, harder compounds ran longer stints than softer ones.
    pub harder_runs_longer: bool,
}

impl StrategySummary {
    pub fn reasonable(&self) -> bool {
        self.reasonable_stops && self.harder_runs_longer
    }
}

/// Most common compound sequence among valid races, with min/max pit laps per stop.
pub fn strategy_summary(results: &[RaceResult], total_laps: u32) -> Option<StrategySummary> {
    let valid: Vec<&RaceResult> = results.iter().filter(|r| !r.failed).collect();
    let mut by_seq: BTreeMap<Vec<Compound>, Vec<&RaceResult>> = BTreeMap::new();
    for r in &valid {
        let seq: Vec<Compound> = std::iter::once(r.start)
            .chain(r.pits.iter().map(|p| p.1))
            .collect();
        by_seq.entry(seq).or_default().push(r);
    }
    // Largest group; ties go to the first sequence in compound order.
    let (seq, group) = by_seq
        .iter()
        .rev()
        .max_by_key(|(_, g)| g.len())
        .map(|(s, g)| (s.clone(), g.clone()))?;
    let n_stops = seq.len() - 1;
    let stops: Vec<StopStats> = (0..n_stops)
        .map(|k| {
            let laps: Vec<u32> = group.iter().map(|r| r.pits[k].0).collect();
            StopStats {
                first: *laps.iter().min().expect("non-empty group"),
                last: *laps.iter().max().expect("non-empty group"),
                mean: laps.iter().map(|&l| l as f64).sum::<f64>() / laps.len() as f64,
            }
        })
        .collect();
    let mut notation = seq[0].letter().to_string();
    for (k, s) in stops.iter().enumerate() {
        if s.first == s.last {
            write!(notation, "[{}]", s.first).expect("write to string");
        } else {
            write!(notation, "[{},{}]", s.first, s.last).expect("write to string");
        }
        notation.push(seq[k + 1].letter());
    }
    // Mean stint length per compound across the modal group.
    let mut stint: [(f64, usize); 3] = [(0.0, 0); 3];
    for r in &group {
        let mut bounds = vec![0];
        bounds.extend(r.pits.iter().map(|p| p.0));
        bounds.push(total_laps);
        let seq = std::iter::once(r.start).chain(r.pits.iter().map(|p| p.1));
        for (c, w) in seq.zip(bounds.windows(2)) {
            let e = &mut stint[c.index()];
            e.0 += w[1].saturating_sub(w[0]) as f64;
            e.1 += 1;
        }
    }
    let avg: Vec<Option<f64>> = stint
        .iter()
        .map(|&(s, n)| (n > 0).then(|| s / n as f64))
        .collect();
    let used: Vec<f64> = avg.iter().flatten().copied().collect();
    let harder_runs_longer = used.windows(2).all(|w| w[1] >= w[0]);
    Some(StrategySummary {
        n_races: valid.len(),
        n_modal: group.len(),
        notation,
        reasonable_stops: (1..=3).contains(&n_stops),
        harder_runs_longer,
        stops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn race(start: Compound, pits: Vec<(u32, Compound)>, failed: bool) -> RaceResult {
        RaceResult {
            seed: 0,
            finish: 5,
            failed,
            total_reward: 0.0,
            start,
            pits,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            records: Vec::new(),
            draws: Vec::new(),
        }
    }

    #[test]
    fn single_lap_window() {
        let rs: Vec<_> = (0..5)
            .map(|_| race(Compound::Soft, vec![(14, Compound::Medium)], false))
            .collect();
        let s = strategy_summary(&rs, 57).unwrap();
        assert_eq!(s.notation, "S[14]M");
        assert!(s.reasonable());
    }

    #[test]
    fn min_max_window_and_failures_excluded() {
        let mut rs: Vec<_> = (10..=20)
            .map(|l| race(Compound::Soft, vec![(l, Compound::Medium)], false))
            .collect();
        rs.push(race(Compound::Soft, vec![(3, Compound::Medium)], true));
        rs.push(race(Compound::Medium, vec![(30, Compound::Hard)], false));
        let s = strategy_summary(&rs, 57).unwrap();
        assert_eq!(s.notation, "S[10,20]M");
        assert_eq!(s.n_races, 12);
        assert_eq!(s.n_modal, 11);
        assert_eq!(s.stops[0].mean, 15.0);
    }

    #[test]
    fn four_stops_unreasonable() {
        let pits = vec![
            (10, Compound::Medium),
            (20, Compound::Soft),
            (30, Compound::Medium),
            (40, Compound::Hard),
        ];
        let s = strategy_summary(&[race(Compound::Soft, pits, false)], 57).unwrap();
        assert!(!s.reasonable_stops);
    }

    #[test]
    fn soft_longer_than_hard_is_flagged() {
        let s = strategy_summary(
            &[race(Compound::Soft, vec![(50, Compound::Hard)], false)],
            57,
        )
        .unwrap();
        assert!(!s.harder_runs_longer);
        let s = strategy_summary(
            &[race(Compound::Soft, vec![(15, Compound::Hard)], false)],
            57,
        )
        .unwrap();
        assert!(s.harder_runs_longer);
        assert_eq!(
            executed_strategy(
                Compound::Medium,
                &[(3, Compound::Soft), (44, Compound::Hard)]
            ),
            "M[3]S[44]H"
        );
    }
}
