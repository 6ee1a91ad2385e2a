//! Hibernation and resume injection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::model::{InstanceId, Period, VmTypeId};

use super::events::{EventKind, SimEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Expected hibernations per spot type over the deadline.
    pub k_h: f64,
    /// Expected resumes over the deadline; 0 means hibernations never end.
    pub k_r: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn lambda_h(&self, deadline: Period) -> f64 {
        self.k_h / deadline as f64
    }

    pub fn lambda_r(&self, deadline: Period) -> f64 {
        self.k_r / deadline as f64
    }

    pub fn is_quiet(&self) -> bool {
        self.k_h <= 0.0
    }
}

/// Arrival times of a Poisson process of `rate` events per second on `[0, horizon]`.
pub fn poisson_arrivals<R: Rng + ?Sized>(rate: f64, horizon: Period, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let gap = Exp::new(rate).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > horizon as f64 {
            return out;
        }
        out.push(t);
    }
}

/// Hibernate and resume events for the given spot instances.
///
/// Each spot type has its own Poisson process. A hibernation picks a victim
/// uniformly among that type's instances not hibernated at that moment and
/// is dropped if there is none. Every type draws from its own stream seeded
/// from one draw of `rng`, so adding a type leaves the others unchanged.
pub fn generate_events<R: Rng + ?Sized>(
    scenario: &ScenarioSpec,
    spot_instances: &[(InstanceId, VmTypeId)],
    deadline: Period,
    rng: &mut R,
) -> Vec<SimEvent> {
    let base: u64 = rng.gen();
    let mut by_type: BTreeMap<VmTypeId, Vec<InstanceId>> = BTreeMap::new();
    for &(id, t) in spot_instances {
        by_type.entry(t).or_default().push(id);
    }
    let resume = (scenario.k_r > 0.0).then(|| Exp::new(scenario.lambda_r(deadline)).expect("positive rate"));

    let mut raw: Vec<(Period, InstanceId, Option<Period>)> = Vec::new();
    for (vm_type, mut ids) in by_type {
        ids.sort();
        let mut stream = ChaCha8Rng::seed_from_u64(base);
        stream.set_stream(u64::from(vm_type.0));
        let mut busy_until: BTreeMap<InstanceId, f64> = BTreeMap::new();
        for t in poisson_arrivals(scenario.lambda_h(deadline), deadline, &mut stream) {
            let free: Vec<InstanceId> = ids
                .iter()
                .copied()
                .filter(|id| busy_until.get(id).map_or(true, |&u| u <= t))
                .collect();
            if free.is_empty() {
                continue;
            }
            let victim = free[stream.gen_range(0..free.len())];
            let delay = resume.as_ref().map(|d| d.sample(&mut stream));
            let at = t.ceil() as Period;
            let back = delay.map(|d| (t + d).ceil().max(at as f64 + 1.0) as Period);
            busy_until.insert(victim, back.map_or(f64::INFINITY, |b| b as f64));
            raw.push((at, victim, back));
        }
    }
    raw.sort_by_key(|&(at, id, _)| (at, id));

    let mut events = Vec::new();
    for (pair, (at, instance, back)) in raw.into_iter().enumerate() {
        let pair = pair as u32;
        events.push(SimEvent { at, seq: 0, kind: EventKind::Hibernate { instance, pair } });
        if let Some(b) = back {
            events.push(SimEvent { at: b, seq: 0, kind: EventKind::Resume { instance, pair } });
        }
    }
    events.sort_by_key(|e| (e.at, matches!(e.kind, EventKind::Hibernate { .. })));
    for (i, e) in events.iter_mut().enumerate() {
        e.seq = i as u64;
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(k_h: f64, k_r: f64) -> ScenarioSpec {
        ScenarioSpec { name: "t".into(), k_h, k_r, seed: 0 }
    }

    #[test]
    fn quiet_scenario_has_no_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ev = generate_events(&scenario(0.0, 5.0), &[(InstanceId(0), VmTypeId(0))], 2700, &mut rng);
        assert!(ev.is_empty());
    }

    #[test]
    fn no_resume_without_resume_rate() {
        let ids: Vec<_> = (0..5).map(|i| (InstanceId(i), VmTypeId(0))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let ev = generate_events(&scenario(5.0, 0.0), &ids, 2700, &mut rng);
            assert!(ev.iter().all(|e| matches!(e.kind, EventKind::Hibernate { .. })));
        }
    }

    #[test]
    fn no_second_hibernation_before_resume() {
        let ids: Vec<_> = (0..3).map(|i| (InstanceId(i), VmTypeId(i as u16 % 2))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let ev = generate_events(&scenario(8.0, 4.0), &ids, 2700, &mut rng);
            let mut down = BTreeMap::new();
            for e in &ev {
                match e.kind {
                    EventKind::Hibernate { instance, .. } => {
                        assert!(down.insert(instance, ()).is_none());
                    }
                    EventKind::Resume { instance, .. } => {
                        assert!(down.remove(&instance).is_some());
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
}
