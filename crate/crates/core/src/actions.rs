//! Enumerated primitive actions (substation configurations) and masks for
//! the three decision levels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Busbar, GridSpec, Substation, SubstationConfig, TopologyState};

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("substation {0} is not controllable")]
    UnknownSubstation(usize),
    #[error("action index {0} out of range")]
    OutOfRange(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveAction {
    DoNothing,
    Reconfigure { substation: usize, config: SubstationConfig },
}

impl PrimitiveAction {
    pub fn substation(&self) -> Option<usize> {
        match self {
            PrimitiveAction::DoNothing => None,
            PrimitiveAction::Reconfigure { substation, .. } => Some(*substation),
        }
    }
}

/// Static feasibility rules applied when enumerating configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRules {
    /// Keep only patterns whose first element is on busbar 1 (mirrors are identical).
    pub busbar_symmetry: bool,
    /// Every non-empty busbar needs at least one line end: rejects an injection
    /// left alone without a line, and the line-ends / injections split.
    pub require_line_per_busbar: bool,
    /// Minimum number of elements on every non-empty busbar.
    pub min_elements_per_busbar: usize,
    /// Drop substations that keep only a single configuration.
    pub drop_single_config: bool,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            busbar_symmetry: true,
            require_line_per_busbar: true,
            min_elements_per_busbar: 2,
            drop_single_config: true,
        }
    }
}

impl FilterRules {
    pub fn accepts(&self, sub: &Substation, config: &SubstationConfig) -> bool {
        for bus in [Busbar::One, Busbar::Two] {
            let on_bus: Vec<_> = sub
                .elements
                .iter()
                .zip(&config.0)
                .filter(|(_, b)| **b == bus)
                .map(|(e, _)| *e)
                .collect();
            if on_bus.is_empty() {
                continue;
            }
            if self.require_line_per_busbar && !on_bus.iter().any(|e| e.is_line_end()) {
                return false;
            }
            if on_bus.len() < self.min_elements_per_busbar {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }
    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }
    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// The flat primitive action set. Index 0 is always do-nothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub actions: Vec<PrimitiveAction>,
    pub per_substation: BTreeMap<usize, IndexRange>,
    pub controllable_substations: Vec<usize>,
}

/// Number of patterns for `n` elements after removing mirrored duplicates.
pub fn raw_symmetric_count(n: usize) -> usize {
    if n == 0 {
        1
    } else {
        1 << (n - 1)
    }
}

/// All accepted configurations of one substation, in ascending bit order.
pub fn substation_configs(sub: &Substation, rules: &FilterRules) -> Vec<SubstationConfig> {
    let n = sub.n_elements();
    let total: u64 = if rules.busbar_symmetry { raw_symmetric_count(n) as u64 } else { 1 << n };
    (0..total)
        .map(|raw| {
            // With symmetry the first element is pinned to busbar 1.
            let bits = if rules.busbar_symmetry { raw << 1 } else { raw };
            SubstationConfig::from_bits(bits, n)
        })
        .filter(|c| rules.accepts(sub, c))
        .collect()
}

pub fn enumerate_catalog(spec: &GridSpec, rules: &FilterRules) -> ActionCatalog {
    let mut actions = vec![PrimitiveAction::DoNothing];
    let mut per_substation = BTreeMap::new();
    let mut controllable = Vec::new();
    for sub in &spec.substations {
        let configs = substation_configs(sub, rules);
        if configs.is_empty() || (rules.drop_single_config && configs.len() < 2) {
            continue;
        }
        let start = actions.len();
        actions.extend(
            configs
                .into_iter()
                .map(|config| PrimitiveAction::Reconfigure { substation: sub.id, config }),
        );
        per_substation.insert(sub.id, IndexRange { start, end: actions.len() });
        controllable.push(sub.id);
    }
    ActionCatalog { actions, per_substation, controllable_substations: controllable }
}

impl ActionCatalog {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<&PrimitiveAction, ActionError> {
        self.actions.get(i).ok_or(ActionError::OutOfRange(i))
    }

    pub fn range(&self, sub: usize) -> Result<IndexRange, ActionError> {
        self.per_substation.get(&sub).copied().ok_or(ActionError::UnknownSubstation(sub))
    }

    pub fn n_controllable(&self) -> usize {
        self.controllable_substations.len()
    }

    /// Position of `sub` among the controllable substations.
    pub fn substation_slot(&self, sub: usize) -> Option<usize> {
        self.controllable_substations.iter().position(|&s| s == sub)
    }

    pub fn substation_of(&self, action: usize) -> Option<usize> {
        self.actions.get(action).and_then(|a| a.substation())
    }

    pub fn index_of(&self, action: &PrimitiveAction) -> Option<usize> {
        match action {
            PrimitiveAction::DoNothing => Some(0),
            PrimitiveAction::Reconfigure { substation, .. } => {
                let r = self.per_substation.get(substation)?;
                r.iter().find(|&i| &self.actions[i] == action)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

pub fn mask_for_substation(catalog: &ActionCatalog, sub: usize) -> Result<Vec<bool>, ActionError> {
    let r = catalog.range(sub)?;
    Ok((0..catalog.len()).map(|i| r.contains(i)).collect())
}

/// Do-nothing is always legal; a reconfiguration is legal iff its substation is off cooldown.
pub fn legal_actions(catalog: &ActionCatalog, state: &TopologyState) -> Vec<bool> {
    catalog
        .actions
        .iter()
        .map(|a| match a {
            PrimitiveAction::DoNothing => true,
            PrimitiveAction::Reconfigure { substation, .. } => state.cooldown[*substation] == 0,
        })
        .collect()
}

/// Level-2 mask: slot 0 is do-nothing, slot i+1 is the i-th controllable substation.
pub fn legal_substations(catalog: &ActionCatalog, state: &TopologyState) -> Vec<bool> {
    std::iter::once(true)
        .chain(catalog.controllable_substations.iter().map(|&s| state.cooldown[s] == 0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ElementRef, GenKind, Generator, Line, Load};

    #[test]
    fn symmetric_raw_count() {
        assert_eq!(raw_symmetric_count(3), 4);
        assert_eq!(raw_symmetric_count(6), 32);
        let rules = FilterRules {
            require_line_per_busbar: false,
            min_elements_per_busbar: 0,
            ..FilterRules::default()
        };
        let sub = Substation {
            id: 0,
            nominal_kv: 1.0,
            elements: vec![ElementRef::LineOrigin(0), ElementRef::LineOrigin(1), ElementRef::Load(0)],
        };
        assert_eq!(substation_configs(&sub, &rules).len(), 4);
    }

    #[test]
    fn ieee14_catalog_has_106_actions_over_7_substations() {
        let spec = GridSpec::ieee14();
        let cat = enumerate_catalog(&spec, &FilterRules::default());
        assert_eq!(cat.len(), 106);
        assert_eq!(cat.controllable_substations, vec![1, 2, 3, 4, 5, 8, 12]);
        assert_eq!(cat.actions[0], PrimitiveAction::DoNothing);
        for r in cat.per_substation.values() {
            assert!((3..=26).contains(&r.len()), "{r:?}");
        }
    }

    #[test]
    fn two_element_substation_is_dropped() {
        // brute force: a line end and a generator; the only split leaves each alone
        let spec = GridSpec::new(
            100.0,
            5,
            10,
            vec![1.0, 1.0],
            vec![Line { id: 0, from_sub: 0, to_sub: 1, reactance_pu: 0.1, thermal_limit_amps: 1.0, limit_mw: 0.0 }],
            vec![Load { id: 0, sub: 1, base_mw: 1.0 }],
            vec![Generator { id: 0, sub: 0, kind: GenKind::Thermal, pmax_mw: 1.0 }],
        )
        .unwrap();
        let sub = &spec.substations[0];
        let all: Vec<SubstationConfig> =
            (0..4).map(|b| SubstationConfig::from_bits(b, 2)).collect();
        let kept: Vec<_> = all
            .iter()
            .filter(|c| c.0[0] == Busbar::One)
            .filter(|c| FilterRules::default().accepts(sub, c))
            .collect();
        assert_eq!(kept.len(), 1);
        let cat = enumerate_catalog(&spec, &FilterRules::default());
        assert!(cat.controllable_substations.is_empty());
        assert_eq!(cat.len(), 1);
    }

    #[test]
    fn masks_partition_the_catalog() {
        let spec = GridSpec::ieee14();
        let cat = enumerate_catalog(&spec, &FilterRules::default());
        let mut covered = vec![0usize; cat.len()];
        covered[0] = 1;
        let mut total = 0;
        for &s in &cat.controllable_substations {
            let m = mask_for_substation(&cat, s).unwrap();
            assert!(!m[0]);
            total += m.iter().filter(|b| **b).count();
            for (i, b) in m.iter().enumerate() {
                covered[i] += *b as usize;
            }
        }
        assert_eq!(total, 105);
        assert!(covered.iter().all(|&c| c == 1));
        assert!(matches!(mask_for_substation(&cat, 0), Err(ActionError::UnknownSubstation(0))));
    }

    #[test]
    fn cooldown_masks_out_substation_range() {
        let spec = GridSpec::ieee14();
        let cat = enumerate_catalog(&spec, &FilterRules::default());
        let mut st = TopologyState::new(&spec);
        assert!(legal_actions(&cat, &st).iter().all(|b| *b));
        st.cooldown[1] = 3;
        let legal = legal_actions(&cat, &st);
        let r = cat.range(1).unwrap();
        for (i, ok) in legal.iter().enumerate() {
            assert_eq!(*ok, !r.contains(i));
        }
        st.cooldown.iter_mut().for_each(|c| *c = 2);
        let legal = legal_actions(&cat, &st);
        assert!(legal[0]);
        assert_eq!(legal.iter().filter(|b| **b).count(), 1);
        assert_eq!(legal_substations(&cat, &st), {
            let mut v = vec![false; 8];
            v[0] = true;
            v
        });
    }

    #[test]
    fn index_of_roundtrips() {
        let cat = enumerate_catalog(&GridSpec::ieee14(), &FilterRules::default());
        for (i, a) in cat.actions.iter().enumerate() {
            assert_eq!(cat.index_of(a), Some(i));
        }
        let json = cat.to_json();
        let back: ActionCatalog = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cat);
    }
}
