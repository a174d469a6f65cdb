//! The built-in catalog of 26 experiments.
//!
//! Experiments 1-5 are baselines with 1-5 slices. Experiments 6-13 each
//! exercise one mechanism; 14-26 combine them, and are built here as the
//! field-wise union of their constituents.

use super::config::{ExperimentConfig, ResourcePolicy};
use crate::error::{Error, Result};

pub const EXPERIMENT_COUNT: u32 = 26;

/// Constituents of each composite experiment.
const COMPOSITES: [(u32, &[u32]); 13] = [
    (14, &[6, 10]),
    (15, &[7, 10]),
    (16, &[8, 10]),
    (17, &[6, 11]),
    (18, &[7, 11]),
    (19, &[8, 11]),
    (20, &[6, 12]),
    (21, &[7, 12]),
    (22, &[8, 12]),
    (23, &[6, 10, 11]),
    (24, &[6, 10, 12]),
    (25, &[7, 10, 11]),
    (26, &[7, 10, 12]),
];

fn primitive(id: u32) -> Option<(ResourcePolicy, ResourcePolicy)> {
    use ResourcePolicy as P;
    Some(match id {
        6 => (P::cpu(1000), P::default()),
        7 => (P::cpu(1000), P::cpu(500)),
        8 => (P::cpu(1000), P::cpu(250)),
        9 => (P::nice(-5), P::default()),
        10 => (P::nice(-5), P::nice(5)),
        11 => (P::edt(0.0), P::edt(0.0)),
        12 => (P::default(), P::edt(150.0)),
        13 => (P::default(), P::edt(75.0)),
        _ => return None,
    })
}

pub fn experiment(id: u32) -> Result<ExperimentConfig> {
    match id {
        1..=5 => Ok(ExperimentConfig::baseline(id, id as u8)),
        6..=13 => {
            let (slice1, others) = primitive(id).expect("primitive id");
            Ok(ExperimentConfig {
                slice1,
                others,
                ..ExperimentConfig::baseline(id, 5)
            })
        }
        14..=26 => {
            let (_, parts) = COMPOSITES
                .iter()
                .find(|(c, _)| *c == id)
                .expect("composite id");
            let mut config = ExperimentConfig::baseline(id, 5);
            for &part in *parts {
                let (s1, others) = primitive(part).expect("constituent is primitive");
                config.slice1 = config.slice1.union(&s1);
                config.others = config.others.union(&others);
            }
            config.constituents = parts.to_vec();
            Ok(config)
        }
        _ => Err(Error::UnknownExperiment(id)),
    }
}

pub fn load_catalog() -> Vec<ExperimentConfig> {
    (1..=EXPERIMENT_COUNT)
        .map(|id| experiment(id).expect("catalog id"))
        .collect()
}

/// `(7 + 10 + 11)` style label, or `baseline`/empty for primitives.
pub fn constituents_label(config: &ExperimentConfig) -> String {
    if config.constituents.is_empty() {
        if config.id <= 5 {
            "baseline".into()
        } else {
            String::new()
        }
    } else {
        let parts: Vec<String> = config.constituents.iter().map(u32::to_string).collect();
        format!("({})", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaper::ShaperMode;

    /// Each row typed in from the experiment tables:
    /// (id, slice1 cpu, slice1 nice, slice1 bw, others cpu, others nice, others bw).
    /// `None` is a blank cell.
    type Row = (u32, Option<u32>, Option<i32>, Option<f64>, Option<u32>, Option<i32>, Option<f64>);
    const TABLE: [Row; 21] = [
        (6, Some(1000), None, None, None, None, None),
        (7, Some(1000), None, None, Some(500), None, None),
        (8, Some(1000), None, None, Some(250), None, None),
        (9, None, Some(-5), None, None, None, None),
        (10, None, Some(-5), None, None, Some(5), None),
        (11, None, None, Some(0.0), None, None, Some(0.0)),
        (12, None, None, None, None, None, Some(150.0)),
        (13, None, None, None, None, None, Some(75.0)),
        (14, Some(1000), Some(-5), None, None, Some(5), None),
        (15, Some(1000), Some(-5), None, Some(500), Some(5), None),
        (16, Some(1000), Some(-5), None, Some(250), Some(5), None),
        (17, Some(1000), None, Some(0.0), None, None, Some(0.0)),
        (18, Some(1000), None, Some(0.0), Some(500), None, Some(0.0)),
        (19, Some(1000), None, Some(0.0), Some(250), None, Some(0.0)),
        (20, Some(1000), None, None, None, None, Some(150.0)),
        (21, Some(1000), None, None, Some(500), None, Some(150.0)),
        (22, Some(1000), None, None, Some(250), None, Some(150.0)),
        (23, Some(1000), Some(-5), Some(0.0), None, Some(5), Some(0.0)),
        (24, Some(1000), Some(-5), None, None, Some(5), Some(150.0)),
        (25, Some(1000), Some(-5), Some(0.0), Some(500), Some(5), Some(0.0)),
        (26, Some(1000), Some(-5), None, Some(500), Some(5), Some(150.0)),
    ];

    fn matches(p: &ResourcePolicy, cpu: Option<u32>, nice: Option<i32>, bw: Option<f64>) -> bool {
        let bw_ok = match bw {
            None => p.shaper.mode == ShaperMode::None,
            Some(rate) => p.shaper.mode == ShaperMode::Edt && p.shaper.rate_mbps == rate,
        };
        p.cpu_millicpu == cpu.unwrap_or(0) && p.nice.map(|n| n.get()) == nice && bw_ok
    }

    #[test]
    fn catalog_matches_tables() {
        let catalog = load_catalog();
        assert_eq!(catalog.len(), 26);
        for (i, c) in catalog.iter().enumerate() {
            assert_eq!(c.id, i as u32 + 1);
            assert_eq!(c.repetitions, 10);
            assert_eq!(c.run_length_s, 1200.0);
        }
        for c in &catalog[..5] {
            assert_eq!(u32::from(c.slice_count), c.id);
            assert!(c.slice1.is_empty() && c.others.is_empty());
        }
        for (id, c1, n1, b1, co, no, bo) in TABLE {
            let c = &catalog[id as usize - 1];
            assert_eq!(c.slice_count, 5);
            assert!(matches(&c.slice1, c1, n1, b1), "experiment {id} slice1 {:?}", c.slice1);
            assert!(matches(&c.others, co, no, bo), "experiment {id} others {:?}", c.others);
        }
    }

    #[test]
    fn composite_labels() {
        assert_eq!(constituents_label(&experiment(25).unwrap()), "(7 + 10 + 11)");
        assert_eq!(constituents_label(&experiment(16).unwrap()), "(8 + 10)");
        assert_eq!(constituents_label(&experiment(1).unwrap()), "baseline");
        assert_eq!(constituents_label(&experiment(9).unwrap()), "");
    }

    #[test]
    fn unknown_ids_are_rejected() {
        assert!(matches!(experiment(0), Err(Error::UnknownExperiment(0))));
        assert!(matches!(experiment(27), Err(Error::UnknownExperiment(27))));
    }
}
