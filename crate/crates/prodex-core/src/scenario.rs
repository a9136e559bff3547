//! A fully specified experiment: items, metric, attention, rankers, split,
//! and merge strategy.

use crate::dist::AttentionFunction;
use crate::error::{Error, Result};
use crate::merge::MergeStrategy;
use crate::ranking::{Arm, ArmProbabilities, HoldoutSource, Ranker, Universe};

/// The design knobs of an experiment, separate from what is being ranked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentDesign {
    /// Traffic split between control, treatment, and holdout.
    pub probs: ArmProbabilities,
    /// How conflicts in the merged slate are settled.
    pub strategy: MergeStrategy,
    /// Which ranker governs holdout items.
    pub holdout_source: HoldoutSource,
}

/// Everything that stays fixed across replications of one experiment:
/// the item universe, the pure per-item metric `u`, the attention curve
/// `h`, the two counterfactual rankers, and the [`ExperimentDesign`].
///
/// Only the arm assignment and the conflict coins are random; a scenario
/// plus a seed determines a run completely.
#[derive(Debug, Clone)]
pub struct Scenario {
    universe: Universe,
    u: Vec<f64>,
    h: AttentionFunction,
    r0: Ranker,
    r1: Ranker,
    design: ExperimentDesign,
}

impl Scenario {
    /// Validates and assembles a scenario.
    ///
    /// # Errors
    ///
    /// - [`Error::DimensionMismatch`] when `u`, `h`, `r0`, or `r1` are not
    ///   aligned to the universe.
    /// - [`Error::NegativeUtility`] when the metric takes a negative value.
    /// - [`Error::InvalidScenario`] when the split leaves an arm without
    ///   traffic (`p0` and `p1` must lie strictly between 0 and 1) or the
    ///   spot-labeling baseline is combined with holdout traffic.
    pub fn new(
        universe: Universe,
        u: Vec<f64>,
        h: AttentionFunction,
        r0: Ranker,
        r1: Ranker,
        design: ExperimentDesign,
    ) -> Result<Self> {
        let n = universe.len();
        for (what, len) in [("utilities", u.len()), ("attention curve", h.len())] {
            if len != n {
                return Err(Error::DimensionMismatch(format!(
                    "{what} cover {len} items, universe has {n}"
                )));
            }
        }
        for (ranker, name) in [(&r0, "control"), (&r1, "treatment")] {
            if ranker.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} ranker covers {} items, universe has {n}",
                    ranker.len()
                )));
            }
        }
        for (item, &value) in u.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NegativeUtility {
                    item: universe.id(item).to_string(),
                    value,
                });
            }
        }
        let probs = design.probs;
        if probs.p0() <= 0.0 || probs.p0() >= 1.0 || probs.p1() <= 0.0 || probs.p1() >= 1.0 {
            return Err(Error::InvalidScenario(format!(
                "both experiment arms need traffic: p0 = {}, p1 = {}",
                probs.p0(),
                probs.p1()
            )));
        }
        if design.strategy == MergeStrategy::RandomSpotLabeling && probs.ph() > 0.0 {
            return Err(Error::InvalidScenario(
                "the spot-labeling baseline does not support holdout traffic".into(),
            ));
        }
        Ok(Scenario {
            universe,
            u,
            h,
            r0,
            r1,
            design,
        })
    }

    /// Number of items (and positions).
    pub fn len(&self) -> usize {
        self.universe.len()
    }

    /// True when the scenario has no items (never, post-construction).
    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    /// The item universe.
    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    /// Per-item metric values in universe index order.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Metric value of one item.
    pub fn utility(&self, item: usize) -> f64 {
        self.u[item]
    }

    /// The attention curve.
    pub fn h(&self) -> &AttentionFunction {
        &self.h
    }

    /// The control (incumbent) ranker.
    pub fn r0(&self) -> &Ranker {
        &self.r0
    }

    /// The treatment (candidate) ranker.
    pub fn r1(&self) -> &Ranker {
        &self.r1
    }

    /// The ranker governing items of `arm` (holdout items follow the
    /// configured [`HoldoutSource`]).
    pub fn ranker(&self, arm: Arm) -> &Ranker {
        match (arm, self.design.holdout_source) {
            (Arm::Control, _) => &self.r0,
            (Arm::Treatment, _) => &self.r1,
            (Arm::Holdout, HoldoutSource::ControlRanker) => &self.r0,
            (Arm::Holdout, HoldoutSource::TreatmentRanker) => &self.r1,
        }
    }

    /// The full design.
    pub fn design(&self) -> ExperimentDesign {
        self.design
    }

    /// The traffic split.
    pub fn probs(&self) -> ArmProbabilities {
        self.design.probs
    }

    /// The merge strategy.
    pub fn strategy(&self) -> MergeStrategy {
        self.design.strategy
    }

    /// Which ranker governs holdout items.
    pub fn holdout_source(&self) -> HoldoutSource {
        self.design.holdout_source
    }

    /// The same scenario with a different merge strategy (revalidated).
    pub fn with_strategy(&self, strategy: MergeStrategy) -> Result<Scenario> {
        let design = ExperimentDesign {
            strategy,
            ..self.design
        };
        Scenario::new(
            self.universe.clone(),
            self.u.clone(),
            self.h.clone(),
            self.r0.clone(),
            self.r1.clone(),
            design,
        )
    }

    /// The same scenario with a two-arm split at control share `p0`
    /// (revalidated). Useful for sweeping the split in diagnostics.
    pub fn with_two_arm_split(&self, p0: f64) -> Result<Scenario> {
        let design = ExperimentDesign {
            probs: ArmProbabilities::two_arm(p0)?,
            ..self.design
        };
        Scenario::new(
            self.universe.clone(),
            self.u.clone(),
            self.h.clone(),
            self.r0.clone(),
            self.r1.clone(),
            design,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::AttentionFunction;
    use crate::ranking::Universe;

    fn parts() -> (Universe, Vec<f64>, AttentionFunction, Ranker, Ranker) {
        let universe = Universe::new(["x1", "x2", "x3", "x4"]).unwrap();
        let u = vec![0.9, 1.0, 1.0, 0.9];
        let h = AttentionFunction::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let r0 = Ranker::from_item_order(vec![0, 1, 2, 3]).unwrap();
        let r1 = Ranker::from_item_order(vec![1, 2, 3, 0]).unwrap();
        (universe, u, h, r0, r1)
    }

    fn design(p0: f64, strategy: MergeStrategy) -> ExperimentDesign {
        ExperimentDesign {
            probs: ArmProbabilities::two_arm(p0).unwrap(),
            strategy,
            holdout_source: HoldoutSource::ControlRanker,
        }
    }

    #[test]
    fn scenario_validates_alignment_and_split() {
        let (universe, u, h, r0, r1) = parts();
        assert!(Scenario::new(
            universe.clone(),
            u.clone(),
            h.clone(),
            r0.clone(),
            r1.clone(),
            design(0.9, MergeStrategy::Consistent),
        )
        .is_ok());
        assert!(matches!(
            Scenario::new(
                universe.clone(),
                vec![1.0; 3],
                h.clone(),
                r0.clone(),
                r1.clone(),
                design(0.9, MergeStrategy::Consistent),
            ),
            Err(Error::DimensionMismatch(_))
        ));
        let one_arm = ExperimentDesign {
            probs: ArmProbabilities::new(1.0, 0.0, 0.0).unwrap(),
            strategy: MergeStrategy::Consistent,
            holdout_source: HoldoutSource::ControlRanker,
        };
        assert!(matches!(
            Scenario::new(universe, u, h, r0, r1, one_arm),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn spot_labeling_rejects_holdout_traffic() {
        let (universe, u, h, r0, r1) = parts();
        let with_holdout = ExperimentDesign {
            probs: ArmProbabilities::new(0.5, 0.3, 0.2).unwrap(),
            strategy: MergeStrategy::RandomSpotLabeling,
            holdout_source: HoldoutSource::ControlRanker,
        };
        assert!(matches!(
            Scenario::new(universe, u, h, r0, r1, with_holdout),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn split_sweep_keeps_everything_else() {
        let (universe, u, h, r0, r1) = parts();
        let s = Scenario::new(universe, u, h, r0, r1, design(0.9, MergeStrategy::Consistent))
            .unwrap();
        let swept = s.with_two_arm_split(0.5).unwrap();
        assert_eq!(swept.probs().p0(), 0.5);
        assert_eq!(swept.u(), s.u());
        assert_eq!(swept.r1(), s.r1());
        assert!(s.with_two_arm_split(0.0).is_err());
    }
}
