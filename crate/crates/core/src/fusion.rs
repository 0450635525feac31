//! Rule registry for fusing a producer operator with its consumer.
//!
//! A rule evaluates the consumer directly on each producer block. Pairs
//! without a rule run the unfused composition, which materializes the
//! producer output in full.

use std::collections::HashMap;

use crate::batch::BatchPlan;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::functional::{NeighborList, RangeNeighbors};
use crate::fused::{fused_knn, fused_nwr, materialized_knn, materialized_nwr, PairSource};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProducerKind {
    Cdist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConsumerKind {
    /// k smallest per row.
    Topk,
    /// Entries at or below a threshold.
    Threshold,
}

/// Consumer parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Consumer<T> {
    Topk { k: usize },
    Threshold { phi: T },
}

impl<T> Consumer<T> {
    pub fn kind(&self) -> ConsumerKind {
        match self {
            Consumer::Topk { .. } => ConsumerKind::Topk,
            Consumer::Threshold { .. } => ConsumerKind::Threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusedOutput<T> {
    Neighbors(NeighborList<T>),
    Range(RangeNeighbors),
}

pub type FusedEvaluator<T> = fn(PairSource<'_, T>, &Consumer<T>, &BatchPlan, &Executor) -> Result<FusedOutput<T>>;

#[derive(Clone, Copy)]
pub struct FusionRule<T> {
    pub producer: ProducerKind,
    pub consumer: ConsumerKind,
    pub evaluate: FusedEvaluator<T>,
}

pub struct FusionRegistry<T> {
    rules: HashMap<(ProducerKind, ConsumerKind), FusionRule<T>>,
}

fn cdist_topk<T: Scalar>(src: PairSource<'_, T>, c: &Consumer<T>, plan: &BatchPlan, exec: &Executor) -> Result<FusedOutput<T>> {
    match *c {
        Consumer::Topk { k } => fused_knn(src, k, plan, exec).map(FusedOutput::Neighbors),
        _ => Err(Error::InvalidParameter("cdist→topk rule given a different consumer".into())),
    }
}

fn cdist_threshold<T: Scalar>(
    src: PairSource<'_, T>,
    c: &Consumer<T>,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<FusedOutput<T>> {
    match *c {
        Consumer::Threshold { phi } => fused_nwr(src, phi, plan, exec).map(FusedOutput::Range),
        _ => Err(Error::InvalidParameter("cdist→threshold rule given a different consumer".into())),
    }
}

impl<T: Scalar> FusionRegistry<T> {
    /// Registry with no rules: every pair runs unfused.
    pub fn empty() -> Self {
        Self { rules: HashMap::new() }
    }

    /// Built-in rules: cdist→topk and cdist→threshold.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(FusionRule {
            producer: ProducerKind::Cdist,
            consumer: ConsumerKind::Topk,
            evaluate: cdist_topk::<T>,
        })
        .expect("fresh registry");
        r.register(FusionRule {
            producer: ProducerKind::Cdist,
            consumer: ConsumerKind::Threshold,
            evaluate: cdist_threshold::<T>,
        })
        .expect("fresh registry");
        r
    }

    pub fn register(&mut self, rule: FusionRule<T>) -> Result<()> {
        let key = (rule.producer, rule.consumer);
        if self.rules.contains_key(&key) {
            return Err(Error::DuplicateFusionRule {
                producer: rule.producer,
                consumer: rule.consumer,
            });
        }
        self.rules.insert(key, rule);
        Ok(())
    }

    pub fn lookup(&self, producer: ProducerKind, consumer: ConsumerKind) -> Option<&FusionRule<T>> {
        self.rules.get(&(producer, consumer))
    }

    /// Evaluate `producer → consumer`, fused when a rule exists.
    pub fn evaluate(
        &self,
        producer: ProducerKind,
        consumer: &Consumer<T>,
        src: PairSource<'_, T>,
        plan: &BatchPlan,
        exec: &Executor,
    ) -> Result<FusedOutput<T>> {
        match self.lookup(producer, consumer.kind()) {
            Some(rule) => (rule.evaluate)(src, consumer, plan, exec),
            None => match (producer, *consumer) {
                (ProducerKind::Cdist, Consumer::Topk { k }) => materialized_knn(src, k, exec).map(FusedOutput::Neighbors),
                (ProducerKind::Cdist, Consumer::Threshold { phi }) => {
                    materialized_nwr(src, phi, exec).map(FusedOutput::Range)
                }
            },
        }
    }
}

impl<T: Scalar> Default for FusionRegistry<T> {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::{plan, OpKind};
    use crate::exec::ExecConfig;
    use crate::tensor::DenseMatrix;
    use crate::Precision;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, d: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn builtins_are_registered() {
        let r = FusionRegistry::<f64>::with_builtins();
        assert!(r.lookup(ProducerKind::Cdist, ConsumerKind::Topk).is_some());
        assert!(r.lookup(ProducerKind::Cdist, ConsumerKind::Threshold).is_some());
        assert!(FusionRegistry::<f64>::empty().lookup(ProducerKind::Cdist, ConsumerKind::Topk).is_none());
    }

    #[test]
    fn duplicate_rejected() {
        let mut r = FusionRegistry::<f64>::with_builtins();
        let e = r
            .register(FusionRule {
                producer: ProducerKind::Cdist,
                consumer: ConsumerKind::Topk,
                evaluate: cdist_topk::<f64>,
            })
            .unwrap_err();
        assert_eq!(
            e,
            Error::DuplicateFusionRule {
                producer: ProducerKind::Cdist,
                consumer: ConsumerKind::Topk
            }
        );
    }

    #[test]
    fn fused_equals_unfused() {
        let x = random(150, 5, 3);
        let ex = Executor::sequential();
        let fused = FusionRegistry::<f64>::with_builtins();
        let plain = FusionRegistry::<f64>::empty();
        let src = PairSource::self_join(&x);
        for c in [Consumer::Topk { k: 7 }, Consumer::Threshold { phi: 0.2 }] {
            let p = plan(OpKind::Knn { k: 7 }, 150, 5, Precision::P64, u64::MAX, Some(31)).unwrap();
            let a = fused.evaluate(ProducerKind::Cdist, &c, src, &p, &ex).unwrap();
            let b = plain.evaluate(ProducerKind::Cdist, &c, src, &p, &ex).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unfused_fallback_charges_full_matrix() {
        let x = random(100, 3, 4);
        let ex = Executor::new(ExecConfig {
            budget_bytes: 100 * 100 * 8 - 1,
            ..ExecConfig::default()
        })
        .unwrap();
        let src = PairSource::self_join(&x);
        let c = Consumer::Topk { k: 3 };
        let p = plan(OpKind::Knn { k: 3 }, 100, 3, Precision::P64, ex.block_budget(), None).unwrap();
        let e = FusionRegistry::<f64>::empty()
            .evaluate(ProducerKind::Cdist, &c, src, &p, &ex)
            .unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { requested: 80_000, .. }));
        assert!(FusionRegistry::<f64>::with_builtins()
            .evaluate(ProducerKind::Cdist, &c, src, &p, &ex)
            .is_ok());
    }
}
