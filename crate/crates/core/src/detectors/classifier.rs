//! k-nearest-neighbour classification by majority vote.

use std::collections::HashMap;

use crate::batch::{plan_for, OpKind};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fused::{fused_knn, PairSource};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Label each test row by the majority class of its `k` nearest training
/// rows. Ties go to the class with the nearer neighbour, then the smaller id.
pub fn knn_classify<T: Scalar>(
    train: &DenseMatrix<T>,
    labels: &[i64],
    test: &DenseMatrix<T>,
    k: usize,
    exec: &Executor,
) -> Result<Vec<i64>> {
    if train.n() == 0 {
        return Err(Error::Empty("classifier needs training rows".into()));
    }
    if labels.len() != train.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} training rows",
            labels.len(),
            train.n()
        )));
    }
    let src = PairSource::cross(test, train);
    src.check()?;
    src.check_k(k)?;
    let plan = plan_for(exec, OpKind::Knn { k }, test.n(), train.n(), train.d(), T::PRECISION)?;
    let nl = fused_knn(src, k, &plan, exec)?;
    Ok((0..test.n())
        .map(|i| {
            // class -> (votes, rank of its nearest neighbour)
            let mut tally: HashMap<i64, (usize, usize)> = HashMap::new();
            for (rank, &j) in nl.row(i).iter().enumerate() {
                let e = tally.entry(labels[j]).or_insert((0, rank));
                e.0 += 1;
            }
            tally
                .into_iter()
                .min_by_key(|&(class, (votes, first))| (std::cmp::Reverse(votes), first, class))
                .map(|(class, _)| class)
                .expect("k >= 1")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_neighbour_and_duplicates() {
        let train = DenseMatrix::<f64>::from_rows(&[[0.0], [1.0], [5.0]]).unwrap();
        let y = [7, 8, 9];
        let test = DenseMatrix::<f64>::from_rows(&[[0.2], [5.0], [3.9]]).unwrap();
        let ex = Executor::sequential();
        assert_eq!(knn_classify(&train, &y, &test, 1, &ex).unwrap(), vec![7, 9, 9]);
    }

    #[test]
    fn tie_goes_to_nearer_class() {
        let train = DenseMatrix::<f64>::from_rows(&[[0.0], [1.0], [-3.0], [4.0]]).unwrap();
        let y = [1, 0, 0, 1];
        let test = DenseMatrix::<f64>::from_rows(&[[0.4], [0.6]]).unwrap();
        let ex = Executor::sequential();
        assert_eq!(knn_classify(&train, &y, &test, 2, &ex).unwrap(), vec![1, 0]);
        // Third neighbour decides: -3 (class 0) for 0.4, 4 (class 1) for 0.6.
        assert_eq!(knn_classify(&train, &y, &test, 3, &ex).unwrap(), vec![0, 1]);
    }

    #[test]
    fn errors() {
        let train = DenseMatrix::<f64>::from_rows(&[[0.0], [1.0]]).unwrap();
        let ex = Executor::sequential();
        assert!(knn_classify(&train, &[1], &train, 1, &ex).is_err());
        assert!(knn_classify(&train, &[1, 2], &train, 3, &ex).is_err());
        assert!(knn_classify(&DenseMatrix::<f64>::zeros(0, 1), &[], &train, 1, &ex).is_err());
    }
}
