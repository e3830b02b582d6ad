use crate::models::Task;
use crate::{Error, Result};

/// Combine per-image outputs into one cluster prediction.
///
/// Classification takes the majority of `labels`; on an exact tie the mean
/// of `probs` (class-1 probabilities) decides, with 0.5 going to class 1.
/// Without probabilities a tie goes to class 0. Regression averages `labels`
/// as scores.
pub fn vote_aggregate(labels: &[f64], probs: Option<&[f64]>, task: Task) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("no image predictions to aggregate".into()));
    }
    let n = labels.len() as f64;
    match task {
        Task::Regression => Ok(labels.iter().sum::<f64>() / n),
        Task::Classification => {
            let ones = labels.iter().filter(|&&l| l == 1.0).count();
            let zeros = labels.len() - ones;
            Ok(match ones.cmp(&zeros) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => match probs {
                    Some(p) if p.len() == labels.len() => f64::from(u8::from(p.iter().sum::<f64>() / n >= 0.5)),
                    Some(p) => {
                        return Err(Error::Shape(format!(
                            "{} probabilities for {} votes",
                            p.len(),
                            labels.len()
                        )))
                    }
                    None => 0.0,
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::accuracy;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            vote_aggregate(&[1.0, 1.0, 0.0], None, Task::Classification).unwrap(),
            1.0
        );
        assert_eq!(
            vote_aggregate(&[1.0, 0.0], Some(&[0.9, 0.4]), Task::Classification).unwrap(),
            1.0
        );
        assert_eq!(
            vote_aggregate(&[1.0, 0.0], Some(&[0.6, 0.2]), Task::Classification).unwrap(),
            0.0
        );
        assert_eq!(
            vote_aggregate(&[1.0, 0.0], Some(&[0.5, 0.5]), Task::Classification).unwrap(),
            1.0
        );
        assert!((vote_aggregate(&[0.2, 0.4], None, Task::Regression).unwrap() - 0.3).abs() < 1e-15);
        assert!(vote_aggregate(&[], None, Task::Classification).is_err());
    }

    proptest! {
        #[test]
        fn unanimous_votes_keep_accuracy(
            clusters in proptest::collection::vec((0u8..2, 0u8..2), 1..30),
            n in 1usize..6,
        ) {
            let mut image_preds = Vec::new();
            let mut image_truth = Vec::new();
            let mut cluster_preds = Vec::new();
            let mut cluster_truth = Vec::new();
            for &(pred, truth) in &clusters {
                let votes = vec![f64::from(pred); n];
                image_preds.extend(&votes);
                image_truth.extend(vec![f64::from(truth); n]);
                cluster_preds.push(vote_aggregate(&votes, None, Task::Classification).unwrap());
                cluster_truth.push(f64::from(truth));
            }
            prop_assert_eq!(
                accuracy(&cluster_preds, &cluster_truth).unwrap(),
                accuracy(&image_preds, &image_truth).unwrap()
            );
        }
    }
}
