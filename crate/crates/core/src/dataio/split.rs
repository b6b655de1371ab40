use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of `0..n`, then `k` contiguous validation blocks whose
/// sizes differ by at most one (larger blocks first).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>, DataError> {
    if k < 2 || k > n {
        return Err(DataError::InvalidK { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let validation = idx[start..start + size].to_vec();
        let train = idx[..start].iter().chain(&idx[start + size..]).copied().collect();
        folds.push(Fold { train, validation });
        start += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(folds: &[Fold]) -> Vec<usize> {
        let mut s: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn eighteen_into_ten() {
        let f = kfold_split(18, 10, 1).unwrap();
        assert_eq!(sizes(&f), [vec![1; 2], vec![2; 8]].concat());
    }

    #[test]
    fn seventeen_into_ten() {
        let f = kfold_split(17, 10, 1).unwrap();
        assert_eq!(sizes(&f), [vec![1; 3], vec![2; 7]].concat());
    }

    #[test]
    fn leave_one_out() {
        let f = kfold_split(10, 10, 3).unwrap();
        assert!(f.iter().all(|f| f.validation.len() == 1 && f.train.len() == 9));
    }

    #[test]
    fn invalid_k() {
        assert!(matches!(kfold_split(5, 6, 0), Err(DataError::InvalidK { .. })));
        assert!(kfold_split(5, 1, 0).is_err());
        assert!(kfold_split(5, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition(n in 2usize..60, k_raw in 2usize..60, seed in any::<u64>()) {
            let k = 2 + k_raw % (n - 1);
            let folds = kfold_split(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flat_map(|f| f.validation.iter().copied()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let s = sizes(&folds);
            prop_assert!(s[s.len() - 1] - s[0] <= 1);
            for f in &folds {
                prop_assert_eq!(f.train.len() + f.validation.len(), n);
                prop_assert!(f.train.iter().all(|i| !f.validation.contains(i)));
            }
            prop_assert_eq!(kfold_split(n, k, seed).unwrap(), folds);
        }
    }
}
