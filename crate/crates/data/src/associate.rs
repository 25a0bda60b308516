//! Nearest-timestamp association between two sorted sensor streams.

/// For every primary timestamp, the index of the secondary timestamp with
/// the smallest absolute difference; ties go to the earlier index. Both
/// inputs must be sorted ascending.
pub fn associate_by_timestamp(primary: &[i64], secondary: &[i64]) -> Vec<usize> {
    if secondary.is_empty() {
        return Vec::new();
    }
    let mut j = 0;
    primary
        .iter()
        .map(|&t| {
            // Distances along a sorted stream are unimodal; duplicates form
            // flat runs, so advance through ties and walk back afterwards.
            while j + 1 < secondary.len() && secondary[j + 1].abs_diff(t) <= secondary[j].abs_diff(t) {
                j += 1;
            }
            let mut k = j;
            while k > 0 && secondary[k - 1].abs_diff(t) == secondary[k].abs_diff(t) {
                k -= 1;
            }
            k
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_lists_map_to_identity() {
        let t = [1, 5, 9, 20];
        assert_eq!(associate_by_timestamp(&t, &t), vec![0, 1, 2, 3]);
    }

    #[test]
    fn nearest_and_ties() {
        assert_eq!(associate_by_timestamp(&[10], &[0, 25]), vec![0]);
        assert_eq!(associate_by_timestamp(&[10], &[0, 20]), vec![0]);
        assert_eq!(associate_by_timestamp(&[10], &[5, 5, 15]), vec![0]);
        assert_eq!(associate_by_timestamp(&[-3, 100], &[0, 10]), vec![0, 1]);
        assert_eq!(associate_by_timestamp(&[9], &[0, 5, 5, 9]), vec![3]);
    }
}
