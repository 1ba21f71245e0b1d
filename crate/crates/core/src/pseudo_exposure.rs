//! Pseudo-procedure months for unexposed subjects, chosen so that their
//! baseline observation windows follow the exposed procedure-month
//! distribution. Months are labelled 9 (earliest) down to 0 (delivery).
//!
//! Steps:
//! 1. Subjects eligible only in month 0 are set aside. Expected counts per
//!    month are the exposed proportions times the number of remaining
//!    subjects, rounded by largest remainder.
//! 2. Months 1..=9 are filled in ascending order of (eligible subjects) /
//!    (all subjects), ties to the lower month. Subjects eligible in that
//!    month alone are assigned first; the rest of the expected count is a
//!    uniform sample of still-unassigned eligible subjects.
//! 3. Unassigned non-set-aside subjects eligible in month 0 take month 0;
//!    any shortfall there is sampled from the set-aside subjects. Everyone
//!    else is excluded.

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MONTHS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTable {
    ids: Vec<String>,
    /// `flags[i][month]`.
    flags: Vec<[bool; MONTHS]>,
}

impl EligibilityTable {
    pub fn new(ids: Vec<String>, flags: Vec<[bool; MONTHS]>) -> Result<Self> {
        if ids.len() != flags.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: flags.len(),
            });
        }
        if ids.is_empty() {
            return Err(Error::Empty("eligibility table has no subjects".into()));
        }
        if let Some(i) = flags.iter().position(|f| !f.iter().any(|&x| x)) {
            return Err(Error::MalformedRow {
                row: i,
                message: format!("subject `{}` is not eligible in any month", ids[i]),
            });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate subject id `{dup}`")));
        }
        Ok(Self { ids, flags })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn flags(&self) -> &[[bool; MONTHS]] {
        &self.flags
    }

    pub fn eligible(&self, subject: usize, month: usize) -> bool {
        self.flags[subject][month]
    }

    /// Reads `id` plus one 0/1 column per month. Month columns may appear in
    /// any order; each header must end in its month digit (`m9`, `month_0`, ...).
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != MONTHS + 1 || &headers[0] != "id" {
            return Err(Error::Header {
                expected: "id + 10 month columns".into(),
                found: headers.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut month_of_col = Vec::with_capacity(MONTHS);
        for h in headers.iter().skip(1) {
            let month = h
                .chars()
                .last()
                .and_then(|c| c.to_digit(10))
                .ok_or_else(|| Error::Header {
                    expected: "month column ending in a digit".into(),
                    found: h.to_string(),
                })? as usize;
            if month_of_col.contains(&month) {
                return Err(Error::Header {
                    expected: "distinct month columns".into(),
                    found: h.to_string(),
                });
            }
            month_of_col.push(month);
        }
        let mut ids = Vec::new();
        let mut flags = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut f = [false; MONTHS];
            for (col, &month) in month_of_col.iter().enumerate() {
                f[month] = match &rec[col + 1] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::MalformedRow {
                            row,
                            message: format!("eligibility flag must be 0 or 1, got `{other}`"),
                        })
                    }
                };
            }
            ids.push(rec[0].to_string());
            flags.push(f);
        }
        Self::new(ids, flags)
    }
}

/// Reads `month,count` rows into a 10-month histogram.
pub fn load_histogram(path: impl AsRef<Path>) -> Result<[u64; MONTHS]> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["month", "count"] {
        return Err(Error::Header {
            expected: "month,count".into(),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut hist = [0u64; MONTHS];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| Error::MalformedRow { row, message };
        let month: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad month `{}`", &rec[0])))?;
        let count: u64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad count `{}`", &rec[1])))?;
        if month >= MONTHS {
            return Err(bad(format!("month {month} outside 0..=9")));
        }
        hist[month] += count;
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthAssignment {
    /// Assigned month per subject (table order); `None` if excluded.
    pub months: Vec<Option<u8>>,
    pub excluded: Vec<usize>,
    pub expected: [usize; MONTHS],
    /// Months where forced single-month subjects exceeded the expected count,
    /// with the excess.
    pub overfill: Vec<(usize, usize)>,
    /// Subjects eligible beyond month 0 (the base of the expected counts).
    pub base_count: usize,
    /// Order in which months 1..=9 were filled.
    pub month_order: Vec<usize>,
}

impl MonthAssignment {
    pub fn counts(&self) -> [usize; MONTHS] {
        let mut c = [0; MONTHS];
        for m in self.months.iter().flatten() {
            c[*m as usize] += 1;
        }
        c
    }

    pub fn write_csvs(
        &self,
        elig: &EligibilityTable,
        assigned_path: impl AsRef<Path>,
        excluded_path: impl AsRef<Path>,
    ) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(assigned_path)?);
        writeln!(out, "id,assigned_month")?;
        for (id, m) in elig.ids().iter().zip(&self.months) {
            if let Some(m) = m {
                writeln!(out, "{id},{m}")?;
            }
        }
        out.flush()?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(excluded_path)?);
        writeln!(out, "id")?;
        for &i in &self.excluded {
            writeln!(out, "{}", elig.ids()[i])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Integer allocation of `total` proportional to `weights`, rounding down
/// and handing the leftover units to the largest remainders (ties to the
/// lower index).
pub fn largest_remainder(weights: &[u64], total: usize) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    // exact integer arithmetic: quota_i = w_i * total / sum
    let mut alloc = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = u128::from(w) * total as u128;
        alloc.push((num / sum) as usize);
        rems.push((num % sum, i));
    }
    let leftover = total - alloc.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(leftover) {
        alloc[i] += 1;
    }
    alloc
}

pub fn assign_pseudo_months(
    exposed_hist: &[u64; MONTHS],
    elig: &EligibilityTable,
    seed: u64,
) -> Result<MonthAssignment> {
    if exposed_hist.iter().sum::<u64>() == 0 {
        return Err(Error::InvalidInput("exposed histogram is empty".into()));
    }
    let n = elig.len();
    if n == 0 {
        return Err(Error::Empty("eligibility table has no subjects".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let month0_only: Vec<bool> = elig
        .flags()
        .iter()
        .map(|f| f[0] && f[1..].iter().all(|&x| !x))
        .collect();
    let base_count = month0_only.iter().filter(|&&x| !x).count();
    let expected_vec = largest_remainder(exposed_hist, base_count);
    let expected: [usize; MONTHS] = std::array::from_fn(|m| expected_vec[m]);

    let eligible_counts: Vec<usize> = (0..MONTHS)
        .map(|m| (0..n).filter(|&i| elig.eligible(i, m)).count())
        .collect();
    let mut month_order: Vec<usize> = (1..MONTHS).collect();
    // shared denominator, so comparing counts orders the ratios
    month_order.sort_by(|&a, &b| eligible_counts[a].cmp(&eligible_counts[b]).then(a.cmp(&b)));

    let mut months: Vec<Option<u8>> = vec![None; n];
    let mut overfill = Vec::new();
    for &m in &month_order {
        let mut assigned = 0usize;
        let mut pool = Vec::new();
        for i in 0..n {
            if months[i].is_some() || month0_only[i] || !elig.eligible(i, m) {
                continue;
            }
            let only_here = (0..MONTHS).all(|other| other == m || !elig.eligible(i, other));
            if only_here {
                months[i] = Some(m as u8);
                assigned += 1;
            } else {
                pool.push(i);
            }
        }
        if assigned > expected[m] {
            overfill.push((m, assigned - expected[m]));
            continue;
        }
        let need = expected[m] - assigned;
        if need > pool.len() {
            return Err(Error::PoolExhausted {
                month: m,
                needed: expected[m],
                available: assigned + pool.len(),
            });
        }
        for ix in sample(&mut rng, pool.len(), need).into_iter() {
            months[pool[ix]] = Some(m as u8);
        }
    }

    let mut month0_count = 0usize;
    for i in 0..n {
        if months[i].is_none() && !month0_only[i] && elig.eligible(i, 0) {
            months[i] = Some(0);
            month0_count += 1;
        }
    }
    let set_aside: Vec<usize> = (0..n).filter(|&i| month0_only[i]).collect();
    let shortfall = expected[0]
        .saturating_sub(month0_count)
        .min(set_aside.len());
    for ix in sample(&mut rng, set_aside.len(), shortfall).into_iter() {
        months[set_aside[ix]] = Some(0);
    }
    let excluded = (0..n).filter(|&i| months[i].is_none()).collect();
    Ok(MonthAssignment {
        months,
        excluded,
        expected,
        overfill,
        base_count,
        month_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(flags: Vec<[bool; MONTHS]>) -> EligibilityTable {
        let ids = (0..flags.len()).map(|i| format!("s{i}")).collect();
        EligibilityTable::new(ids, flags).unwrap()
    }

    #[test]
    fn largest_remainder_totals() {
        assert_eq!(largest_remainder(&[1, 1, 1], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0, 5, 5], 3), vec![0, 2, 1]);
        assert_eq!(largest_remainder(&[2, 1], 0), vec![0, 0]);
    }

    #[test]
    fn unconstrained_uniform_matching() {
        let elig = table(vec![[true; MONTHS]; 100]);
        let a = assign_pseudo_months(&[1; MONTHS], &elig, 4).unwrap();
        assert_eq!(a.counts(), [10; MONTHS]);
        assert!(a.excluded.is_empty());
    }

    #[test]
    fn single_month_subject_is_forced() {
        let mut flags = vec![[true; MONTHS]; 30];
        let mut only3 = [false; MONTHS];
        only3[3] = true;
        flags.push(only3);
        let elig = table(flags);
        for seed in 0..20 {
            let a = assign_pseudo_months(&[1; MONTHS], &elig, seed).unwrap();
            assert_eq!(a.months[30], Some(3));
        }
    }

    #[test]
    fn month_zero_only_subjects_cover_shortfall_then_excluded() {
        let mut flags = vec![[true; MONTHS]; 10];
        let mut only0 = [false; MONTHS];
        only0[0] = true;
        flags.extend(std::iter::repeat_n(only0, 5));
        let elig = table(flags);
        let mut hist = [0; MONTHS];
        hist[0] = 1;
        hist[5] = 1;
        let a = assign_pseudo_months(&hist, &elig, 1).unwrap();
        assert_eq!(a.base_count, 10);
        assert_eq!(a.expected[0], 5);
        assert_eq!(a.expected[5], 5);
        assert_eq!(a.counts()[5], 5);
        // five leftovers take month 0, so no month-0-only subject is needed
        assert_eq!(a.counts()[0], 5);
        assert_eq!(a.excluded, vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn exhausted_pool_is_reported() {
        let mut early = [false; MONTHS];
        early[9] = true;
        early[0] = true;
        let mut late = [false; MONTHS];
        late[1] = true;
        late[0] = true;
        let elig = table(vec![early, early, late, late]);
        let mut hist = [0; MONTHS];
        hist[9] = 3;
        hist[1] = 1;
        let err = assign_pseudo_months(&hist, &elig, 0).unwrap_err();
        assert!(
            matches!(err, Error::PoolExhausted { month: 9, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn rejects_never_eligible() {
        assert!(EligibilityTable::new(vec!["x".into()], vec![[false; MONTHS]]).is_err());
    }
}
