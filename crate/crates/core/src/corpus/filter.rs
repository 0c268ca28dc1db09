use super::{Dataset, Instance, Split};
use crate::error::{NileError, Result};

/// True when the lowercased premise or hypothesis occurs verbatim (as a
/// contiguous substring) inside the lowercased explanation.
pub fn is_noninformative(inst: &Instance, explanation: &str) -> bool {
    let e = explanation.to_lowercase();
    e.contains(&inst.premise.to_lowercase()) || e.contains(&inst.hypothesis.to_lowercase())
}

/// Drops instances whose explanation merely restates the premise or the
/// hypothesis. Survivors keep their order. A training instance without an
/// explanation is an error; elsewhere such instances are kept untouched.
pub fn filter_noninformative(d: &Dataset) -> Result<(Dataset, usize)> {
    let mut kept = Vec::with_capacity(d.len());
    let mut dropped = 0;
    for inst in d.iter() {
        match &inst.gold_explanation {
            Some(e) if is_noninformative(inst, e) => dropped += 1,
            Some(_) => kept.push(inst.clone()),
            None if d.split == Split::Train => {
                return Err(NileError::Data(format!(
                    "training instance {} has no explanation to filter on",
                    inst.id
                )))
            }
            None => kept.push(inst.clone()),
        }
    }
    Ok((
        Dataset {
            split: d.split,
            instances: kept,
        },
        dropped,
    ))
}

/// The filter policy: training data is always filtered, other splits only
/// when `filter_eval_splits` is set.
pub fn filter_split(d: &Dataset, filter_eval_splits: bool) -> Result<(Dataset, usize)> {
    if d.split == Split::Train || filter_eval_splits {
        filter_noninformative(d)
    } else {
        Ok((d.clone(), 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn inst(p: &str, h: &str, e: Option<&str>) -> Instance {
        Instance {
            id: format!("{p}|{h}"),
            premise: p.into(),
            hypothesis: h.into(),
            label: Label::Neutral,
            gold_explanation: e.map(String::from),
        }
    }

    #[test]
    fn substring_rule() {
        let dog = inst("a dog runs", "an animal moves", None);
        assert!(is_noninformative(&dog, "a dog runs fast outside"));
        assert!(!is_noninformative(&dog, "dogs can run"));
        assert!(is_noninformative(
            &inst("a kitten rests", "The Cat Sleeps", None),
            "clearly the cat sleeps here"
        ));
    }

    #[test]
    fn missing_explanation_only_fatal_for_train() {
        let rows = vec![inst("a", "b", None)];
        let train = Dataset::new(Split::Train, rows.clone()).unwrap();
        assert!(filter_noninformative(&train).is_err());
        let dev = Dataset::new(Split::Dev, rows).unwrap();
        let (kept, dropped) = filter_noninformative(&dev).unwrap();
        assert_eq!((kept.len(), dropped), (1, 0));
    }

    #[test]
    fn eval_splits_untouched_without_flag() {
        let rows = vec![inst("a dog", "b", Some("a dog"))];
        let test = Dataset::new(Split::Test, rows).unwrap();
        assert_eq!(filter_split(&test, false).unwrap().1, 0);
        assert_eq!(filter_split(&test, true).unwrap().1, 1);
    }
}
