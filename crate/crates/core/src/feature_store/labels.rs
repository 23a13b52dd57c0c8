//! Per-video AU label files: a header naming the 12 AUs, then one row of
//! 12 comma-separated integers in {-1, 0, 1} per frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::au::{is_valid, AuLabels, AU_NAMES, NUM_AUS};
use crate::error::{Error, Result};

pub fn read_labels(path: &Path) -> Result<Vec<AuLabels>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<AuLabels>> {
    let err = |line: usize, message: String| Error::Labels {
        path: path.into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != AU_NAMES {
        return Err(err(1, format!("header must be {}", AU_NAMES.join(","))));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let mut row = [0i8; NUM_AUS];
        let mut n = 0;
        for field in line.split(',') {
            if n == NUM_AUS {
                return Err(err(i + 1, "more than 12 values".into()));
            }
            let v: i8 = field
                .trim()
                .parse()
                .map_err(|_| err(i + 1, format!("not an integer: {field:?}")))?;
            if !(-1..=1).contains(&v) {
                return Err(err(i + 1, format!("value {v} outside {{-1,0,1}}")));
            }
            row[n] = v;
            n += 1;
        }
        if n != NUM_AUS {
            return Err(err(i + 1, format!("expected 12 values, got {n}")));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn format_labels(labels: &[AuLabels]) -> String {
    let mut s = AU_NAMES.join(",");
    s.push('\n');
    for row in labels {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_labels(path: &Path, labels: &[AuLabels]) -> Result<()> {
    std::fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}

/// Keeps the frames with no `-1` entry, in order, converted to binary labels.
pub fn filter_labels(labels: &[AuLabels]) -> Vec<(usize, [u8; NUM_AUS])> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| is_valid(l))
        .map(|(i, l)| (i, l.map(|v| v as u8)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn drops_frames_with_any_unlabeled_au() {
        let mut partial = [0i8; NUM_AUS];
        partial[0] = -1;
        let kept = filter_labels(&[[0; NUM_AUS], partial, [1; NUM_AUS]]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0], (0, [0; NUM_AUS]));
        assert_eq!(kept[1], (2, [1; NUM_AUS]));
    }

    #[test]
    fn all_unlabeled_gives_empty() {
        assert!(filter_labels(&[[-1; NUM_AUS], [-1; NUM_AUS]]).is_empty());
    }

    #[test]
    fn fully_labeled_is_identity() {
        let rows = [[1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0], [0; NUM_AUS]];
        let kept = filter_labels(&rows);
        assert_eq!(kept.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(kept[0].1, [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let rows = vec![[1, 0, -1, 0, 1, 0, 1, 0, 1, 0, 1, 0], [0; NUM_AUS]];
        let text = format_labels(&rows);
        assert!(text.starts_with("AU1,AU2,AU4,AU6,AU7,AU10,AU12,AU15,AU23,AU24,AU25,AU26\n"));
        assert_eq!(parse_labels(&text, Path::new("x")).unwrap(), rows);

        let bad_value = text.replace("1,0,-1", "1,0,2");
        assert!(parse_labels(&bad_value, Path::new("x")).is_err());
        let bad_header = text.replacen("AU1,", "AU3,", 1);
        assert!(parse_labels(&bad_header, Path::new("x")).is_err());
        assert!(parse_labels("AU1,AU2,AU4,AU6,AU7,AU10,AU12,AU15,AU23,AU24,AU25,AU26\n0,1\n", Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn filter_never_keeps_unlabeled(rows in proptest::collection::vec(proptest::array::uniform12(-1i8..=1), 0..40)) {
            let kept = filter_labels(&rows);
            prop_assert!(kept.len() <= rows.len());
            for (i, l) in &kept {
                prop_assert!(l.iter().all(|&v| v <= 1));
                prop_assert!(rows[*i].iter().all(|&v| v >= 0));
            }
            prop_assert!(kept.windows(2).all(|w| w[0].0 < w[1].0));
            let expected = rows.iter().filter(|r| r.iter().all(|&v| v >= 0)).count();
            prop_assert_eq!(kept.len(), expected);
        }
    }
}
