//! Point-cloud container and the whitespace-separated text format.
//!
//! One point per line: `x y z gt_label [pred_label]`. Lines starting with `#`
//! are comments, except an optional `# classes K` header which fixes the
//! class count; otherwise it is `max label + 1`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Positions and labels of a single scene.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Point3>,
    gt_labels: Vec<usize>,
    pred_labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3>, gt_labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidParameter("num_classes must be positive".into()));
        }
        if positions.len() != gt_labels.len() {
            return Err(Error::LengthMismatch {
                expected: positions.len(),
                actual: gt_labels.len(),
            });
        }
        check_finite(&positions)?;
        check_labels(&gt_labels, num_classes)?;
        Ok(Self {
            positions,
            gt_labels,
            pred_labels: None,
            num_classes,
        })
    }

    pub fn with_predictions(mut self, pred: Vec<usize>) -> Result<Self> {
        self.set_predictions(pred)?;
        Ok(self)
    }

    pub fn set_predictions(&mut self, pred: Vec<usize>) -> Result<()> {
        if pred.len() != self.positions.len() {
            return Err(Error::LengthMismatch {
                expected: self.positions.len(),
                actual: pred.len(),
            });
        }
        check_labels(&pred, self.num_classes)?;
        self.pred_labels = Some(pred);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn gt_labels(&self) -> &[usize] {
        &self.gt_labels
    }

    pub fn pred_labels(&self) -> Option<&[usize]> {
        self.pred_labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Count of ground-truth points per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for &l in &self.gt_labels {
            hist[l] += 1;
        }
        hist
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut declared_classes = None;
        let mut positions = Vec::new();
        let mut gt = Vec::new();
        let mut pred = Vec::new();
        let mut pred_column: Option<bool> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut words = comment.split_whitespace();
                if words.next() == Some("classes") {
                    let k = words
                        .next()
                        .and_then(|w| w.parse::<usize>().ok())
                        .filter(|&k| k > 0)
                        .ok_or_else(|| parse_err(lineno, "malformed `# classes K` header"))?;
                    declared_classes = Some(k);
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 && fields.len() != 5 {
                return Err(parse_err(
                    lineno,
                    &format!("expected 4 or 5 fields, found {}", fields.len()),
                ));
            }
            let has_pred = fields.len() == 5;
            match pred_column {
                None => pred_column = Some(has_pred),
                Some(p) if p != has_pred => {
                    return Err(parse_err(lineno, "inconsistent pred_label column"));
                }
                _ => {}
            }
            let mut xyz = [0.0; 3];
            for (slot, field) in xyz.iter_mut().zip(&fields[..3]) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(lineno, &format!("bad coordinate `{field}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(lineno, "non-finite coordinate"));
                }
                *slot = v;
            }
            positions.push(xyz);
            gt.push(parse_label(fields[3], lineno)?);
            if has_pred {
                pred.push(parse_label(fields[4], lineno)?);
            }
        }

        if positions.is_empty() {
            return Err(Error::EmptyInput);
        }
        let max_label = gt.iter().chain(&pred).copied().max().unwrap_or(0);
        let num_classes = match declared_classes {
            Some(k) if max_label >= k => {
                return Err(Error::LabelOutOfRange {
                    label: max_label,
                    num_classes: k,
                })
            }
            Some(k) => k,
            None => max_label + 1,
        };
        let cloud = PointCloud::new(positions, gt, num_classes)?;
        if pred_column == Some(true) {
            cloud.with_predictions(pred)
        } else {
            Ok(cloud)
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# classes {}", self.num_classes).unwrap();
        for (i, p) in self.positions.iter().enumerate() {
            // `{}` on f64 prints the shortest representation that round-trips.
            write!(out, "{} {} {} {}", p[0], p[1], p[2], self.gt_labels[i]).unwrap();
            if let Some(pred) = &self.pred_labels {
                write!(out, " {}", pred[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_label(field: &str, line: usize) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| parse_err(line, &format!("bad label `{field}`")))
}

pub(crate) fn check_finite(points: &[Point3]) -> Result<()> {
    match points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        Some(row) => Err(Error::NonFinite { row }),
        None => Ok(()),
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= num_classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_header_and_comments() {
        let text = "# classes 3\n# a comment\n0 0 0 1\n1.5 -2 3e-1 0\n";
        let cloud = PointCloud::parse(text).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.num_classes(), 3);
        assert_eq!(cloud.positions()[1], [1.5, -2.0, 0.3]);
        assert!(cloud.pred_labels().is_none());
    }

    #[test]
    fn infers_class_count_from_max_label() {
        let cloud = PointCloud::parse("0 0 0 0 4\n1 1 1 2 0\n").unwrap();
        assert_eq!(cloud.num_classes(), 5);
        assert_eq!(cloud.pred_labels(), Some(&[4, 0][..]));
    }

    #[test]
    fn reports_line_numbers() {
        let err = PointCloud::parse("0 0 0 0\n\n0 0 x 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = PointCloud::parse("0 0 0 0 1\n0 0 0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn header_smaller_than_labels_is_rejected() {
        let err = PointCloud::parse("# classes 2\n0 0 0 2\n").unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 2, .. }));
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(PointCloud::new(vec![[0.0; 3]], vec![0, 1], 2).is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]], vec![0], 2).is_err());
        assert!(PointCloud::new(vec![[0.0; 3]], vec![3], 2).is_err());
        assert!(PointCloud::parse("# only comments\n").is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let cloud = PointCloud::new(
            vec![[0.1, 1.0 / 3.0, -7.25e-3], [2.0, 0.0, 1e10]],
            vec![1, 0],
            3,
        )
        .unwrap()
        .with_predictions(vec![2, 0])
        .unwrap();
        let back = PointCloud::parse(&cloud.to_text()).unwrap();
        assert_eq!(back, cloud);
    }
}
