//! Intervention points: where treatments can be switched on.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AmrError, Result};

/// One intervention point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// The set of intervention points, with an optional observed assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSet {
    points: Vec<InterventionPoint>,
    assignment: Option<Vec<u8>>,
}

impl InterventionSet {
    pub fn new(points: Vec<InterventionPoint>, assignment: Option<Vec<u8>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(AmrError::InvalidInput(format!(
                "need at least 2 intervention points, got {}",
                points.len()
            )));
        }
        let mut seen = HashSet::new();
        for p in &points {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(AmrError::InvalidInput(format!(
                    "point `{}` has non-finite coordinates",
                    p.id
                )));
            }
            if !seen.insert(p.id.clone()) {
                return Err(AmrError::DuplicateId(p.id.clone()));
            }
        }
        if let Some(z) = &assignment {
            if z.len() != points.len() {
                return Err(AmrError::InvalidInput(format!(
                    "assignment length {} does not match {} points",
                    z.len(),
                    points.len()
                )));
            }
            if let Some(bad) = z.iter().find(|v| **v > 1) {
                return Err(AmrError::BadBinary {
                    id: String::new(),
                    value: bad.to_string(),
                });
            }
        }
        Ok(Self { points, assignment })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[InterventionPoint] {
        &self.points
    }

    pub fn coord(&self, i: usize) -> (f64, f64) {
        (self.points[i].x, self.points[i].y)
    }

    pub fn assignment(&self) -> Option<&[u8]> {
        self.assignment.as_deref()
    }

    pub fn set_assignment(&mut self, z: Vec<u8>) -> Result<()> {
        if z.len() != self.points.len() {
            return Err(AmrError::InvalidInput(format!(
                "assignment length {} does not match {} points",
                z.len(),
                self.points.len()
            )));
        }
        self.assignment = Some(z);
        Ok(())
    }

    /// Minimum pairwise Euclidean distance between intervention points.
    /// This is the realized spacing floor `d0`; callers may warn when it
    /// falls below a user-supplied bound.
    pub fn min_pairwise_distance(&self) -> f64 {
        let n = self.points.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let (xi, yi) = self.coord(i);
                let (xj, yj) = self.coord(j);
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                if d < best {
                    best = d;
                }
            }
        }
        best
    }

    /// Loads a CSV with header `id,x,y[,z]`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| AmrError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let display = path.display().to_string();

        let headers = rdr
            .headers()
            .map_err(|e| AmrError::Parse {
                path: display.clone(),
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (id_col, x_col, y_col) = match (col("id"), col("x"), col("y")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(AmrError::Parse {
                    path: display,
                    line: 1,
                    message: format!("expected header `id,x,y[,z]`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
                })
            }
        };
        let z_col = col("z");

        let mut points = Vec::new();
        let mut zs = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| AmrError::Parse {
                path: display.clone(),
                line,
                message: e.to_string(),
            })?;
            let field = |c: usize| -> Result<&str> {
                rec.get(c).ok_or_else(|| AmrError::Parse {
                    path: display.clone(),
                    line,
                    message: format!("missing column {c}"),
                })
            };
            let id = field(id_col)?.to_string();
            let parse_f = |s: &str, what: &str| -> Result<f64> {
                s.parse().map_err(|_| AmrError::Parse {
                    path: display.clone(),
                    line,
                    message: format!("cannot parse {what} `{s}`"),
                })
            };
            let x = parse_f(field(x_col)?, "x")?;
            let y = parse_f(field(y_col)?, "y")?;
            if let Some(zc) = z_col {
                let raw = field(zc)?;
                match raw {
                    "0" => zs.push(0u8),
                    "1" => zs.push(1u8),
                    other => {
                        return Err(AmrError::BadBinary {
                            id,
                            value: other.to_string(),
                        })
                    }
                }
            }
            points.push(InterventionPoint { id, x, y });
        }

        let assignment = z_col.map(|_| zs);
        Self::new(points, assignment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_points_with_assignment() {
        let f = write_tmp("id,x,y,z\na,0,0,1\nb,3,4,0\nc,1,1,1\n");
        let pts = InterventionSet::from_csv(f.path()).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts.assignment(), Some([1u8, 0, 1].as_slice()));
        assert_eq!(pts.coord(1), (3.0, 4.0));
    }

    #[test]
    fn loads_points_without_assignment() {
        let f = write_tmp("id,x,y\na,0,0\nb,1,0\n");
        let pts = InterventionSet::from_csv(f.path()).unwrap();
        assert!(pts.assignment().is_none());
    }

    #[test]
    fn rejects_duplicate_ids() {
        let f = write_tmp("id,x,y\na,0,0\na,1,0\n");
        assert!(matches!(
            InterventionSet::from_csv(f.path()),
            Err(AmrError::DuplicateId(_))
        ));
    }

    #[test]
    fn rejects_non_binary_z() {
        let f = write_tmp("id,x,y,z\na,0,0,2\nb,1,0,0\n");
        assert!(matches!(
            InterventionSet::from_csv(f.path()),
            Err(AmrError::BadBinary { .. })
        ));
    }

    #[test]
    fn min_pairwise_distance_is_reported() {
        let f = write_tmp("id,x,y\na,0,0\nb,3,4\nc,0,1\n");
        let pts = InterventionSet::from_csv(f.path()).unwrap();
        assert_eq!(pts.min_pairwise_distance(), 1.0);
    }

    #[test]
    fn needs_two_points() {
        let f = write_tmp("id,x,y\na,0,0\n");
        assert!(InterventionSet::from_csv(f.path()).is_err());
    }
}
