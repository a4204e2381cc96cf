use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A point of the product space `R^n`. Coordinates are always finite; the
/// constructor rejects NaN and infinities so downstream sorting and cost
/// evaluation never see them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::RejectedInput(format!("non-finite coordinate {bad}")));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    /// First `i` coordinates, the state threaded through sequential sampling.
    pub fn prefix(&self, i: usize) -> &[f64] {
        &self.0[..i]
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch { expected, got: self.dim() });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Point::new(vec![0.0, f64::NAN]).is_err());
        assert!(Point::new(vec![f64::INFINITY]).is_err());
        assert!(Point::new(vec![1.0, -2.5]).is_ok());
    }

    #[test]
    fn prefix_slices() {
        let p = Point::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.prefix(0), &[] as &[f64]);
        assert_eq!(p.prefix(2), &[1.0, 2.0]);
        assert_eq!(p.dim(), 3);
    }
}
