use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FormError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateKind {
    /// Samples uniformly in `[lo, hi]`.
    Linear { lo: f64, hi: f64 },
    /// Period 1, samples in `[0, 1)`.
    Angular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub name: String,
    pub kind: CoordinateKind,
}

impl Coordinate {
    pub fn linear(name: &str, lo: f64, hi: f64) -> Self {
        Coordinate {
            name: name.to_string(),
            kind: CoordinateKind::Linear { lo, hi },
        }
    }

    pub fn angular(name: &str) -> Self {
        Coordinate {
            name: name.to_string(),
            kind: CoordinateKind::Angular,
        }
    }

    pub fn is_angular(&self) -> bool {
        matches!(self.kind, CoordinateKind::Angular)
    }
}

/// Open-ball restriction `sum x_i^2 < radius^2` over a subset of coordinates.
/// Graph charts of spheres need it; sampling rejects points outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallConstraint {
    pub coords: Vec<usize>,
    pub radius: f64,
}

/// A named coordinate chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDomain {
    pub name: String,
    coords: Vec<Coordinate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ball: Option<BallConstraint>,
}

impl CoordinateDomain {
    pub fn new(name: &str, coords: Vec<Coordinate>) -> Result<Self, FormError> {
        for (i, c) in coords.iter().enumerate() {
            if coords[..i].iter().any(|d| d.name == c.name) {
                return Err(FormError::DuplicateCoordinate(c.name.clone()));
            }
            if let CoordinateKind::Linear { lo, hi } = c.kind {
                if !(lo <= hi) {
                    return Err(FormError::BadRange(c.name.clone()));
                }
            }
        }
        Ok(CoordinateDomain {
            name: name.to_string(),
            coords,
            ball: None,
        })
    }

    pub fn with_ball(mut self, names: &[&str], radius: f64) -> Result<Self, FormError> {
        let coords = names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| FormError::UnknownCoordinate(n.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.ball = Some(BallConstraint { coords, radius });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn ball(&self) -> Option<&BallConstraint> {
        self.ball.as_ref()
    }

    pub fn names(&self) -> Vec<&str> {
        self.coords.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c.name == name)
    }

    /// Product chart; coordinate names must stay unique.
    pub fn product(&self, other: &CoordinateDomain, name: &str) -> Result<Self, FormError> {
        let mut coords = self.coords.clone();
        coords.extend(other.coords.iter().cloned());
        let mut d = CoordinateDomain::new(name, coords)?;
        if let Some(b) = &self.ball {
            d.ball = Some(b.clone());
        } else if let Some(b) = &other.ball {
            d.ball = Some(BallConstraint {
                coords: b.coords.iter().map(|i| i + self.dim()).collect(),
                radius: b.radius,
            });
        }
        Ok(d)
    }

    /// Whether `point` lies in the closed box and the open ball (angular
    /// coordinates are unconstrained).
    pub fn contains(&self, point: &[f64]) -> bool {
        let in_box = self.coords.iter().zip(point).all(|(c, &x)| match c.kind {
            CoordinateKind::Linear { lo, hi } => x >= lo && x <= hi,
            CoordinateKind::Angular => x.is_finite(),
        });
        in_box && self.ball_ok(point)
    }

    fn ball_ok(&self, point: &[f64]) -> bool {
        match &self.ball {
            Some(b) => b.coords.iter().map(|&i| point[i] * point[i]).sum::<f64>() < b.radius * b.radius,
            None => true,
        }
    }

    /// Deterministic uniform samples (ChaCha8 seeded by `seed`).
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p: Vec<f64> = self
                .coords
                .iter()
                .map(|c| match c.kind {
                    CoordinateKind::Linear { lo, hi } => {
                        if lo == hi {
                            lo
                        } else {
                            rng.gen_range(lo..hi)
                        }
                    }
                    CoordinateKind::Angular => rng.gen_range(0.0..1.0),
                })
                .collect();
            if self.ball_ok(&p) {
                out.push(p);
            }
        }
        out
    }

    pub fn format_point(&self, point: &[f64]) -> String {
        let parts: Vec<String> = self
            .coords
            .iter()
            .zip(point)
            .map(|(c, v)| format!("{}={v:.6}", c.name))
            .collect();
        format!("({})", parts.join(", "))
    }
}
