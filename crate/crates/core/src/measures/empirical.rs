use crate::error::{FkError, Result};
use crate::systems::{Features, OrbitSample, PhasePoint, System};

/// Uniform probability measure on finitely many points of one system.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<PhasePoint>,
    /// Time span the atoms were sampled over.
    pub horizon: f64,
    /// Textual form of the system.
    pub system: String,
    features: Features,
}

/// The `t`-empirical measure of an orbit sample: mass `1/m` on each sample.
pub fn empirical(orbit: &OrbitSample) -> Result<EmpiricalMeasure> {
    if orbit.is_empty() {
        return Err(FkError::usage("empty orbit"));
    }
    Ok(EmpiricalMeasure {
        atoms: orbit.points.clone(),
        horizon: orbit.horizon,
        system: orbit.system.clone(),
        features: orbit.features().clone(),
    })
}

impl EmpiricalMeasure {
    pub fn from_points(system: &System, atoms: Vec<PhasePoint>, horizon: f64) -> Result<EmpiricalMeasure> {
        if atoms.is_empty() {
            return Err(FkError::usage("empty measure"));
        }
        for p in &atoms {
            system.check_point(p)?;
        }
        let features = system.features(&atoms);
        Ok(EmpiricalMeasure { atoms, horizon, system: system.spec().to_string(), features })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    /// Mass of the atoms satisfying `pred`.
    pub fn mass(&self, mut pred: impl FnMut(&PhasePoint) -> bool) -> f64 {
        self.atoms.iter().filter(|p| pred(p)).count() as f64 * self.weight()
    }

    /// The first `m` atoms, as the measure of a shorter orbit segment.
    pub fn prefix(&self, m: usize) -> EmpiricalMeasure {
        let m = m.clamp(1, self.len());
        let idx: Vec<usize> = (0..m).collect();
        EmpiricalMeasure {
            atoms: self.atoms[..m].to_vec(),
            horizon: self.horizon * m as f64 / self.len() as f64,
            system: self.system.clone(),
            features: self.features.select(&idx),
        }
    }

    /// Stride subsample with `count` atoms: atom `floor(k m / count)` for
    /// `k = 0..count`.
    pub fn thin(&self, count: usize) -> EmpiricalMeasure {
        let m = self.len();
        let count = count.clamp(1, m);
        if count == m {
            return self.clone();
        }
        let idx: Vec<usize> = (0..count).map(|k| k * m / count).collect();
        EmpiricalMeasure {
            atoms: idx.iter().map(|&i| self.atoms[i].clone()).collect(),
            horizon: self.horizon,
            system: self.system.clone(),
            features: self.features.select(&idx),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::SystemSpec;

    #[test]
    fn periodic_rotation_orbit() {
        let s = System::new(&SystemSpec::Rotation { alpha: 0.25 }).unwrap();
        let o = s.sample_orbit(&PhasePoint::Circle(0.0), 4.0, 1.0).unwrap();
        let mu = empirical(&o).unwrap();
        let xs: Vec<f64> = mu.atoms.iter().map(|p| s.coords(p)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(mu.mass(|_| true), 1.0);
        let one = empirical(&s.sample_orbit(&PhasePoint::Circle(0.3), 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn thinning_keeps_features_aligned() {
        let s = System::new(&SystemSpec::suspend(SystemSpec::golden_rotation())).unwrap();
        let o = s.sample_orbit(&s.parse_point("0.1@0.2").unwrap(), 10.0, 0.05).unwrap();
        let mu = empirical(&o).unwrap();
        let t = mu.thin(7);
        assert_eq!(t.len(), 7);
        let direct = s.features(&t.atoms);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(t.features().dist(i, t.features(), j), direct.dist(i, &direct, j));
            }
        }
    }
}
