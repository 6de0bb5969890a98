use serde::{Deserialize, Serialize};

use super::case::NetworkCase;
use super::PortValues;

/// Per-timestep load multipliers, one per port. Timesteps are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    /// `multipliers[t - 1] = [p, n, b]`
    pub multipliers: Vec<PortValues>,
    /// Timestep of the heaviest loading, if the profile marks one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extreme: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("timestep {t} out of range 1..={len}")]
    OutOfRange { t: usize, len: usize },
    #[error("profile has no extreme timestep")]
    NoExtreme,
    #[error("profile csv: {0}")]
    Csv(String),
    #[error("invalid profile: {0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: usize,
    p: f64,
    n: f64,
    b: f64,
}

impl LoadProfile {
    pub fn constant(len: usize, m: PortValues) -> Self {
        LoadProfile {
            multipliers: vec![m; len],
            extreme: None,
        }
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn get(&self, t: usize) -> Result<PortValues, ProfileError> {
        if t == 0 || t > self.len() {
            return Err(ProfileError::OutOfRange { t, len: self.len() });
        }
        Ok(self.multipliers[t - 1])
    }

    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.is_empty() {
            out.push("profile has no timesteps".to_string());
        }
        for (k, m) in self.multipliers.iter().enumerate() {
            if m.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                out.push(format!("timestep {}: multipliers must be positive", k + 1));
            }
        }
        if let Some(e) = self.extreme {
            if e == 0 || e > self.len() {
                out.push(format!("extreme timestep {e} out of range"));
            }
        }
        out
    }
}

/// Snapshot of `case` at timestep `t`: every load scaled by its port's multiplier.
pub fn at_time(case: &NetworkCase, profile: &LoadProfile, t: usize) -> Result<NetworkCase, ProfileError> {
    let m = profile.get(t)?;
    let mut snap = case.clone();
    for l in &mut snap.loads {
        l.base_power *= m[l.port.index()];
    }
    Ok(snap)
}

pub fn parse_profile_csv(text: &str) -> Result<LoadProfile, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ProfileError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "p", "n", "b"] {
        return Err(ProfileError::Csv(format!("expected header t,p,n,b, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut multipliers = Vec::new();
    for (k, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| ProfileError::Csv(e.to_string()))?;
        if row.t != k + 1 {
            return Err(ProfileError::Csv(format!("row {}: expected t = {}, found {}", k + 1, k + 1, row.t)));
        }
        multipliers.push([row.p, row.n, row.b]);
    }
    let profile = LoadProfile {
        multipliers,
        extreme: None,
    };
    let problems = profile.problems();
    if let Some(p) = problems.into_iter().next() {
        return Err(ProfileError::Invalid(p));
    }
    Ok(profile)
}

pub fn write_profile_csv(profile: &LoadProfile) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, m) in profile.multipliers.iter().enumerate() {
        w.serialize(Row {
            t: k + 1,
            p: m[0],
            n: m[1],
            b: m[2],
        })
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::builtin;

    #[test]
    fn extreme_snapshot_node_one() {
        let case = builtin("feeder5").unwrap();
        let profile = case.profile.clone().unwrap();
        let t = profile.extreme.unwrap();
        assert_eq!(profile.get(t).unwrap(), [6.0, 2.6, 3.5]);
        let snap = at_time(&case, &profile, t).unwrap();
        let node1: Vec<f64> = snap.loads.iter().filter(|l| l.node == 1).map(|l| l.base_power).collect();
        assert_eq!(node1.len(), 3);
        assert!((node1[0] - 3000.0).abs() < 1e-9);
        assert!((node1[1] - 2600.0).abs() < 1e-9);
        assert!((node1[2] - 4200.0).abs() < 1e-9);
    }

    #[test]
    fn identity_profile() {
        let case = builtin("feeder5").unwrap();
        let snap = at_time(&case, &LoadProfile::constant(3, [1.0; 3]), 2).unwrap();
        assert_eq!(snap, case);
    }

    #[test]
    fn out_of_range() {
        let case = builtin("feeder5").unwrap();
        let p = case.profile.clone().unwrap();
        let err = at_time(&case, &p, p.len() + 1).unwrap_err();
        assert!(matches!(err, ProfileError::OutOfRange { .. }));
        assert!(at_time(&case, &p, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = builtin("ieee33_bipolar").unwrap().profile.unwrap();
        let text = write_profile_csv(&p);
        assert!(text.starts_with("t,p,n,b\n"));
        let back = parse_profile_csv(&text).unwrap();
        assert_eq!(back.multipliers, p.multipliers);
    }

    #[test]
    fn csv_rejects_bad_header_and_values() {
        assert!(parse_profile_csv("t,a,b,c\n1,1,1,1\n").is_err());
        assert!(parse_profile_csv("t,p,n,b\n1,1,0,1\n").is_err());
        assert!(parse_profile_csv("t,p,n,b\n2,1,1,1\n").is_err());
    }
}
