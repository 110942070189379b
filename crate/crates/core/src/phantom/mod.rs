//! Synthetic multilayer thermal phantom: 1D transient solver, thermal-wave
//! contrast and full ROI stack generation.

mod contrast;
mod generate;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use contrast::{contrast_curve, diffusion_length, lockin_phase_lag, surface_transfer};
pub use generate::{generate_phantom, DefectSpec, Phantom, PhantomSpec, ROI_SIZE};
pub use solver::{
    fd_solve, fd_solve_with, grid_doubling_deviation, semi_infinite_surface, slab_surface, step_limit,
    Solution, SolverOptions,
};

/// Bulk thermal properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// W/(m·K)
    pub conductivity: f64,
}

impl Material {
    /// Carbon fibre laminate, out-of-plane conductivity.
    pub const CFRP: Material = Material { density: 1602.0, specific_heat: 930.0, conductivity: 0.35 };
    pub const FEP: Material = Material { density: 2200.0, specific_heat: 1145.0, conductivity: 0.23 };
    pub const AIR: Material = Material { density: 1.204, specific_heat: 1006.0, conductivity: 0.026 };

    /// Volumetric heat capacity ρc_p.
    pub fn heat_capacity(&self) -> f64 {
        self.density * self.specific_heat
    }

    pub fn diffusivity(&self) -> f64 {
        self.conductivity / self.heat_capacity()
    }

    pub fn effusivity(&self) -> f64 {
        (self.conductivity * self.heat_capacity()).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("density", self.density),
            ("specific_heat", self.specific_heat),
            ("conductivity", self.conductivity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("material {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn by_name(name: &str) -> Option<Material> {
        match name.to_ascii_lowercase().as_str() {
            "cfrp" => Some(Self::CFRP),
            "fep" => Some(Self::FEP),
            "air" => Some(Self::AIR),
            _ => None,
        }
    }
}

/// One homogeneous layer of a stack, front face first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    /// m
    pub thickness: f64,
    #[serde(with = "material_serde")]
    pub material: Material,
}

impl LayerSpec {
    pub fn new(thickness: f64, material: Material) -> Self {
        LayerSpec { thickness, material }
    }

    pub fn diffusivity(&self) -> f64 {
        self.material.diffusivity()
    }

    pub fn effusivity(&self) -> f64 {
        self.material.effusivity()
    }

    /// L²/α
    pub fn diffusion_time(&self) -> f64 {
        self.thickness * self.thickness / self.diffusivity()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return Err(Error::InvalidArgument(format!("layer thickness must be positive, got {}", self.thickness)));
        }
        self.material.validate()
    }
}

pub fn validate_stack(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("layer stack is empty".into()));
    }
    layers.iter().try_for_each(LayerSpec::validate)
}

pub fn stack_thickness(layers: &[LayerSpec]) -> f64 {
    layers.iter().map(|l| l.thickness).sum()
}

/// Replace `[depth, depth + thickness)` of `plate` with `material`.
pub fn insert_layer(plate: &[LayerSpec], depth: f64, thickness: f64, material: Material) -> Result<Vec<LayerSpec>> {
    split_plate(plate, depth, thickness, Some(material))
}

/// `plate` cut at the faces of an insert without changing its materials, so a
/// solve on it shares the mesh of the matching [`insert_layer`] stack.
pub fn split_layers(plate: &[LayerSpec], depth: f64, thickness: f64) -> Result<Vec<LayerSpec>> {
    split_plate(plate, depth, thickness, None)
}

fn split_plate(plate: &[LayerSpec], depth: f64, thickness: f64, material: Option<Material>) -> Result<Vec<LayerSpec>> {
    validate_stack(plate)?;
    let total = stack_thickness(plate);
    if !(depth > 0.0 && thickness > 0.0 && depth + thickness < total) {
        return Err(Error::InvalidArgument(format!(
            "insert at depth {depth} with thickness {thickness} does not fit a {total} m plate"
        )));
    }
    let (a, b) = (depth, depth + thickness);
    let mut out = Vec::with_capacity(plate.len() + 2);
    let mut z = 0.0;
    let mut push = |t: f64, m: Material| {
        if t > 0.0 {
            out.push(LayerSpec::new(t, m));
        }
    };
    let mut inserted = false;
    for l in plate {
        let (z0, z1) = (z, z + l.thickness);
        push(z1.min(a) - z0.min(a), l.material);
        match material {
            Some(m) if !inserted && z1 > a => {
                push(thickness, m);
                inserted = true;
            }
            Some(_) => {}
            None => push(z1.min(b).max(a) - z0.min(b).max(a), l.material),
        }
        push(z1.max(b) - z0.max(b), l.material);
        z = z1;
    }
    Ok(out)
}

/// Materials are given either by name or by explicit properties.
pub(crate) mod material_serde {
    use super::Material;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Props(Material),
    }

    pub fn serialize<S: Serializer>(m: &Material, s: S) -> Result<S::Ok, S::Error> {
        for name in ["cfrp", "fep", "air"] {
            if Material::by_name(name) == Some(*m) {
                return s.serialize_str(name);
            }
        }
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Material, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Name(n) => Material::by_name(&n).ok_or_else(|| D::Error::custom(format!("unknown material {n:?}"))),
            Repr::Props(m) => Ok(m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_effusivities() {
        assert!((Material::CFRP.effusivity() - 722.11).abs() < 0.01);
        assert!((Material::FEP.effusivity() - 761.16).abs() < 0.05);
        assert!((Material::AIR.effusivity() - 5.61).abs() < 0.01);
        assert!((Material::CFRP.diffusivity() - 2.349e-7).abs() < 1e-10);
    }

    #[test]
    fn insert_splits_plate() {
        let plate = [LayerSpec::new(1.7e-3, Material::CFRP)];
        let s = insert_layer(&plate, 0.135e-3, 50e-6, Material::FEP).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s[0].thickness - 0.135e-3).abs() < 1e-15);
        assert_eq!(s[1].material, Material::FEP);
        assert!((stack_thickness(&s) - 1.7e-3).abs() < 1e-15);

        let two = [LayerSpec::new(1e-3, Material::CFRP), LayerSpec::new(1e-3, Material::FEP)];
        let s = insert_layer(&two, 0.9e-3, 0.2e-3, Material::AIR).unwrap();
        let t: Vec<f64> = s.iter().map(|l| l.thickness).collect();
        assert_eq!(s.len(), 3);
        assert!((t[0] - 0.9e-3).abs() < 1e-15 && (t[1] - 0.2e-3).abs() < 1e-15 && (t[2] - 0.9e-3).abs() < 1e-15);
        assert_eq!(s[2].material, Material::FEP);

        let same = split_layers(&two, 0.9e-3, 0.2e-3).unwrap();
        let t: Vec<f64> = same.iter().map(|l| l.thickness).collect();
        assert_eq!(same.len(), 4);
        assert!((t[1] - 0.1e-3).abs() < 1e-15 && (t[2] - 0.1e-3).abs() < 1e-15);
        assert_eq!((same[1].material, same[2].material), (Material::CFRP, Material::FEP));

        assert!(insert_layer(&plate, 1.68e-3, 50e-6, Material::FEP).is_err());
        assert!(insert_layer(&plate, 0.0, 50e-6, Material::FEP).is_err());
    }

    #[test]
    fn layer_serde() {
        let l: LayerSpec = serde_json::from_str(r#"{"thickness": 1e-3, "material": "FEP"}"#).unwrap();
        assert_eq!(l.material, Material::FEP);
        let l: LayerSpec = serde_json::from_str(
            r#"{"thickness": 1e-3, "material": {"density": 1.0, "specific_heat": 2.0, "conductivity": 3.0}}"#,
        )
        .unwrap();
        assert_eq!(l.material.conductivity, 3.0);
        let back: LayerSpec = serde_json::from_str(&serde_json::to_string(&l).unwrap()).unwrap();
        assert_eq!(back, l);
        assert_eq!(serde_json::to_string(&LayerSpec::new(1.0, Material::AIR)).unwrap(), r#"{"thickness":1.0,"material":"air"}"#);
        assert!(serde_json::from_str::<LayerSpec>(r#"{"thickness": 1e-3, "material": "steel"}"#).is_err());
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(LayerSpec::new(-1.0, Material::CFRP).validate().is_err());
        let bad = Material { conductivity: 0.0, ..Material::CFRP };
        assert!(LayerSpec::new(1.0, bad).validate().is_err());
        assert!(validate_stack(&[]).is_err());
    }
}
