//! Rotating-frame Hamiltonians built from a declarative molecule spec.
//!
//! Free evolution: `H0 = sum_i omega_i I_z,i + sum_{j>k} 2 pi J_jk I_j . I_k`
//! with `omega_i = 2 pi nu_i` in rad/s. A nutation drive adds
//! `Omega_eff sum_i (cos phi I_x,i + sin phi I_y,i)` on top of `H0`.
//! Frequencies are Hz or ppm at every interface and angular only inside
//! operator matrices.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::spincore::{spin_operator, Operator, SpinAxis};
use crate::{Error, Result};

/// Proton gyromagnetic ratio in Hz/T, the default nucleus.
pub const PROTON_GAMMA_HZ_PER_T: f64 = 42.577478e6;

/// Chemical shift of one spin, declared in exactly one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    /// Field-proportional shift in parts per million of the carrier.
    Ppm(f64),
    /// Fixed offset in Hz, valid only at the field it was quoted for.
    Hz(f64),
}

/// One nuclear spin in the molecule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinSite {
    pub label: String,
    #[serde(flatten)]
    pub shift: Shift,
}

/// Declarative description of a nuclear spin system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub name: String,
    pub spins: Vec<SpinSite>,
    /// Symmetric J-coupling table in Hz with zero diagonal.
    pub j_couplings_hz: Vec<Vec<f64>>,
    /// Transverse coherence time in seconds.
    pub t2_s: f64,
    /// Gyromagnetic ratio in Hz/T; defaults to the proton value.
    #[serde(default = "default_gamma")]
    pub nucleus_gamma_hz_per_t: f64,
}

fn default_gamma() -> f64 {
    PROTON_GAMMA_HZ_PER_T
}

impl MoleculeSpec {
    pub fn n_spins(&self) -> usize {
        self.spins.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.spins.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidMolecule {
            name: self.name.clone(),
            reason,
        };
        let n = self.spins.len();
        if n == 0 {
            return Err(fail("molecule must declare at least one spin".into()));
        }
        if !(self.t2_s > 0.0) {
            return Err(fail(format!("t2_s must be positive, got {}", self.t2_s)));
        }
        if !(self.nucleus_gamma_hz_per_t > 0.0) {
            return Err(fail("nucleus_gamma_hz_per_t must be positive".into()));
        }
        if self.j_couplings_hz.len() != n {
            return Err(fail(format!(
                "j_couplings_hz must be a {n}x{n} table, got {} rows",
                self.j_couplings_hz.len()
            )));
        }
        for (j, row) in self.j_couplings_hz.iter().enumerate() {
            if row.len() != n {
                return Err(fail(format!(
                    "j_couplings_hz row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row[j] != 0.0 {
                return Err(fail(format!(
                    "j_couplings_hz diagonal entry ({j},{j}) must be zero"
                )));
            }
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(fail(format!("j_couplings_hz ({j},{k}) is not finite")));
                }
                if v != self.j_couplings_hz[k][j] {
                    return Err(fail(format!(
                        "j_couplings_hz is not symmetric at ({j},{k}): {v} vs {}",
                        self.j_couplings_hz[k][j]
                    )));
                }
            }
        }
        for (i, s) in self.spins.iter().enumerate() {
            let v = match s.shift {
                Shift::Ppm(p) => p,
                Shift::Hz(h) => h,
            };
            if !v.is_finite() {
                return Err(fail(format!(
                    "spin {i} ({}) has a non-finite shift",
                    s.label
                )));
            }
        }
        Ok(())
    }

    pub fn has_hz_shifts(&self) -> bool {
        self.spins.iter().any(|s| matches!(s.shift, Shift::Hz(_)))
    }

    /// Shift of spin `i` in Hz at the given field.
    pub fn shift_hz(&self, i: usize, field: &FieldContext) -> f64 {
        match self.spins[i].shift {
            Shift::Hz(h) => h,
            Shift::Ppm(p) => p * 1e-6 * field.reference_freq_hz(self.nucleus_gamma_hz_per_t),
        }
    }

    /// Largest |shift| in Hz across all spins at the given field.
    pub fn max_abs_shift_hz(&self, field: &FieldContext) -> f64 {
        (0..self.n_spins())
            .map(|i| self.shift_hz(i, field).abs())
            .fold(0.0, f64::max)
    }

    /// Groups spin indices into J-coupling connected components, each sorted
    /// ascending. Spins in different components never interact, so protocol
    /// runs may evolve them separately and sum the signals.
    pub fn coupling_components(&self) -> Vec<Vec<usize>> {
        let n = self.n_spins();
        let mut component = vec![usize::MAX; n];
        let mut count = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            component[start] = count;
            while let Some(i) = stack.pop() {
                for k in 0..n {
                    if component[k] == usize::MAX && self.j_couplings_hz[i][k] != 0.0 {
                        component[k] = count;
                        stack.push(k);
                    }
                }
            }
            count += 1;
        }
        let mut groups = vec![Vec::new(); count];
        for (i, &c) in component.iter().enumerate() {
            groups[c].push(i);
        }
        groups
    }

    /// Restriction of the molecule to the given spin indices.
    pub fn subsystem(&self, indices: &[usize]) -> MoleculeSpec {
        MoleculeSpec {
            name: format!("{}[{:?}]", self.name, indices),
            spins: indices.iter().map(|&i| self.spins[i].clone()).collect(),
            j_couplings_hz: indices
                .iter()
                .map(|&i| indices.iter().map(|&k| self.j_couplings_hz[i][k]).collect())
                .collect(),
            t2_s: self.t2_s,
            nucleus_gamma_hz_per_t: self.nucleus_gamma_hz_per_t,
        }
    }
}

/// Static field the molecule sits in; fixes the rotating-frame carrier.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldContext {
    pub b0_tesla: f64,
}

impl FieldContext {
    pub fn new(b0_tesla: f64) -> Result<Self> {
        if !(b0_tesla > 0.0) {
            return Err(Error::InvalidField(format!(
                "b0_tesla must be positive, got {b0_tesla}"
            )));
        }
        Ok(FieldContext { b0_tesla })
    }

    /// Carrier frequency (Hz of the 0 ppm reference) for a nucleus.
    pub fn reference_freq_hz(&self, gamma_hz_per_t: f64) -> f64 {
        gamma_hz_per_t * self.b0_tesla
    }
}

/// Field rescaled by `factor` in (0, 1].
///
/// Only ppm-declared shifts scale with the field; a molecule quoting any
/// shift in raw Hz is rejected because the rescaled value would be ambiguous.
pub fn rescale_field(
    spec: &MoleculeSpec,
    field: &FieldContext,
    factor: f64,
) -> Result<FieldContext> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::InvalidField(format!(
            "rescale factor must lie in (0, 1], got {factor}"
        )));
    }
    if factor != 1.0 && spec.has_hz_shifts() {
        return Err(Error::InvalidMolecule {
            name: spec.name.clone(),
            reason: "field rescaling requires all shifts in ppm; Hz-quoted shifts do not scale"
                .into(),
        });
    }
    FieldContext::new(field.b0_tesla * factor)
}

/// `sum_{j>k} 2 pi J_jk (I_j . I_k)` in rad/s.
pub fn j_coupling_term(spec: &MoleculeSpec) -> Result<Operator> {
    let n = spec.n_spins();
    let dim = spec.dim();
    let mut acc = Operator::zeros(dim);
    for j in 0..n {
        for k in 0..j {
            let j_hz = spec.j_couplings_hz[j][k];
            if j_hz == 0.0 {
                continue;
            }
            for axis in [SpinAxis::X, SpinAxis::Y, SpinAxis::Z] {
                let a = spin_operator(n, j, axis)?;
                let b = spin_operator(n, k, axis)?;
                let prod = Operator::new((a.matrix() * b.matrix()) * C64::new(TAU * j_hz, 0.0))?;
                acc = &acc + &prod;
            }
        }
    }
    Ok(acc)
}

/// Free-evolution Hamiltonian `H0` for the molecule at the given field.
pub fn free_hamiltonian(spec: &MoleculeSpec, field: &FieldContext) -> Result<Operator> {
    spec.validate()?;
    let n = spec.n_spins();
    let mut h = j_coupling_term(spec)?;
    for i in 0..n {
        let omega = TAU * spec.shift_hz(i, field);
        let iz = spin_operator(n, i, SpinAxis::Z)?;
        h = &h + &iz.scaled(omega);
    }
    Ok(h)
}

/// Drive Hamiltonian `H0 + Omega_eff sum_i (cos phi I_x,i + sin phi I_y,i)`.
///
/// `Omega_eff = 2 pi rabi_hz (1 + nutation_error)`; `phase = 0` drives along
/// +x, `phase = pi` is the opposite-phase rewind drive.
pub fn drive_hamiltonian(
    spec: &MoleculeSpec,
    field: &FieldContext,
    rabi_hz: f64,
    phase: f64,
    nutation_error: f64,
) -> Result<Operator> {
    if !(rabi_hz > 0.0) {
        return Err(Error::InvalidParams(format!(
            "rabi_hz must be positive, got {rabi_hz}"
        )));
    }
    let n = spec.n_spins();
    let omega_eff = TAU * rabi_hz * (1.0 + nutation_error);
    let mut h = free_hamiltonian(spec, field)?;
    let (cx, cy) = (phase.cos() * omega_eff, phase.sin() * omega_eff);
    for i in 0..n {
        h = &h + &spin_operator(n, i, SpinAxis::X)?.scaled(cx);
        h = &h + &spin_operator(n, i, SpinAxis::Y)?.scaled(cy);
    }
    Ok(h)
}

fn ppm_at_1t(hz: f64) -> f64 {
    hz / (PROTON_GAMMA_HZ_PER_T * 1e-6)
}

/// Built-in molecule library.
///
/// Shifts are stored in ppm (quoted so the Hz values below hold at exactly
/// 1 T for protons), which keeps every built-in usable under field rescaling.
pub mod library {
    use super::*;

    pub const BUILTIN_NAMES: &[&str] = &["three-singlets", "pair-plus-singlet", "ethanol"];

    pub fn by_name(name: &str) -> Result<MoleculeSpec> {
        match name {
            "three-singlets" => Ok(three_singlets()),
            "pair-plus-singlet" => Ok(pair_plus_singlet()),
            "ethanol" => Ok(ethanol()),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    /// Three uncoupled spins at 25, 250, and 500 Hz (1 T proton), T2 = 1 s.
    pub fn three_singlets() -> MoleculeSpec {
        MoleculeSpec {
            name: "three-singlets".into(),
            spins: vec![
                SpinSite {
                    label: "a".into(),
                    shift: Shift::Ppm(ppm_at_1t(25.0)),
                },
                SpinSite {
                    label: "b".into(),
                    shift: Shift::Ppm(ppm_at_1t(250.0)),
                },
                SpinSite {
                    label: "c".into(),
                    shift: Shift::Ppm(ppm_at_1t(500.0)),
                },
            ],
            j_couplings_hz: vec![vec![0.0; 3]; 3],
            t2_s: 1.0,
            nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
        }
    }

    /// One uncoupled spin at 25 Hz plus a J = 10 Hz pair at 50 and 150 Hz
    /// (1 T proton), T2 = 1 s.
    pub fn pair_plus_singlet() -> MoleculeSpec {
        let mut j = vec![vec![0.0; 3]; 3];
        j[1][2] = 10.0;
        j[2][1] = 10.0;
        MoleculeSpec {
            name: "pair-plus-singlet".into(),
            spins: vec![
                SpinSite {
                    label: "s".into(),
                    shift: Shift::Ppm(ppm_at_1t(25.0)),
                },
                SpinSite {
                    label: "p1".into(),
                    shift: Shift::Ppm(ppm_at_1t(50.0)),
                },
                SpinSite {
                    label: "p2".into(),
                    shift: Shift::Ppm(ppm_at_1t(150.0)),
                },
            ],
            j_couplings_hz: j,
            t2_s: 1.0,
            nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
        }
    }

    /// Ethanol with literature shift/coupling constants plus an uncoupled
    /// 0 ppm tetramethylsilane reference spin: CH3 (3 spins, 1.19 ppm),
    /// CH2 (2 spins, 3.66 ppm), OH (2.61 ppm), J(CH3-CH2) = 7.0 Hz,
    /// J(CH2-OH) = 5.0 Hz. Override via a molecule file for other constants.
    pub fn ethanol() -> MoleculeSpec {
        let labels = ["ch3-1", "ch3-2", "ch3-3", "ch2-1", "ch2-2", "oh", "tms"];
        let ppm = [1.19, 1.19, 1.19, 3.66, 3.66, 2.61, 0.0];
        let mut j = vec![vec![0.0; 7]; 7];
        for a in 0..3 {
            for b in 3..5 {
                j[a][b] = 7.0;
                j[b][a] = 7.0;
            }
        }
        for b in 3..5 {
            j[b][5] = 5.0;
            j[5][b] = 5.0;
        }
        MoleculeSpec {
            name: "ethanol".into(),
            spins: labels
                .iter()
                .zip(ppm)
                .map(|(l, p)| SpinSite {
                    label: l.to_string(),
                    shift: Shift::Ppm(p),
                })
                .collect(),
            j_couplings_hz: j,
            t2_s: 1.0,
            nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spincore::{total_spin_operator, HamiltonianEig};

    fn field_1t() -> FieldContext {
        FieldContext::new(1.0).unwrap()
    }

    fn single_spin_hz(hz: f64) -> MoleculeSpec {
        MoleculeSpec {
            name: "single".into(),
            spins: vec![SpinSite {
                label: "s".into(),
                shift: Shift::Hz(hz),
            }],
            j_couplings_hz: vec![vec![0.0]],
            t2_s: 1.0,
            nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
        }
    }

    #[test]
    fn single_spin_free_hamiltonian_is_scaled_iz() {
        let h = free_hamiltonian(&single_spin_hz(25.0), &field_1t()).unwrap();
        let expect = spin_operator(1, 0, SpinAxis::Z).unwrap().scaled(TAU * 25.0);
        assert!(h.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn coupled_pair_has_singlet_triplet_spectrum() {
        // H = 2 pi J (I1 . I2) at zero shift: triplet at +2piJ/4 (3-fold),
        // singlet at -3 (2piJ)/4; the split between them is 2 pi J.
        let mut j = vec![vec![0.0; 2]; 2];
        j[0][1] = 10.0;
        j[1][0] = 10.0;
        let spec = MoleculeSpec {
            name: "pair".into(),
            spins: vec![
                SpinSite {
                    label: "a".into(),
                    shift: Shift::Hz(0.0),
                },
                SpinSite {
                    label: "b".into(),
                    shift: Shift::Hz(0.0),
                },
            ],
            j_couplings_hz: j,
            t2_s: 1.0,
            nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
        };
        let h = free_hamiltonian(&spec, &field_1t()).unwrap();
        let mut eigs: Vec<f64> = h
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let unit = TAU * 10.0;
        let expect = [-0.75 * unit, 0.25 * unit, 0.25 * unit, 0.25 * unit];
        for (got, want) in eigs.iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "eigs {eigs:?}");
        }
    }

    #[test]
    fn ppm_shift_converts_through_carrier() {
        let spec = MoleculeSpec {
            name: "ppm".into(),
            spins: vec![SpinSite {
                label: "s".into(),
                shift: Shift::Ppm(0.59),
            }],
            j_couplings_hz: vec![vec![0.0]],
            t2_s: 1.0,
            nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
        };
        let nu = spec.shift_hz(0, &field_1t());
        assert!((nu - 0.59e-6 * 42.577478e6).abs() < 1e-12);
        assert!((nu - 25.12).abs() < 0.01);
    }

    #[test]
    fn ppm_hz_round_trip_is_exact() {
        let field = field_1t();
        for hz in [25.0, 250.0, 500.0, 1.0, 1234.5] {
            let spec = MoleculeSpec {
                name: "rt".into(),
                spins: vec![SpinSite {
                    label: "s".into(),
                    shift: Shift::Ppm(hz / (PROTON_GAMMA_HZ_PER_T * 1e-6)),
                }],
                j_couplings_hz: vec![vec![0.0]],
                t2_s: 1.0,
                nucleus_gamma_hz_per_t: PROTON_GAMMA_HZ_PER_T,
            };
            let back = spec.shift_hz(0, &field);
            assert!((back - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn drive_phase_pi_negates_drive_term() {
        let spec = single_spin_hz(25.0);
        let field = field_1t();
        let h0 = free_hamiltonian(&spec, &field).unwrap();
        let fwd = drive_hamiltonian(&spec, &field, 2e5, 0.0, 0.0).unwrap();
        let rev = drive_hamiltonian(&spec, &field, 2e5, std::f64::consts::PI, 0.0).unwrap();
        let sum = &(&fwd + &rev) - &h0.scaled(2.0);
        assert!(sum.max_abs_diff(&Operator::zeros(2)) < 1e-6);
    }

    #[test]
    fn nutation_error_scales_drive_amplitude() {
        let spec = single_spin_hz(0.0);
        let field = field_1t();
        let h = drive_hamiltonian(&spec, &field, 2e5, 0.0, 0.02).unwrap();
        let expect = spin_operator(1, 0, SpinAxis::X)
            .unwrap()
            .scaled(TAU * 2.04e5);
        assert!(h.max_abs_diff(&expect) < 1e-7);
    }

    #[test]
    fn hamiltonians_are_hermitian() {
        let spec = library::pair_plus_singlet();
        let field = field_1t();
        assert!(
            free_hamiltonian(&spec, &field)
                .unwrap()
                .hermiticity_deviation()
                < 1e-12
        );
        assert!(
            drive_hamiltonian(&spec, &field, 2e4, 1.3, 0.02)
                .unwrap()
                .hermiticity_deviation()
                < 1e-12
        );
    }

    #[test]
    fn j_term_commutes_with_total_rotations() {
        let spec = library::ethanol();
        let j = j_coupling_term(&spec).unwrap();
        for axis in [SpinAxis::X, SpinAxis::Y, SpinAxis::Z] {
            let total = total_spin_operator(spec.n_spins(), axis).unwrap();
            let comm = &(&j * &total) - &(&total * &j);
            let max = comm.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(max < 1e-12, "J term fails to commute with total I_{axis:?}");
        }
    }

    #[test]
    fn rescale_halves_field_and_shifts() {
        let spec = library::pair_plus_singlet();
        let field = field_1t();
        let half = rescale_field(&spec, &field, 0.5).unwrap();
        assert_eq!(half.b0_tesla, 0.5);
        let nu_full = spec.shift_hz(0, &field);
        let nu_half = spec.shift_hz(0, &half);
        assert!((nu_half - 0.5 * nu_full).abs() < 1e-12);
        let same = rescale_field(&spec, &field, 1.0).unwrap();
        assert_eq!(same.b0_tesla, 1.0);
    }

    #[test]
    fn rescale_factor_from_timing_example() {
        let spec = library::three_singlets();
        let field = field_1t();
        let (tau, mu) = (800e-6, 40e-6);
        let ctx = rescale_field(&spec, &field, tau / (tau + mu)).unwrap();
        assert!((ctx.b0_tesla - 0.9523809523809523).abs() < 1e-15);
    }

    #[test]
    fn rescaling_hz_shifts_is_rejected() {
        let spec = single_spin_hz(25.0);
        let field = field_1t();
        assert!(matches!(
            rescale_field(&spec, &field, 0.5),
            Err(Error::InvalidMolecule { .. })
        ));
    }

    #[test]
    fn asymmetric_couplings_are_rejected() {
        let mut spec = library::pair_plus_singlet();
        spec.j_couplings_hz[1][2] = 11.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn nonzero_diagonal_is_rejected() {
        let mut spec = library::pair_plus_singlet();
        spec.j_couplings_hz[0][0] = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn builtins_validate_and_resolve() {
        for name in library::BUILTIN_NAMES {
            let spec = library::by_name(name).unwrap();
            spec.validate().unwrap();
        }
        assert!(matches!(
            library::by_name("nope"),
            Err(Error::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn builtin_shifts_reproduce_quoted_hz_at_1t() {
        let field = field_1t();
        let three = library::three_singlets();
        for (i, hz) in [25.0, 250.0, 500.0].iter().enumerate() {
            assert!((three.shift_hz(i, &field) - hz).abs() < 1e-9);
        }
        let pps = library::pair_plus_singlet();
        for (i, hz) in [25.0, 50.0, 150.0].iter().enumerate() {
            assert!((pps.shift_hz(i, &field) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn coupling_components_split_molecules() {
        let three = library::three_singlets();
        assert_eq!(three.coupling_components(), vec![vec![0], vec![1], vec![2]]);
        let pps = library::pair_plus_singlet();
        assert_eq!(pps.coupling_components(), vec![vec![0], vec![1, 2]]);
        let eth = library::ethanol();
        let comps = eth.coupling_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(comps[1], vec![6]);
    }

    #[test]
    fn subsystem_restricts_couplings() {
        let eth = library::ethanol();
        let sub = eth.subsystem(&[3, 4, 5]);
        assert_eq!(sub.n_spins(), 3);
        assert_eq!(sub.j_couplings_hz[0][2], 5.0);
        assert_eq!(sub.j_couplings_hz[0][1], 0.0);
        sub.validate().unwrap();
    }

    #[test]
    fn propagator_of_free_hamiltonian_is_unitary() {
        let spec = library::pair_plus_singlet();
        let h = free_hamiltonian(&spec, &field_1t()).unwrap();
        let mut eig = HamiltonianEig::new(&h).unwrap();
        let u = eig.propagator(1e-3);
        assert!(u.unitarity_deviation() < 1e-10);
    }
}
