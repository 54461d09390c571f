//! Acquisition protocols over a molecule's density matrix.
//!
//! Every protocol repeats the same block: free evolution for `tau/2`, an
//! acquisition window, free evolution for `tau/2`, then one decoherence
//! factor `exp(-(tau+mu)/T2)` applied to the amplitude scale.
//!
//! * `conventional` - no drive (`mu = 0`); samples the complex transverse
//!   magnetization `<Ix> + i <Iy>` at the block midpoint.
//! * `aeris` - one nutation pulse of duration `mu`; samples the longitudinal
//!   magnetization `<Iz>` a quarter nutation period into the pulse, then
//!   completes the pulse.
//! * `dracaeris` - a forward pulse of duration `mu/2` sampled at its quarter
//!   period, then an opposite-phase rewind pulse of duration `mu/2` sampled
//!   the same way; the recorded signal is `(s_plus - s_minus)/2`.
//!
//! Spins in different J-coupling components never interact, so each component
//! is evolved in its own Hilbert space and the sampled totals are summed.
//! All propagators are built once per run and reused across blocks.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::hamiltonians::{drive_hamiltonian, free_hamiltonian, FieldContext, MoleculeSpec};
use crate::spincore::{
    expectation, total_spin_operator, DensityMatrix, HamiltonianEig, Operator, SpinAxis,
};
use crate::{Error, Result};

/// Detection scheme executed by [`run_protocol`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Conventional,
    Aeris,
    Dracaeris,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProtocolKind::Conventional => "conventional",
            ProtocolKind::Aeris => "aeris",
            ProtocolKind::Dracaeris => "dracaeris",
        };
        f.write_str(s)
    }
}

/// Timing, drive, and error parameters of an acquisition run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub kind: ProtocolKind,
    /// Free precession per block, seconds.
    pub tau_s: f64,
    /// Total nutation per block, seconds (0 for conventional; for dracaeris
    /// this covers both the forward and the rewind pulse).
    pub mu_s: f64,
    /// Nominal nutation Rabi frequency, Hz.
    pub rabi_hz: f64,
    /// Fractional nutation-rate error (0.02 = 2% over-rotation).
    pub nutation_error: f64,
    pub n_blocks: usize,
    /// Enables dense intra-block sampling via [`trajectory`].
    #[serde(default)]
    pub record_trajectory: bool,
}

/// Relative slack when checking that a pulse covers an integer number of
/// full nutations.
const CYCLE_TOL: f64 = 1e-6;

fn integer_cycles(value: f64) -> Option<u64> {
    let rounded = value.round();
    if rounded >= 1.0 && (value - rounded).abs() <= CYCLE_TOL * rounded.max(1.0) {
        Some(rounded as u64)
    } else {
        None
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_s > 0.0) {
            return Err(Error::InvalidParams(format!(
                "tau_s must be positive, got {}",
                self.tau_s
            )));
        }
        if self.n_blocks == 0 {
            return Err(Error::InvalidParams("n_blocks must be at least 1".into()));
        }
        if self.nutation_error <= -1.0 {
            return Err(Error::InvalidParams(format!(
                "nutation_error must exceed -1, got {}",
                self.nutation_error
            )));
        }
        match self.kind {
            ProtocolKind::Conventional => {
                if self.mu_s != 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "conventional protocol requires mu_s = 0, got {}",
                        self.mu_s
                    )));
                }
            }
            ProtocolKind::Aeris => {
                self.check_drive()?;
                if integer_cycles(self.mu_s * self.rabi_hz).is_none() {
                    return Err(Error::InvalidParams(format!(
                        "aeris requires mu_s * rabi_hz to be a positive integer \
                         (full 2 pi N nutations), got {}",
                        self.mu_s * self.rabi_hz
                    )));
                }
            }
            ProtocolKind::Dracaeris => {
                self.check_drive()?;
                if integer_cycles(self.mu_s / 2.0 * self.rabi_hz).is_none() {
                    return Err(Error::InvalidParams(format!(
                        "dracaeris requires (mu_s/2) * rabi_hz to be a positive integer \
                         (full 2 pi N nutations per pulse), got {}",
                        self.mu_s / 2.0 * self.rabi_hz
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_drive(&self) -> Result<()> {
        if !(self.rabi_hz > 0.0) {
            return Err(Error::InvalidParams(format!(
                "rabi_hz must be positive, got {}",
                self.rabi_hz
            )));
        }
        if !(self.mu_s > 0.0) {
            return Err(Error::InvalidParams(format!(
                "mu_s must be positive for driven protocols, got {}",
                self.mu_s
            )));
        }
        Ok(())
    }

    /// Sampling interval of one block.
    pub fn dwell_total_s(&self) -> f64 {
        self.tau_s + self.mu_s
    }

    /// Block count covering three T2 of decay.
    pub fn default_n_blocks(t2_s: f64, tau_s: f64, mu_s: f64) -> usize {
        (3.0 * t2_s / (tau_s + mu_s)).ceil().max(1.0) as usize
    }
}

/// Sampled magnetization signal with its dwell-time metadata.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    /// Conventional: `<Ix> + i <Iy>`; aeris/dracaeris: real `<Iz>` signal.
    pub samples: Vec<C64>,
    /// Free-precession dwell (`tau`), seconds.
    pub dwell_free_s: f64,
    /// Full block dwell (`tau + mu`), seconds.
    pub dwell_total_s: f64,
    pub kind: ProtocolKind,
    pub params: ProtocolParams,
    pub molecule: String,
    pub t2_s: f64,
    pub b0_tesla: f64,
    /// Rotating-frame carrier (Hz of 0 ppm) for ppm axes.
    pub carrier_hz: f64,
    /// Raw forward-pulse readings for dracaeris runs.
    pub raw_forward: Option<Vec<f64>>,
    /// Raw rewind-pulse readings for dracaeris runs.
    pub raw_rewind: Option<Vec<f64>>,
}

/// High-temperature initial state along +y:
/// `rho0 = 1/dim + (2/dim) sum_i I_y,i`, so `<total I_y> = n_spins / 2`.
pub fn initialize_state(spec: &MoleculeSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    build_initial_state(spec.n_spins(), 2.0 / spec.dim() as f64)
}

fn build_initial_state(n_spins: usize, coefficient: f64) -> Result<DensityMatrix> {
    let dim = 1usize << n_spins;
    let iy = total_spin_operator(n_spins, SpinAxis::Y)?;
    let mat = nalgebra::DMatrix::<C64>::identity(dim, dim) / C64::new(dim as f64, 0.0)
        + iy.matrix() * C64::new(coefficient, 0.0);
    DensityMatrix::new(mat, 1.0)
}

struct ComponentObservables {
    ix: Operator,
    iy: Operator,
    iz: Operator,
}

impl ComponentObservables {
    fn new(n_spins: usize) -> Result<Self> {
        Ok(ComponentObservables {
            ix: total_spin_operator(n_spins, SpinAxis::X)?,
            iy: total_spin_operator(n_spins, SpinAxis::Y)?,
            iz: total_spin_operator(n_spins, SpinAxis::Z)?,
        })
    }
}

struct ComponentRun {
    samples: Vec<C64>,
    raw_forward: Vec<f64>,
    raw_rewind: Vec<f64>,
    // inspected by block-level unit tests
    #[cfg_attr(not(test), allow(dead_code))]
    final_state: DensityMatrix,
}

/// Checks an operator's unitarity once so the block loop can skip per-call
/// validation.
fn checked(u: Operator) -> Result<Operator> {
    let dev = u.unitarity_deviation();
    if dev > crate::spincore::UNITARY_TOL {
        return Err(Error::NotUnitary { deviation: dev });
    }
    Ok(u)
}

fn conjugate_in_place(rho: &DensityMatrix, u: &Operator) -> DensityMatrix {
    // rho -> U^dagger rho U; operators are pre-validated as unitary
    let mat = u.matrix().adjoint() * rho.matrix() * u.matrix();
    DensityMatrix::new(mat, rho.scale()).expect("conjugation preserves shape")
}

fn run_component(
    sub: &MoleculeSpec,
    field: &FieldContext,
    params: &ProtocolParams,
    mut rho: DensityMatrix,
) -> Result<ComponentRun> {
    let n = sub.n_spins();
    let obs = ComponentObservables::new(n)?;
    let h0 = free_hamiltonian(sub, field)?;
    let mut free = HamiltonianEig::new(&h0)?;
    let u_half = checked(free.propagator(params.tau_s / 2.0))?;
    let decay = (-(params.tau_s + params.mu_s) / sub.t2_s).exp();

    let mut samples = Vec::with_capacity(params.n_blocks);
    let mut raw_forward = Vec::new();
    let mut raw_rewind = Vec::new();

    match params.kind {
        ProtocolKind::Conventional => {
            for _ in 0..params.n_blocks {
                rho = conjugate_in_place(&rho, &u_half);
                let sx = expectation(&rho, &obs.ix)?;
                let sy = expectation(&rho, &obs.iy)?;
                samples.push(C64::new(sx, sy));
                rho = conjugate_in_place(&rho, &u_half);
                rho.attenuate(decay);
            }
        }
        ProtocolKind::Aeris => {
            let t_max = 1.0 / (4.0 * params.rabi_hz);
            let hd = drive_hamiltonian(sub, field, params.rabi_hz, 0.0, params.nutation_error)?;
            let mut drive = HamiltonianEig::new(&hd)?;
            // free tau/2 then drive to the first nutation maximum
            let to_sample = checked(&u_half * &drive.propagator(t_max))?;
            // finish the pulse, then free tau/2
            let to_end = checked(&drive.propagator(params.mu_s - t_max) * &u_half)?;
            for _ in 0..params.n_blocks {
                rho = conjugate_in_place(&rho, &to_sample);
                samples.push(C64::new(expectation(&rho, &obs.iz)?, 0.0));
                rho = conjugate_in_place(&rho, &to_end);
                rho.attenuate(decay);
            }
        }
        ProtocolKind::Dracaeris => {
            let t_max = 1.0 / (4.0 * params.rabi_hz);
            let half_mu = params.mu_s / 2.0;
            let h_fwd = drive_hamiltonian(sub, field, params.rabi_hz, 0.0, params.nutation_error)?;
            let h_rev = drive_hamiltonian(sub, field, params.rabi_hz, PI, params.nutation_error)?;
            let mut fwd = HamiltonianEig::new(&h_fwd)?;
            let mut rev = HamiltonianEig::new(&h_rev)?;
            let to_fwd_sample = checked(&u_half * &fwd.propagator(t_max))?;
            let to_rev_sample = checked(&fwd.propagator(half_mu - t_max) * &rev.propagator(t_max))?;
            let to_end = checked(&rev.propagator(half_mu - t_max) * &u_half)?;
            for _ in 0..params.n_blocks {
                rho = conjugate_in_place(&rho, &to_fwd_sample);
                let s_plus = expectation(&rho, &obs.iz)?;
                rho = conjugate_in_place(&rho, &to_rev_sample);
                let s_minus = expectation(&rho, &obs.iz)?;
                samples.push(C64::new((s_plus - s_minus) / 2.0, 0.0));
                raw_forward.push(s_plus);
                raw_rewind.push(s_minus);
                rho = conjugate_in_place(&rho, &to_end);
                rho.attenuate(decay);
            }
        }
    }

    Ok(ComponentRun {
        samples,
        raw_forward,
        raw_rewind,
        final_state: rho,
    })
}

/// Runs the configured acquisition protocol and returns the sampled signal.
///
/// Pure in its inputs; safe to call concurrently for parameter sweeps.
pub fn run_protocol(
    spec: &MoleculeSpec,
    field: &FieldContext,
    params: &ProtocolParams,
) -> Result<TimeSeries> {
    spec.validate()?;
    params.validate()?;

    let mut total: Vec<C64> = vec![C64::new(0.0, 0.0); params.n_blocks];
    let mut raw_forward = vec![0.0; params.n_blocks];
    let mut raw_rewind = vec![0.0; params.n_blocks];

    for indices in spec.coupling_components() {
        let sub = spec.subsystem(&indices);
        let rho0 = initialize_state(&sub)?;
        let run = run_component(&sub, field, params, rho0)?;
        for (acc, s) in total.iter_mut().zip(&run.samples) {
            *acc += s;
        }
        if params.kind == ProtocolKind::Dracaeris {
            for (acc, s) in raw_forward.iter_mut().zip(&run.raw_forward) {
                *acc += s;
            }
            for (acc, s) in raw_rewind.iter_mut().zip(&run.raw_rewind) {
                *acc += s;
            }
        }
    }

    let is_drac = params.kind == ProtocolKind::Dracaeris;
    Ok(TimeSeries {
        samples: total,
        dwell_free_s: params.tau_s,
        dwell_total_s: params.dwell_total_s(),
        kind: params.kind,
        params: *params,
        molecule: spec.name.clone(),
        t2_s: spec.t2_s,
        b0_tesla: field.b0_tesla,
        carrier_hz: field.reference_freq_hz(spec.nucleus_gamma_hz_per_t),
        raw_forward: is_drac.then_some(raw_forward),
        raw_rewind: is_drac.then_some(raw_rewind),
    })
}

/// Dense intra-block record of the total magnetization components.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub time_s: Vec<f64>,
    pub mx: Vec<f64>,
    pub my: Vec<f64>,
    pub mz: Vec<f64>,
    /// Indices into the records marking the end of each block.
    pub block_ends: Vec<usize>,
}

struct ComponentTrajectory {
    segments: Vec<(Operator, f64)>,
    obs: ComponentObservables,
    rho: DensityMatrix,
    decay: f64,
}

impl ComponentTrajectory {
    fn new(
        sub: &MoleculeSpec,
        field: &FieldContext,
        params: &ProtocolParams,
        steps: usize,
    ) -> Result<Self> {
        let h0 = free_hamiltonian(sub, field)?;
        let mut free = HamiltonianEig::new(&h0)?;
        let half_step = params.tau_s / 2.0 / steps as f64;
        let u_free = checked(free.propagator(half_step))?;
        let mut segments = vec![(u_free.clone(), half_step); 1];
        match params.kind {
            ProtocolKind::Conventional => {}
            ProtocolKind::Aeris => {
                let hd = drive_hamiltonian(sub, field, params.rabi_hz, 0.0, params.nutation_error)?;
                let step = params.mu_s / steps as f64;
                let u = checked(HamiltonianEig::new(&hd)?.propagator(step))?;
                segments.push((u, step));
            }
            ProtocolKind::Dracaeris => {
                let step = params.mu_s / 2.0 / steps as f64;
                let h_fwd =
                    drive_hamiltonian(sub, field, params.rabi_hz, 0.0, params.nutation_error)?;
                let h_rev =
                    drive_hamiltonian(sub, field, params.rabi_hz, PI, params.nutation_error)?;
                segments.push((
                    checked(HamiltonianEig::new(&h_fwd)?.propagator(step))?,
                    step,
                ));
                segments.push((
                    checked(HamiltonianEig::new(&h_rev)?.propagator(step))?,
                    step,
                ));
            }
        }
        segments.push((u_free, half_step));
        let rho = initialize_state(sub)?;
        Ok(ComponentTrajectory {
            segments,
            obs: ComponentObservables::new(sub.n_spins())?,
            rho,
            decay: (-(params.tau_s + params.mu_s) / sub.t2_s).exp(),
        })
    }
}

/// Evolves the system with the same block logic as [`run_protocol`], emitting
/// the magnetization components at `samples_per_segment` uniform sub-steps of
/// every free and drive segment.
pub fn trajectory(
    spec: &MoleculeSpec,
    field: &FieldContext,
    params: &ProtocolParams,
    samples_per_segment: usize,
) -> Result<TrajectoryRecord> {
    spec.validate()?;
    params.validate()?;
    if !params.record_trajectory {
        return Err(Error::InvalidParams(
            "trajectory requires record_trajectory = true".into(),
        ));
    }
    if samples_per_segment == 0 {
        return Err(Error::InvalidParams(
            "samples_per_segment must be at least 1".into(),
        ));
    }

    let mut comps: Vec<ComponentTrajectory> = spec
        .coupling_components()
        .into_iter()
        .map(|idx| {
            ComponentTrajectory::new(&spec.subsystem(&idx), field, params, samples_per_segment)
        })
        .collect::<Result<_>>()?;

    let mut rec = TrajectoryRecord {
        time_s: Vec::new(),
        mx: Vec::new(),
        my: Vec::new(),
        mz: Vec::new(),
        block_ends: Vec::new(),
    };

    fn record(rec: &mut TrajectoryRecord, t: f64, comps: &[ComponentTrajectory]) -> Result<()> {
        let (mut mx, mut my, mut mz) = (0.0, 0.0, 0.0);
        for c in comps {
            mx += expectation(&c.rho, &c.obs.ix)?;
            my += expectation(&c.rho, &c.obs.iy)?;
            mz += expectation(&c.rho, &c.obs.iz)?;
        }
        rec.time_s.push(t);
        rec.mx.push(mx);
        rec.my.push(my);
        rec.mz.push(mz);
        Ok(())
    }

    let mut t = 0.0;
    record(&mut rec, t, &comps)?;
    let n_segments = comps[0].segments.len();
    for _ in 0..params.n_blocks {
        for seg in 0..n_segments {
            for _ in 0..samples_per_segment {
                for c in comps.iter_mut() {
                    let (u, _) = &c.segments[seg];
                    c.rho = conjugate_in_place(&c.rho, u);
                }
                t += comps[0].segments[seg].1;
                record(&mut rec, t, &comps)?;
            }
        }
        for c in comps.iter_mut() {
            let decay = c.decay;
            c.rho.attenuate(decay);
        }
        rec.block_ends.push(rec.time_s.len() - 1);
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::library;
    use crate::hamiltonians::PROTON_GAMMA_HZ_PER_T;
    use crate::hamiltonians::{Shift, SpinSite};
    use std::f64::consts::TAU;

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

    fn aeris_params(tau: f64, mu: f64, rabi: f64, eps: f64, n: usize) -> ProtocolParams {
        ProtocolParams {
            kind: ProtocolKind::Aeris,
            tau_s: tau,
            mu_s: mu,
            rabi_hz: rabi,
            nutation_error: eps,
            n_blocks: n,
            record_trajectory: false,
        }
    }

    fn drac_params(tau: f64, mu: f64, rabi: f64, eps: f64, n: usize) -> ProtocolParams {
        ProtocolParams {
            kind: ProtocolKind::Dracaeris,
            ..aeris_params(tau, mu, rabi, eps, n)
        }
    }

    fn conventional_params(tau: f64, n: usize) -> ProtocolParams {
        ProtocolParams {
            kind: ProtocolKind::Conventional,
            tau_s: tau,
            mu_s: 0.0,
            rabi_hz: 0.0,
            nutation_error: 0.0,
            n_blocks: n,
            record_trajectory: false,
        }
    }

    #[test]
    fn initial_state_expectations_are_additive() {
        for n in [1usize, 3] {
            let mut spec = single_spin_hz(25.0);
            spec.spins = (0..n)
                .map(|i| SpinSite {
                    label: format!("s{i}"),
                    shift: Shift::Hz(25.0),
                })
                .collect();
            spec.j_couplings_hz = vec![vec![0.0; n]; n];
            let rho = initialize_state(&spec).unwrap();
            let iy = total_spin_operator(n, SpinAxis::Y).unwrap();
            let iz = total_spin_operator(n, SpinAxis::Z).unwrap();
            assert!((expectation(&rho, &iy).unwrap() - n as f64 / 2.0).abs() < 1e-12);
            assert!(expectation(&rho, &iz).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn protocol_outputs_depend_only_on_traceless_part() {
        // doubling the traceless coefficient doubles every sample
        let spec = single_spin_hz(25.0);
        let field = field_1t();
        let params = aeris_params(800e-6, 20e-6, 2e5, 0.02, 16);
        let base = build_initial_state(1, 2.0 / 2.0).unwrap();
        let doubled = build_initial_state(1, 2.0 * 2.0 / 2.0).unwrap();
        let run_a = run_component(&spec, &field, &params, base).unwrap();
        let run_b = run_component(&spec, &field, &params, doubled).unwrap();
        for (a, b) in run_a.samples.iter().zip(&run_b.samples) {
            assert!((b - a * C64::new(2.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn conventional_fid_matches_closed_form() {
        // s_k = (i/2) e^{i 2 pi nu (k + 1/2) tau} e^{-k tau / T2}
        let nu = 25.0;
        let tau = 800e-6;
        let spec = single_spin_hz(nu);
        let ts = run_protocol(&spec, &field_1t(), &conventional_params(tau, 2500)).unwrap();
        assert_eq!(ts.samples.len(), 2500);
        for (k, s) in ts.samples.iter().enumerate() {
            let phase = TAU * nu * (k as f64 + 0.5) * tau;
            let amp = 0.5 * (-(k as f64) * tau / spec.t2_s).exp();
            let expect = C64::new(0.0, amp) * C64::new(phase.cos(), phase.sin());
            assert!((s - expect).norm() < 1e-9, "block {k}: {s} vs {expect}");
        }
    }

    #[test]
    fn aeris_on_resonance_is_phase_locked() {
        let spec = single_spin_hz(0.0);
        let params = aeris_params(800e-6, 20e-6, 2e5, 0.0, 50);
        let ts = run_protocol(&spec, &field_1t(), &params).unwrap();
        for (k, s) in ts.samples.iter().enumerate() {
            let scale = (-(k as f64) * params.dwell_total_s() / spec.t2_s).exp();
            assert!((s.re - 0.5 * scale).abs() < 1e-9, "block {k}");
            assert_eq!(s.im, 0.0);
        }
    }

    #[test]
    fn envelope_bounds_uncoupled_signals() {
        let spec = library::three_singlets();
        let params = drac_params(800e-6, 40e-6, 2e5, 0.02, 200);
        let ts = run_protocol(&spec, &field_1t(), &params).unwrap();
        let n_spins = spec.n_spins() as f64;
        for (k, s) in ts.samples.iter().enumerate() {
            let bound =
                n_spins / 2.0 * (-(k as f64) * params.dwell_total_s() / spec.t2_s).exp() + 1e-9;
            assert!(s.norm() <= bound, "block {k}: |{s}| > {bound}");
        }
    }

    #[test]
    fn dracaeris_block_is_identity_on_resonance() {
        // nu = 0, J = 0: forward and rewind drives cancel exactly for any
        // nutation error, so one full block is the identity map.
        let spec = single_spin_hz(0.0);
        let field = field_1t();
        for eps in [0.0, 0.013, 0.02] {
            let params = drac_params(900e-6, 40e-6, 2e5, eps, 1);
            let rho0 = initialize_state(&spec).unwrap();
            let run = run_component(&spec, &field, &params, rho0.clone()).unwrap();
            let diff = (run.final_state.matrix() - rho0.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-10, "eps={eps}: block changed the state by {diff}");
        }
    }

    #[test]
    fn rewind_suppresses_leading_order_pulse_error() {
        // after one block, |<Iz>| under dracaeris stays below aeris
        let field = field_1t();
        for eps in [0.005, 0.01, 0.02] {
            for nu in [5.0, 25.0, 100.0] {
                let spec = single_spin_hz(nu);
                let iz = total_spin_operator(1, SpinAxis::Z).unwrap();
                let a_params = aeris_params(800e-6, 20e-6, 2e5, eps, 1);
                let d_params = drac_params(800e-6, 40e-6, 2e5, eps, 1);
                let rho0 = initialize_state(&spec).unwrap();
                let aeris_end = run_component(&spec, &field, &a_params, rho0.clone())
                    .unwrap()
                    .final_state;
                let drac_end = run_component(&spec, &field, &d_params, rho0)
                    .unwrap()
                    .final_state;
                let za = expectation(&aeris_end, &iz).unwrap().abs();
                let zd = expectation(&drac_end, &iz).unwrap().abs();
                assert!(
                    zd < za,
                    "eps={eps} nu={nu}: dracaeris |Iz|={zd} not below aeris {za}"
                );
            }
        }
    }

    #[test]
    fn dracaeris_signal_is_mean_of_forward_and_negated_rewind() {
        let spec = library::pair_plus_singlet();
        let params = drac_params(1e-3, 1e-3, 2e4, 0.01, 25);
        let ts = run_protocol(&spec, &field_1t(), &params).unwrap();
        let fwd = ts.raw_forward.as_ref().unwrap();
        let rew = ts.raw_rewind.as_ref().unwrap();
        assert_eq!(fwd.len(), ts.samples.len());
        for k in 0..ts.samples.len() {
            assert!((ts.samples[k].re - (fwd[k] - rew[k]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn component_decomposition_matches_full_simulation() {
        // pair-plus-singlet run as one 8-dim system vs split components
        let spec = library::pair_plus_singlet();
        let field = field_1t();
        let params = drac_params(1e-3, 5e-4, 2e4, 0.02, 40);
        let split = run_protocol(&spec, &field, &params).unwrap();
        let rho0 = initialize_state(&spec).unwrap();
        let full = run_component(&spec, &field, &params, rho0).unwrap();
        for (a, b) in split.samples.iter().zip(&full.samples) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let bad_conv = ProtocolParams {
            mu_s: 1e-5,
            ..conventional_params(1e-3, 10)
        };
        assert!(bad_conv.validate().is_err());
        // non-integer nutation count
        assert!(aeris_params(1e-3, 21e-6, 2e5, 0.0, 10).validate().is_err());
        assert!(drac_params(1e-3, 21e-6, 2e5, 0.0, 10).validate().is_err());
        // valid ones pass
        aeris_params(1e-3, 20e-6, 2e5, 0.0, 10).validate().unwrap();
        drac_params(1e-3, 40e-6, 2e5, 0.0, 10).validate().unwrap();
        assert!(run_protocol(
            &library::three_singlets(),
            &field_1t(),
            &aeris_params(1e-3, 21e-6, 2e5, 0.0, 10)
        )
        .is_err());
    }

    #[test]
    fn default_block_count_covers_three_t2() {
        assert_eq!(ProtocolParams::default_n_blocks(1.0, 800e-6, 40e-6), 3572);
        assert_eq!(ProtocolParams::default_n_blocks(1.0, 1e-3, 1e-3), 1500);
    }

    #[test]
    fn scale_underflow_flushes_samples_toward_zero() {
        // per-block decay so strong the amplitude factor underflows: the run
        // stays valid and the samples go to exactly zero
        let mut spec = single_spin_hz(25.0);
        spec.t2_s = 1e-6;
        let ts = run_protocol(&spec, &field_1t(), &conventional_params(1e-3, 8)).unwrap();
        // the first sample precedes any decay; every later one underflows
        assert!((ts.samples[0].norm() - 0.5).abs() < 1e-12);
        assert!(ts.samples.iter().skip(1).all(|s| s.norm() == 0.0));
    }

    #[test]
    fn trajectory_requires_flag_and_positive_sampling() {
        let spec = single_spin_hz(0.0);
        let params = aeris_params(1e-3, 20e-6, 2e5, 0.0, 2);
        assert!(trajectory(&spec, &field_1t(), &params, 8).is_err());
        let mut on = params;
        on.record_trajectory = true;
        assert!(trajectory(&spec, &field_1t(), &on, 0).is_err());
        let rec = trajectory(&spec, &field_1t(), &on, 8).unwrap();
        // 3 segments (tau/2, mu, tau/2) x 8 steps x 2 blocks + initial point
        assert_eq!(rec.time_s.len(), 3 * 8 * 2 + 1);
        assert_eq!(rec.block_ends.len(), 2);
    }

    #[test]
    fn trajectory_of_perfect_on_resonance_aeris_decays_along_y() {
        let spec = single_spin_hz(0.0);
        let mut params = aeris_params(800e-6, 20e-6, 2e5, 0.0, 6);
        params.record_trajectory = true;
        let rec = trajectory(&spec, &field_1t(), &params, 16).unwrap();
        // Mz returns to 0 at every block end; My follows the decay envelope
        // (the block-end point is recorded before that block's decay factor)
        for (b, &idx) in rec.block_ends.iter().enumerate() {
            assert!(rec.mz[idx].abs() < 1e-9, "block {b}");
            let scale = (-(b as f64) * params.dwell_total_s() / spec.t2_s).exp();
            assert!((rec.my[idx] - 0.5 * scale).abs() < 1e-9, "block {b}");
        }
    }

    #[test]
    fn trajectory_dracaeris_rezeros_mz_with_pulse_error() {
        let spec = single_spin_hz(0.0);
        let mut params = drac_params(800e-6, 40e-6, 2e5, 0.02, 5);
        params.record_trajectory = true;
        let rec = trajectory(&spec, &field_1t(), &params, 10).unwrap();
        let mut scale = 1.0;
        for &idx in &rec.block_ends {
            scale *= (-params.dwell_total_s() / spec.t2_s).exp();
            assert!(rec.mz[idx].abs() < 1e-6 * scale);
        }
    }

    #[test]
    fn trajectory_aeris_with_pulse_error_circulates_out_of_plane() {
        // each imperfect pulse over-rotates by 2 pi N eps about the drive
        // axis; for a resonant spin the magnetization circulates in the plane
        // perpendicular to the drive, so the block-end transverse component
        // oscillates (the apparent frequency shift) instead of decaying
        let spec = single_spin_hz(0.0);
        let mut params = aeris_params(800e-6, 20e-6, 2e5, 0.02, 40);
        params.record_trajectory = true;
        let rec = trajectory(&spec, &field_1t(), &params, 4).unwrap();
        let end_my: Vec<f64> = rec.block_ends.iter().map(|&i| rec.my[i]).collect();
        let end_mz: Vec<f64> = rec.block_ends.iter().map(|&i| rec.mz[i]).collect();
        let max_mz = end_mz.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let min_my = end_my.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(max_mz > 0.2, "expected out-of-plane buildup, got {max_mz}");
        assert!(
            min_my < -0.2,
            "expected transverse oscillation, got {min_my}"
        );
        // with perfect pulses the same spin never leaves the y axis
        params.nutation_error = 0.0;
        let clean = trajectory(&spec, &field_1t(), &params, 4).unwrap();
        let clean_mz = clean
            .block_ends
            .iter()
            .map(|&i| clean.mz[i].abs())
            .fold(0.0f64, f64::max);
        assert!(clean_mz < 1e-9);
    }
}
