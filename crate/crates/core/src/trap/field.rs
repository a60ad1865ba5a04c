//! Superposed DC fields and the RF pseudopotential of a two-module trap.

use thiserror::Error;

use crate::constants::e_over_u;
use crate::geom::{SymMat3, Vec3};
use crate::real::Real;
use crate::trap::electrode::{Electrode, ElectrodeRole, FieldError, ModuleId};
use crate::trap::layout::TrapLayout;

/// RF drive shared by both modules, with module B allowed a small
/// amplitude/phase deviation from module A.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RfDrive<T> {
    /// Drive amplitude on module A (volts).
    pub amplitude_v: T,
    /// Angular drive frequency (rad/us).
    pub omega: T,
    /// Phase of module B relative to module A (rad).
    pub phase_mismatch_rad: T,
    /// Amplitude of module B minus amplitude of module A (volts).
    pub amplitude_mismatch_v: T,
}

impl<T: Real> RfDrive<T> {
    pub fn new(amplitude_v: T, frequency_hz: T) -> Self {
        Self {
            amplitude_v,
            omega: T::of(2.0) * T::PI() * frequency_hz * T::of(1e-6),
            phase_mismatch_rad: T::zero(),
            amplitude_mismatch_v: T::zero(),
        }
    }

    pub fn frequency_hz(&self) -> T {
        self.omega / (T::of(2.0) * T::PI()) * T::of(1e6)
    }

    pub fn period_us(&self) -> T {
        T::of(2.0) * T::PI() / self.omega
    }

    pub fn amplitude_b_v(&self) -> T {
        self.amplitude_v + self.amplitude_mismatch_v
    }

    pub fn validate(&self) -> Result<(), TrapFieldError> {
        if !(self.amplitude_v > T::zero()) {
            return Err(TrapFieldError::BadDrive("amplitude_v must be positive"));
        }
        if !(self.omega > T::zero()) {
            return Err(TrapFieldError::BadDrive("frequency must be positive"));
        }
        Ok(())
    }
}

impl<T: Real> Default for RfDrive<T> {
    /// Measured operating point: 101.75 V at 19.32 MHz, matched modules.
    fn default() -> Self {
        Self::new(T::of(101.75), T::of(19.32e6))
    }
}

/// Singly charged ion, mass in atomic mass units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IonSpecies<T> {
    pub mass_amu: T,
    pub charge_e: T,
}

impl<T: Real> IonSpecies<T> {
    pub fn new(mass_amu: T, charge_e: T) -> Self {
        Self { mass_amu, charge_e }
    }

    /// 171Yb+, the coherence qubit carrier.
    pub fn yb171() -> Self {
        Self::new(T::of(171.0), T::one())
    }

    /// 174Yb+, used for loss statistics.
    pub fn yb174() -> Self {
        Self::new(T::of(174.0), T::one())
    }
}

#[derive(Debug, Error)]
pub enum TrapFieldError {
    #[error("invalid RF drive: {0}")]
    BadDrive(&'static str),
    #[error("expected {expected} electrode voltages, got {got}")]
    VoltageCount { expected: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// DC superposition at one point: potential (V), gradient (V/um) and
/// Hessian (V/um^2).
#[derive(Clone, Copy, Debug)]
pub struct DcField<T> {
    pub potential: T,
    pub grad: Vec3<T>,
    pub hess: SymMat3<T>,
}

/// A layout bound to an RF drive and an ion species, with the electrode
/// bookkeeping precomputed. This is the shared read-only context for the
/// waveform compiler and the dynamics integrator.
#[derive(Clone, Debug)]
pub struct TrapField<T> {
    pub layout: TrapLayout<T>,
    pub drive: RfDrive<T>,
    pub ion: IonSpecies<T>,
    dc: Vec<Electrode<T>>,
    rf_a: Vec<Electrode<T>>,
    rf_b: Vec<Electrode<T>>,
    dc_ids: Vec<String>,
}

impl<T: Real> TrapField<T> {
    pub fn new(layout: TrapLayout<T>, drive: RfDrive<T>, ion: IonSpecies<T>) -> Self {
        let dc: Vec<_> =
            layout.electrodes.iter().filter(|e| e.role == ElectrodeRole::Dc).cloned().collect();
        let rf_a: Vec<_> = layout
            .electrodes
            .iter()
            .filter(|e| e.role == ElectrodeRole::Rf && e.module == ModuleId::A)
            .cloned()
            .collect();
        let rf_b: Vec<_> = layout
            .electrodes
            .iter()
            .filter(|e| e.role == ElectrodeRole::Rf && e.module == ModuleId::B)
            .cloned()
            .collect();
        let dc_ids = dc.iter().map(|e| e.id.clone()).collect();
        Self { layout, drive, ion, dc, rf_a, rf_b, dc_ids }
    }

    pub fn dc_ids(&self) -> &[String] {
        &self.dc_ids
    }

    pub fn dc_count(&self) -> usize {
        self.dc.len()
    }

    pub fn dc_index(&self, id: &str) -> Option<usize> {
        self.dc_ids.iter().position(|e| e == id)
    }

    pub fn dc_electrode(&self, idx: usize) -> &Electrode<T> {
        &self.dc[idx]
    }

    fn check_voltages(&self, voltages: &[T]) -> Result<(), TrapFieldError> {
        if voltages.len() != self.dc.len() {
            return Err(TrapFieldError::VoltageCount {
                expected: self.dc.len(),
                got: voltages.len(),
            });
        }
        Ok(())
    }

    /// Superposed DC potential/gradient/Hessian. One voltage per DC
    /// electrode, in layout order.
    pub fn dc_field(&self, voltages: &[T], p: Vec3<T>) -> Result<DcField<T>, TrapFieldError> {
        self.check_voltages(voltages)?;
        // Domain check once, against the highest electrode plane.
        for e in &self.dc {
            if p.z <= e.plane_z {
                return Err(FieldError::BelowPlane {
                    z: p.z.to_f64().unwrap_or(f64::NAN),
                    plane: e.plane_z.to_f64().unwrap_or(f64::NAN),
                }
                .into());
            }
        }
        Ok(self.dc_field_unchecked(voltages, p))
    }

    #[inline]
    pub fn dc_field_unchecked(&self, voltages: &[T], p: Vec3<T>) -> DcField<T> {
        let mut potential = T::zero();
        let mut grad = Vec3::zero();
        let mut hess = SymMat3::zero();
        for (e, &v) in self.dc.iter().zip(voltages) {
            if v == T::zero() {
                continue;
            }
            let f = e.patch_field_unchecked(p);
            potential += v * f.phi;
            grad += f.grad.scale(v);
            hess = hess.add(f.hess.scale(v));
        }
        DcField { potential, grad, hess }
    }

    /// Superposition in SI derivative units: potential in V, gradient in
    /// V/m, Hessian in V/m^2.
    pub fn field_and_hessian(
        &self,
        voltages: &[T],
        p: Vec3<T>,
    ) -> Result<(T, Vec3<T>, SymMat3<T>), TrapFieldError> {
        let f = self.dc_field(voltages, p)?;
        Ok((f.potential, f.grad.scale(T::of(1e6)), f.hess.scale(T::of(1e12))))
    }

    /// Per-electrode unit-potential basis at a point (DC electrodes only).
    pub fn dc_basis(&self, p: Vec3<T>) -> Vec<crate::trap::electrode::PatchField<T>> {
        self.dc.iter().map(|e| e.patch_field_unchecked(p)).collect()
    }

    /// Combined RF gradient/Hessian of the two per-module unit bases.
    fn rf_unit(&self, p: Vec3<T>) -> (Vec3<T>, SymMat3<T>, Vec3<T>, SymMat3<T>) {
        let mut ga = Vec3::zero();
        let mut ha = SymMat3::zero();
        for e in &self.rf_a {
            let f = e.patch_field_unchecked(p);
            ga += f.grad;
            ha = ha.add(f.hess);
        }
        let mut gb = Vec3::zero();
        let mut hb = SymMat3::zero();
        for e in &self.rf_b {
            let f = e.patch_field_unchecked(p);
            gb += f.grad;
            hb = hb.add(f.hess);
        }
        (ga, ha, gb, hb)
    }

    /// Prefactor C with pseudopotential = C * S(r), S the cycle-averaged
    /// squared field amplitude term.
    fn pseudo_prefactor(&self) -> T {
        let q = self.ion.charge_e;
        e_over_u::<T>() * q * q
            / (T::of(4.0) * self.ion.mass_amu * self.drive.omega * self.drive.omega)
    }

    /// Cycle-averaged pseudopotential energy (eV).
    ///
    /// Both modules drive at the same frequency, so the two-tone average
    /// reduces to `V_A^2 |g_A|^2 + V_B^2 |g_B|^2 + 2 V_A V_B cos(d) g_A.g_B`;
    /// [`Self::pseudopotential_quadrature_ev`] integrates the instantaneous
    /// field over a period instead and is kept as a cross-check.
    pub fn pseudopotential_ev(&self, p: Vec3<T>) -> T {
        let (ga, _, gb, _) = self.rf_unit(p);
        let va = self.drive.amplitude_v;
        let vb = self.drive.amplitude_b_v();
        let cosd = self.drive.phase_mismatch_rad.cos();
        let s = va * va * ga.norm2()
            + vb * vb * gb.norm2()
            + T::of(2.0) * va * vb * cosd * ga.dot(gb);
        self.pseudo_prefactor() * s
    }

    /// Gradient of the pseudopotential (eV/um).
    pub fn pseudo_grad_ev_um(&self, p: Vec3<T>) -> Vec3<T> {
        let (ga, ha, gb, hb) = self.rf_unit(p);
        let va = self.drive.amplitude_v;
        let vb = self.drive.amplitude_b_v();
        let cosd = self.drive.phase_mismatch_rad.cos();
        let mut g = ha.mul_vec(ga).scale(va * va);
        g += hb.mul_vec(gb).scale(vb * vb);
        g += (ha.mul_vec(gb) + hb.mul_vec(ga)).scale(va * vb * cosd);
        g.scale(T::of(2.0) * self.pseudo_prefactor())
    }

    /// Gauss-Newton residual form of the cycle-averaged field: two stacked
    /// 3-vectors whose squared norm is S(r), with their Jacobians.
    pub(crate) fn pseudo_residuals(
        &self,
        p: Vec3<T>,
    ) -> ([Vec3<T>; 2], [SymMat3<T>; 2]) {
        let (ga, ha, gb, hb) = self.rf_unit(p);
        let va = self.drive.amplitude_v;
        let vb = self.drive.amplitude_b_v();
        let (sind, cosd) = self.drive.phase_mismatch_rad.sin_cos();
        let w1 = ga.scale(va) + gb.scale(vb * cosd);
        let w2 = gb.scale(vb * sind);
        let j1 = ha.scale(va).add(hb.scale(vb * cosd));
        let j2 = hb.scale(vb * sind);
        ([w1, w2], [j1, j2])
    }

    /// Pseudopotential by explicit time average of the instantaneous field
    /// over one RF period (trapezoidal rule with `n` intervals).
    pub fn pseudopotential_quadrature_ev(&self, p: Vec3<T>, n: usize) -> T {
        let (ga, _, gb, _) = self.rf_unit(p);
        let va = self.drive.amplitude_v;
        let vb = self.drive.amplitude_b_v();
        let delta = self.drive.phase_mismatch_rad;
        let mut acc = T::zero();
        for k in 0..n {
            let theta = T::of(2.0) * T::PI() * T::of_usize(k) / T::of_usize(n);
            let e = ga.scale(va * theta.cos()) + gb.scale(vb * (theta + delta).cos());
            acc += e.norm2();
        }
        let mean_sq = acc / T::of_usize(n);
        // pseudopotential = kappa q^2 <E^2> / (2 m omega^2)
        let q = self.ion.charge_e;
        e_over_u::<T>() * q * q * mean_sq
            / (T::of(2.0) * self.ion.mass_amu * self.drive.omega * self.drive.omega)
    }

    /// Hessian of the pseudopotential by central differences of the
    /// analytic gradient.
    pub fn pseudo_hessian_ev_um2(&self, p: Vec3<T>) -> SymMat3<T> {
        let h = T::of(1e-3);
        let dx = Vec3::new(h, T::zero(), T::zero());
        let dy = Vec3::new(T::zero(), h, T::zero());
        let dz = Vec3::new(T::zero(), T::zero(), h);
        let two_h = T::of(2.0) * h;
        let gx = (self.pseudo_grad_ev_um(p + dx) - self.pseudo_grad_ev_um(p - dx)).scale(T::one() / two_h);
        let gy = (self.pseudo_grad_ev_um(p + dy) - self.pseudo_grad_ev_um(p - dy)).scale(T::one() / two_h);
        let gz = (self.pseudo_grad_ev_um(p + dz) - self.pseudo_grad_ev_um(p - dz)).scale(T::one() / two_h);
        let half = T::of(0.5);
        SymMat3 {
            xx: gx.x,
            yy: gy.y,
            zz: gz.z,
            xy: (gx.y + gy.x) * half,
            xz: (gx.z + gz.x) * half,
            yz: (gy.z + gz.y) * half,
        }
    }

    /// Total effective potential energy (eV): ion charge times the DC
    /// superposition plus the pseudopotential.
    pub fn total_energy_ev(&self, voltages: &[T], p: Vec3<T>) -> T {
        let dc = self.dc_field_unchecked(voltages, p);
        self.ion.charge_e * dc.potential + self.pseudopotential_ev(p)
    }

    /// Gradient of the total effective potential energy (eV/um).
    pub fn total_grad_ev_um(&self, voltages: &[T], p: Vec3<T>) -> Vec3<T> {
        let dc = self.dc_field_unchecked(voltages, p);
        dc.grad.scale(self.ion.charge_e) + self.pseudo_grad_ev_um(p)
    }

    /// Hessian of the total effective potential energy (eV/um^2).
    pub fn total_hessian_ev_um2(&self, voltages: &[T], p: Vec3<T>) -> SymMat3<T> {
        let dc = self.dc_field_unchecked(voltages, p);
        dc.hess.scale(self.ion.charge_e).add(self.pseudo_hessian_ev_um2(p))
    }

    /// Instantaneous electric potential energy (eV) for the full-RF drive.
    pub fn instantaneous_energy_ev(&self, voltages: &[T], p: Vec3<T>, t_us: T) -> T {
        let dc = self.dc_field_unchecked(voltages, p);
        let (phase_a, phase_b) = (self.drive.omega * t_us, self.drive.omega * t_us + self.drive.phase_mismatch_rad);
        let mut rf_phi = T::zero();
        for e in &self.rf_a {
            rf_phi += e.patch_field_unchecked(p).phi * self.drive.amplitude_v * phase_a.cos();
        }
        for e in &self.rf_b {
            rf_phi += e.patch_field_unchecked(p).phi * self.drive.amplitude_b_v() * phase_b.cos();
        }
        self.ion.charge_e * (dc.potential + rf_phi)
    }

    /// Instantaneous gradient of the potential energy (eV/um) for the
    /// full-RF drive.
    pub fn instantaneous_grad_ev_um(&self, voltages: &[T], p: Vec3<T>, t_us: T) -> Vec3<T> {
        let dc = self.dc_field_unchecked(voltages, p);
        let (ga, _, gb, _) = self.rf_unit(p);
        let phase_a = self.drive.omega * t_us;
        let phase_b = phase_a + self.drive.phase_mismatch_rad;
        let rf = ga.scale(self.drive.amplitude_v * phase_a.cos())
            + gb.scale(self.drive.amplitude_b_v() * phase_b.cos());
        (dc.grad + rf).scale(self.ion.charge_e)
    }
}
