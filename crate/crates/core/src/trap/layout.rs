//! Two-module electrode layout builder and its text serialization.
//!
//! The builder reproduces the linear surface-trap geometry used for the
//! inter-module link: per module a pair of RF rails running to the module
//! edge, flanked by segmented DC electrodes, with module B offset from
//! module A by the inter-module gap and optional transverse/vertical
//! misalignment.

use std::fmt::Write as _;

use thiserror::Error;

use crate::io::fnv1a_hex;
use crate::real::Real;
use crate::trap::electrode::{Electrode, ElectrodeRole, ModuleId, Rect};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("parameter {name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("need at least 8 DC electrode pairs per module, got {0}")]
    TooFewPairs(usize),
    #[error("electrodes {a} and {b} overlap")]
    Overlap { a: String, b: String },
    #[error("RF-DC separation {sep:.3} um between {rf} and {dc} is below the 5 um clearance")]
    ClearanceViolated { rf: String, dc: String, sep: f64 },
    #[error("layout text line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Builder parameters, all lengths in um.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutParams<T> {
    /// Segmented DC electrode pairs per module, counted from the gap.
    pub dc_pairs_per_module: usize,
    /// Axial extent of one DC segment.
    pub dc_width: T,
    /// Axial distance between the leading edges of adjacent segments.
    pub dc_pitch: T,
    /// Transverse extent of the DC rails.
    pub dc_breadth: T,
    /// Transverse width of each RF rail.
    pub rf_width: T,
    /// Transverse gap between the two RF rails.
    pub rf_separation: T,
    /// Minimum RF-DC edge clearance.
    pub rf_dc_clearance: T,
    /// Inter-module gap along the transport axis.
    pub gap_x: T,
    /// Transverse misalignment of module B.
    pub misalign_y: T,
    /// Vertical misalignment of module B.
    pub misalign_z: T,
    /// DC pairs per module (nearest the gap) driven during transport.
    pub transport_pairs: usize,
}

impl<T: Real> Default for LayoutParams<T> {
    fn default() -> Self {
        Self {
            dc_pairs_per_module: 12,
            dc_width: T::of(220.0),
            dc_pitch: T::of(230.0),
            dc_breadth: T::of(300.0),
            rf_width: T::of(270.0),
            rf_separation: T::of(90.0),
            rf_dc_clearance: T::of(5.0),
            gap_x: T::of(10.0),
            misalign_y: T::zero(),
            misalign_z: T::zero(),
            transport_pairs: 4,
        }
    }
}

/// Named axial positions (um).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Zones<T> {
    pub loading: T,
    pub zone1: T,
    pub zone2: T,
}

/// The full two-module electrode set plus zone markers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrapLayout<T> {
    pub electrodes: Vec<Electrode<T>>,
    pub gap_x: T,
    pub misalign_y: T,
    pub misalign_z: T,
    pub zones: Zones<T>,
    /// Ids of the DC electrodes active during transport, gap-adjacent pairs
    /// on both modules.
    pub transport_electrodes: Vec<String>,
}

/// Distance between the two link endpoints (um).
pub const ZONE_SPAN_UM: f64 = 684.0;
/// Distance from the loading zone to zone 1 (um).
pub const LOADING_SPAN_UM: f64 = 1840.0;

/// Build the default-style two-module layout.
pub fn build_two_module_layout<T: Real>(
    params: &LayoutParams<T>,
) -> Result<TrapLayout<T>, LayoutError> {
    check_positive("dc_width", params.dc_width)?;
    check_positive("dc_pitch", params.dc_pitch)?;
    check_positive("dc_breadth", params.dc_breadth)?;
    check_positive("rf_width", params.rf_width)?;
    check_positive("rf_separation", params.rf_separation)?;
    check_positive("rf_dc_clearance", params.rf_dc_clearance)?;
    if params.gap_x < T::zero() {
        return Err(LayoutError::NonPositive {
            name: "gap_x",
            value: params.gap_x.to_f64().unwrap_or(f64::NAN),
        });
    }
    if params.dc_pairs_per_module < 8 {
        return Err(LayoutError::TooFewPairs(params.dc_pairs_per_module));
    }

    let n = params.dc_pairs_per_module;
    // Module length: n segments at the DC pitch, trailing gap trimmed.
    let length = params.dc_pitch * T::of_usize(n) - (params.dc_pitch - params.dc_width);
    let rf_inner = params.rf_separation * T::of(0.5);
    let rf_outer = rf_inner + params.rf_width;
    let dc_inner = rf_outer + params.rf_dc_clearance;
    let dc_outer = dc_inner + params.dc_breadth;

    let mut electrodes = Vec::new();
    let mut transport = Vec::new();

    for module in [ModuleId::A, ModuleId::B] {
        let (x0, dy, dz) = match module {
            ModuleId::A => (-length, T::zero(), T::zero()),
            ModuleId::B => (params.gap_x, params.misalign_y, params.misalign_z),
        };
        let x1 = x0 + length;
        for (side, sign) in [("N", T::one()), ("S", -T::one())] {
            // RF rail spanning the whole module edge to edge.
            let (ry0, ry1) = ordered(sign * rf_inner + dy, sign * rf_outer + dy);
            electrodes.push(Electrode {
                id: format!("{}_RF_{}", module.label(), side),
                module,
                role: ElectrodeRole::Rf,
                extent: Rect { x_min: x0, x_max: x1, y_min: ry0, y_max: ry1 },
                plane_z: dz,
            });
            // Segmented DC rail, pair 1 at the gap-facing edge.
            let (dy0, dy1) = ordered(sign * dc_inner + dy, sign * dc_outer + dy);
            for k in 0..n {
                let offset = params.dc_pitch * T::of_usize(k);
                let (sx0, sx1) = match module {
                    ModuleId::A => (x1 - offset - params.dc_width, x1 - offset),
                    ModuleId::B => (x0 + offset, x0 + offset + params.dc_width),
                };
                let id = format!("{}_DC_{}{:02}", module.label(), side, k + 1);
                if k < params.transport_pairs {
                    transport.push(id.clone());
                }
                electrodes.push(Electrode {
                    id,
                    module,
                    role: ElectrodeRole::Dc,
                    extent: Rect { x_min: sx0, x_max: sx1, y_min: dy0, y_max: dy1 },
                    plane_z: dz,
                });
            }
        }
    }

    validate_geometry(&electrodes, params.rf_dc_clearance)?;

    let half_span = T::of(ZONE_SPAN_UM / 2.0);
    let gap_center = params.gap_x * T::of(0.5);
    let zone1 = gap_center - half_span;
    let zone2 = gap_center + half_span;
    let zones = Zones { loading: zone1 - T::of(LOADING_SPAN_UM), zone1, zone2 };

    transport.sort();
    Ok(TrapLayout {
        electrodes,
        gap_x: params.gap_x,
        misalign_y: params.misalign_y,
        misalign_z: params.misalign_z,
        zones,
        transport_electrodes: transport,
    })
}

fn ordered<T: Real>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_positive<T: Real>(name: &'static str, v: T) -> Result<(), LayoutError> {
    if v > T::zero() {
        Ok(())
    } else {
        Err(LayoutError::NonPositive { name, value: v.to_f64().unwrap_or(f64::NAN) })
    }
}

fn validate_geometry<T: Real>(
    electrodes: &[Electrode<T>],
    clearance: T,
) -> Result<(), LayoutError> {
    for e in electrodes {
        if e.extent.is_degenerate() {
            return Err(LayoutError::NonPositive {
                name: "electrode extent",
                value: e.extent.width_x().min(e.extent.width_y()).to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let min_clearance = clearance.max(T::of(5.0));
    for (i, a) in electrodes.iter().enumerate() {
        for b in electrodes.iter().skip(i + 1) {
            if a.module != b.module {
                continue;
            }
            if a.extent.overlaps(&b.extent) {
                return Err(LayoutError::Overlap { a: a.id.clone(), b: b.id.clone() });
            }
            let rf_dc = matches!(
                (a.role, b.role),
                (ElectrodeRole::Rf, ElectrodeRole::Dc) | (ElectrodeRole::Dc, ElectrodeRole::Rf)
            );
            if rf_dc {
                let sep = a.extent.separation(&b.extent);
                if sep < min_clearance {
                    let (rf, dc) =
                        if a.role == ElectrodeRole::Rf { (a, b) } else { (b, a) };
                    return Err(LayoutError::ClearanceViolated {
                        rf: rf.id.clone(),
                        dc: dc.id.clone(),
                        sep: sep.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
    }
    Ok(())
}

impl<T: Real> TrapLayout<T> {
    pub fn electrode(&self, id: &str) -> Option<&Electrode<T>> {
        self.electrodes.iter().find(|e| e.id == id)
    }

    pub fn dc_electrodes(&self) -> impl Iterator<Item = &Electrode<T>> {
        self.electrodes.iter().filter(|e| e.role == ElectrodeRole::Dc)
    }

    pub fn rf_electrodes(&self) -> impl Iterator<Item = &Electrode<T>> {
        self.electrodes.iter().filter(|e| e.role == ElectrodeRole::Rf)
    }

    /// Translate every module-B electrode so the layout realizes the given
    /// gap and misalignment, keeping module A fixed.
    pub fn with_module_b_offset(&self, gap_x: T, misalign_y: T, misalign_z: T) -> Self {
        let dx = gap_x - self.gap_x;
        let dy = misalign_y - self.misalign_y;
        let dz = misalign_z - self.misalign_z;
        let electrodes = self
            .electrodes
            .iter()
            .map(|e| match e.module {
                ModuleId::A => e.clone(),
                ModuleId::B => e.translated(dx, dy, dz),
            })
            .collect();
        let gap_center = gap_x * T::of(0.5);
        let half_span = T::of(ZONE_SPAN_UM / 2.0);
        let zone1 = gap_center - half_span;
        let zone2 = gap_center + half_span;
        TrapLayout {
            electrodes,
            gap_x,
            misalign_y,
            misalign_z,
            zones: Zones { loading: zone1 - T::of(LOADING_SPAN_UM), zone1, zone2 },
            transport_electrodes: self.transport_electrodes.clone(),
        }
    }

    /// Structured-text serialization: `key = value` header plus an
    /// electrode table. All lengths carry a `_um` suffix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# trap layout");
        let _ = writeln!(out, "gap_x_um = {}", self.gap_x);
        let _ = writeln!(out, "misalign_y_um = {}", self.misalign_y);
        let _ = writeln!(out, "misalign_z_um = {}", self.misalign_z);
        let _ = writeln!(out, "zone_loading_um = {}", self.zones.loading);
        let _ = writeln!(out, "zone1_um = {}", self.zones.zone1);
        let _ = writeln!(out, "zone2_um = {}", self.zones.zone2);
        let _ = writeln!(out, "transport_electrodes = {}", self.transport_electrodes.join(","));
        let _ = writeln!(out, "[electrodes]");
        let _ = writeln!(out, "id\tmodule\trole\tx_min_um\tx_max_um\ty_min_um\ty_max_um\tplane_z_um");
        for e in &self.electrodes {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.id,
                e.module.label(),
                e.role.label(),
                e.extent.x_min,
                e.extent.x_max,
                e.extent.y_min,
                e.extent.y_max,
                e.plane_z
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LayoutError> {
        let mut gap_x = None;
        let mut misalign_y = None;
        let mut misalign_z = None;
        let mut loading = None;
        let mut zone1 = None;
        let mut zone2 = None;
        let mut transport = Vec::new();
        let mut electrodes = Vec::new();
        let mut in_table = false;
        let mut header_seen = false;

        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[electrodes]" {
                in_table = true;
                continue;
            }
            if !in_table {
                let (k, v) = line.split_once('=').ok_or_else(|| LayoutError::Parse {
                    line: ln + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                })?;
                let k = k.trim();
                let v = v.trim();
                let num = || -> Result<T, LayoutError> {
                    v.parse::<f64>().map(T::of).map_err(|_| LayoutError::Parse {
                        line: ln + 1,
                        message: format!("bad number {v:?} for {k}"),
                    })
                };
                match k {
                    "gap_x_um" => gap_x = Some(num()?),
                    "misalign_y_um" => misalign_y = Some(num()?),
                    "misalign_z_um" => misalign_z = Some(num()?),
                    "zone_loading_um" => loading = Some(num()?),
                    "zone1_um" => zone1 = Some(num()?),
                    "zone2_um" => zone2 = Some(num()?),
                    "transport_electrodes" => {
                        transport =
                            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                    }
                    other => {
                        return Err(LayoutError::Parse {
                            line: ln + 1,
                            message: format!("unknown key {other:?}"),
                        })
                    }
                }
                continue;
            }
            if !header_seen {
                header_seen = true; // column header row
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(LayoutError::Parse {
                    line: ln + 1,
                    message: format!("expected 8 electrode fields, got {}", f.len()),
                });
            }
            let parse_num = |s: &str| -> Result<T, LayoutError> {
                s.parse::<f64>().map(T::of).map_err(|_| LayoutError::Parse {
                    line: ln + 1,
                    message: format!("bad number {s:?}"),
                })
            };
            electrodes.push(Electrode {
                id: f[0].to_string(),
                module: ModuleId::parse(f[1]).ok_or_else(|| LayoutError::Parse {
                    line: ln + 1,
                    message: format!("bad module {:?}", f[1]),
                })?,
                role: ElectrodeRole::parse(f[2]).ok_or_else(|| LayoutError::Parse {
                    line: ln + 1,
                    message: format!("bad role {:?}", f[2]),
                })?,
                extent: Rect {
                    x_min: parse_num(f[3])?,
                    x_max: parse_num(f[4])?,
                    y_min: parse_num(f[5])?,
                    y_max: parse_num(f[6])?,
                },
                plane_z: parse_num(f[7])?,
            });
        }

        let missing = |name: &str| LayoutError::Parse { line: 0, message: format!("missing {name}") };
        Ok(TrapLayout {
            electrodes,
            gap_x: gap_x.ok_or_else(|| missing("gap_x_um"))?,
            misalign_y: misalign_y.ok_or_else(|| missing("misalign_y_um"))?,
            misalign_z: misalign_z.ok_or_else(|| missing("misalign_z_um"))?,
            zones: Zones {
                loading: loading.ok_or_else(|| missing("zone_loading_um"))?,
                zone1: zone1.ok_or_else(|| missing("zone1_um"))?,
                zone2: zone2.ok_or_else(|| missing("zone2_um"))?,
            },
            transport_electrodes: transport,
        })
    }

    /// Fingerprint of the serialized layout, recorded in waveform files.
    pub fn fingerprint(&self) -> String {
        fnv1a_hex(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_matches_chip_dimensions() {
        let layout = build_two_module_layout(&LayoutParams::<f64>::default()).unwrap();
        let rf = layout.electrode("A_RF_N").unwrap();
        assert_eq!(rf.extent.width_y(), 270.0);
        let rf_s = layout.electrode("A_RF_S").unwrap();
        assert_eq!(rf.extent.y_min - rf_s.extent.y_max, 90.0);
        assert_eq!(layout.zones.zone2 - layout.zones.zone1, 684.0);
        assert_eq!(layout.zones.zone1 - layout.zones.loading, 1840.0);
        assert_eq!(layout.gap_x, 10.0);
        // 2 RF + 12 DC per rail side, two sides, two modules.
        assert_eq!(layout.electrodes.len(), 2 * (2 + 2 * 12));
        // Pair 1 DC segments touch the module edge.
        let dc1 = layout.electrode("A_DC_N01").unwrap();
        assert_eq!(dc1.extent.x_max, 0.0);
        assert_eq!(dc1.extent.width_x(), 220.0);
        let dc2 = layout.electrode("A_DC_N02").unwrap();
        assert_eq!(dc1.extent.x_min - dc2.extent.x_max, 10.0);
        // Transport set: pairs 1..4 on both modules, both sides.
        assert_eq!(layout.transport_electrodes.len(), 16);
    }

    #[test]
    fn modules_occupy_disjoint_x_ranges() {
        let layout = build_two_module_layout(&LayoutParams::<f64>::default()).unwrap();
        let a_max = layout
            .electrodes
            .iter()
            .filter(|e| e.module == ModuleId::A)
            .map(|e| e.extent.x_max)
            .fold(f64::MIN, f64::max);
        let b_min = layout
            .electrodes
            .iter()
            .filter(|e| e.module == ModuleId::B)
            .map(|e| e.extent.x_min)
            .fold(f64::MAX, f64::min);
        assert_eq!(b_min - a_max, layout.gap_x);
    }

    #[test]
    fn overlapping_dc_segments_are_rejected() {
        let params = LayoutParams::<f64> { dc_width: 240.0, ..Default::default() };
        assert!(matches!(
            build_two_module_layout(&params),
            Err(LayoutError::Overlap { .. })
        ));
    }

    #[test]
    fn clearance_violations_are_rejected() {
        let params = LayoutParams::<f64> { rf_dc_clearance: 2.0, ..Default::default() };
        assert!(matches!(
            build_two_module_layout(&params),
            Err(LayoutError::ClearanceViolated { .. })
        ));
    }

    #[test]
    fn too_few_pairs_is_rejected() {
        let params = LayoutParams::<f64> { dc_pairs_per_module: 6, ..Default::default() };
        assert!(matches!(build_two_module_layout(&params), Err(LayoutError::TooFewPairs(6))));
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let params = LayoutParams::<f64> { misalign_y: 3.5, misalign_z: -1.25, ..Default::default() };
        let layout = build_two_module_layout(&params).unwrap();
        let text = layout.to_text();
        let back = TrapLayout::<f64>::from_text(&text).unwrap();
        assert_eq!(layout, back);
        assert_eq!(layout.fingerprint(), back.fingerprint());
    }

    #[test]
    fn module_b_offset_moves_only_module_b() {
        let layout = build_two_module_layout(&LayoutParams::<f64>::default()).unwrap();
        let shifted = layout.with_module_b_offset(20.0, 5.0, -3.0);
        let a = layout.electrode("A_DC_N01").unwrap();
        let a2 = shifted.electrode("A_DC_N01").unwrap();
        assert_eq!(a, a2);
        let b = layout.electrode("B_DC_N01").unwrap();
        let b2 = shifted.electrode("B_DC_N01").unwrap();
        assert_eq!(b2.extent.x_min - b.extent.x_min, 10.0);
        assert_eq!(b2.extent.y_min - b.extent.y_min, 5.0);
        assert_eq!(b2.plane_z - b.plane_z, -3.0);
        assert_eq!(shifted.zones.zone2 - shifted.zones.zone1, 684.0);
    }
}
