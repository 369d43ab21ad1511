//! Deterministic synthetic catalog. The photometry model is not physical;
//! only the object-role fractions and value ranges are meant to hold.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{csv_columns, io_err, reduced_columns, write_csv, LoadEvent, Loader, LoaderError};
use crate::htm::{unit_to_radec, ConvexRegion, UnitVector};
use crate::query::neighbor_pairs;
use crate::store::rows::{
    to_rows, ElRedshift, Field, Neighbor, PhotoObj, Plate, SpecLine, SpecLineIndex, SpecObj, XCRedshift,
};
use crate::store::{flags, ObjType, SpecClass, TableName, Value, NEIGHBOR_RADIUS_ARCMIN};

pub const SPECTRA_PER_PLATE: usize = 600;
/// Share of rows that are deblended parents; each parent gets two children.
pub const BLEND_PARENT_FRACTION: f64 = 0.05;
pub const FIELD_STEP_DEG: f64 = 10.0;
const INDEX_NAMES: [&str; 5] = ["Lick_Hb", "Lick_Mgb", "Lick_Fe5270", "Lick_Fe5335", "Lick_NaD"];
const ARCSEC: f64 = 1.0 / 3600.0;

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub n_objects: usize,
    pub n_plates: usize,
    pub seed: u64,
    /// `None` is the whole sphere.
    pub sky_region: Option<ConvexRegion>,
    /// Distinct sources emitted twice, as a fraction of distinct sources.
    pub duplicate_fraction: f64,
    /// Primary rows as a fraction of all PhotoObj rows.
    pub primary_fraction: f64,
    pub neighbors: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_objects: 10_000,
            n_plates: 1,
            seed: 1,
            sky_region: None,
            duplicate_fraction: 0.11,
            primary_fraction: 0.80,
            neighbors: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneratedCatalog {
    pub fields: Vec<Field>,
    pub plates: Vec<Plate>,
    pub spec_objs: Vec<SpecObj>,
    pub photo: Vec<PhotoObj>,
    pub spec_lines: Vec<SpecLine>,
    pub spec_line_index: Vec<SpecLineIndex>,
    pub xc_redshift: Vec<XCRedshift>,
    pub el_redshift: Vec<ElRedshift>,
    pub neighbors: Vec<Neighbor>,
    /// objIDs of rows that are copies of the same source.
    pub duplicate_groups: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub table: String,
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_objects: usize,
    pub n_plates: usize,
    pub files: Vec<ManifestFile>,
    pub duplicate_groups: Vec<Vec<i64>>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, LoaderError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Single { primary: bool },
    Duplicate,
    Blend,
}

/// Row counts per role for `n` rows.
fn plan_units(spec: &GeneratorSpec) -> Result<Vec<Unit>, LoaderError> {
    let (f, p) = (spec.duplicate_fraction, spec.primary_fraction);
    if !(0.0..=1.0).contains(&f) || !(0.0..=1.0).contains(&p) {
        return Err(LoaderError::Spec("fractions must lie in [0, 1]".into()));
    }
    let n = spec.n_objects;
    let mut blends = (BLEND_PARENT_FRACTION * n as f64).round() as usize;
    let mut dups = (n as f64 * f / (1.0 + f)).round() as usize;
    while 2 * dups + 3 * blends > n {
        if blends > 0 {
            blends -= 1;
        } else {
            dups -= 1;
        }
    }
    let singles = n - 2 * dups - 3 * blends;
    let want_primary = (p * n as f64).round() as usize;
    let single_primary = want_primary.saturating_sub(dups + 2 * blends).min(singles);
    let mut units = Vec::with_capacity(singles + dups + blends);
    units.extend((0..singles).map(|i| Unit::Single { primary: i < single_primary }));
    units.extend((0..dups).map(|_| Unit::Duplicate));
    units.extend((0..blends).map(|_| Unit::Blend));
    Ok(units)
}

struct Sampler<'a> {
    rng: ChaCha8Rng,
    region: Option<&'a ConvexRegion>,
}

fn orthonormal(n: UnitVector) -> (UnitVector, UnitVector) {
    let helper = if n.z.abs() < 0.9 { UnitVector::new_unchecked(0.0, 0.0, 1.0) } else { UnitVector::new_unchecked(1.0, 0.0, 0.0) };
    let a = n.cross(&helper).renormalize().expect("helper not parallel");
    let b = n.cross(&a);
    (a, b)
}

impl Sampler<'_> {
    fn in_cap(&mut self, normal: UnitVector, offset: f64) -> UnitVector {
        let z: f64 = self.rng.gen_range(offset..=1.0);
        let phi: f64 = self.rng.gen_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        let (a, b) = orthonormal(normal);
        (normal * z + a * (r * phi.cos()) + b * (r * phi.sin())).renormalize().expect("non-zero")
    }

    /// Uniform point of the region: sampled in its smallest cap, then rejected against the rest.
    fn position(&mut self) -> Result<UnitVector, LoaderError> {
        let Some(region) = self.region else {
            return Ok(self.in_cap(UnitVector::new_unchecked(0.0, 0.0, 1.0), -1.0));
        };
        let tight = region.halfspaces().iter().max_by(|a, b| a.offset().total_cmp(&b.offset())).expect("non-empty region");
        for _ in 0..100_000 {
            let p = self.in_cap(tight.normal(), tight.offset());
            if region.contains(&p) {
                return Ok(p);
            }
        }
        Err(LoaderError::Spec("sky region too small to sample".into()))
    }

    /// A point `dist_deg` away from `p` in a random direction.
    fn offset(&mut self, p: UnitVector, dist_deg: f64) -> UnitVector {
        let (a, b) = orthonormal(p);
        let phi: f64 = self.rng.gen_range(0.0..std::f64::consts::TAU);
        let t = dist_deg.to_radians();
        (p * t.cos() + (a * phi.cos() + b * phi.sin()) * t.sin()).renormalize().expect("non-zero")
    }

    fn obj_type(&mut self) -> ObjType {
        match self.rng.gen_range(0..100) {
            0..=49 => ObjType::Galaxy,
            50..=94 => ObjType::Star,
            95..=97 => ObjType::Unknown,
            98 => ObjType::Trail,
            _ => ObjType::Defect,
        }
    }

    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        Normal::new(mean, sd).expect("positive sd").sample(&mut self.rng)
    }

    fn photometry(&mut self, p: &mut PhotoObj) {
        let (gr_mean, gr_sd, ug_mean) = match p.obj_type {
            ObjType::Star => (0.45, 0.3, 1.0),
            ObjType::Galaxy => (0.9, 0.3, 1.6),
            _ => (0.3, 1.0, 1.2),
        };
        let r: f64 = self.rng.gen_range(15.0..23.5);
        let g = r + self.normal(gr_mean, gr_sd);
        let u = g + self.normal(ug_mean, 0.3);
        let i = r - self.normal(0.3, 0.1);
        let z = i - self.normal(0.2, 0.1);
        p.model_mag = [u, g, r, i, z].map(|m| m.clamp(14.0, 24.0));
        p.model_mag_err = p.model_mag.map(|m| 0.005 + 0.05 * 10f64.powf(0.4 * (m - 22.0)));
        p.petro_rad_r = match p.obj_type {
            ObjType::Galaxy => self.rng.gen_range(1.5..12.0),
            _ => self.rng.gen_range(0.8..1.8),
        };
        let scale = p.petro_rad_r;
        p.profile = std::array::from_fn(|k| (-(k as f64 + 0.5) / scale).exp());
        p.status = self.rng.gen_range(0..16);
        if r < 15.5 && self.rng.gen_bool(0.3) {
            p.flags |= flags::SATURATED;
        }
    }
}

fn field_id_of(ra: f64, dec: f64) -> i64 {
    let cols = (360.0 / FIELD_STEP_DEG) as i64;
    let rows = (180.0 / FIELD_STEP_DEG) as i64;
    let ci = ((ra / FIELD_STEP_DEG).floor() as i64).clamp(0, cols - 1);
    let ri = (((dec + 90.0) / FIELD_STEP_DEG).floor() as i64).clamp(0, rows - 1);
    ri * cols + ci + 1
}

fn fields() -> Vec<Field> {
    let cols = (360.0 / FIELD_STEP_DEG) as i64;
    let rows = (180.0 / FIELD_STEP_DEG) as i64;
    let mut out = Vec::new();
    for ri in 0..rows {
        for ci in 0..cols {
            out.push(Field {
                field_id: ri * cols + ci + 1,
                run: 1000 + ri,
                camcol: 1 + ci % 6,
                field_num: 11 + ci,
                ra_min: ci as f64 * FIELD_STEP_DEG,
                ra_max: (ci + 1) as f64 * FIELD_STEP_DEG,
                dec_min: -90.0 + ri as f64 * FIELD_STEP_DEG,
                dec_max: -90.0 + (ri + 1) as f64 * FIELD_STEP_DEG,
            });
        }
    }
    out
}

fn place(p: PhotoObj, v: UnitVector) -> PhotoObj {
    let c = unit_to_radec(v);
    let mut p = p.with_position(c.ra(), c.dec()).expect("sampled position is valid");
    p.field_id = field_id_of(p.ra, p.dec);
    p
}

/// Generates the catalog in memory. Same spec, same output.
pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedCatalog, LoaderError> {
    let mut units = plan_units(spec)?;
    let mut s = Sampler { rng: ChaCha8Rng::seed_from_u64(spec.seed), region: spec.sky_region.as_ref() };
    units.shuffle(&mut s.rng);
    let mut out = GeneratedCatalog::default();
    if spec.n_objects == 0 {
        return Ok(out);
    }
    out.fields = fields();
    let mut next_id = 0i64;
    let mut id = || {
        next_id += 1;
        next_id
    };
    for unit in units {
        let pos = s.position()?;
        let mut base = PhotoObj { obj_type: s.obj_type(), ..Default::default() };
        s.photometry(&mut base);
        match unit {
            Unit::Single { primary } => {
                base.flags |= if primary { flags::PRIMARY } else { flags::EDGE };
                out.photo.push(place(PhotoObj { obj_id: id(), ..base }, pos));
            }
            Unit::Duplicate => {
                let second = s.rng.gen_range(0.05..0.3) * ARCSEC;
                let moved = s.offset(pos, second);
                let first_primary = s.rng.gen_bool(0.5);
                let mut copy = base.clone();
                for m in &mut copy.model_mag {
                    *m = (*m + s.normal(0.0, 0.02)).clamp(14.0, 24.0);
                }
                let (fa, fb) = if first_primary {
                    (flags::PRIMARY, flags::SECONDARY)
                } else {
                    (flags::SECONDARY, flags::PRIMARY)
                };
                let a = place(PhotoObj { obj_id: id(), flags: base.flags | fa, ..base }, pos);
                let b = place(PhotoObj { obj_id: id(), flags: copy.flags | fb, ..copy }, moved);
                out.duplicate_groups.push(vec![a.obj_id, b.obj_id]);
                out.photo.push(a);
                out.photo.push(b);
            }
            Unit::Blend => {
                let parent_id = id();
                let parent = PhotoObj { obj_id: parent_id, flags: base.flags | flags::BLENDED, ..base.clone() };
                out.photo.push(place(parent, pos));
                for _ in 0..2 {
                    let sep = s.rng.gen_range(1.0..4.0) * ARCSEC;
                    let at = s.offset(pos, sep);
                    let mut child = PhotoObj { obj_type: s.obj_type(), ..Default::default() };
                    s.photometry(&mut child);
                    child.obj_id = id();
                    child.parent_id = parent_id;
                    child.flags |= flags::CHILD | flags::PRIMARY;
                    out.photo.push(place(child, at));
                }
            }
        }
    }
    spectra(spec, &mut s, &mut out);
    if spec.neighbors {
        let mut order: Vec<usize> = (0..out.photo.len()).collect();
        order.sort_by_key(|i| (out.photo[*i].htm_id, out.photo[*i].obj_id));
        let ids: Vec<i64> = order.iter().map(|i| out.photo[*i].obj_id).collect();
        let htm: Vec<i64> = order.iter().map(|i| out.photo[*i].htm_id).collect();
        let pts: Vec<UnitVector> =
            order.iter().map(|i| UnitVector::new_unchecked(out.photo[*i].cx, out.photo[*i].cy, out.photo[*i].cz)).collect();
        out.neighbors = neighbor_pairs(&ids, &htm, &pts, NEIGHBOR_RADIUS_ARCMIN);
    }
    Ok(out)
}

fn spectra(spec: &GeneratorSpec, s: &mut Sampler<'_>, out: &mut GeneratedCatalog) {
    let mut targets: Vec<usize> = (0..out.photo.len()).filter(|i| out.photo[*i].is_primary()).collect();
    targets.shuffle(&mut s.rng);
    targets.truncate(spec.n_plates * SPECTRA_PER_PLATE);
    targets.sort_by_key(|i| (out.photo[*i].htm_id, out.photo[*i].obj_id));
    let (mut line_id, mut index_id) = (0i64, 0i64);
    for (plate_idx, chunk) in targets.chunks(SPECTRA_PER_PLATE).enumerate() {
        let plate_id = plate_idx as i64 + 1;
        let sum = chunk.iter().fold(UnitVector::new_unchecked(0.0, 0.0, 0.0), |acc, i| {
            let p = &out.photo[*i];
            acc + UnitVector::new_unchecked(p.cx, p.cy, p.cz)
        });
        let center = sum.renormalize().map(unit_to_radec).unwrap_or_else(|| {
            let p = &out.photo[chunk[0]];
            unit_to_radec(UnitVector::new_unchecked(p.cx, p.cy, p.cz))
        });
        out.plates.push(Plate { plate_id, ra: center.ra(), dec: center.dec(), mjd: 51_600 + 3 * plate_id });
        for (fiber, i) in chunk.iter().enumerate() {
            let spec_obj_id = plate_id * 1000 + fiber as i64 + 1;
            let obj_type = out.photo[*i].obj_type;
            let (class, z) = match obj_type {
                ObjType::Star => (SpecClass::Star, s.normal(0.0, 0.0003)),
                ObjType::Galaxy if s.rng.gen_bool(0.1) => (SpecClass::Qso, s.rng.gen_range(0.5..3.0)),
                ObjType::Galaxy => (SpecClass::Galaxy, s.rng.gen_range(0.02..0.3)),
                _ => (SpecClass::Unknown, s.rng.gen_range(0.0..0.5)),
            };
            let photo = &mut out.photo[*i];
            photo.spec_obj_id = spec_obj_id;
            out.spec_objs.push(SpecObj {
                spec_obj_id,
                plate_id,
                fiber_id: fiber as i64 + 1,
                ra: photo.ra,
                dec: photo.dec,
                z,
                z_err: s.rng.gen_range(0.00005..0.0005),
                spec_class: class,
            });
            for _ in 0..s.rng.gen_range(28..=32) {
                line_id += 1;
                out.spec_lines.push(SpecLine {
                    line_id,
                    spec_obj_id,
                    wavelength: s.rng.gen_range(3800.0..9200.0),
                    ew: s.normal(0.0, 5.0),
                    height: s.rng.gen_range(0.0..50.0),
                });
            }
            for name in INDEX_NAMES {
                index_id += 1;
                out.spec_line_index.push(SpecLineIndex {
                    index_id,
                    spec_obj_id,
                    name: name.to_string(),
                    value: s.rng.gen_range(-1.0..8.0),
                });
            }
            let template = match class {
                SpecClass::Star => "star_template",
                SpecClass::Qso => "qso_template",
                _ => "galaxy_template",
            };
            out.xc_redshift.push(XCRedshift {
                spec_obj_id,
                z: z + s.normal(0.0, 0.0001),
                confidence: s.rng.gen_range(0.5..=1.0),
                template_name: template.to_string(),
            });
            if class != SpecClass::Star {
                out.el_redshift.push(ElRedshift { spec_obj_id, z: z + s.normal(0.0, 0.0002), n_lines: s.rng.gen_range(3..20) });
            }
        }
    }
}

impl GeneratedCatalog {
    pub fn rows(&self, table: TableName) -> Vec<Vec<Value>> {
        match table {
            TableName::Field => to_rows(&self.fields),
            TableName::Plate => to_rows(&self.plates),
            TableName::SpecObj => to_rows(&self.spec_objs),
            TableName::PhotoObj => to_rows(&self.photo),
            TableName::SpecLine => to_rows(&self.spec_lines),
            TableName::SpecLineIndex => to_rows(&self.spec_line_index),
            TableName::XCRedshift => to_rows(&self.xc_redshift),
            TableName::ElRedshift => to_rows(&self.el_redshift),
            TableName::Neighbors => to_rows(&self.neighbors),
            TableName::PhotoTag => Vec::new(),
        }
    }

    pub fn primary_fraction(&self) -> f64 {
        if self.photo.is_empty() {
            return 0.0;
        }
        self.photo.iter().filter(|p| p.is_primary()).count() as f64 / self.photo.len() as f64
    }

    /// Distinct sources appearing more than once, over distinct sources.
    pub fn duplicate_fraction(&self) -> f64 {
        let extra: usize = self.duplicate_groups.iter().map(|g| g.len() - 1).sum();
        let distinct = self.photo.len() - extra;
        if distinct == 0 {
            return 0.0;
        }
        self.duplicate_groups.len() as f64 / distinct as f64
    }

    /// Writes one CSV per table plus `manifest.json`.
    pub fn write_csv(&self, dir: &Path, spec: &GeneratorSpec) -> Result<Manifest, LoaderError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut files = Vec::new();
        for table in TableName::LOAD_ORDER {
            let file = format!("{table}.csv");
            let path = dir.join(&file);
            let rows = self.rows(table);
            let cols = if table == TableName::PhotoObj { reduced_columns(table) } else { csv_columns(table) };
            let f = std::fs::File::create(&path).map_err(io_err(&path))?;
            write_csv(std::io::BufWriter::new(f), table, &cols, &rows)?;
            files.push(ManifestFile { table: table.to_string(), file, rows: rows.len() });
        }
        let manifest = Manifest {
            seed: spec.seed,
            n_objects: spec.n_objects,
            n_plates: spec.n_plates,
            files,
            duplicate_groups: self.duplicate_groups.clone(),
        };
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
        Ok(manifest)
    }

    /// Loads every table through the loader, in dependency order.
    pub fn load_into(&self, loader: &Loader) -> Result<Vec<LoadEvent>, LoaderError> {
        let mut events = Vec::new();
        for table in TableName::LOAD_ORDER {
            let e = loader.load_rows(table, &format!("generated:{table}"), self.rows(table))?;
            if e.status != super::EventStatus::Success {
                return Err(LoaderError::Spec(format!("generated {table} rows failed validation:\n{}", e.trace_text)));
            }
            events.push(e);
        }
        Ok(events)
    }
}

/// Generates and writes CSV files for every table into `out_dir`.
pub fn generate_synthetic(spec: &GeneratorSpec, out_dir: &Path) -> Result<Manifest, LoaderError> {
    generate(spec)?.write_csv(out_dir, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_counts_are_exact() {
        let spec = GeneratorSpec { n_objects: 10_000, neighbors: false, ..Default::default() };
        let units = plan_units(&spec).unwrap();
        let rows: usize = units
            .iter()
            .map(|u| match u {
                Unit::Single { .. } => 1,
                Unit::Duplicate => 2,
                Unit::Blend => 3,
            })
            .sum();
        assert_eq!(rows, 10_000);
        let g = generate(&spec).unwrap();
        assert_eq!(g.photo.len(), 10_000);
        assert!((g.primary_fraction() - 0.80).abs() < 1e-3, "{}", g.primary_fraction());
        assert!((g.duplicate_fraction() - 0.11).abs() < 1e-3, "{}", g.duplicate_fraction());
    }

    #[test]
    fn empty_and_bad_specs() {
        let g = generate(&GeneratorSpec { n_objects: 0, ..Default::default() }).unwrap();
        assert_eq!(g, GeneratedCatalog::default());
        assert!(generate(&GeneratorSpec { duplicate_fraction: 1.5, ..Default::default() }).is_err());
        let tiny = GeneratorSpec { n_objects: 2, ..Default::default() };
        assert_eq!(generate(&tiny).unwrap().photo.len(), 2);
    }

    #[test]
    fn field_grid() {
        assert_eq!(field_id_of(0.0, -90.0), 1);
        assert_eq!(field_id_of(359.99, 90.0), 648);
        let f = fields();
        assert_eq!(f.len(), 648);
        assert!(f.iter().all(|x| x.ra_min < x.ra_max && x.dec_min < x.dec_max));
    }
}
