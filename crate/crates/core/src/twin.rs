//! Serial-keyed digital twin store.
//!
//! Each asset lives in `<dir>/<serial>.twin` as canonical JSON (sorted keys,
//! pretty printed). Submodels are read and replaced whole, mirroring the
//! GET/PUT access of an asset administration shell server. Writes go to a
//! temporary file that is synced and renamed over the old document before the
//! caller gets an acknowledgment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Crack,
    Dent,
    Erosion,
    CoatingLoss,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectStatus {
    Open,
    Repaired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Repaired,
    Deferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defect {
    pub id: String,
    pub kind: DefectKind,
    pub length_mm: f64,
    pub status: DefectStatus,
    pub zone_id: String,
    pub comment: String,
    /// Surface polyline in OBJECT coordinates.
    pub geometry_m: Vec<[f64; 3]>,
}

impl Defect {
    pub fn centroid(&self) -> [f64; 3] {
        let n = self.geometry_m.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.geometry_m {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub id: String,
    pub name: String,
    pub max_removal_mm: f64,
    /// Closed polyline (first point repeated at the end), OBJECT coordinates.
    pub boundary_m: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallThicknessMeasurement {
    pub spot_id: String,
    pub location_m: [f64; 3],
    pub thickness_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentationRecord {
    pub defect_id: String,
    pub worker_id: String,
    pub started_at_s: f64,
    pub finished_at_s: f64,
    pub duration_s: f64,
    pub notes: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Submodels {
    pub defects: Vec<Defect>,
    pub zones: Vec<Zone>,
    pub wall_thickness: Vec<WallThicknessMeasurement>,
    pub documentation: Vec<DocumentationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetTwin {
    pub serial: String,
    pub model_id: String,
    pub submodels: Submodels,
    /// Per-submodel revision, bumped on every accepted change.
    #[serde(default)]
    pub revisions: BTreeMap<SubmodelName, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmodelName {
    Defects,
    Zones,
    WallThickness,
    Documentation,
}

impl SubmodelName {
    pub const ALL: [SubmodelName; 4] =
        [SubmodelName::Defects, SubmodelName::Zones, SubmodelName::WallThickness, SubmodelName::Documentation];

    pub fn as_str(self) -> &'static str {
        match self {
            SubmodelName::Defects => "defects",
            SubmodelName::Zones => "zones",
            SubmodelName::WallThickness => "wall_thickness",
            SubmodelName::Documentation => "documentation",
        }
    }
}

impl fmt::Display for SubmodelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubmodelName {
    type Err = TwinError;
    fn from_str(s: &str) -> Result<Self, TwinError> {
        SubmodelName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| TwinError::NotFound(format!("submodel {s:?}")))
    }
}

/// One rejected field, e.g. `defects[0].zone_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.reason)
        } else {
            write!(f, "{}: {}", self.field, self.reason)
        }
    }
}

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("asset {0:?} already exists")]
    AlreadyExists(String),
    #[error("validation failed: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TwinError {
    fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        TwinError::Invalid(vec![FieldError { field: field.into(), reason: reason.into() }])
    }
}

/// Returned once a change is durable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub serial: String,
    pub submodel: SubmodelName,
    pub revision: u64,
}

fn finite3(p: &[f64; 3]) -> bool {
    p.iter().all(|x| x.is_finite())
}

fn check_ids<'a>(errs: &mut Vec<FieldError>, prefix: &str, key: &str, ids: impl Iterator<Item = &'a str>) {
    let mut seen = HashSet::new();
    for (i, id) in ids.enumerate() {
        if id.trim().is_empty() {
            errs.push(FieldError { field: format!("{prefix}[{i}].{key}"), reason: "must not be empty".into() });
        } else if !seen.insert(id) {
            errs.push(FieldError { field: format!("{prefix}[{i}].{key}"), reason: format!("duplicate {key} {id:?}") });
        }
    }
}

pub fn validate_record(rec: &DocumentationRecord, prefix: &str) -> Vec<FieldError> {
    let mut errs = Vec::new();
    let mut err = |f: &str, r: String| errs.push(FieldError { field: format!("{prefix}{f}"), reason: r });
    if rec.defect_id.trim().is_empty() {
        err("defect_id", "must not be empty".into());
    }
    if rec.worker_id.trim().is_empty() {
        err("worker_id", "must not be empty".into());
    }
    let times = [rec.started_at_s, rec.finished_at_s, rec.duration_s];
    if times.iter().any(|t| !t.is_finite()) {
        err("started_at_s", "timestamps must be finite".into());
        return errs;
    }
    if rec.finished_at_s < rec.started_at_s {
        err("finished_at_s", format!("{} is before started_at_s {}", rec.finished_at_s, rec.started_at_s));
    }
    if rec.duration_s < 0.0 || (rec.duration_s - (rec.finished_at_s - rec.started_at_s)).abs() > 1.0 {
        err(
            "duration_s",
            format!("{} differs from finished − started = {} by more than 1 s", rec.duration_s, rec.finished_at_s - rec.started_at_s),
        );
    }
    errs
}

impl AssetTwin {
    pub fn new(serial: impl Into<String>, model_id: impl Into<String>, submodels: Submodels) -> Self {
        AssetTwin { serial: serial.into(), model_id: model_id.into(), submodels, revisions: BTreeMap::new() }
    }

    pub fn revision(&self, name: SubmodelName) -> u64 {
        self.revisions.get(&name).copied().unwrap_or(0)
    }

    pub fn defect(&self, id: &str) -> Option<&Defect> {
        self.submodels.defects.iter().find(|d| d.id == id)
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.submodels.zones.iter().find(|z| z.id == id)
    }

    /// Open defects ordered by id.
    pub fn open_defects(&self) -> Vec<Defect> {
        let mut v: Vec<Defect> =
            self.submodels.defects.iter().filter(|d| d.status == DefectStatus::Open).cloned().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    /// Checks field constraints, referential integrity and status consistency.
    pub fn validate(&self) -> Result<(), TwinError> {
        let mut errs = Vec::new();
        if let Err(e) = check_serial(&self.serial) {
            errs.push(FieldError { field: "serial".into(), reason: e });
        }
        if self.model_id.trim().is_empty() {
            errs.push(FieldError { field: "model_id".into(), reason: "must not be empty".into() });
        }
        let s = &self.submodels;
        check_ids(&mut errs, "zones", "id", s.zones.iter().map(|z| z.id.as_str()));
        check_ids(&mut errs, "defects", "id", s.defects.iter().map(|d| d.id.as_str()));
        check_ids(&mut errs, "wall_thickness", "spot_id", s.wall_thickness.iter().map(|w| w.spot_id.as_str()));

        for (i, z) in s.zones.iter().enumerate() {
            let f = |k: &str| format!("zones[{i}].{k}");
            if !(z.max_removal_mm > 0.0) || !z.max_removal_mm.is_finite() {
                errs.push(FieldError { field: f("max_removal_mm"), reason: format!("{} must be > 0", z.max_removal_mm) });
            }
            if !z.boundary_m.iter().all(finite3) {
                errs.push(FieldError { field: f("boundary_m"), reason: "non-finite point".into() });
            } else if z.boundary_m.len() < 4 {
                errs.push(FieldError {
                    field: f("boundary_m"),
                    reason: format!("closed boundary needs 3 distinct points plus the closing point, got {}", z.boundary_m.len()),
                });
            } else if z.boundary_m.first() != z.boundary_m.last() {
                errs.push(FieldError { field: f("boundary_m"), reason: "not closed (first point ≠ last point)".into() });
            }
        }

        let zones: HashSet<&str> = s.zones.iter().map(|z| z.id.as_str()).collect();
        let repaired: HashSet<&str> = s
            .documentation
            .iter()
            .filter(|r| r.outcome == Outcome::Repaired)
            .map(|r| r.defect_id.as_str())
            .collect();
        for (i, d) in s.defects.iter().enumerate() {
            let f = |k: &str| format!("defects[{i}].{k}");
            if !(d.length_mm > 0.0) || !d.length_mm.is_finite() {
                errs.push(FieldError { field: f("length_mm"), reason: format!("{} must be > 0", d.length_mm) });
            }
            if !zones.contains(d.zone_id.as_str()) {
                errs.push(FieldError { field: f("zone_id"), reason: format!("zone {:?} does not exist", d.zone_id) });
            }
            if d.geometry_m.len() < 2 {
                errs.push(FieldError { field: f("geometry_m"), reason: "polyline needs at least 2 points".into() });
            } else if !d.geometry_m.iter().all(finite3) {
                errs.push(FieldError { field: f("geometry_m"), reason: "non-finite point".into() });
            }
            let documented = repaired.contains(d.id.as_str());
            match (d.status, documented) {
                (DefectStatus::Repaired, false) => errs.push(FieldError {
                    field: f("status"),
                    reason: "repaired without a documentation record with outcome repaired".into(),
                }),
                (DefectStatus::Open, true) => errs.push(FieldError {
                    field: f("status"),
                    reason: "open although documented as repaired".into(),
                }),
                _ => {}
            }
        }

        for (i, w) in s.wall_thickness.iter().enumerate() {
            if !(w.thickness_mm > 0.0) || !w.thickness_mm.is_finite() {
                errs.push(FieldError {
                    field: format!("wall_thickness[{i}].thickness_mm"),
                    reason: format!("{} must be > 0", w.thickness_mm),
                });
            }
            if !finite3(&w.location_m) {
                errs.push(FieldError { field: format!("wall_thickness[{i}].location_m"), reason: "non-finite point".into() });
            }
        }

        let defects: HashSet<&str> = s.defects.iter().map(|d| d.id.as_str()).collect();
        for (i, r) in s.documentation.iter().enumerate() {
            let prefix = format!("documentation[{i}].");
            errs.extend(validate_record(r, &prefix));
            if !r.defect_id.is_empty() && !defects.contains(r.defect_id.as_str()) {
                errs.push(FieldError {
                    field: format!("{prefix}defect_id"),
                    reason: format!("defect {:?} does not exist", r.defect_id),
                });
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(TwinError::Invalid(errs))
        }
    }

    /// Canonical text of one submodel.
    pub fn submodel_document(&self, name: SubmodelName) -> String {
        let s = &self.submodels;
        let v = match name {
            SubmodelName::Defects => serde_json::to_value(&s.defects),
            SubmodelName::Zones => serde_json::to_value(&s.zones),
            SubmodelName::WallThickness => serde_json::to_value(&s.wall_thickness),
            SubmodelName::Documentation => serde_json::to_value(&s.documentation),
        };
        canonical(&v.expect("submodels serialize"))
    }

    /// Canonical text of the whole asset, as written to disk.
    pub fn document(&self) -> String {
        canonical(&serde_json::to_value(self).expect("asset serializes"))
    }

    pub fn from_document(text: &str) -> Result<Self, TwinError> {
        let twin: AssetTwin = serde_json::from_str(text).map_err(|e| TwinError::field("", e.to_string()))?;
        twin.validate()?;
        Ok(twin)
    }
}

/// Pretty JSON with keys in sorted order (serde_json's map is ordered).
pub fn canonical(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

/// Serials double as file names.
pub fn check_serial(serial: &str) -> Result<(), String> {
    if serial.is_empty() {
        return Err("must not be empty".into());
    }
    if serial.starts_with('.') {
        return Err("must not start with '.'".into());
    }
    if !serial.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) {
        return Err(format!("{serial:?} may only contain ASCII letters, digits, '-', '_' and '.'"));
    }
    Ok(())
}

fn parse_submodel<T: for<'de> Deserialize<'de>>(name: SubmodelName, text: &str) -> Result<T, TwinError> {
    serde_json::from_str(text).map_err(|e| TwinError::field(name.as_str(), e.to_string()))
}

type Slot = Arc<RwLock<AssetTwin>>;

/// File-backed twin store. Readers run concurrently; writers are serialized
/// per serial and return only after the new document is on disk.
#[derive(Debug)]
pub struct TwinStore {
    dir: PathBuf,
    assets: RwLock<HashMap<String, Slot>>,
}

impl TwinStore {
    /// Opens (creating if needed) the store directory and loads every
    /// `*.twin` document. Leftover temporary files are ignored.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, TwinError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut assets = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("twin") {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let twin = AssetTwin::from_document(&text)
                .map_err(|e| TwinError::Corrupt { path: path.clone(), reason: e.to_string() })?;
            if path.file_stem().and_then(|s| s.to_str()) != Some(twin.serial.as_str()) {
                return Err(TwinError::Corrupt { path, reason: format!("holds serial {:?}", twin.serial) });
            }
            assets.insert(twin.serial.clone(), Arc::new(RwLock::new(twin)));
        }
        Ok(TwinStore { dir, assets: RwLock::new(assets) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, serial: &str) -> PathBuf {
        self.dir.join(format!("{serial}.twin"))
    }

    fn persist(&self, twin: &AssetTwin) -> Result<(), TwinError> {
        let path = self.path(&twin.serial);
        let tmp = self.dir.join(format!("{}.twin.tmp", twin.serial));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(twin.document().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        if let Ok(d) = fs::File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    fn slot(&self, serial: &str) -> Result<Slot, TwinError> {
        self.assets
            .read()
            .expect("store lock")
            .get(serial)
            .cloned()
            .ok_or_else(|| TwinError::NotFound(format!("serial {serial:?}")))
    }

    /// Sorted serial numbers.
    pub fn list_serials(&self) -> Vec<String> {
        let mut v: Vec<String> = self.assets.read().expect("store lock").keys().cloned().collect();
        v.sort();
        v
    }

    pub fn create_asset(&self, twin: AssetTwin) -> Result<(), TwinError> {
        twin.validate()?;
        let mut assets = self.assets.write().expect("store lock");
        if assets.contains_key(&twin.serial) {
            return Err(TwinError::AlreadyExists(twin.serial));
        }
        self.persist(&twin)?;
        assets.insert(twin.serial.clone(), Arc::new(RwLock::new(twin)));
        Ok(())
    }

    /// Snapshot of the whole asset.
    pub fn asset(&self, serial: &str) -> Result<AssetTwin, TwinError> {
        Ok(self.slot(serial)?.read().expect("asset lock").clone())
    }

    pub fn get_submodel(&self, serial: &str, name: &str) -> Result<String, TwinError> {
        let slot = self.slot(serial)?;
        let name: SubmodelName = name.parse()?;
        let twin = slot.read().expect("asset lock");
        Ok(twin.submodel_document(name))
    }

    /// Replaces one submodel. The resulting asset must satisfy every
    /// invariant; documentation may only grow by appending. Records appended
    /// this way with outcome `repaired` close their defect, as with
    /// [`TwinStore::append_documentation`].
    pub fn put_submodel(&self, serial: &str, name: &str, document: &str) -> Result<Ack, TwinError> {
        let slot = self.slot(serial)?;
        let name: SubmodelName = name.parse()?;
        let mut twin = slot.write().expect("asset lock");
        let mut next = twin.clone();
        let mut touched = vec![name];
        match name {
            SubmodelName::Defects => next.submodels.defects = parse_submodel(name, document)?,
            SubmodelName::Zones => next.submodels.zones = parse_submodel(name, document)?,
            SubmodelName::WallThickness => next.submodels.wall_thickness = parse_submodel(name, document)?,
            SubmodelName::Documentation => {
                let docs: Vec<DocumentationRecord> = parse_submodel(name, document)?;
                let old = &twin.submodels.documentation;
                if docs.len() < old.len() || docs[..old.len()] != old[..] {
                    return Err(TwinError::field(
                        "documentation",
                        "documentation is append-only; existing records must be kept unchanged and in order",
                    ));
                }
                for r in &docs[old.len()..] {
                    if r.outcome == Outcome::Repaired {
                        if let Some(d) = next.submodels.defects.iter_mut().find(|d| d.id == r.defect_id) {
                            if d.status != DefectStatus::Repaired {
                                d.status = DefectStatus::Repaired;
                                touched.push(SubmodelName::Defects);
                            }
                        }
                    }
                }
                next.submodels.documentation = docs;
            }
        }
        next.validate()?;
        if next.submodels == twin.submodels {
            return Ok(Ack { serial: serial.to_string(), submodel: name, revision: twin.revision(name) });
        }
        for t in touched {
            *next.revisions.entry(t).or_insert(0) += 1;
        }
        self.persist(&next)?;
        let revision = next.revision(name);
        *twin = next;
        Ok(Ack { serial: serial.to_string(), submodel: name, revision })
    }

    /// Open defects of `serial`, ordered by id.
    pub fn list_open_defects(&self, serial: &str) -> Result<Vec<Defect>, TwinError> {
        Ok(self.slot(serial)?.read().expect("asset lock").open_defects())
    }

    /// Appends a documentation record; a `repaired` outcome closes the
    /// referenced defect in the same write.
    pub fn append_documentation(&self, serial: &str, record: DocumentationRecord) -> Result<Ack, TwinError> {
        let slot = self.slot(serial)?;
        let errs = validate_record(&record, "");
        if !errs.is_empty() {
            return Err(TwinError::Invalid(errs));
        }
        let mut twin = slot.write().expect("asset lock");
        if twin.defect(&record.defect_id).is_none() {
            return Err(TwinError::NotFound(format!("defect {:?} of {serial:?}", record.defect_id)));
        }
        let mut next = twin.clone();
        if record.outcome == Outcome::Repaired {
            let d = next.submodels.defects.iter_mut().find(|d| d.id == record.defect_id).expect("checked above");
            if d.status != DefectStatus::Repaired {
                d.status = DefectStatus::Repaired;
                *next.revisions.entry(SubmodelName::Defects).or_insert(0) += 1;
            }
        }
        next.submodels.documentation.push(record);
        *next.revisions.entry(SubmodelName::Documentation).or_insert(0) += 1;
        next.validate()?;
        self.persist(&next)?;
        let revision = next.revision(SubmodelName::Documentation);
        *twin = next;
        Ok(Ack { serial: serial.to_string(), submodel: SubmodelName::Documentation, revision })
    }
}
