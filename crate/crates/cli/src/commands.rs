use std::path::Path;

use biest::decomp::{partition, DecompError, PartitionOptions};
use biest::exact::Rat;
use biest::forms::*;
use biest::functionals::{CoefficientRecord, CoefficientSequence};
use biest::tiles::{gen_rank1, GenError, GenOptions, TileRecord, TriTile, Universe};
use biest::whitney::{all_shifts, fourier_split, probe, probe_csv, probe_grid, whitney_cover, SingularSet, SymbolFamily};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::verify::{near_point, near_vertex};
use crate::Failure;

/// Tile collection with one coefficient list per slot; the input of
/// `decompose` and the output of `dump-tiles --coefficients`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub tiles: Vec<TileRecord>,
    pub coefficients: [Vec<CoefficientRecord>; 3],
}

impl Instance {
    pub fn load(path: &Path) -> Result<Instance, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("malformed instance {}: {e}", path.display())))
    }

    pub fn decode(&self) -> Result<(Vec<TriTile>, [Vec<Complex64>; 3]), Failure> {
        let tiles = self
            .tiles
            .iter()
            .enumerate()
            .map(|(i, r)| r.to_tritile().map_err(|e| Failure::Usage(format!("tile {i}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut a: [Vec<Complex64>; 3] = Default::default();
        for (j, recs) in self.coefficients.iter().enumerate() {
            a[j] = CoefficientSequence::from_records(j, tiles.len(), recs)
                .map_err(|e| Failure::Usage(format!("slot {j}: {e}")))?
                .values;
        }
        Ok((tiles, a))
    }
}

/// Writes `body` to stdout and, with an output directory, to `name` there.
/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn say(body: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", body.trim_end()).and_then(|_| out.flush());
}

pub fn emit(cfg: &RunConfig, name: &str, body: &str) -> Result<(), Failure> {
    say(body);
    if let Some(dir) = &cfg.output.dir {
        write_file(&dir.join(name), body)?;
    }
    Ok(())
}

pub fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn envelope(cfg: &RunConfig, command: &str) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("config_hash".into(), json!(cfg.hash()));
    m.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    m
}

pub fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}

// ---------------------------------------------------------------------------

pub fn decompose(cfg: &RunConfig, input: &Path, slot: Option<usize>) -> Result<Value, Failure> {
    let (tiles, a) = Instance::load(input)?.decode()?;
    let consts = cfg.order_constants();
    let u = Universe::new(tiles, consts);
    let opts = PartitionOptions { exact_limit: cfg.budgets.exact_energy, ..PartitionOptions::default() };
    let mut out = envelope(cfg, "decompose");
    out.insert("input".into(), json!(input.display().to_string()));
    out.insert("tiles".into(), json!(u.len()));
    out.insert("slot".into(), json!(slot));
    match partition(&u, [&a[0], &a[1], &a[2]], &opts) {
        Ok(mut p) => {
            if let Some(j) = slot {
                for lvl in &mut p.levels {
                    lvl.traces.retain(|t| t.j == j);
                }
            }
            let diagnostics: Vec<Value> = p
                .levels
                .iter()
                .map(|l| {
                    json!({
                        "n": l.n,
                        "trees": l.trees().count(),
                        "tiles": l.tiles.len(),
                        "cover_total": l.cover_total,
                        "cover_ratio": l.cover_total / 4f64.powi(l.n),
                    })
                })
                .collect();
            out.insert("zero_slot".into(), Value::Null);
            out.insert("partition".into(), serde_json::to_value(&p).expect("partition serializes"));
            out.insert("diagnostics".into(), json!(diagnostics));
        }
        Err(DecompError::ZeroSlot(j)) => {
            // A vanishing slot makes every tree form zero: nothing to select.
            out.insert("zero_slot".into(), json!(j));
            out.insert("partition".into(), json!({ "levels": [] }));
            out.insert("diagnostics".into(), json!([]));
        }
        Err(e) => return Err(Failure::Usage(format!("decompose: {e}"))),
    }
    Ok(Value::Object(out))
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Kind {
    Bht,
    Biest,
}

pub fn parse_vertex(s: &str) -> Result<usize, Failure> {
    let digits = s.trim().trim_start_matches(['A', 'a']);
    let v: usize = digits.parse().map_err(|_| Failure::Usage(format!("bad vertex {s:?}; expected A1..A12")))?;
    vertex(v).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(v)
}

/// Resolves the experiment from the flags, without running it.
pub fn experiment_spec(
    cfg: &RunConfig,
    kind: Kind,
    alpha: Option<&[String]>,
    vertex_arg: Option<&str>,
    stratified: bool,
) -> Result<ExperimentSpec, Failure> {
    let usage = |e: FormError| Failure::Usage(e.to_string());
    let v = vertex_arg.map(parse_vertex).transpose()?;
    let kind = match kind {
        Kind::Bht => FormKind::Bht,
        Kind::Biest => FormKind::Biest,
    };
    if kind == FormKind::Bht && v.is_some() {
        return Err(Failure::Usage("--vertex applies to the four-slot form only".into()));
    }
    let alpha = match (alpha, kind, v) {
        (Some(a), _, _) => {
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            AdmissibleTuple::parse(&refs).map_err(usage)?
        }
        (None, FormKind::Biest, Some(v)) => {
            near_vertex(v).ok_or_else(|| Failure::Usage(format!("no admissible tuple found near A{v}")))?
        }
        (None, FormKind::Bht, _) => {
            let point = [Rat::from_integer(1), Rat::new(1, 2), Rat::new(-1, 2)];
            near_point(&point, |t| exponents_bht(t).is_ok()).ok_or_else(|| Failure::Usage("no admissible tuple found".into()))?
        }
        (None, FormKind::Biest, None) => return Err(Failure::Usage("give --alpha or --vertex".into())),
    };
    let (instance, sets) = if stratified {
        (InstanceSpec { consts: cfg.order_constants(), ..InstanceSpec::stratified() }, SetEnsemble::stratified())
    } else {
        (
            InstanceSpec { window: cfg.window(), consts: cfg.order_constants(), ..InstanceSpec::default() },
            SetEnsemble::default(),
        )
    };
    let spec = ExperimentSpec {
        kind,
        alpha,
        vertex: v,
        seeds: cfg.seed_list(),
        instance,
        sets,
        c_omega: cfg.c_omega().map_err(Failure::Usage)?,
    };
    // Exponent and admissibility checks happen before any instance runs.
    match kind {
        FormKind::Bht => {
            exponents_bht(&spec.alpha).map_err(usage)?;
        }
        FormKind::Biest => {
            if spec.alpha.bad_index().is_none() || spec.alpha.alpha().len() != 4 {
                return Err(Failure::Usage("the four-slot form needs four entries with one negative".into()));
            }
            if let Some(v) = v {
                exponents_for_vertex(&spec.alpha, v).map_err(usage)?;
            }
        }
    }
    Ok(spec)
}

pub fn experiment_plan(spec: &ExperimentSpec) -> Value {
    json!({
        "kind": spec.kind,
        "alpha": spec.alpha.strings(),
        "vertex": spec.vertex.map(|v| format!("A{v}")),
        "seeds": spec.seeds,
        "instance": spec.instance,
        "sets": spec.sets,
        "C_omega": spec.c_omega.to_string(),
    })
}

pub fn experiment(cfg: &RunConfig, spec: &ExperimentSpec) -> Result<(Value, String), Failure> {
    let report = restricted_type_experiment(spec).map_err(|e| Failure::Usage(format!("experiment: {e}")))?;
    let mut csv = String::from("seed,p_tiles,q_tiles,omega_measure,lambda_abs,ratio\n");
    for r in &report.per_instance {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed, r.p_tiles, r.q_tiles, r.omega_measure, r.lambda_abs, r.ratio
        ));
    }
    let mut out = envelope(cfg, "experiment");
    out.insert("stratum_profile".into(), json!(report.stratum_profile()));
    out.insert("report".into(), serde_json::to_value(&report).expect("report serializes"));
    Ok((Value::Object(out), csv))
}

// ---------------------------------------------------------------------------

fn random_instance(cfg: &RunConfig, count: usize) -> Result<(Vec<TriTile>, [Vec<Complex64>; 3]), Failure> {
    let seed = cfg.seeds.start;
    let tiles = if count == 0 {
        Vec::new()
    } else {
        let mut opts = GenOptions { consts: cfg.order_constants(), ..GenOptions::desk(seed, count) };
        loop {
            match gen_rank1(&opts) {
                Ok(t) => break t,
                Err(GenError::Exhausted { got, .. }) if got > 0 && got < opts.count => opts.count = got,
                Err(e) => return Err(Failure::Usage(format!("tile generation: {e}"))),
            }
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ef);
    let mut draw = || -> Vec<Complex64> {
        (0..tiles.len())
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect()
    };
    let a = [draw(), draw(), draw()];
    Ok((tiles, a))
}

/// Tile records, optionally tagged with tree ids from the partition or
/// bundled with coefficients.
pub fn dump_tiles(cfg: &RunConfig, input: Option<&Path>, count: usize, trees: bool, coefficients: bool) -> Result<Value, Failure> {
    let (tiles, a) = match input {
        Some(p) => Instance::load(p)?.decode()?,
        None => random_instance(cfg, count)?,
    };
    let mut ids: Vec<Option<usize>> = vec![None; tiles.len()];
    if trees && !tiles.is_empty() {
        let u = Universe::new(tiles.clone(), cfg.order_constants());
        let opts = PartitionOptions { exact_limit: cfg.budgets.exact_energy, ..PartitionOptions::default() };
        match partition(&u, [&a[0], &a[1], &a[2]], &opts) {
            Ok(p) => {
                for (id, t) in p.levels.iter().flat_map(|l| l.trees()).enumerate() {
                    for &m in &t.members {
                        ids[m] = Some(id);
                    }
                }
            }
            Err(DecompError::ZeroSlot(_)) => {}
            Err(e) => return Err(Failure::Usage(format!("partition: {e}"))),
        }
    }
    let records: Vec<TileRecord> = tiles.iter().zip(&ids).map(|(t, id)| TileRecord::from_tritile(t, *id)).collect();
    if coefficients {
        let coeffs = [0, 1, 2].map(|j| CoefficientSequence::new(j, a[j].clone()).records());
        Ok(serde_json::to_value(Instance { tiles: records, coefficients: coeffs }).expect("instance serializes"))
    } else {
        Ok(serde_json::to_value(records).expect("records serialize"))
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum SetArg {
    Double,
    Diagonal,
}

impl SetArg {
    pub fn singular_set(self) -> SingularSet {
        match self {
            SetArg::Double => SingularSet::Double,
            SetArg::Diagonal => SingularSet::Diagonal,
        }
    }
}

pub const PROBE_GRID: (f64, f64, f64, usize, usize) = (0.3, 0.25, 0.5, 7, 4);

pub fn reconstruct(cfg: &RunConfig, set: SingularSet, k: usize) -> Result<(String, Value), Failure> {
    let spec = cfg.cover_spec(set).map_err(Failure::Usage)?;
    let fam = SymbolFamily::new(spec).map_err(|e| Failure::Usage(e.to_string()))?;
    let series = fourier_split(fam, k, cfg.whitney.grid).map_err(|e| Failure::Usage(e.to_string()))?;
    let (along, lo, hi, na, nb) = PROBE_GRID;
    let points = probe_grid(set, along, lo, hi, na, nb);
    let rows = probe(&series, &points, k, cfg.whitney.delta).map_err(|e| Failure::Usage(e.to_string()))?;
    let cover = whitney_cover(all_shifts()[0], &spec).dump();
    Ok((probe_csv(&rows), cover))
}
