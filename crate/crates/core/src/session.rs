//! Lazily computed artifacts of one experiment, shared between commands and
//! checks, with optional field caching.

use serde::Serialize;

use crate::busemann::{busemann_field, BusemannField};
use crate::cache::{cache_key, FieldCache, Lookup};
use crate::catalog::{Experiment, Lab};
use crate::cutlocus::{copoint_set, level_schedule, CoPointSet};
use crate::error::Result;
use crate::grid::Grid;

pub struct Session<'a> {
    pub lab: Lab,
    cache: Option<&'a FieldCache>,
    bus: Option<BusemannField>,
    refined: Option<BusemannField>,
    copoints: Option<CoPointSet>,
    /// Cache lookups as `(what, status)`.
    pub lookups: Vec<(String, Lookup)>,
}

#[derive(Serialize)]
struct FieldKey<'a> {
    what: &'a str,
    crate_version: &'a str,
    experiment: &'a Experiment,
    grid: &'a Grid,
    tol: f64,
    t0: f64,
}

impl<'a> Session<'a> {
    pub fn new(experiment: &Experiment, cache: Option<&'a FieldCache>) -> Result<Self> {
        Ok(Session { lab: experiment.prepare()?, cache, bus: None, refined: None, copoints: None, lookups: Vec::new() })
    }

    fn field_on(&mut self, grid: &Grid, what: &str) -> Result<BusemannField> {
        let lab = &self.lab;
        let compute = || busemann_field(&lab.metric, &lab.ray, grid, &lab.busemann);
        let Some(cache) = self.cache else { return compute() };
        let key = |part: &str| {
            cache_key(&FieldKey {
                what: part,
                crate_version: env!("CARGO_PKG_VERSION"),
                experiment: &lab.experiment,
                grid,
                tol: lab.busemann.tol,
                t0: lab.busemann.t0,
            })
        };
        let keys = [key(&format!("{what}:value")), key(&format!("{what}:last")), key(&format!("{what}:min"))];
        let hits: Vec<_> = keys.iter().map(|k| cache.get(k)).collect::<Result<_>>()?;
        let status = if hits.iter().any(|h| h.1 == Lookup::Evicted) { Lookup::Evicted } else { Lookup::Miss };
        if hits.iter().all(|h| h.0.is_some()) {
            let mut it = hits.into_iter().map(|h| h.0.unwrap());
            let (f, l, m) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            if let Ok(b) = BusemannField::from_parts(f, l, m) {
                self.lookups.push((what.into(), Lookup::Hit));
                return Ok(b);
            }
        }
        let b = compute()?;
        let (last, min) = b.increment_fields();
        let desc = serde_json::json!({ "experiment": lab.experiment.id, "what": what, "h": grid.h });
        for (k, f) in keys.iter().zip([&b.field, &last, &min]) {
            cache.put(k, f, desc.clone())?;
        }
        self.lookups.push((what.into(), status));
        Ok(b)
    }

    /// Busemann field on the experiment grid.
    pub fn busemann(&mut self) -> Result<&BusemannField> {
        if self.bus.is_none() {
            let g = self.lab.grid.clone();
            self.bus = Some(self.field_on(&g, "busemann")?);
        }
        Ok(self.bus.as_ref().unwrap())
    }

    /// Busemann field on the grid refined to `h/2`.
    pub fn refined_busemann(&mut self) -> Result<&BusemannField> {
        if self.refined.is_none() {
            let g = self.lab.grid.refined();
            self.refined = Some(self.field_on(&g, "busemann-refined")?);
        }
        Ok(self.refined.as_ref().unwrap())
    }

    /// Copoint levels: explicit ones, else `b_min + k·Δ`.
    pub fn levels(&mut self) -> Result<Vec<f64>> {
        let e = self.lab.experiment.clone();
        if !e.levels.is_empty() {
            return Ok(e.levels);
        }
        let h = self.lab.grid.h;
        let bus = self.busemann()?;
        Ok(level_schedule(bus, e.tolerances.level_step_h * h, e.tolerances.level_count))
    }

    pub fn copoints(&mut self) -> Result<&CoPointSet> {
        if self.copoints.is_none() {
            let levels = self.levels()?;
            self.busemann()?;
            let lab = &self.lab;
            let set = copoint_set(&lab.metric, &lab.ray, self.bus.as_ref().unwrap(), &levels, &lab.coray)?;
            self.copoints = Some(set);
        }
        Ok(self.copoints.as_ref().unwrap())
    }
}
