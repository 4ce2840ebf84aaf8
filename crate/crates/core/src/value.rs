//! Tabular value models: scalar q-tables and categorical value distributions,
//! plus frozen snapshots used as backup targets.

use crate::bytes::{FormatError, ReadCursor, WriteBuf};
use crate::state::StateKey;
use indexmap::IndexMap;
use std::ops::Deref;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8] = b"VTBL1";

#[derive(Debug, Error)]
pub enum ValueError {
    #[error("backup target is not finite: {0}")]
    NonFiniteTarget(f64),
    #[error("learning rate must lie in (0, 1], got {0}")]
    BadLearningRate(f64),
    #[error("invalid distribution: {0}")]
    BadDistribution(String),
    #[error("invalid support: {0}")]
    BadSupport(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Frozen deep copy of a value model. Lookups never change between reads.
pub struct Snapshot<T>(T);

impl<T: Clone> Snapshot<T> {
    pub fn of(model: &T) -> Self {
        Snapshot(model.clone())
    }
}

impl<T> Deref for Snapshot<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.0
    }
}

fn check_alpha(alpha: f64) -> Result<(), ValueError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ValueError::BadLearningRate(alpha));
    }
    Ok(())
}

/// Scalar state-action value table, defaulting to 0.0 for unseen pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarQTable {
    action_count: u32,
    rows: IndexMap<StateKey, Vec<f64>>,
}

impl ScalarQTable {
    pub fn new(action_count: u32) -> Self {
        assert!(action_count > 0, "need at least one action");
        ScalarQTable { action_count, rows: IndexMap::new() }
    }

    pub fn action_count(&self) -> u32 {
        self.action_count
    }

    /// Stored value or the 0.0 default. Never mutates the table.
    pub fn q(&self, state: &StateKey, action: u32) -> f64 {
        debug_assert!(action < self.action_count);
        self.rows.get(state).map_or(0.0, |row| row[action as usize])
    }

    /// Stored row for a state, if any (one value per action).
    pub fn row(&self, state: &StateKey) -> Option<&[f64]> {
        self.rows.get(state).map(Vec::as_slice)
    }

    pub fn set(&mut self, state: &StateKey, action: u32, value: f64) {
        let row = self
            .rows
            .entry(state.clone())
            .or_insert_with(|| vec![0.0; self.action_count as usize]);
        row[action as usize] = value;
    }

    /// One tabular gradient step toward `target`: q += alpha * (target - q).
    pub fn update(&mut self, state: &StateKey, action: u32, target: f64, alpha: f64) -> Result<(), ValueError> {
        if !target.is_finite() {
            return Err(ValueError::NonFiniteTarget(target));
        }
        check_alpha(alpha)?;
        let old = self.q(state, action);
        self.set(state, action, old + alpha * (target - old));
        Ok(())
    }

    pub fn max_q(&self, state: &StateKey) -> f64 {
        (0..self.action_count)
            .map(|a| self.q(state, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax over actions; ties break toward the lowest index.
    pub fn greedy_action(&self, state: &StateKey) -> u32 {
        greedy_by(self.action_count, |a| self.q(state, a))
    }

    pub fn snapshot(&self) -> Snapshot<ScalarQTable> {
        Snapshot::of(self)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&StateKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = WriteBuf::new(MAGIC);
        w.u8(0);
        w.u32(self.action_count);
        w.u64(self.rows.len() as u64);
        for (key, row) in &self.rows {
            w.bytes(key.bytes());
            for &v in row {
                w.f64(v);
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ValueError> {
        let mut r = ReadCursor::new(buf);
        r.expect_magic(MAGIC)?;
        let kind = r.u8()?;
        if kind != 0 {
            return Err(FormatError {
                offset: r.offset(),
                message: format!("expected scalar table (kind 0), got kind {kind}"),
            }
            .into());
        }
        let table = Self::read_body(&mut r)?;
        r.done()?;
        Ok(table)
    }

    fn read_body(r: &mut ReadCursor) -> Result<Self, ValueError> {
        let action_count = r.u32()?;
        if action_count == 0 {
            return Err(FormatError { offset: r.offset(), message: "action_count is 0".into() }.into());
        }
        let rows = r.u64()?;
        let mut table = ScalarQTable::new(action_count);
        for _ in 0..rows {
            let len = r.u32()? as usize;
            let key = StateKey::new(r.take(len)?.to_vec());
            for a in 0..action_count {
                let v = r.f64()?;
                table.set(&key, a, v);
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), ValueError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, ValueError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn greedy_by(action_count: u32, value: impl Fn(u32) -> f64) -> u32 {
    let mut best = 0u32;
    let mut best_value = value(0);
    for a in 1..action_count {
        let v = value(a);
        if v > best_value {
            best = a;
            best_value = v;
        }
    }
    best
}

/// Mean of a categorical distribution over the given atom support.
pub fn expected_value(dist: &[f64], atoms: &[f64]) -> f64 {
    debug_assert_eq!(dist.len(), atoms.len());
    dist.iter().zip(atoms).map(|(p, z)| p * z).sum()
}

/// Categorical state-action value distributions over a fixed atom grid,
/// defaulting to uniform for unseen pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalQTable {
    action_count: u32,
    atoms: Vec<f64>,
    v_min: f64,
    v_max: f64,
    uniform: Vec<f64>,
    /// Flattened rows: `action_count * atom_count` probabilities per state.
    rows: IndexMap<StateKey, Vec<f64>>,
}

impl CategoricalQTable {
    pub fn new(action_count: u32, atom_count: usize, v_min: f64, v_max: f64) -> Result<Self, ValueError> {
        if action_count == 0 {
            return Err(ValueError::BadSupport("need at least one action".into()));
        }
        if atom_count < 2 {
            return Err(ValueError::BadSupport("need at least two atoms".into()));
        }
        if !(v_max > v_min) {
            return Err(ValueError::BadSupport(format!(
                "v_max ({v_max}) must exceed v_min ({v_min})"
            )));
        }
        let dz = (v_max - v_min) / (atom_count as f64 - 1.0);
        let atoms = (0..atom_count).map(|i| v_min + i as f64 * dz).collect();
        Ok(CategoricalQTable {
            action_count,
            atoms,
            v_min,
            v_max,
            uniform: vec![1.0 / atom_count as f64; atom_count],
            rows: IndexMap::new(),
        })
    }

    pub fn action_count(&self) -> u32 {
        self.action_count
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn delta_z(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms.len() as f64 - 1.0)
    }

    /// Stored distribution or the uniform default. Never mutates the table.
    pub fn dist(&self, state: &StateKey, action: u32) -> &[f64] {
        debug_assert!(action < self.action_count);
        let n = self.atoms.len();
        match self.rows.get(state) {
            Some(row) => &row[action as usize * n..(action as usize + 1) * n],
            None => &self.uniform,
        }
    }

    pub fn expected(&self, state: &StateKey, action: u32) -> f64 {
        expected_value(self.dist(state, action), &self.atoms)
    }

    /// Argmax over actions of the distribution means; ties break low.
    pub fn greedy_action(&self, state: &StateKey) -> u32 {
        greedy_by(self.action_count, |a| self.expected(state, a))
    }

    fn validate(&self, m: &[f64]) -> Result<(), ValueError> {
        if m.len() != self.atoms.len() {
            return Err(ValueError::BadDistribution(format!(
                "expected {} atoms, got {}",
                self.atoms.len(),
                m.len()
            )));
        }
        if m.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ValueError::BadDistribution("negative or non-finite mass".into()));
        }
        let sum: f64 = m.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ValueError::BadDistribution(format!("mass sums to {sum}")));
        }
        Ok(())
    }

    pub fn set_dist(&mut self, state: &StateKey, action: u32, m: &[f64]) -> Result<(), ValueError> {
        self.validate(m)?;
        let n = self.atoms.len();
        let uniform = self.uniform.clone();
        let row = self
            .rows
            .entry(state.clone())
            .or_insert_with(|| uniform.repeat(self.action_count as usize));
        row[action as usize * n..(action as usize + 1) * n].copy_from_slice(m);
        Ok(())
    }

    /// Convex-mixture step toward the target distribution `m`, renormalized:
    /// p <- normalize((1 - alpha) p + alpha m). At alpha = 1 this is the exact
    /// minimizer of the cross-entropy against `m`.
    pub fn update(&mut self, state: &StateKey, action: u32, m: &[f64], alpha: f64) -> Result<(), ValueError> {
        self.validate(m)?;
        check_alpha(alpha)?;
        let mixed: Vec<f64> = self
            .dist(state, action)
            .iter()
            .zip(m)
            .map(|(p, t)| (1.0 - alpha) * p + alpha * t)
            .collect();
        let total: f64 = mixed.iter().sum();
        let normalized: Vec<f64> = mixed.iter().map(|p| p / total).collect();
        self.set_dist_unchecked(state, action, &normalized);
        Ok(())
    }

    fn set_dist_unchecked(&mut self, state: &StateKey, action: u32, m: &[f64]) {
        let n = self.atoms.len();
        let uniform = self.uniform.clone();
        let row = self
            .rows
            .entry(state.clone())
            .or_insert_with(|| uniform.repeat(self.action_count as usize));
        row[action as usize * n..(action as usize + 1) * n].copy_from_slice(m);
    }

    pub fn snapshot(&self) -> Snapshot<CategoricalQTable> {
        Snapshot::of(self)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&StateKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = WriteBuf::new(MAGIC);
        w.u8(1);
        w.u32(self.action_count);
        w.u32(self.atoms.len() as u32);
        w.f64(self.v_min);
        w.f64(self.v_max);
        w.u64(self.rows.len() as u64);
        for (key, row) in &self.rows {
            w.bytes(key.bytes());
            for &v in row {
                w.f64(v);
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ValueError> {
        let mut r = ReadCursor::new(buf);
        r.expect_magic(MAGIC)?;
        let kind = r.u8()?;
        if kind != 1 {
            return Err(FormatError {
                offset: r.offset(),
                message: format!("expected categorical table (kind 1), got kind {kind}"),
            }
            .into());
        }
        let table = Self::read_body(&mut r)?;
        r.done()?;
        Ok(table)
    }

    fn read_body(r: &mut ReadCursor) -> Result<Self, ValueError> {
        let action_count = r.u32()?;
        let atom_count = r.u32()? as usize;
        let v_min = r.f64()?;
        let v_max = r.f64()?;
        let rows = r.u64()?;
        let mut table = CategoricalQTable::new(action_count, atom_count, v_min, v_max)?;
        for _ in 0..rows {
            let len = r.u32()? as usize;
            let key = StateKey::new(r.take(len)?.to_vec());
            let mut row = Vec::with_capacity(action_count as usize * atom_count);
            for _ in 0..action_count as usize * atom_count {
                row.push(r.f64()?);
            }
            table.rows.insert(key, row);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), ValueError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, ValueError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Either flavor of tabular value model, as selected by the run configuration.
#[derive(Clone, Debug)]
pub enum ValueModel {
    Scalar(ScalarQTable),
    Categorical(CategoricalQTable),
}

impl ValueModel {
    pub fn action_count(&self) -> u32 {
        match self {
            ValueModel::Scalar(t) => t.action_count(),
            ValueModel::Categorical(t) => t.action_count(),
        }
    }

    pub fn greedy_action(&self, state: &StateKey) -> u32 {
        match self {
            ValueModel::Scalar(t) => t.greedy_action(state),
            ValueModel::Categorical(t) => t.greedy_action(state),
        }
    }

    /// Scalar view of the model's value at (state, action).
    pub fn q(&self, state: &StateKey, action: u32) -> f64 {
        match self {
            ValueModel::Scalar(t) => t.q(state, action),
            ValueModel::Categorical(t) => t.expected(state, action),
        }
    }

    pub fn snapshot(&self) -> Snapshot<ValueModel> {
        Snapshot::of(self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            ValueModel::Scalar(t) => t.to_bytes(),
            ValueModel::Categorical(t) => t.to_bytes(),
        }
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ValueError> {
        let mut r = ReadCursor::new(buf);
        r.expect_magic(MAGIC)?;
        match r.u8()? {
            0 => {
                let t = ScalarQTable::read_body(&mut r)?;
                r.done()?;
                Ok(ValueModel::Scalar(t))
            }
            1 => {
                let t = CategoricalQTable::read_body(&mut r)?;
                r.done()?;
                Ok(ValueModel::Categorical(t))
            }
            k => Err(FormatError { offset: r.offset(), message: format!("unknown table kind {k}") }.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ValueError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, ValueError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
