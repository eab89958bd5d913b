use super::{Model, ParamVector};
use crate::core_math::{norm2, ColumnBlock};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Per-example gradients, one column per example (or micro-batch).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    grads: ColumnBlock,
    clip_bound: Option<f64>,
}

impl GradientBatch {
    pub fn unclipped(grads: ColumnBlock) -> Self {
        Self {
            grads,
            clip_bound: None,
        }
    }

    pub fn grads(&self) -> &ColumnBlock {
        &self.grads
    }

    pub fn dim(&self) -> usize {
        self.grads.rows()
    }

    pub fn count(&self) -> usize {
        self.grads.cols()
    }

    pub fn is_clipped(&self) -> bool {
        self.clip_bound.is_some()
    }

    pub fn clip_bound(&self) -> Option<f64> {
        self.clip_bound
    }

    pub fn column(&self, j: usize) -> &[f64] {
        self.grads.column(j)
    }

    pub fn column_sum(&self) -> Vec<f64> {
        self.grads.column_sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut s = self.column_sum();
        let n = self.count() as f64;
        s.iter_mut().for_each(|v| *v /= n);
        s
    }

    /// Column concatenation; both halves must share clip state.
    pub fn concat(&self, other: &GradientBatch) -> Result<GradientBatch> {
        if self.clip_bound != other.clip_bound {
            return Err(Error::InvalidArgument("mixing clip states".into()));
        }
        Ok(Self {
            grads: self.grads.hconcat(&other.grads)?,
            clip_bound: self.clip_bound,
        })
    }
}

pub fn per_example_gradients(
    model: &Model,
    params: &ParamVector,
    ds: &Dataset,
    indices: &[usize],
) -> Result<GradientBatch> {
    per_example_gradients_with(Exec::default(), model, params, ds, indices)
}

/// Exact per-example gradients `∇ℓ(params; z_i)` for `i ∈ indices`, written to
/// fixed column slots.
pub fn per_example_gradients_with(
    exec: Exec,
    model: &Model,
    params: &ParamVector,
    ds: &Dataset,
    indices: &[usize],
) -> Result<GradientBatch> {
    model.check(params, ds)?;
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidArgument(format!("example index {bad} out of range")));
    }
    let p = model.param_count();
    let mut block = ColumnBlock::zeros(p, indices.len());
    let mut failed = vec![false; indices.len()];
    {
        let flat = block.as_flat_mut();
        let mut slots: Vec<(&mut [f64], &mut bool)> =
            flat.chunks_mut(p).zip(failed.iter_mut()).collect();
        let work = |j: usize, slot: &mut (&mut [f64], &mut bool)| {
            let i = indices[j];
            let ok = model
                .example_gradient(&params.values, ds.x(i), ds.y(i), slot.0)
                .is_some_and(|_| slot.0.iter().all(|v| v.is_finite()));
            *slot.1 = !ok;
        };
        exec.for_each_chunk(&mut slots, 1, |j, s| work(j, &mut s[0]));
    }
    if let Some(j) = failed.iter().position(|f| *f) {
        return Err(Error::NonFiniteActivation { index: indices[j] });
    }
    Ok(GradientBatch::unclipped(block))
}

/// Gradient of the mean loss over `ds`, and that mean loss.
pub fn mean_gradient(model: &Model, params: &ParamVector, ds: &Dataset) -> Result<(Vec<f64>, f64)> {
    const CHUNK: usize = 256;
    model.check(params, ds)?;
    let p = model.param_count();
    let n = ds.len();
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Result<(Vec<f64>, f64)>> = Exec::default().map(chunks, |c| {
        let mut g = vec![0.0; p];
        let mut tmp = vec![0.0; p];
        let mut loss = 0.0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            loss += model
                .example_gradient(&params.values, ds.x(i), ds.y(i), &mut tmp)
                .ok_or(Error::NonFiniteActivation { index: i })?;
            crate::core_math::axpy(1.0, &tmp, &mut g);
        }
        Ok((g, loss))
    });
    let mut g = vec![0.0; p];
    let mut loss = 0.0;
    for r in partial {
        let (pg, pl) = r?;
        crate::core_math::axpy(1.0, &pg, &mut g);
        loss += pl;
    }
    let inv = 1.0 / n as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok((g, loss * inv))
}

/// Replaces each column `g` with `g · min(1, C / ‖g‖₂)`.
pub fn clip_gradients(gb: &GradientBatch, c: f64) -> Result<GradientBatch> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("clip bound {c} must be positive")));
    }
    if gb.is_clipped() {
        return Err(Error::InvalidArgument("batch is already clipped".into()));
    }
    let mut grads = gb.grads.clone();
    for j in 0..grads.cols() {
        let col = grads.column_mut(j);
        let n = norm2(col);
        if n > c {
            let s = c / n;
            col.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(GradientBatch {
        grads,
        clip_bound: Some(c),
    })
}

/// Averages consecutive groups of `size` columns (the last group may be
/// smaller). Used before clipping for micro-batch clipping.
pub fn group_micro_batches(gb: &GradientBatch, size: usize) -> Result<GradientBatch> {
    if size == 0 {
        return Err(Error::InvalidArgument("micro-batch size must be positive".into()));
    }
    if gb.is_clipped() {
        return Err(Error::InvalidArgument("group before clipping".into()));
    }
    if size == 1 {
        return Ok(gb.clone());
    }
    let p = gb.dim();
    let groups = gb.count().div_ceil(size);
    let mut out = ColumnBlock::zeros(p, groups);
    for g in 0..groups {
        let members = (g * size..((g + 1) * size).min(gb.count())).collect::<Vec<_>>();
        let inv = 1.0 / members.len() as f64;
        let col = out.column_mut(g);
        for &j in &members {
            crate::core_math::axpy(inv, gb.column(j), col);
        }
    }
    Ok(GradientBatch::unclipped(out))
}

/// Sum of clipped (micro-batch) gradients over `indices` and the number of
/// clipped units, computed in fixed-size chunks so memory stays bounded for
/// wide models. Chunk partials are reduced in order, so the result does not
/// depend on the execution strategy.
pub fn clipped_gradient_sum(
    exec: Exec,
    model: &Model,
    params: &ParamVector,
    ds: &Dataset,
    indices: &[usize],
    clip: Option<f64>,
    micro_batch: usize,
) -> Result<(Vec<f64>, usize)> {
    if micro_batch == 0 {
        return Err(Error::InvalidArgument("micro-batch size must be positive".into()));
    }
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let chunk = micro_batch * 64usize.div_ceil(micro_batch);
    let chunks: Vec<&[usize]> = indices.chunks(chunk).collect();
    let partial: Vec<Result<(Vec<f64>, usize)>> = exec.map(chunks.len(), |c| {
        let gb = per_example_gradients_with(Exec::Sequential, model, params, ds, chunks[c])?;
        let gb = group_micro_batches(&gb, micro_batch)?;
        let gb = match clip {
            Some(c) => clip_gradients(&gb, c)?,
            None => gb,
        };
        Ok((gb.column_sum(), gb.count()))
    });
    let mut sum = vec![0.0; model.param_count()];
    let mut units = 0;
    for r in partial {
        let (s, u) = r?;
        crate::core_math::axpy(1.0, &s, &mut sum);
        units += u;
    }
    Ok((sum, units))
}
