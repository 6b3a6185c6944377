//! Contraction of a dense clique table with one probability row per axis.
//!
//! Axes are contracted in ascending order; each step shrinks the working
//! tensor by a factor `S`, so a full contraction costs about
//! `S^k + S^(k-1) + ...` multiply-adds instead of `k * S^k`.

/// Reusable buffers for [`contract`].
#[derive(Debug, Default)]
pub struct ContractScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Contracts a `states^k` table with `rows[a]` along every axis `a` except
/// `skip`. The result has `states` entries when an axis is skipped and a
/// single entry otherwise.
pub fn contract<'s>(
    table: &[f64],
    states: usize,
    rows: &[&[f64]],
    skip: Option<usize>,
    scratch: &'s mut ContractScratch,
) -> &'s [f64] {
    let k = rows.len();
    debug_assert_eq!(table.len(), states.pow(k as u32));
    let ContractScratch { a: buf_a, b: buf_b } = scratch;
    buf_a.clear();
    buf_a.extend_from_slice(table);
    let (mut cur, mut next) = (buf_a, buf_b);
    let mut remaining = k;
    for (axis, w) in rows.iter().enumerate() {
        if skip == Some(axis) {
            continue;
        }
        let front = usize::from(skip.is_some_and(|s| s < axis));
        let pre = states.pow(front as u32);
        let post = states.pow((remaining - front - 1) as u32);
        next.clear();
        next.resize(pre * post, 0.0);
        for p in 0..pre {
            let out = &mut next[p * post..(p + 1) * post];
            for (x, &wx) in w.iter().enumerate() {
                let src = &cur[(p * states + x) * post..(p * states + x + 1) * post];
                for (o, &v) in out.iter_mut().zip(src) {
                    *o += wx * v;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        remaining -= 1;
    }
    &cur[..]
}
