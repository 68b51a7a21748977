use std::collections::BTreeSet;

use crate::corpus::ShapeKind;

use super::{FormCtx, PropForm, PropInput};

type Compute = fn(&PropInput) -> f64;
type Form = fn(&FormCtx) -> Option<PropForm>;
type Universal = fn(&FormCtx) -> Option<String>;

pub struct PropertyDef {
    pub id: &'static str,
    pub compute: Compute,
    /// Constraint form of `property op k`, when expressible.
    pub form: Form,
    /// For fraction-valued monotonicity flags: the constraint that holds
    /// when the fraction is 1.
    pub universal: Option<Universal>,
}

/// Location properties that pin an extremum when all of them are
/// near-constant.
pub struct ExtremumGroup {
    pub name: &'static str,
    pub props: &'static [&'static str],
    pub pin: fn(&FormCtx, &[i64]) -> Option<String>,
}

fn none(_: &FormCtx) -> Option<PropForm> {
    None
}

const fn p(id: &'static str, compute: Compute) -> PropertyDef {
    PropertyDef { id, compute, form: none, universal: None }
}

const fn pf(id: &'static str, compute: Compute, form: Form) -> PropertyDef {
    PropertyDef { id, compute, form, universal: None }
}

pub fn catalog(kind: ShapeKind) -> &'static [PropertyDef] {
    match kind {
        ShapeKind::Matrix | ShapeKind::Assignment => MATRIX,
        ShapeKind::Permutation => PERMUTATION,
        ShapeKind::PackingCoords => PACKING,
    }
}

pub fn extremum_groups(kind: ShapeKind) -> &'static [ExtremumGroup] {
    match kind {
        ShapeKind::Matrix | ShapeKind::Assignment => MATRIX_EXTREMA,
        ShapeKind::Permutation => PERMUTATION_EXTREMA,
        ShapeKind::PackingCoords => &[],
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

// ---- matrix / assignment -------------------------------------------------

fn rows(i: &PropInput) -> Vec<f64> {
    i.matrix.iter().map(|r| r.iter().sum::<i64>() as f64).collect()
}

fn cols(i: &PropInput) -> Vec<f64> {
    let w = i.matrix[0].len();
    (0..w).map(|c| i.matrix.iter().map(|r| r[c]).sum::<i64>() as f64).collect()
}

fn cells(i: &PropInput) -> impl Iterator<Item = i64> + '_ {
    i.matrix.iter().flatten().copied()
}

fn diag(i: &PropInput) -> Vec<i64> {
    let n = i.matrix.len().min(i.matrix[0].len());
    (0..n).map(|k| i.matrix[k][k]).collect()
}

fn anti_diag(i: &PropInput) -> Vec<i64> {
    let w = i.matrix[0].len();
    let n = i.matrix.len().min(w);
    (0..n).map(|k| i.matrix[k][w - 1 - k]).collect()
}

fn row_monotone(i: &PropInput) -> f64 {
    let ok = i.matrix.iter().filter(|r| r.windows(2).all(|w| w[1] >= w[0])).count();
    ok as f64 / i.matrix.len() as f64
}

fn col_monotone(i: &PropInput) -> f64 {
    let w = i.matrix[0].len();
    let ok = (0..w).filter(|&c| i.matrix.windows(2).all(|r| r[1][c] >= r[0][c])).count();
    ok as f64 / w as f64
}

fn h_diffs(i: &PropInput) -> Vec<f64> {
    i.matrix.iter().flat_map(|r| r.windows(2).map(|w| (w[1] - w[0]).abs() as f64)).collect()
}

fn v_diffs(i: &PropInput) -> Vec<f64> {
    i.matrix
        .windows(2)
        .flat_map(|r| r[0].iter().zip(&r[1]).map(|(a, b)| (b - a).abs() as f64))
        .collect()
}

fn centroid(i: &PropInput, axis: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, row) in i.matrix.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let pos = if axis == 0 { r as i64 + i.row_lo } else { c as i64 + i.col_lo };
            num += pos as f64 * v as f64;
            den += v as f64;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// First row-major position of the max (`want_max`) or min, in declared
/// coordinates.
fn arg_ext(i: &PropInput, want_max: bool) -> (i64, i64) {
    let mut best = (0usize, 0usize);
    let mut bv = i.matrix[0][0];
    for (r, row) in i.matrix.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if (want_max && v > bv) || (!want_max && v < bv) {
                bv = v;
                best = (r, c);
            }
        }
    }
    (best.0 as i64 + i.row_lo, best.1 as i64 + i.col_lo)
}

fn subsquare_var(i: &PropInput) -> f64 {
    let m = &i.matrix;
    if m.len() < 2 || m[0].len() < 2 {
        return 0.0;
    }
    let mut sums = Vec::new();
    for r in 0..m.len() - 1 {
        for c in 0..m[0].len() - 1 {
            sums.push((m[r][c] + m[r][c + 1] + m[r + 1][c] + m[r + 1][c + 1]) as f64);
        }
    }
    let s = std(&sums);
    s * s
}

fn ascents_h(i: &PropInput) -> f64 {
    i.matrix.iter().flat_map(|r| r.windows(2)).filter(|w| w[1] > w[0]).count() as f64
}

fn ascents_v(i: &PropInput) -> f64 {
    i.matrix.windows(2).flat_map(|r| r[0].iter().zip(&r[1])).filter(|(a, b)| b > a).count() as f64
}

fn two_d(c: &FormCtx) -> bool {
    c.dims.len() == 2
}

fn all_cells(c: &FormCtx) -> String {
    format!("i in {}, j in {}", c.range(0), c.range(1))
}

fn row_sum_term(c: &FormCtx) -> String {
    format!("sum(j in {})({}[i, j])", c.range(1), c.var)
}

fn col_sum_term(c: &FormCtx) -> String {
    format!("sum(i in {})({}[i, j])", c.range(0), c.var)
}

static MATRIX: &[PropertyDef] = &[
    p("row_sums_mean", |i| mean(&rows(i))),
    p("row_sums_std", |i| std(&rows(i))),
    pf("row_sums_min", |i| min(&rows(i)), |c| {
        two_d(c).then(|| PropForm::MinOf { gens: format!("i in {}", c.range(0)), term: row_sum_term(c) })
    }),
    pf("row_sums_max", |i| max(&rows(i)), |c| {
        two_d(c).then(|| PropForm::MaxOf { gens: format!("i in {}", c.range(0)), term: row_sum_term(c) })
    }),
    p("col_sums_mean", |i| mean(&cols(i))),
    p("col_sums_std", |i| std(&cols(i))),
    pf("col_sums_min", |i| min(&cols(i)), |c| {
        two_d(c).then(|| PropForm::MinOf { gens: format!("j in {}", c.range(1)), term: col_sum_term(c) })
    }),
    pf("col_sums_max", |i| max(&cols(i)), |c| {
        two_d(c).then(|| PropForm::MaxOf { gens: format!("j in {}", c.range(1)), term: col_sum_term(c) })
    }),
    pf("main_diag_sum", |i| diag(i).iter().sum::<i64>() as f64, |c| {
        c.is_square().then(|| PropForm::direct(format!("sum(i in {})({}[i, i])", c.range(0), c.var)))
    }),
    pf("anti_diag_sum", |i| anti_diag(i).iter().sum::<i64>() as f64, |c| {
        c.is_square().then(|| {
            let (l, h) = &c.dims[0];
            PropForm::direct(format!("sum(i in {})({}[i, {l} + {h} - i])", c.range(0), c.var))
        })
    }),
    pf("value_min", |i| cells(i).min().unwrap_or(0) as f64, |c| {
        two_d(c).then(|| PropForm::MinOf { gens: all_cells(c), term: format!("{}[i, j]", c.var) })
    }),
    pf("value_max", |i| cells(i).max().unwrap_or(0) as f64, |c| {
        two_d(c).then(|| PropForm::MaxOf { gens: all_cells(c), term: format!("{}[i, j]", c.var) })
    }),
    p("value_range", |i| (cells(i).max().unwrap_or(0) - cells(i).min().unwrap_or(0)) as f64),
    PropertyDef {
        id: "row_monotone_fraction",
        compute: row_monotone,
        form: none,
        universal: Some(|c| {
            two_d(c).then(|| format!("forall(i in {}, j in {})({v}[i, j + 1] >= {v}[i, j])", c.range(0), c.range_but_last(1), v = c.var))
        }),
    },
    PropertyDef {
        id: "col_monotone_fraction",
        compute: col_monotone,
        form: none,
        universal: Some(|c| {
            two_d(c).then(|| format!("forall(i in {}, j in {})({v}[i + 1, j] >= {v}[i, j])", c.range_but_last(0), c.range(1), v = c.var))
        }),
    },
    pf("horizontal_adjacency_diff", |i| mean(&h_diffs(i)), |c| {
        (two_d(c) && c.extents[1] > 1).then(|| PropForm::Direct {
            expr: format!("sum(i in {}, j in {})(abs({v}[i, j + 1] - {v}[i, j]))", c.range(0), c.range_but_last(1), v = c.var),
            denom: c.extents[0] * (c.extents[1] - 1),
        })
    }),
    pf("vertical_adjacency_diff", |i| mean(&v_diffs(i)), |c| {
        (two_d(c) && c.extents[0] > 1).then(|| PropForm::Direct {
            expr: format!("sum(i in {}, j in {})(abs({v}[i + 1, j] - {v}[i, j]))", c.range_but_last(0), c.range(1), v = c.var),
            denom: (c.extents[0] - 1) * c.extents[1],
        })
    }),
    p("centroid_row", |i| centroid(i, 0)),
    p("centroid_col", |i| centroid(i, 1)),
    p("argmax_row", |i| arg_ext(i, true).0 as f64),
    p("argmax_col", |i| arg_ext(i, true).1 as f64),
    p("argmin_row", |i| arg_ext(i, false).0 as f64),
    p("argmin_col", |i| arg_ext(i, false).1 as f64),
    p("subsquare_2x2_sum_variance", subsquare_var),
    p("n_distinct_values", |i| cells(i).collect::<BTreeSet<_>>().len() as f64),
    pf("first_cell", |i| i.matrix[0][0] as f64, |c| {
        two_d(c).then(|| PropForm::direct(format!("{}[{}, {}]", c.var, c.dims[0].0, c.dims[1].0)))
    }),
    pf("last_cell", |i| *i.matrix.last().and_then(|r| r.last()).unwrap_or(&0) as f64, |c| {
        two_d(c).then(|| PropForm::direct(format!("{}[{}, {}]", c.var, c.dims[0].1, c.dims[1].1)))
    }),
    pf("corner_sum", |i| {
        let m = &i.matrix;
        let (h, w) = (m.len() - 1, m[0].len() - 1);
        (m[0][0] + m[0][w] + m[h][0] + m[h][w]) as f64
    }, |c| {
        two_d(c).then(|| {
            let ((rl, rh), (cl, ch)) = (&c.dims[0], &c.dims[1]);
            let v = &c.var;
            PropForm::direct(format!("{v}[{rl}, {cl}] + {v}[{rl}, {ch}] + {v}[{rh}, {cl}] + {v}[{rh}, {ch}]"))
        })
    }),
    p("main_diag_distinct", |i| diag(i).into_iter().collect::<BTreeSet<_>>().len() as f64),
    pf("row_ascents", ascents_h, |c| {
        (two_d(c) && c.extents[1] > 1).then(|| {
            PropForm::direct(format!("sum(i in {}, j in {})(bool2int({v}[i, j + 1] > {v}[i, j]))", c.range(0), c.range_but_last(1), v = c.var))
        })
    }),
    pf("col_ascents", ascents_v, |c| {
        (two_d(c) && c.extents[0] > 1).then(|| {
            PropForm::direct(format!("sum(i in {}, j in {})(bool2int({v}[i + 1, j] > {v}[i, j]))", c.range_but_last(0), c.range(1), v = c.var))
        })
    }),
    pf("first_row_sum", |i| i.matrix[0].iter().sum::<i64>() as f64, |c| {
        two_d(c).then(|| PropForm::direct(format!("sum(j in {})({}[{}, j])", c.range(1), c.var, c.dims[0].0)))
    }),
    pf("first_col_sum", |i| i.matrix.iter().map(|r| r[0]).sum::<i64>() as f64, |c| {
        two_d(c).then(|| PropForm::direct(format!("sum(i in {})({}[i, {}])", c.range(0), c.var, c.dims[1].0)))
    }),
];

static MATRIX_EXTREMA: &[ExtremumGroup] = &[
    ExtremumGroup {
        name: "argmax",
        props: &["argmax_row", "argmax_col"],
        pin: |c, at| {
            two_d(c).then(|| format!("forall({})({v}[i, j] <= {v}[{}, {}])", all_cells(c), at[0], at[1], v = c.var))
        },
    },
    ExtremumGroup {
        name: "argmin",
        props: &["argmin_row", "argmin_col"],
        pin: |c, at| {
            two_d(c).then(|| format!("forall({})({v}[i, j] >= {v}[{}, {}])", all_cells(c), at[0], at[1], v = c.var))
        },
    },
];

// ---- permutation ---------------------------------------------------------

fn adj(i: &PropInput) -> Vec<f64> {
    i.row().windows(2).map(|w| (w[1] - w[0]).abs() as f64).collect()
}

fn longest_run(x: &[i64], up: bool) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let (mut best, mut cur) = (1, 1);
    for w in x.windows(2) {
        if (up && w[1] > w[0]) || (!up && w[1] < w[0]) {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 1;
        }
    }
    best as f64
}

fn arg_pos(i: &PropInput, want_max: bool) -> f64 {
    let x = i.row();
    let mut best = 0;
    for (k, &v) in x.iter().enumerate() {
        if (want_max && v > x[best]) || (!want_max && v < x[best]) {
            best = k;
        }
    }
    (best as i64 + i.col_lo) as f64
}

fn ones_centroid(i: &PropInput, axis: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..i.height {
        for c in 0..i.width {
            let v = i.plane[r * i.width + c];
            num += v * if axis == 0 { r as f64 } else { c as f64 };
            den += v;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn half(i: &PropInput, second: bool) -> &[i64] {
    let x = i.row();
    let m = x.len() / 2;
    if second {
        &x[m..]
    } else {
        &x[..m]
    }
}

fn ascents(x: &[i64]) -> f64 {
    x.windows(2).filter(|w| w[1] > w[0]).count() as f64
}

fn one_d(c: &FormCtx) -> bool {
    c.dims.len() == 1
}

fn gap_gens(c: &FormCtx) -> String {
    format!("p in {}", c.range_but_last(0))
}

static PERMUTATION: &[PropertyDef] = &[
    pf("ascending_pairs", |i| ascents(i.row()), |c| {
        one_d(c).then(|| PropForm::direct(format!("sum({})(bool2int({v}[p + 1] > {v}[p]))", gap_gens(c), v = c.var)))
    }),
    pf("descending_pairs", |i| i.row().windows(2).filter(|w| w[1] < w[0]).count() as f64, |c| {
        one_d(c).then(|| PropForm::direct(format!("sum({})(bool2int({v}[p + 1] < {v}[p]))", gap_gens(c), v = c.var)))
    }),
    p("ascending_run_max", |i| longest_run(i.row(), true)),
    p("descending_run_max", |i| longest_run(i.row(), false)),
    pf("max_adjacent_diff", |i| max(&adj(i)), |c| {
        one_d(c).then(|| PropForm::MaxOf { gens: gap_gens(c), term: format!("abs({v}[p + 1] - {v}[p])", v = c.var) })
    }),
    pf("min_adjacent_diff", |i| min(&adj(i)), |c| {
        one_d(c).then(|| PropForm::MinOf { gens: gap_gens(c), term: format!("abs({v}[p + 1] - {v}[p])", v = c.var) })
    }),
    pf("mean_adjacent_diff", |i| mean(&adj(i)), |c| {
        one_d(c).then(|| PropForm::Direct {
            expr: format!("sum({})(abs({v}[p + 1] - {v}[p]))", gap_gens(c), v = c.var),
            denom: c.extents[0] - 1,
        })
    }),
    pf("fixed_points", |i| i.row().iter().enumerate().filter(|(k, &v)| v == *k as i64 + i.col_lo).count() as f64, |c| {
        one_d(c).then(|| PropForm::direct(format!("sum(p in {})(bool2int({v}[p] = p))", c.range(0), v = c.var)))
    }),
    pf("first_value", |i| i.row()[0] as f64, |c| one_d(c).then(|| PropForm::direct(format!("{}[{}]", c.var, c.dims[0].0)))),
    pf("last_value", |i| *i.row().last().unwrap_or(&0) as f64, |c| {
        one_d(c).then(|| PropForm::direct(format!("{}[{}]", c.var, c.dims[0].1)))
    }),
    pf("endpoint_diff", |i| (i.row()[i.row().len() - 1] - i.row()[0]).abs() as f64, |c| {
        one_d(c).then(|| PropForm::direct(format!("abs({v}[{}] - {v}[{}])", c.dims[0].1, c.dims[0].0, v = c.var)))
    }),
    p("argmin_position", |i| arg_pos(i, false)),
    p("argmax_position", |i| arg_pos(i, true)),
    p("ones_centroid_row", |i| ones_centroid(i, 0)),
    p("ones_centroid_col", |i| ones_centroid(i, 1)),
    p("inversions", |i| {
        let x = i.row();
        let mut n = 0;
        for a in 0..x.len() {
            for b in a + 1..x.len() {
                if x[a] > x[b] {
                    n += 1;
                }
            }
        }
        n as f64
    }),
    pf("displacement_sum", |i| {
        i.row().iter().enumerate().map(|(k, &v)| (v - (k as i64 + i.col_lo)).abs()).sum::<i64>() as f64
    }, |c| one_d(c).then(|| PropForm::direct(format!("sum(p in {})(abs({v}[p] - p))", c.range(0), v = c.var)))),
    pf("max_displacement", |i| {
        i.row().iter().enumerate().map(|(k, &v)| (v - (k as i64 + i.col_lo)).abs()).max().unwrap_or(0) as f64
    }, |c| one_d(c).then(|| PropForm::MaxOf { gens: format!("p in {}", c.range(0)), term: format!("abs({}[p] - p)", c.var) })),
    p("peaks", |i| i.row().windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count() as f64),
    p("valleys", |i| i.row().windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count() as f64),
    pf("first_half_sum", |i| half(i, false).iter().sum::<i64>() as f64, |c| {
        one_d(c).then(|| {
            let last = c.extents[0] / 2 - 1;
            PropForm::direct(format!("sum(p in {l}..{l} + {last})({v}[p])", l = c.dims[0].0, v = c.var))
        })
    }),
    pf("second_half_sum", |i| half(i, true).iter().sum::<i64>() as f64, |c| {
        one_d(c).then(|| {
            let first = c.extents[0] / 2;
            PropForm::direct(format!("sum(p in {l} + {first}..{h})({v}[p])", l = c.dims[0].0, h = c.dims[0].1, v = c.var))
        })
    }),
    p("first_half_ascents", |i| ascents(half(i, false))),
    p("second_half_ascents", |i| ascents(half(i, true))),
    pf("parity_changes", |i| i.row().windows(2).filter(|w| (w[1] - w[0]) % 2 != 0).count() as f64, |c| {
        one_d(c).then(|| PropForm::direct(format!("sum({})(bool2int(({v}[p + 1] - {v}[p]) mod 2 != 0))", gap_gens(c), v = c.var)))
    }),
    pf("middle_value", |i| i.row()[i.row().len() / 2] as f64, |c| {
        one_d(c).then(|| PropForm::direct(format!("{}[{} + {}]", c.var, c.dims[0].0, c.extents[0] / 2)))
    }),
    pf("max_adjacent_sum", |i| i.row().windows(2).map(|w| w[0] + w[1]).max().unwrap_or(0) as f64, |c| {
        one_d(c).then(|| PropForm::MaxOf { gens: gap_gens(c), term: format!("{v}[p + 1] + {v}[p]", v = c.var) })
    }),
    PropertyDef {
        id: "monotone_fraction",
        compute: |i| {
            let x = i.row();
            if x.len() < 2 {
                return 1.0;
            }
            ascents(x) / (x.len() - 1) as f64
        },
        form: none,
        universal: Some(|c| one_d(c).then(|| format!("forall({})({v}[p + 1] > {v}[p])", gap_gens(c), v = c.var))),
    },
];

static PERMUTATION_EXTREMA: &[ExtremumGroup] = &[
    ExtremumGroup {
        name: "argmax",
        props: &["argmax_position"],
        pin: |c, at| one_d(c).then(|| format!("forall(p in {})({v}[p] <= {v}[{}])", c.range(0), at[0], v = c.var)),
    },
    ExtremumGroup {
        name: "argmin",
        props: &["argmin_position"],
        pin: |c, at| one_d(c).then(|| format!("forall(p in {})({v}[p] >= {v}[{}])", c.range(0), at[0], v = c.var)),
    },
];

// ---- packing -------------------------------------------------------------

fn lefts(i: &PropInput) -> Vec<f64> {
    i.footprints.iter().map(|f| f.0 as f64).collect()
}

fn bottoms(i: &PropInput) -> Vec<f64> {
    i.footprints.iter().map(|f| f.1 as f64).collect()
}

fn rights(i: &PropInput) -> Vec<f64> {
    i.footprints.iter().map(|f| (f.0 + f.2) as f64).collect()
}

fn tops(i: &PropInput) -> Vec<f64> {
    i.footprints.iter().map(|f| (f.1 + f.3) as f64).collect()
}

fn occupied(i: &PropInput, r: usize, c: usize) -> bool {
    i.plane[r * i.width + c] > 0.0
}

fn boundaries(i: &PropInput) -> f64 {
    let mut n = 0;
    for r in 0..i.height {
        for c in 0..i.width {
            if c + 1 < i.width && occupied(i, r, c) != occupied(i, r, c + 1) {
                n += 1;
            }
            if r + 1 < i.height && occupied(i, r, c) != occupied(i, r + 1, c) {
                n += 1;
            }
        }
    }
    n as f64
}

fn class_changes(i: &PropInput, horizontal: bool) -> f64 {
    let mut n = 0;
    for r in 0..i.height {
        for c in 0..i.width {
            let (r2, c2) = if horizontal { (r, c + 1) } else { (r + 1, c) };
            if r2 < i.height && c2 < i.width {
                let (a, b) = (i.plane[r * i.width + c], i.plane[r2 * i.width + c2]);
                if a > 0.0 && b > 0.0 && a != b {
                    n += 1;
                }
            }
        }
    }
    n as f64
}

fn area_centroid(i: &PropInput, axis: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for f in &i.footprints {
        let area = (f.2 * f.3) as f64;
        let centre = if axis == 0 { f.0 as f64 + f.2 as f64 / 2.0 } else { f.1 as f64 + f.3 as f64 / 2.0 };
        num += area * centre;
        den += area;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn class_centroid_spread(i: &PropInput) -> f64 {
    let classes: BTreeSet<i64> = i.classes.iter().copied().collect();
    let centres: Vec<f64> = classes
        .iter()
        .map(|k| {
            let xs: Vec<f64> = i
                .footprints
                .iter()
                .zip(&i.classes)
                .filter(|(_, c)| *c == k)
                .map(|(f, _)| f.0 as f64 + f.2 as f64 / 2.0)
                .collect();
            mean(&xs)
        })
        .collect();
    std(&centres)
}

fn containers(c: &FormCtx) -> Option<String> {
    c.containers.as_ref().map(|(l, h)| format!("c in {l}..{h}"))
}

fn coord_sum(c: &FormCtx, var: &str) -> Option<PropForm> {
    containers(c).map(|g| PropForm::Direct { expr: format!("sum({g})({var}[c])"), denom: c.n_containers })
}

static PACKING: &[PropertyDef] = &[
    pf("mean_Left_all", |i| mean(&lefts(i)), |c| coord_sum(c, &c.packing.left)),
    p("std_Left_all", |i| std(&lefts(i))),
    pf("min_Left", |i| min(&lefts(i)), |c| {
        containers(c).map(|g| PropForm::MinOf { gens: g, term: format!("{}[c]", c.packing.left) })
    }),
    pf("max_Left", |i| max(&lefts(i)), |c| {
        containers(c).map(|g| PropForm::MaxOf { gens: g, term: format!("{}[c]", c.packing.left) })
    }),
    pf("mean_Bottom_all", |i| mean(&bottoms(i)), |c| coord_sum(c, &c.packing.bottom)),
    p("std_Bottom_all", |i| std(&bottoms(i))),
    pf("min_Bottom", |i| min(&bottoms(i)), |c| {
        containers(c).map(|g| PropForm::MinOf { gens: g, term: format!("{}[c]", c.packing.bottom) })
    }),
    pf("max_Bottom", |i| max(&bottoms(i)), |c| {
        containers(c).map(|g| PropForm::MaxOf { gens: g, term: format!("{}[c]", c.packing.bottom) })
    }),
    p("n_boundaries", boundaries),
    p("occupied_fraction", |i| {
        i.plane.iter().filter(|v| **v > 0.0).count() as f64 / (i.height * i.width).max(1) as f64
    }),
    p("per_class_centroid_spread", class_centroid_spread),
    p("rotated_fraction", |i| {
        if i.rotated.is_empty() {
            0.0
        } else {
            i.rotated.iter().filter(|r| **r != 0).count() as f64 / i.rotated.len() as f64
        }
    }),
    p("max_right_edge", |i| max(&rights(i))),
    p("max_top_edge", |i| max(&tops(i))),
    p("mean_right_edge", |i| mean(&rights(i))),
    p("mean_top_edge", |i| mean(&tops(i))),
    p("left_spread", |i| max(&lefts(i)) - min(&lefts(i))),
    p("bottom_spread", |i| max(&bottoms(i)) - min(&bottoms(i))),
    pf("n_at_left_wall", |i| i.footprints.iter().filter(|f| f.0 == 0).count() as f64, |c| {
        containers(c).map(|g| PropForm::direct(format!("sum({g})(bool2int({}[c] = 0))", c.packing.left)))
    }),
    pf("n_at_bottom_wall", |i| i.footprints.iter().filter(|f| f.1 == 0).count() as f64, |c| {
        containers(c).map(|g| PropForm::direct(format!("sum({g})(bool2int({}[c] = 0))", c.packing.bottom)))
    }),
    p("area_centroid_x", |i| area_centroid(i, 0)),
    p("area_centroid_y", |i| area_centroid(i, 1)),
    p("horizontal_class_changes", |i| class_changes(i, true)),
    p("vertical_class_changes", |i| class_changes(i, false)),
    p("empty_rows", |i| (0..i.height).filter(|&r| (0..i.width).all(|c| !occupied(i, r, c))).count() as f64),
    p("empty_cols", |i| (0..i.width).filter(|&c| (0..i.height).all(|r| !occupied(i, r, c))).count() as f64),
    p("max_class_at_left_wall", |i| {
        i.footprints.iter().zip(&i.classes).filter(|(f, _)| f.0 == 0).map(|(_, k)| *k).max().unwrap_or(0) as f64
    }),
    p("total_area", |i| i.footprints.iter().map(|f| f.2 * f.3).sum::<i64>() as f64),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn input(matrix: Vec<Vec<i64>>) -> PropInput {
        let (h, w) = (matrix.len(), matrix[0].len());
        PropInput {
            matrix,
            row_lo: 1,
            col_lo: 1,
            domain: (1, 5),
            footprints: vec![],
            classes: vec![],
            rotated: vec![],
            plane: vec![0.0; h * w],
            height: h,
            width: w,
        }
    }

    fn get(kind: ShapeKind, id: &str, i: &PropInput) -> f64 {
        (catalog(kind).iter().find(|p| p.id == id).unwrap().compute)(i)
    }

    #[test]
    fn catalog_sizes_and_unique_ids() {
        for kind in [ShapeKind::Matrix, ShapeKind::Permutation, ShapeKind::PackingCoords] {
            let c = catalog(kind);
            assert!(c.len() >= 25, "{kind:?} has {}", c.len());
            let ids: BTreeSet<_> = c.iter().map(|p| p.id).collect();
            assert_eq!(ids.len(), c.len());
        }
    }

    #[test]
    fn permutation_examples() {
        let i = input(vec![vec![1, 2, 3, 4, 5]]);
        assert_eq!(get(ShapeKind::Permutation, "ascending_pairs", &i), 4.0);
        assert_eq!(get(ShapeKind::Permutation, "max_adjacent_diff", &i), 1.0);
        assert_eq!(get(ShapeKind::Permutation, "fixed_points", &i), 5.0);
        assert_eq!(get(ShapeKind::Permutation, "inversions", &i), 0.0);
    }

    #[test]
    fn latin_rows() {
        let i = input(vec![vec![1, 2, 3, 4], vec![2, 1, 4, 3], vec![3, 4, 1, 2], vec![4, 3, 2, 1]]);
        assert_eq!(get(ShapeKind::Matrix, "row_sums_mean", &i), 10.0);
        assert_eq!(get(ShapeKind::Matrix, "row_sums_std", &i), 0.0);
        assert_eq!(get(ShapeKind::Matrix, "main_diag_sum", &i), 4.0);
        assert_eq!(get(ShapeKind::Matrix, "anti_diag_sum", &i), 4.0 + 4.0 + 4.0 + 4.0);
        assert_eq!(get(ShapeKind::Matrix, "argmax_row", &i), 1.0);
        assert_eq!(get(ShapeKind::Matrix, "argmax_col", &i), 4.0);
        assert_eq!(get(ShapeKind::Matrix, "row_monotone_fraction", &i), 0.25);
    }

    #[test]
    fn forms_parse() {
        use crate::minicp::parse_expr_text;
        let c = FormCtx {
            var: "a".into(),
            dims: vec![("1".into(), "n".into()), ("1".into(), "n".into())],
            extents: vec![4, 4],
            packing: Default::default(),
            containers: Some(("1".into(), "k".into())),
            n_containers: 3,
        };
        let c1 = FormCtx { var: "x".into(), dims: vec![("1".into(), "n".into())], extents: vec![5], ..c.clone() };
        for (kind, ctx) in [(ShapeKind::Matrix, &c), (ShapeKind::Permutation, &c1), (ShapeKind::PackingCoords, &c)] {
            for def in catalog(kind) {
                if let Some(f) = (def.form)(ctx) {
                    for op in ["=", "<=", ">="] {
                        let t = f.constraint(op, 3);
                        parse_expr_text(&t).unwrap_or_else(|e| panic!("{}: {t}: {e}", def.id));
                    }
                }
                if let Some(u) = def.universal.and_then(|u| u(ctx)) {
                    parse_expr_text(&u).unwrap();
                }
            }
            for g in extremum_groups(kind) {
                let at = vec![2; g.props.len()];
                parse_expr_text(&(g.pin)(ctx, &at).unwrap()).unwrap();
            }
        }
    }
}
