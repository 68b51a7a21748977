use crate::corpus::ShapeKind;
use crate::minicp::MiniModel;
use crate::props::{catalog, extremum_groups, FormCtx, PropForm, PropertyStats};

use super::{sanitize_descriptor, Aggressiveness, CandidateStreamliner, Method, SyntacticForm};

#[derive(Debug, Clone, Default)]
pub struct TemplateOutput {
    pub candidates: Vec<CandidateStreamliner>,
    pub skipped: Vec<String>,
}

fn int_label(v: i64) -> String {
    if v < 0 {
        format!("m{}", -v)
    } else {
        v.to_string()
    }
}

/// Mechanical substitutions: near-constant properties at their observed
/// value, monotone fractions of 1 as universal orderings, and pinned
/// extremum locations.
pub fn synthesize_templates(
    stats: &PropertyStats,
    kind: ShapeKind,
    ctx: &FormCtx,
    model: &MiniModel,
    instance: &str,
    seed: u64,
) -> TemplateOutput {
    let mut out = TemplateOutput::default();
    let push = |out: &mut TemplateOutput, constraint: String, descriptor: String, form, property: Option<&str>| {
        let c = CandidateStreamliner {
            constraint,
            descriptor: sanitize_descriptor(&descriptor),
            method: Method::Template,
            aggressiveness: Aggressiveness::TightFit,
            form,
            property: property.map(str::to_string),
            instance: instance.to_string(),
            seed,
            generation: None,
        };
        match c.checked(model) {
            Ok(c) => out.candidates.push(c),
            Err(e) => out.skipped.push(format!("{descriptor}: {e}")),
        }
    };

    for def in catalog(kind) {
        let Some(s) = stats.get(def.id) else { continue };
        if let Some(universal) = def.universal {
            if s.min >= 1.0 - 1e-9 {
                match universal(ctx) {
                    Some(text) => push(&mut out, text, format!("{}_universal", def.id), SyntacticForm::Universal, Some(def.id)),
                    None => out.skipped.push(format!("{}: no universal form for this model", def.id)),
                }
                continue;
            }
        }
        if !s.near_constant {
            continue;
        }
        if s.constant {
            out.skipped.push(format!("{}: constant over the corpus, already implied", def.id));
            continue;
        }
        let Some(form) = (def.form)(ctx) else {
            out.skipped.push(format!("{}: not expressible as a constraint", def.id));
            continue;
        };
        let Some(text) = form.constraint_value("=", s.median) else {
            out.skipped.push(format!("{}: observed value {} is not integral after scaling", def.id, s.median));
            continue;
        };
        let shape = match form {
            PropForm::Direct { .. } => SyntacticForm::Aggregate,
            _ => SyntacticForm::Universal,
        };
        let k = (s.median * form.denom() as f64).round() as i64;
        push(&mut out, text, format!("{}_eq_{}", def.id, int_label(k)), shape, Some(def.id));
    }

    for g in extremum_groups(kind) {
        let located: Option<Vec<i64>> = g
            .props
            .iter()
            .map(|id| stats.get(id).filter(|s| s.near_constant).map(|s| s.median.round() as i64))
            .collect();
        let Some(at) = located else { continue };
        match (g.pin)(ctx, &at) {
            Some(text) => {
                let label: Vec<String> = at.iter().map(|v| int_label(*v)).collect();
                push(&mut out, text, format!("{}_pin_{}", g.name, label.join("_")), SyntacticForm::Universal, Some(g.props[0]));
            }
            None => out.skipped.push(format!("{}: no pin form for this model", g.name)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::props::PropStat;

    fn ctx() -> FormCtx {
        FormCtx {
            var: "x".into(),
            dims: vec![("1".into(), "n".into())],
            extents: vec![5],
            packing: Default::default(),
            containers: None,
            n_containers: 0,
        }
    }

    fn stat(id: &str, values: &[f64]) -> PropStat {
        crate::props::column_stat(id, values)
    }

    #[test]
    fn near_constant_becomes_equality() {
        let model = super::super::tests::model();
        let mut vals = vec![3.0; 999];
        vals.push(2.0);
        let stats = PropertyStats { count: 1000, props: vec![stat("ascending_pairs", &vals)] };
        let out = synthesize_templates(&stats, ShapeKind::Permutation, &ctx(), &model, "n5", 0);
        assert_eq!(out.candidates.len(), 1, "{:?}", out.skipped);
        let c = &out.candidates[0];
        assert_eq!(c.constraint, "sum(p in 1..n - 1)(bool2int(x[p + 1] > x[p])) = 3");
        assert_eq!(c.descriptor, "ascending_pairs_eq_3");
        assert_eq!(c.method, Method::Template);
    }

    #[test]
    fn nothing_near_constant_gives_nothing() {
        let model = super::super::tests::model();
        let stats = PropertyStats {
            count: 4,
            props: vec![stat("ascending_pairs", &[0.0, 1.0, 3.0, 4.0]), stat("monotone_fraction", &[0.0, 0.5, 0.2, 0.1])],
        };
        let out = synthesize_templates(&stats, ShapeKind::Permutation, &ctx(), &model, "n5", 0);
        assert!(out.candidates.is_empty());
    }

    #[test]
    fn monotone_fraction_one_is_universal() {
        let model = super::super::tests::model();
        let stats = PropertyStats { count: 3, props: vec![stat("monotone_fraction", &[1.0, 1.0, 1.0])] };
        let out = synthesize_templates(&stats, ShapeKind::Permutation, &ctx(), &model, "n5", 0);
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].form, SyntacticForm::Universal);
        assert_eq!(out.candidates[0].constraint, "forall(p in 1..n - 1)(x[p + 1] > x[p])");
    }
}
